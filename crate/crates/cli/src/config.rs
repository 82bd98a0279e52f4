//! Config files: TOML overrides layered on a base configuration.

use std::fs;
use std::path::Path;

use crowdreview_core::ingest::RecordSchema;
use crowdreview_core::SimConfig;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses `path` (TOML, or JSON for `.json`) and applies it on top of `base`.
/// Keys absent from the file keep the base value; unknown keys are errors.
pub fn layered<T: Serialize + DeserializeOwned>(base: &T, path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let over: Value = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
    } else {
        let t: toml::Value = toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        serde_json::to_value(t).map_err(|e| CliError::Data(e.to_string()))?
    };
    let mut v = serde_json::to_value(base).map_err(|e| CliError::Runtime(e.to_string()))?;
    merge(&mut v, over);
    serde_json::from_value(v).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// A platform config from `path`, which may also be a `simulate` manifest.
pub fn sim_config(base: SimConfig, path: Option<&Path>) -> Result<SimConfig, CliError> {
    let Some(path) = path else { return Ok(base) };
    if path.extension().is_some_and(|e| e == "json") {
        if let Ok(args) = crate::output::manifest_args(path, "simulate") {
            let cfg = args
                .get("config")
                .cloned()
                .ok_or_else(|| CliError::Data(format!("{} has no config", path.display())))?;
            return serde_json::from_value(cfg).map_err(|e| CliError::Data(e.to_string()));
        }
    }
    layered(&base, path)
}

pub fn schema(path: Option<&Path>) -> Result<RecordSchema, CliError> {
    match path {
        Some(p) => layered(&RecordSchema::default(), p),
        None => Ok(RecordSchema::default()),
    }
}
