//! Output directory bookkeeping: every file written is hashed for the
//! manifest, and everything created is removed again if the run fails.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crowdreview_core::experiments::Table;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::{CliError, OutFormat};

pub const MANIFEST: &str = "manifest.json";

pub struct OutputDir {
    root: PathBuf,
    format: OutFormat,
    created_dirs: Vec<PathBuf>,
    files: BTreeMap<String, String>,
}

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl OutputDir {
    pub fn create(root: &Path, format: OutFormat) -> Result<Self, CliError> {
        let mut out = Self {
            root: root.to_path_buf(),
            format,
            created_dirs: Vec::new(),
            files: BTreeMap::new(),
        };
        out.ensure_dir(root)?;
        Ok(out)
    }

    fn ensure_dir(&mut self, dir: &Path) -> io::Result<()> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        fs::create_dir_all(dir)?;
        // Outermost first, so rollback can remove innermost first.
        self.created_dirs.extend(missing.into_iter().rev());
        Ok(())
    }

    /// Writes `bytes` to `rel` under the root.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> io::Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            self.ensure_dir(parent)?;
        }
        // Record before writing so a failed write is still cleaned up.
        self.files.insert(rel.to_string(), hex(bytes));
        fs::write(&path, bytes)
    }

    pub fn write_with(&mut self, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> io::Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)
    }

    /// Writes a table as `<stem>.csv` or `<stem>.json`.
    pub fn table(&mut self, stem: &str, table: &Table) -> io::Result<()> {
        match self.format {
            OutFormat::Csv => self.write_with(&format!("{stem}.csv"), |b| table.write_csv(b)),
            OutFormat::Json => self.json(&format!("{stem}.json"), &table.to_json()),
        }
    }

    pub fn json(&mut self, rel: &str, value: &Value) -> io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    /// Writes the manifest: `args` must be enough to rerun the command.
    pub fn finish(mut self, command: &str, args: Value) -> Result<(), CliError> {
        let manifest = json!({
            "tool": "crowdreview",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "args": args,
            "outputs": self.files,
        });
        let result = self.json(MANIFEST, &manifest);
        match result {
            Ok(()) => Ok(()),
            Err(e) => {
                self.rollback();
                Err(e.into())
            }
        }
    }

    /// Removes every file and directory this run created.
    pub fn rollback(self) {
        for rel in self.files.keys() {
            let _ = fs::remove_file(self.root.join(rel));
        }
        for d in self.created_dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

/// Runs `body` against a fresh output directory; on error everything it
/// wrote is removed.
pub fn with_output(
    root: &Path,
    format: OutFormat,
    command: &str,
    body: impl FnOnce(&mut OutputDir) -> Result<Value, CliError>,
) -> Result<(), CliError> {
    let mut out = OutputDir::create(root, format)?;
    match body(&mut out) {
        Ok(args) => out.finish(command, args),
        Err(e) => {
            out.rollback();
            Err(e)
        }
    }
}

/// Reads the `args` block of a manifest written by `command`.
pub fn manifest_args(path: &Path, command: &str) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    match v.get("command").and_then(Value::as_str) {
        Some(c) if c == command => {}
        Some(c) => {
            return Err(CliError::Data(format!(
                "{} was written by `{c}`, not `{command}`",
                path.display()
            )))
        }
        None => return Err(CliError::Data(format!("{} is not a manifest", path.display()))),
    }
    v.get("args")
        .cloned()
        .ok_or_else(|| CliError::Data(format!("{} has no args", path.display())))
}
