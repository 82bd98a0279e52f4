//! Reading and writing review, rating and authorship tables.
//!
//! Two self-describing encodings are supported:
//!
//! * delimited text (CSV by default) whose header row names the columns;
//! * JSON Lines, one object per record with the same keys.
//!
//! A [`RecordSchema`] maps column names to roles, so exports with other
//! headers load without code changes. Columns without a role are carried
//! through untouched. Identifiers are arbitrary strings, interned into a
//! [`Registry`] shared by every file of one dataset.
//!
//! Canonical headers:
//!
//! | table      | columns                                   |
//! |------------|-------------------------------------------|
//! | reviews    | `reviewer_id, paper_id, score[, confidence]` |
//! | ratings    | `rater_id, ratee_id, rating`               |
//! | authorship | `author_id, paper_id`                      |
//! | agents     | `user_id, quality, is_bot`                 |
//! | papers     | `paper_id, quality, author_id`             |

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::genmodel::{Agent, PaperTruth, World};
use crate::table::{
    Authorship, ExtraColumns, PaperId, RatingRecord, RatingScale, RatingTable, Registry, ReviewRecord,
    ReviewTable, TableError, UserId,
};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("missing column {column:?} for role {role}")]
    MissingColumn { role: &'static str, column: String },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: value {value} outside declared range [{lo}, {hi}]")]
    OutOfRange { line: u64, value: f64, lo: f64, hi: f64 },
    #[error("duplicate (reviewer, paper) rows: {}", .0.iter().map(|(r, p, l)| format!("({r}, {p}) at line {l}")).collect::<Vec<_>>().join(", "))]
    Duplicate(Vec<(String, String, u64)>),
    #[error("line {line}: user {user} rates their own review")]
    SelfRating { line: u64, user: String },
    #[error("authorship references papers absent from the review table: {}", .0.join(", "))]
    DanglingPapers(Vec<String>),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

impl IngestError {
    fn parse(line: u64, message: impl Into<String>) -> Self {
        IngestError::Parse {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl Format {
    /// `.jsonl` / `.ndjson` files are JSON Lines; anything else is delimited.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "ndjson") => Format::Jsonl,
            _ => Format::Csv,
        }
    }
}

/// Column names per role, declared score range and encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecordSchema {
    pub format: Format,
    pub delimiter: char,
    pub reviewer: String,
    pub paper: String,
    pub score: String,
    pub confidence: String,
    pub author: String,
    pub rater: String,
    pub ratee: String,
    pub rating: String,
    /// Raw score range; values are mapped affinely onto `[0, 1]`.
    pub score_min: f64,
    pub score_max: f64,
    pub rating_scale: RatingScale,
}

impl Default for RecordSchema {
    fn default() -> Self {
        Self {
            format: Format::Csv,
            delimiter: ',',
            reviewer: "reviewer_id".into(),
            paper: "paper_id".into(),
            score: "score".into(),
            confidence: "confidence".into(),
            author: "author_id".into(),
            rater: "rater_id".into(),
            ratee: "ratee_id".into(),
            rating: "rating".into(),
            score_min: 0.0,
            score_max: 1.0,
            rating_scale: RatingScale::Continuous,
        }
    }
}

impl RecordSchema {
    /// Integer 1–10 scores, as used by some conference exports.
    pub fn one_to_ten() -> Self {
        Self {
            score_min: 1.0,
            score_max: 10.0,
            ..Self::default()
        }
    }

    pub fn with_format(mut self, format: Format) -> Self {
        self.format = format;
        self
    }

    fn validate(&self) -> Result<(), IngestError> {
        if !(self.score_min.is_finite() && self.score_max.is_finite() && self.score_min < self.score_max) {
            return Err(IngestError::Schema(format!(
                "score range [{}, {}] is empty",
                self.score_min, self.score_max
            )));
        }
        if !self.delimiter.is_ascii() {
            return Err(IngestError::Schema("delimiter must be a single ASCII character".into()));
        }
        Ok(())
    }

    /// Maps a raw score onto `[0, 1]`.
    pub fn rescale(&self, raw: f64, line: u64) -> Result<f64, IngestError> {
        if !(raw >= self.score_min && raw <= self.score_max) {
            return Err(IngestError::OutOfRange {
                line,
                value: raw,
                lo: self.score_min,
                hi: self.score_max,
            });
        }
        if self.score_min == 0.0 && self.score_max == 1.0 {
            return Ok(raw);
        }
        Ok((raw - self.score_min) / (self.score_max - self.score_min))
    }
}

/// One parsed row: named fields plus the line it came from.
struct Row {
    line: u64,
    fields: Vec<(String, String)>,
}

impl Row {
    fn get(&self, col: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == col).map(|(_, v)| v.as_str())
    }

    fn require(&self, col: &str) -> Result<&str, IngestError> {
        match self.get(col) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(IngestError::parse(self.line, format!("missing value for {col:?}"))),
        }
    }

    fn number(&self, col: &str) -> Result<f64, IngestError> {
        let s = self.require(col)?;
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| IngestError::parse(self.line, format!("{col} {s:?} is not a number")))?;
        if !v.is_finite() {
            return Err(IngestError::parse(self.line, format!("{col} {s:?} is not finite")));
        }
        Ok(v)
    }
}

/// Parsed rows and the header in file order.
struct Rows {
    header: Vec<String>,
    rows: Vec<Row>,
}

fn read_rows(reader: impl Read, schema: &RecordSchema) -> Result<Rows, IngestError> {
    schema.validate()?;
    match schema.format {
        Format::Csv => read_csv(reader, schema.delimiter as u8),
        Format::Jsonl => read_jsonl(reader),
    }
}

fn read_csv(reader: impl Read, delimiter: u8) -> Result<Rows, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| IngestError::parse(1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            IngestError::parse(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push(Row {
            line,
            fields: header.iter().cloned().zip(rec.iter().map(str::to_owned)).collect(),
        });
    }
    Ok(Rows { header, rows })
}

fn json_scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn read_jsonl(reader: impl Read) -> Result<Rows, IngestError> {
    let mut header: Vec<String> = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let n = i as u64 + 1;
        let line = line.map_err(|e| IngestError::parse(n, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let obj: Map<String, Value> =
            serde_json::from_str(&line).map_err(|e| IngestError::parse(n, e.to_string()))?;
        for k in obj.keys() {
            if !header.contains(k) {
                header.push(k.clone());
            }
        }
        rows.push(Row {
            line: n,
            fields: obj.iter().map(|(k, v)| (k.clone(), json_scalar(v))).collect(),
        });
    }
    Ok(Rows { header, rows })
}

fn require_columns(rows: &Rows, cols: &[(&'static str, &str)]) -> Result<(), IngestError> {
    if rows.rows.is_empty() && rows.header.is_empty() {
        return Ok(());
    }
    for &(role, col) in cols {
        if !rows.header.iter().any(|h| h == col) {
            return Err(IngestError::MissingColumn {
                role,
                column: col.to_string(),
            });
        }
    }
    Ok(())
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads reviews. Scores are rescaled to `[0, 1]` from the schema's range;
/// columns without a role are kept as extras.
pub fn load_review_table(
    reader: impl Read,
    schema: &RecordSchema,
    registry: &mut Registry,
) -> Result<ReviewTable, IngestError> {
    let rows = read_rows(reader, schema)?;
    require_columns(
        &rows,
        &[("reviewer", &schema.reviewer), ("paper", &schema.paper), ("score", &schema.score)],
    )?;
    let has_conf = rows.header.contains(&schema.confidence);
    let known = [&schema.reviewer, &schema.paper, &schema.score, &schema.confidence];
    let extra_names: Vec<String> = rows.header.iter().filter(|h| !known.contains(h)).cloned().collect();

    let mut records = Vec::with_capacity(rows.rows.len());
    let mut extra_rows = Vec::new();
    let mut seen: HashMap<(UserId, PaperId), u64> = HashMap::new();
    let mut dups = Vec::new();
    for row in &rows.rows {
        let reviewer = registry.user(row.require(&schema.reviewer)?);
        let paper = registry.paper(row.require(&schema.paper)?);
        let score = schema.rescale(row.number(&schema.score)?, row.line)?;
        let confidence = if has_conf && row.get(&schema.confidence).is_some_and(|c| !c.is_empty()) {
            Some(row.number(&schema.confidence)?)
        } else {
            None
        };
        if seen.insert((reviewer, paper), row.line).is_some() {
            dups.push((registry.user_name(reviewer), registry.paper_name(paper), row.line));
        }
        records.push(ReviewRecord {
            reviewer,
            paper,
            score,
            confidence,
        });
        if !extra_names.is_empty() {
            extra_rows.push(
                extra_names
                    .iter()
                    .map(|c| row.get(c).unwrap_or("").to_string())
                    .collect(),
            );
        }
    }
    if !dups.is_empty() {
        return Err(IngestError::Duplicate(dups));
    }
    let extras = (!extra_names.is_empty()).then_some(ExtraColumns {
        names: extra_names,
        rows: extra_rows,
    });
    Ok(ReviewTable::with_extras(records, extras)?)
}

pub fn load_rating_table(
    reader: impl Read,
    schema: &RecordSchema,
    registry: &mut Registry,
) -> Result<RatingTable, IngestError> {
    let rows = read_rows(reader, schema)?;
    require_columns(
        &rows,
        &[("rater", &schema.rater), ("ratee", &schema.ratee), ("rating", &schema.rating)],
    )?;
    let mut records = Vec::with_capacity(rows.rows.len());
    for row in &rows.rows {
        let rater_name = row.require(&schema.rater)?;
        let rater = registry.user(rater_name);
        let ratee = registry.user(row.require(&schema.ratee)?);
        if rater == ratee {
            return Err(IngestError::SelfRating {
                line: row.line,
                user: rater_name.to_string(),
            });
        }
        let value = row.number(&schema.rating)?;
        let ok = match schema.rating_scale {
            RatingScale::Continuous => (0.0..=1.0).contains(&value),
            RatingScale::Binary => value == 0.0 || value == 1.0,
        };
        if !ok {
            return Err(IngestError::OutOfRange {
                line: row.line,
                value,
                lo: 0.0,
                hi: 1.0,
            });
        }
        records.push(RatingRecord { rater, ratee, value });
    }
    Ok(RatingTable::new(records, schema.rating_scale)?)
}

pub fn load_authorship(
    reader: impl Read,
    schema: &RecordSchema,
    registry: &mut Registry,
) -> Result<Authorship, IngestError> {
    let rows = read_rows(reader, schema)?;
    require_columns(&rows, &[("author", &schema.author), ("paper", &schema.paper)])?;
    let mut out = Authorship::new();
    for row in &rows.rows {
        let author = registry.user(row.require(&schema.author)?);
        let paper = registry.paper(row.require(&schema.paper)?);
        out.entry(author).or_default().insert(paper);
    }
    Ok(out)
}

/// Checks that every authored paper appears in `reviews`.
pub fn check_authorship(
    authorship: &Authorship,
    reviews: &ReviewTable,
    registry: &Registry,
) -> Result<(), IngestError> {
    let present: BTreeSet<PaperId> = reviews.papers().collect();
    let missing: BTreeSet<PaperId> = authorship
        .values()
        .flatten()
        .filter(|p| !present.contains(p))
        .copied()
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(IngestError::DanglingPapers(
            missing.into_iter().map(|p| registry.paper_name(p)).collect(),
        ))
    }
}

/// Loads from a path; the format follows the file extension.
pub fn load_review_file(path: &Path, schema: &RecordSchema, registry: &mut Registry) -> Result<ReviewTable, IngestError> {
    let schema = schema.clone().with_format(Format::from_path(path));
    load_review_table(open(path)?, &schema, registry)
}

pub fn load_rating_file(path: &Path, schema: &RecordSchema, registry: &mut Registry) -> Result<RatingTable, IngestError> {
    let schema = schema.clone().with_format(Format::from_path(path));
    load_rating_table(open(path)?, &schema, registry)
}

pub fn load_authorship_file(
    path: &Path,
    schema: &RecordSchema,
    registry: &mut Registry,
) -> Result<Authorship, IngestError> {
    let schema = schema.clone().with_format(Format::from_path(path));
    load_authorship(open(path)?, &schema, registry)
}

/// Writes rows in either encoding. Values are pre-formatted strings; numeric
/// cells are emitted as JSON numbers in JSON Lines.
struct TableWriter<W: Write> {
    format: Format,
    header: Vec<String>,
    csv: Option<csv::Writer<W>>,
    raw: Option<W>,
}

impl<W: Write> TableWriter<W> {
    fn new(out: W, format: Format, header: Vec<String>) -> io::Result<Self> {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(&header)?;
                Ok(Self {
                    format,
                    header,
                    csv: Some(w),
                    raw: None,
                })
            }
            Format::Jsonl => Ok(Self {
                format,
                header,
                csv: None,
                raw: Some(out),
            }),
        }
    }

    /// `numeric[i]` marks cells written as JSON numbers.
    fn row(&mut self, cells: &[String], numeric: &[bool]) -> io::Result<()> {
        match self.format {
            Format::Csv => self.csv.as_mut().expect("csv").write_record(cells).map_err(io::Error::other),
            Format::Jsonl => {
                let mut obj = Map::new();
                for ((k, v), &num) in self.header.iter().zip(cells).zip(numeric) {
                    let value = if num {
                        serde_json::from_str::<Value>(v).unwrap_or_else(|_| Value::String(v.clone()))
                    } else {
                        Value::String(v.clone())
                    };
                    obj.insert(k.clone(), value);
                }
                let w = self.raw.as_mut().expect("raw");
                serde_json::to_writer(&mut *w, &obj)?;
                w.write_all(b"\n")
            }
        }
    }

    fn finish(self) -> io::Result<()> {
        if let Some(mut w) = self.csv {
            w.flush()?;
        }
        if let Some(mut w) = self.raw {
            w.flush()?;
        }
        Ok(())
    }
}

/// Writes reviews with canonical headers. Scores are written as stored
/// (already on `[0, 1]`), so reload with the default schema.
pub fn write_review_table(
    out: impl Write,
    table: &ReviewTable,
    registry: &Registry,
    format: Format,
) -> io::Result<()> {
    let mut header: Vec<String> = vec!["reviewer_id".into(), "paper_id".into(), "score".into()];
    let conf = table.records().iter().any(|r| r.confidence.is_some());
    if conf {
        header.push("confidence".into());
    }
    let extras = table.extras();
    if let Some(x) = extras {
        header.extend(x.names.iter().cloned());
    }
    let mut numeric = vec![false, false, true];
    if conf {
        numeric.push(true);
    }
    numeric.extend(std::iter::repeat_n(false, extras.map_or(0, |x| x.names.len())));
    let mut w = TableWriter::new(out, format, header)?;
    for (i, r) in table.records().iter().enumerate() {
        let mut cells = vec![
            registry.user_name(r.reviewer),
            registry.paper_name(r.paper),
            r.score.to_string(),
        ];
        if conf {
            cells.push(r.confidence.map_or(String::new(), |c| c.to_string()));
        }
        if let Some(x) = extras {
            cells.extend(x.rows[i].iter().cloned());
        }
        w.row(&cells, &numeric)?;
    }
    w.finish()
}

pub fn write_rating_table(
    out: impl Write,
    table: &RatingTable,
    registry: &Registry,
    format: Format,
) -> io::Result<()> {
    let header = vec!["rater_id".into(), "ratee_id".into(), "rating".into()];
    let mut w = TableWriter::new(out, format, header)?;
    for r in table.records() {
        w.row(
            &[registry.user_name(r.rater), registry.user_name(r.ratee), r.value.to_string()],
            &[false, false, true],
        )?;
    }
    w.finish()
}

pub fn write_authorship(
    out: impl Write,
    authorship: &Authorship,
    registry: &Registry,
    format: Format,
) -> io::Result<()> {
    let header = vec!["author_id".into(), "paper_id".into()];
    let mut w = TableWriter::new(out, format, header)?;
    for (a, papers) in authorship {
        for p in papers {
            w.row(&[registry.user_name(*a), registry.paper_name(*p)], &[false, false])?;
        }
    }
    w.finish()
}

#[derive(Debug, Serialize, Deserialize)]
struct AgentRow {
    user_id: u32,
    quality: f64,
    is_bot: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct PaperRow {
    paper_id: u32,
    quality: f64,
    author_id: u32,
}

/// Writes the hidden ground truth as two CSV tables.
pub fn write_world(agents_out: impl Write, papers_out: impl Write, world: &World) -> io::Result<()> {
    let mut a = csv::Writer::from_writer(agents_out);
    for ag in &world.agents {
        a.serialize(AgentRow {
            user_id: ag.id.0,
            quality: ag.quality,
            is_bot: ag.is_bot,
        })
        .map_err(io::Error::other)?;
    }
    a.flush()?;
    let mut p = csv::Writer::from_writer(papers_out);
    for pt in &world.papers {
        p.serialize(PaperRow {
            paper_id: pt.id.0,
            quality: pt.quality,
            author_id: pt.author.0,
        })
        .map_err(io::Error::other)?;
    }
    p.flush()
}

pub fn load_world(agents_in: impl Read, papers_in: impl Read) -> Result<World, IngestError> {
    let mut agents = Vec::new();
    for (i, row) in csv::Reader::from_reader(agents_in).deserialize::<AgentRow>().enumerate() {
        let r = row.map_err(|e| IngestError::parse(i as u64 + 2, e.to_string()))?;
        agents.push(Agent {
            id: UserId(r.user_id),
            quality: r.quality,
            is_bot: r.is_bot,
        });
    }
    let mut papers = Vec::new();
    for (i, row) in csv::Reader::from_reader(papers_in).deserialize::<PaperRow>().enumerate() {
        let r = row.map_err(|e| IngestError::parse(i as u64 + 2, e.to_string()))?;
        papers.push(PaperTruth {
            id: PaperId(r.paper_id),
            quality: r.quality,
            author: UserId(r.author_id),
        });
    }
    Ok(World { agents, papers })
}

/// Column name → role listing, for error messages and docs.
pub fn canonical_headers() -> BTreeMap<&'static str, &'static [&'static str]> {
    BTreeMap::from([
        ("reviews", &["reviewer_id", "paper_id", "score", "confidence"][..]),
        ("ratings", &["rater_id", "ratee_id", "rating"][..]),
        ("authorship", &["author_id", "paper_id"][..]),
        ("agents", &["user_id", "quality", "is_bot"][..]),
        ("papers", &["paper_id", "quality", "author_id"][..]),
    ])
}
