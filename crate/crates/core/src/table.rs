//! Review, rating and authorship tables.
//!
//! Ids are dense `u32` newtypes. Tables loaded from files carry their
//! original string labels in a shared [`Registry`]; simulated tables use
//! the numeric id as the label.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PaperId(pub u32);

impl UserId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl PaperId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for PaperId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TableError {
    #[error("duplicate review(s) for (reviewer, paper): {}", format_pairs(.0))]
    Duplicate(Vec<(String, String)>),
    #[error("score {value} of reviewer {reviewer} on paper {paper} is not finite")]
    NonFiniteScore { reviewer: u32, paper: u32, value: f64 },
    #[error("user {0} rates their own review")]
    SelfRating(u32),
    #[error("rating {value} by {rater} is outside {range}")]
    RatingOutOfRange { rater: u32, value: f64, range: &'static str },
    #[error("empty table")]
    Empty,
}

fn format_pairs(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(r, p)| format!("({r}, {p})"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// String labels for one id space, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    /// Labels `"0"..n`, matching simulated ids.
    pub fn numeric(n: usize) -> Self {
        let mut out = Self::default();
        for i in 0..n {
            out.intern(&i.to_string());
        }
        out
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> String {
        self.names
            .get(id as usize)
            .cloned()
            .unwrap_or_else(|| id.to_string())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Shared user and paper label spaces. Reviewers, raters and authors are all
/// users, so files loaded against the same registry link up.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    pub users: Interner,
    pub papers: Interner,
}

impl Registry {
    pub fn numeric(n_users: usize, n_papers: usize) -> Self {
        Self {
            users: Interner::numeric(n_users),
            papers: Interner::numeric(n_papers),
        }
    }

    pub fn user(&mut self, name: &str) -> UserId {
        UserId(self.users.intern(name))
    }

    pub fn paper(&mut self, name: &str) -> PaperId {
        PaperId(self.papers.intern(name))
    }

    pub fn user_name(&self, id: UserId) -> String {
        self.users.name(id.0)
    }

    pub fn paper_name(&self, id: PaperId) -> String {
        self.papers.name(id.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub reviewer: UserId,
    pub paper: PaperId,
    pub score: f64,
    pub confidence: Option<f64>,
}

/// Extra columns carried through ingest untouched.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtraColumns {
    pub names: Vec<String>,
    /// One row per record, aligned with `names`.
    pub rows: Vec<Vec<String>>,
}

/// Sparse (reviewer, paper) → score table, indexed both ways.
///
/// Records keep insertion order, which doubles as chronological order for
/// history-based estimates.
#[derive(Debug, Clone, Default)]
pub struct ReviewTable {
    records: Vec<ReviewRecord>,
    by_paper: Vec<Vec<u32>>,
    by_reviewer: Vec<Vec<u32>>,
    extras: Option<ExtraColumns>,
}

impl PartialEq for ReviewTable {
    fn eq(&self, other: &Self) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.reviewer == b.reviewer
                    && a.paper == b.paper
                    && a.score.to_bits() == b.score.to_bits()
                    && a.confidence.map(f64::to_bits) == b.confidence.map(f64::to_bits)
            })
            && self.extras == other.extras
    }
}

impl ReviewTable {
    /// Builds a table, rejecting duplicates and non-finite scores.
    pub fn new(records: Vec<ReviewRecord>) -> Result<Self, TableError> {
        Self::with_extras(records, None)
    }

    pub fn with_extras(
        records: Vec<ReviewRecord>,
        extras: Option<ExtraColumns>,
    ) -> Result<Self, TableError> {
        let mut seen = HashSet::with_capacity(records.len());
        let mut dups = Vec::new();
        for r in &records {
            if !r.score.is_finite() {
                return Err(TableError::NonFiniteScore {
                    reviewer: r.reviewer.0,
                    paper: r.paper.0,
                    value: r.score,
                });
            }
            if !seen.insert((r.reviewer, r.paper)) {
                dups.push((r.reviewer.to_string(), r.paper.to_string()));
            }
        }
        if !dups.is_empty() {
            return Err(TableError::Duplicate(dups));
        }
        Ok(Self::from_records_unchecked(records, extras))
    }

    fn from_records_unchecked(records: Vec<ReviewRecord>, extras: Option<ExtraColumns>) -> Self {
        let n_papers = records.iter().map(|r| r.paper.index() + 1).max().unwrap_or(0);
        let n_users = records.iter().map(|r| r.reviewer.index() + 1).max().unwrap_or(0);
        let mut by_paper = vec![Vec::new(); n_papers];
        let mut by_reviewer = vec![Vec::new(); n_users];
        for (i, r) in records.iter().enumerate() {
            by_paper[r.paper.index()].push(i as u32);
            by_reviewer[r.reviewer.index()].push(i as u32);
        }
        Self {
            records,
            by_paper,
            by_reviewer,
            extras,
        }
    }

    pub fn records(&self) -> &[ReviewRecord] {
        &self.records
    }

    pub fn extras(&self) -> Option<&ExtraColumns> {
        self.extras.as_ref()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, i: usize) -> &ReviewRecord {
        &self.records[i]
    }

    /// Record indices for one paper, in insertion order.
    pub fn paper_records(&self, paper: PaperId) -> &[u32] {
        self.by_paper.get(paper.index()).map_or(&[], Vec::as_slice)
    }

    /// Record indices for one reviewer, in insertion order.
    pub fn reviewer_records(&self, reviewer: UserId) -> &[u32] {
        self.by_reviewer.get(reviewer.index()).map_or(&[], Vec::as_slice)
    }

    /// Upper bound (exclusive) on paper ids present.
    pub fn paper_capacity(&self) -> usize {
        self.by_paper.len()
    }

    pub fn user_capacity(&self) -> usize {
        self.by_reviewer.len()
    }

    /// Papers with at least one record, ascending.
    pub fn papers(&self) -> impl Iterator<Item = PaperId> + '_ {
        self.by_paper
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_empty())
            .map(|(i, _)| PaperId(i as u32))
    }

    /// Reviewers with at least one record, ascending.
    pub fn reviewers(&self) -> impl Iterator<Item = UserId> + '_ {
        self.by_reviewer
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_empty())
            .map(|(i, _)| UserId(i as u32))
    }

    pub fn score(&self, reviewer: UserId, paper: PaperId) -> Option<f64> {
        self.paper_records(paper)
            .iter()
            .map(|&i| &self.records[i as usize])
            .find(|r| r.reviewer == reviewer)
            .map(|r| r.score)
    }

    pub fn has_confidence(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.confidence.is_some())
    }

    /// Same keys, new scores (e.g. after normalisation).
    pub fn with_scores(&self, scores: &[f64]) -> Self {
        assert_eq!(scores.len(), self.records.len());
        let records = self
            .records
            .iter()
            .zip(scores)
            .map(|(r, &score)| ReviewRecord { score, ..*r })
            .collect();
        Self {
            records,
            by_paper: self.by_paper.clone(),
            by_reviewer: self.by_reviewer.clone(),
            extras: self.extras.clone(),
        }
    }

    /// Keeps the records for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(&ReviewRecord) -> bool) -> Self {
        let mut kept = Vec::new();
        let mut rows = Vec::new();
        for (i, r) in self.records.iter().enumerate() {
            if keep(r) {
                kept.push(*r);
                if let Some(x) = &self.extras {
                    rows.push(x.rows[i].clone());
                }
            }
        }
        let extras = self.extras.as_ref().map(|x| ExtraColumns {
            names: x.names.clone(),
            rows,
        });
        Self::from_records_unchecked(kept, extras)
    }
}

/// How a rating column is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RatingScale {
    #[default]
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub rater: UserId,
    pub ratee: UserId,
    pub value: f64,
}

/// Ratings users gave to other users' reviews.
#[derive(Debug, Clone, Default)]
pub struct RatingTable {
    records: Vec<RatingRecord>,
    scale: RatingScale,
}

impl PartialEq for RatingTable {
    fn eq(&self, other: &Self) -> bool {
        self.scale == other.scale
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.rater == b.rater && a.ratee == b.ratee && a.value.to_bits() == b.value.to_bits()
            })
    }
}

impl RatingTable {
    pub fn new(records: Vec<RatingRecord>, scale: RatingScale) -> Result<Self, TableError> {
        for r in &records {
            if r.rater == r.ratee {
                return Err(TableError::SelfRating(r.rater.0));
            }
            let ok = match scale {
                RatingScale::Continuous => (0.0..=1.0).contains(&r.value),
                RatingScale::Binary => r.value == 0.0 || r.value == 1.0,
            };
            if !ok {
                return Err(TableError::RatingOutOfRange {
                    rater: r.rater.0,
                    value: r.value,
                    range: match scale {
                        RatingScale::Continuous => "[0, 1]",
                        RatingScale::Binary => "{0, 1}",
                    },
                });
            }
        }
        Ok(Self { records, scale })
    }

    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Author → set of authored papers.
pub type Authorship = BTreeMap<UserId, BTreeSet<PaperId>>;
