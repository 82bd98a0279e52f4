//! Paper-quality estimation from noisy reviews.
//!
//! The crate is organised bottom-up:
//!
//! * [`estimator`] holds the pure aggregation kernels (simple mean,
//!   inverse-variance weighting, the analytic MSD formulas and the
//!   certainty gate).
//! * [`table`] defines the review, rating and authorship tables every other
//!   module consumes.
//! * [`quality`] estimates reviewer precision from review history, from
//!   ratings of reviews (with binning) and from authorship.
//! * [`genmodel`] is the generative world model: hidden paper and reviewer
//!   qualities, bots, and noisy review/rating draws.
//! * [`sim`] runs the multi-year open platform and scores it against the
//!   hidden ground truth.
//! * [`analysis`] computes agreement statistics over review tables.
//! * [`ingest`] reads and writes the delimited / line-delimited table formats.
//! * [`experiments`] bundles the reproducible scenario presets driven by the CLI.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod estimator;
pub mod experiments;
pub mod genmodel;
pub mod ingest;
pub mod quality;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod table;

pub use estimator::{CertaintyPolicy, EstimateError, PaperEstimate, ReviewerPrecision, ScoreSample};
pub use genmodel::{Agent, ClampMode, PaperTruth, QualityDist, World, WorldConfig};
pub use quality::{QualityConfig, QualityError, ReviewerQuality};
pub use sim::{AllocationPolicy, Method, SimConfig, SimReport};
pub use table::{Authorship, PaperId, RatingTable, Registry, ReviewTable, UserId};
