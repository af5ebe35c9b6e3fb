//! Everything the search scores against at desk scale.
//!
//! The surrogate trainers are not neural networks. Each backbone maps to a
//! small closed-form estimator chosen so that different data regimes favor
//! different branches of the search tree; see [`SurrogateEvaluator`].

mod landscape;
mod surrogate;
mod synthetic;

use thiserror::Error;

use crate::hash::{fnv1a, unit_interval};

pub use landscape::{
    exhaustive_best, exhaustive_over, ExhaustiveResult, ExhaustiveRow, FailureInjector, LandscapeEntry,
    LandscapeOracle,
};
pub use surrogate::{SurrogateEvaluator, SurrogateOptions, TimeMode};
pub use synthetic::{ensembl_id, generate_synthetic, GroundTruth, PathwaySupport, SyntheticConfig};

/// Condition name of control cells in generated data.
pub const CONTROL_NAME: &str = "ctrl";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("landscape table: {0}")]
    Landscape(String),
    #[error("unknown candidate leaf '{0}'")]
    UnknownCandidate(String),
}

/// Gene membership in a pseudo-pathway: a gene is in when the hash of its
/// Ensembl id under `seed` falls below `fraction`. Keyed by id, so the mask
/// follows genes under reordering.
pub fn pathway_mask(ensembl_ids: &[String], seed: u64, fraction: f64) -> Vec<bool> {
    ensembl_ids.iter().map(|id| unit_interval(fnv1a(seed, id.as_bytes())) < fraction).collect()
}
