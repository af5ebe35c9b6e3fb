//! Raw and canonical dataset representations plus the numeric operations
//! that act on them.

pub mod bundle;
mod canonical;
mod preprocess;
mod pseudobulk;
mod raw;
mod split;

pub use canonical::{
    validate_canonical, CanonicalDataset, CanonicalObs, CanonicalVar, PertType, ValidationReport,
    Violation, ViolationKind, CANONICAL_OBS_KEYS,
};
pub use preprocess::{normalize_log1p, select_hvg};
pub use pseudobulk::{pseudo_bulk, PseudoBulkProfile};
pub(crate) use raw::format_float;
pub use raw::{Column, ColumnType, RawTable, VarTable};
pub use split::{split_unseen_cell, split_unseen_perturbation, SplitAssignment, SplitKind, SplitLabel};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("negative expression value {value} at cell {row}, gene {col}")]
    NegativeValue { row: usize, col: usize, value: f64 },
    #[error("non-finite expression value at cell {row}, gene {col}")]
    NonFinite { row: usize, col: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}
