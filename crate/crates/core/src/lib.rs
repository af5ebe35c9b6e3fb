//! Single-cell perturbation toolkit: metadata harmonization into a canonical
//! schema, pseudo-bulk evaluation metrics, and a Monte Carlo Tree Search over
//! a hierarchical space of modeling pipelines with retrieval-based warm starts.
//!
//! Module map:
//!
//! - [`model`]: raw and canonical datasets, preprocessing, pseudo-bulk, splits, bundle IO
//! - [`dsl`]: the mapping expression language (parser, evaluator, formatter)
//! - [`unifier`]: schema preview, mapping induction through an LLM gateway, mapping application, merging
//! - [`metrics`]: RMSE, DeltaPCC, CosLogFC and aggregate reports
//! - [`kb`]: knowledge base persistence, embeddings and warm-start retrieval
//! - [`search`]: action space, UCT selection, rewards and the search loop
//! - [`evaluators`]: synthetic data, surrogate trainers, landscape oracle, failure injection, exhaustive oracle

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dsl;
pub mod evaluators;
pub mod kb;
pub mod metrics;
pub mod model;
pub mod search;
pub mod unifier;

pub(crate) mod hash;
pub(crate) mod http;

pub use model::{CanonicalDataset, RawTable};
