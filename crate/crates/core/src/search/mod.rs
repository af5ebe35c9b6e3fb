//! Monte Carlo Tree Search over modeling pipelines.
//!
//! The action space has three levels (paradigm, backbone, refinement) plus a
//! Debug action at nodes whose evaluation failed. Each iteration selects a
//! path with optimistic UCT, expands one untried action, evaluates the
//! resulting candidate and backpropagates `w_p * m + w_e * f_time(t)`.
//!
//! Conventions that are not obvious from the formulas:
//!
//! - Untried actions are expanded before any visited sibling is re-selected,
//!   in an order shuffled by the run seed.
//! - Refinements chain at most twice per path, each kind at most once, so the
//!   deepest node sits at level 4.
//! - A paradigm-level node is evaluated with the paradigm's first backbone.
//! - `T_root` is the execution time of the first successful evaluation;
//!   before one exists the time ratio is 1.
//! - A warm start creates the retrieved path up front and evaluates its leaf
//!   as iteration 1.

mod action;
mod engine;
mod scoring;

use thiserror::Error;

pub use action::{
    validate_action_path, Action, Backbone, Candidate, HyperParams, LossKind, Paradigm, Refinement,
};
pub use engine::{
    legal_actions, run_search, BestCandidate, Node, NodeStatus, SearchResult, SearchTree, TrajectoryRecord,
};
pub use scoring::{backpropagate, f_time, q_mix, reward, uct_score, EvalOutcome, NodeStats, Score};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("q_mix is undefined for a node with no visits")]
    UnvisitedNode,
    #[error("time ratio must be >= 0, got {0}")]
    NegativeTime(f64),
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("evaluator returned different outcomes for the same input ({candidate})")]
    Nondeterministic { candidate: String },
}

/// Scores a candidate. Implementations must be pure in `(candidate, seed)`.
pub trait Evaluator {
    fn evaluate(&self, candidate: &Candidate, seed: u64) -> EvalOutcome;
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn evaluate(&self, candidate: &Candidate, seed: u64) -> EvalOutcome {
        (**self).evaluate(candidate, seed)
    }
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn evaluate(&self, candidate: &Candidate, seed: u64) -> EvalOutcome {
        (**self).evaluate(candidate, seed)
    }
}

/// Supplies concrete values for Hyperparam refinements at a node.
pub trait Proposer {
    fn hyperparams(&self, candidate: &Candidate) -> Vec<HyperParams>;
}

/// Offers every point of [`HyperParams::GRID`].
#[derive(Debug, Clone, Copy, Default)]
pub struct GridProposer;

impl Proposer for GridProposer {
    fn hyperparams(&self, _candidate: &Candidate) -> Vec<HyperParams> {
        HyperParams::GRID.to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    #[default]
    Hierarchical,
    /// After the paradigm, every backbone and refinement is offered at every depth.
    FlatAblation,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SearchConfig {
    pub c: f64,
    pub alpha_qmix: f64,
    pub uct_epsilon: f64,
    pub n_sim: usize,
    pub w_p: f64,
    pub w_e: f64,
    /// Seconds; checked between iterations.
    pub wall_clock_budget: f64,
    pub seed: u64,
    pub mode: SearchMode,
    /// Re-run every evaluation and fail on any difference.
    pub strict: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            c: 1.0,
            alpha_qmix: 0.7,
            uct_epsilon: 1e-6,
            n_sim: 32,
            w_p: 0.8,
            w_e: 0.2,
            wall_clock_budget: 5.0 * 3600.0,
            seed: 0,
            mode: SearchMode::Hierarchical,
            strict: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: String| Err(SearchError::InvalidConfig(m));
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return bad(format!("c must be finite and >= 0, got {}", self.c));
        }
        if !(0.0..=1.0).contains(&self.alpha_qmix) {
            return bad(format!("alpha_qmix must be in [0, 1], got {}", self.alpha_qmix));
        }
        if !(self.uct_epsilon > 0.0) {
            return bad(format!("uct_epsilon must be > 0, got {}", self.uct_epsilon));
        }
        if self.n_sim == 0 {
            return bad("n_sim must be >= 1".into());
        }
        if !(self.w_p >= 0.0 && self.w_e >= 0.0) {
            return bad(format!("reward weights must be >= 0, got w_p={} w_e={}", self.w_p, self.w_e));
        }
        if !(self.wall_clock_budget > 0.0) {
            return bad(format!("wall_clock_budget must be > 0, got {}", self.wall_clock_budget));
        }
        Ok(())
    }
}
