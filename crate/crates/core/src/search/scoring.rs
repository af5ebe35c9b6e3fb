use serde::{Deserialize, Serialize};

use super::{SearchConfig, SearchError};

/// Validation score reported by an evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Score {
    /// `m_val` in `[0, 1]`.
    Value(f64),
    /// The metric layer could not produce a value (e.g. every shift constant).
    Undefined,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub score: Score,
    /// Seconds, simulated or measured.
    pub t_exec: f64,
}

impl EvalOutcome {
    pub fn value(m_val: f64, t_exec: f64) -> Self {
        EvalOutcome { score: Score::Value(m_val), t_exec }
    }

    pub fn failed(msg: impl Into<String>, t_exec: f64) -> Self {
        EvalOutcome { score: Score::Failed(msg.into()), t_exec }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self.score, Score::Failed(_))
    }

    /// Score used by the reward: 0 for failed or undefined outcomes.
    pub fn m(&self) -> f64 {
        match self.score {
            Score::Value(v) => v,
            Score::Undefined | Score::Failed(_) => 0.0,
        }
    }
}

/// Visit statistics of a tree node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeStats {
    pub n: u64,
    pub q_sum: f64,
    pub q_max: f64,
}

impl Default for NodeStats {
    fn default() -> Self {
        NodeStats { n: 0, q_sum: 0.0, q_max: f64::NEG_INFINITY }
    }
}

impl NodeStats {
    pub fn q_mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.q_sum / self.n as f64)
    }

    pub fn update(&mut self, r: f64) {
        self.n += 1;
        self.q_sum += r;
        self.q_max = self.q_max.max(r);
    }
}

/// Applies one reward to every node on a root-first path.
pub fn backpropagate<'a>(path: impl IntoIterator<Item = &'a mut NodeStats>, r: f64) {
    for stats in path {
        stats.update(r);
    }
}

/// Optimistic value `alpha * Q_max + (1 - alpha) * Q_mean`.
pub fn q_mix(stats: &NodeStats, alpha_qmix: f64) -> Result<f64, SearchError> {
    let mean = stats.q_mean().ok_or(SearchError::UnvisitedNode)?;
    Ok(alpha_qmix * stats.q_max + (1.0 - alpha_qmix) * mean)
}

/// Selection score of a child given its parent's visit count. An unvisited
/// child contributes 0 for the value term.
pub fn uct_score(parent_n: u64, child: &NodeStats, config: &SearchConfig) -> f64 {
    let exploit = q_mix(child, config.alpha_qmix).unwrap_or(0.0);
    let ln_parent = if parent_n == 0 { 0.0 } else { (parent_n as f64).ln() };
    exploit + config.c * (ln_parent / (child.n as f64 + config.uct_epsilon)).sqrt()
}

/// Piecewise-linear time penalty on the normalized time ratio.
pub fn f_time(t: f64) -> Result<f64, SearchError> {
    if !(t >= 0.0) {
        return Err(SearchError::NegativeTime(t));
    }
    Ok(if t <= 0.8 {
        1.0
    } else if t <= 1.0 {
        1.0 - 0.2 * (t - 0.8) / 0.2
    } else if t <= 1.5 {
        0.8 - 0.3 * (t - 1.0) / 0.5
    } else {
        (0.5 - 0.5 * (t - 1.5) / 1.5).max(0.0)
    })
}

/// `w_p * m + w_e * f_time(t_ratio)`.
pub fn reward(outcome: &EvalOutcome, t_ratio: f64, config: &SearchConfig) -> Result<f64, SearchError> {
    Ok(config.w_p * outcome.m() + config.w_e * f_time(t_ratio)?)
}
