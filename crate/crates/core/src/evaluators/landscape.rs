use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::hash::{fnv1a, unit_interval};
use crate::search::{Candidate, EvalOutcome, Evaluator, Score};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapeEntry {
    pub mean: f64,
    #[serde(default)]
    pub jitter_bound: f64,
}

/// Lookup-table evaluator keyed by [`Candidate::key`]. The score is the
/// table mean plus a jitter in `[-bound, bound]` derived from the seed and
/// the key. `debug_fixed` is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeOracle {
    pub table: IndexMap<String, LandscapeEntry>,
    pub t_exec: f64,
}

impl LandscapeOracle {
    pub fn new(table: IndexMap<String, LandscapeEntry>) -> Result<Self, EvalError> {
        for (key, e) in &table {
            key.parse::<Candidate>().map_err(|err| EvalError::Landscape(err.to_string()))?;
            if !(0.0..=1.0).contains(&e.mean) || !(e.jitter_bound >= 0.0) {
                return Err(EvalError::Landscape(format!(
                    "'{key}': mean must be in [0, 1] and jitter_bound >= 0, got {} and {}",
                    e.mean, e.jitter_bound
                )));
            }
        }
        Ok(LandscapeOracle { table, t_exec: 1.0 })
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let table: IndexMap<String, LandscapeEntry> =
            serde_json::from_str(text).map_err(|e| EvalError::Landscape(e.to_string()))?;
        Self::new(table)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvalError::Landscape(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.table).expect("table serializes")
    }

    /// Copy of the table with every jitter bound set to `bound`.
    pub fn with_jitter(&self, bound: f64) -> Self {
        let table = self.table.iter().map(|(k, e)| (k.clone(), LandscapeEntry { jitter_bound: bound, ..*e })).collect();
        LandscapeOracle { table, t_exec: self.t_exec }
    }

    pub fn lookup(&self, candidate: &Candidate, seed: u64) -> Result<f64, EvalError> {
        let key = candidate.key();
        let e = self.table.get(&key).ok_or_else(|| EvalError::UnknownCandidate(key.clone()))?;
        let jitter = (2.0 * unit_interval(fnv1a(seed, key.as_bytes())) - 1.0) * e.jitter_bound;
        Ok((e.mean + jitter).clamp(0.0, 1.0))
    }
}

impl Evaluator for LandscapeOracle {
    fn evaluate(&self, candidate: &Candidate, seed: u64) -> EvalOutcome {
        match self.lookup(candidate, seed) {
            Ok(m) => EvalOutcome::value(m, self.t_exec),
            Err(e) => EvalOutcome::failed(e.to_string(), self.t_exec),
        }
    }
}

/// Wraps an evaluator and fails a deterministic fraction of candidates
/// (chosen by hashing the key) unless they carry `debug_fixed`. A fixed
/// candidate succeeds when a second hash falls below `fix_rate`.
#[derive(Debug, Clone)]
pub struct FailureInjector<E> {
    pub inner: E,
    pub fraction: f64,
    pub fix_rate: f64,
    pub seed: u64,
}

impl<E> FailureInjector<E> {
    pub fn new(inner: E, fraction: f64, seed: u64) -> Self {
        FailureInjector { inner, fraction, fix_rate: 1.0, seed }
    }

    pub fn is_injected(&self, candidate: &Candidate) -> bool {
        unit_interval(fnv1a(self.seed, candidate.key().as_bytes())) < self.fraction
    }

    fn fix_succeeds(&self, candidate: &Candidate) -> bool {
        unit_interval(fnv1a(self.seed ^ 0xdeb0_9f1e, candidate.key().as_bytes())) < self.fix_rate
    }
}

impl<E: Evaluator> Evaluator for FailureInjector<E> {
    fn evaluate(&self, candidate: &Candidate, seed: u64) -> EvalOutcome {
        if self.is_injected(candidate) {
            if !candidate.debug_fixed {
                return EvalOutcome::failed(format!("injected failure in {}", candidate.key()), 0.0);
            }
            if !self.fix_succeeds(candidate) {
                return EvalOutcome::failed(format!("debugging did not fix {}", candidate.key()), 0.0);
            }
        }
        self.inner.evaluate(candidate, seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveRow {
    pub candidate: Candidate,
    pub outcome: EvalOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveResult {
    pub rows: Vec<ExhaustiveRow>,
    /// Index into `rows`; `None` when every candidate failed.
    pub best: Option<usize>,
}

impl ExhaustiveResult {
    pub fn best_candidate(&self) -> Option<Candidate> {
        self.best.map(|i| self.rows[i].candidate)
    }

    pub fn best_m_val(&self) -> Option<f64> {
        self.best.map(|i| self.rows[i].outcome.m())
    }

    pub const TSV_HEADER: &'static str = "candidate\tparadigm\tbackbone\thyperparams\tloss\tstatus\tm_val\tt_exec\tmessage";

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(Self::TSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let c = &row.candidate;
            let (status, m, msg) = match &row.outcome.score {
                Score::Value(v) => ("ok", v.to_string(), String::new()),
                Score::Undefined => ("undefined", String::new(), String::new()),
                Score::Failed(e) => ("failed", String::new(), e.replace(['\t', '\n'], " ")),
            };
            let hp = c.hyperparams.map(|h| h.to_string()).unwrap_or_else(|| "default".into());
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                c.key(),
                c.paradigm.name(),
                c.backbone.name(),
                hp,
                c.loss.name(),
                status,
                m,
                row.outcome.t_exec,
                msg
            ));
        }
        out
    }
}

/// Evaluates every grid candidate once, in canonical order.
pub fn exhaustive_best(evaluator: &dyn Evaluator, seed: u64) -> ExhaustiveResult {
    exhaustive_over(evaluator, &Candidate::enumerate_grid(), seed)
}

/// Argmax by score over `candidates`; ties keep the earliest. Undefined
/// scores count as 0, failures are never best.
pub fn exhaustive_over(evaluator: &dyn Evaluator, candidates: &[Candidate], seed: u64) -> ExhaustiveResult {
    let rows: Vec<ExhaustiveRow> =
        candidates.iter().map(|c| ExhaustiveRow { candidate: *c, outcome: evaluator.evaluate(c, seed) }).collect();
    let mut best: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        if r.outcome.is_failed() {
            continue;
        }
        if best.is_none_or(|b| r.outcome.m() > rows[b].outcome.m()) {
            best = Some(i);
        }
    }
    ExhaustiveResult { rows, best }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::{Backbone, HyperParams, LossKind, Paradigm};

    fn table() -> LandscapeOracle {
        let mut t = IndexMap::new();
        for (i, c) in Candidate::enumerate_grid().iter().enumerate() {
            t.insert(c.key(), LandscapeEntry { mean: 0.2 + 0.01 * (i % 7) as f64, jitter_bound: 0.0 });
        }
        let top = Candidate::new(Paradigm::Discriminative, Backbone::ResNet, Some(HyperParams::GRID[3]), LossKind::Mse).unwrap();
        t.insert(top.key(), LandscapeEntry { mean: 0.9, jitter_bound: 0.0 });
        LandscapeOracle::new(t).unwrap()
    }

    #[test]
    fn zero_jitter_is_exact() {
        let o = table();
        let c = Candidate::enumerate_grid()[3];
        assert_eq!(o.evaluate(&c, 17).score, Score::Value(o.table[&c.key()].mean));
    }

    #[test]
    fn jitter_bounded_and_pure() {
        let o = table().with_jitter(0.05);
        for c in Candidate::enumerate_grid() {
            for seed in 0..5 {
                let a = o.evaluate(&c, seed);
                assert_eq!(a, o.evaluate(&c, seed));
                assert!((a.m() - o.table[&c.key()].mean).abs() <= 0.05 + 1e-15);
            }
        }
    }

    #[test]
    fn exhaustive_finds_unique_max() {
        let r = exhaustive_best(&table(), 0);
        assert_eq!(r.rows.len(), 50);
        assert_eq!(r.best_candidate().unwrap().key(), "discriminative/resnet/hp(lr=0.003,reg=1,dropout=0.2)");
        assert_eq!(r.best_m_val(), Some(0.9));
        assert_eq!(r.to_tsv(), exhaustive_best(&table(), 0).to_tsv());
        assert!(r.to_tsv().starts_with(ExhaustiveResult::TSV_HEADER));
    }

    #[test]
    fn unknown_and_all_failed() {
        let empty = LandscapeOracle::new(IndexMap::new()).unwrap();
        let out = empty.evaluate(&Candidate::enumerate_grid()[0], 0);
        assert!(matches!(out.score, Score::Failed(ref m) if m.contains("unknown candidate")));
        let r = exhaustive_best(&empty, 0);
        assert_eq!(r.best, None);
        assert!(LandscapeOracle::from_json(r#"{"generative/resnet": {"mean": 0.5}}"#).is_err());
        assert!(LandscapeOracle::from_json(r#"{"generative/flow_matching": {"mean": 1.5}}"#).is_err());
    }

    #[test]
    fn injector_contract() {
        let inj = FailureInjector::new(table(), 0.3, 4);
        let grid = Candidate::enumerate_grid();
        let injected: Vec<&Candidate> = grid.iter().filter(|c| inj.is_injected(c)).collect();
        assert!(!injected.is_empty() && injected.len() < grid.len());
        for c in &injected {
            assert!(inj.evaluate(c, 0).is_failed());
            let fixed = Candidate { debug_fixed: true, ..**c };
            assert!(!inj.evaluate(&fixed, 0).is_failed());
        }
        let never = FailureInjector { fix_rate: 0.0, ..FailureInjector::new(table(), 1.0, 4) };
        assert!(never.evaluate(&Candidate { debug_fixed: true, ..grid[0] }, 0).is_failed());
    }
}
