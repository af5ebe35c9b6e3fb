//! Run configuration.
//!
//! File format: one `section.key=value` per line; blank lines and lines
//! starting with `#` are ignored. Precedence: dedicated flags, then
//! `--set` pairs, then the file, then built-in defaults.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use scpilot_core::evaluators::{SurrogateOptions, SyntheticConfig, TimeMode};
use scpilot_core::kb::RetrievalParams;
use scpilot_core::search::{SearchConfig, SearchMode};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSettings {
    pub train_frac: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KbSettings {
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnifySettings {
    pub sample_size: usize,
    pub model: String,
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluatorSettings {
    /// Fraction of candidates that fail until debugged; 0 disables injection.
    pub failure_fraction: f64,
    pub failure_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurrogateSettings {
    pub base_lambda: f64,
    pub mask_seed: u64,
    pub mask_fraction: f64,
    pub time_mode: TimeMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub search: SearchConfig,
    pub retrieval: RetrievalParams,
    pub split: SplitSettings,
    pub kb: KbSettings,
    pub unify: UnifySettings,
    pub evaluator: EvaluatorSettings,
    pub surrogate: SurrogateSettings,
    pub synthetic: SyntheticConfig,
}

impl Default for Settings {
    fn default() -> Self {
        let s = SurrogateOptions::default();
        Settings {
            search: SearchConfig::default(),
            retrieval: RetrievalParams::default(),
            split: SplitSettings { train_frac: 0.8, seed: 0 },
            kb: KbSettings { dim: 256 },
            unify: UnifySettings { sample_size: 5, model: "default".into(), timeout_secs: 120 },
            evaluator: EvaluatorSettings { failure_fraction: 0.0, failure_seed: 0 },
            surrogate: SurrogateSettings {
                base_lambda: s.base_lambda,
                mask_seed: s.mask_seed,
                mask_fraction: s.mask_fraction,
                time_mode: s.time_mode,
            },
            synthetic: SyntheticConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| CliError::Usage(format!("{key}: cannot parse '{value}'")))
}

impl Settings {
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut s = Settings::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                s.apply_pair(line).map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
            }
        }
        for o in overrides {
            s.apply_pair(o)?;
        }
        Ok(s)
    }

    fn apply_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected section.key=value, got '{pair}'")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        match key {
            "search.c" => self.search.c = parse(key, v)?,
            "search.alpha_qmix" => self.search.alpha_qmix = parse(key, v)?,
            "search.uct_epsilon" => self.search.uct_epsilon = parse(key, v)?,
            "search.n_sim" => self.search.n_sim = parse(key, v)?,
            "search.w_p" => self.search.w_p = parse(key, v)?,
            "search.w_e" => self.search.w_e = parse(key, v)?,
            "search.wall_clock_budget" => self.search.wall_clock_budget = parse(key, v)?,
            "search.seed" => self.search.seed = parse(key, v)?,
            "search.strict" => self.search.strict = parse(key, v)?,
            "search.mode" => self.search.mode = parse_mode(v)?,
            "retrieval.tau_filter" => self.retrieval.tau_filter = parse(key, v)?,
            "retrieval.m" => self.retrieval.m = parse(key, v)?,
            "retrieval.alpha_retrieval" => self.retrieval.alpha_retrieval = parse(key, v)?,
            "retrieval.tau" => self.retrieval.tau = parse(key, v)?,
            "split.train_frac" => self.split.train_frac = parse(key, v)?,
            "split.seed" => self.split.seed = parse(key, v)?,
            "kb.dim" => self.kb.dim = parse(key, v)?,
            "unify.sample_size" => self.unify.sample_size = parse(key, v)?,
            "unify.model" => self.unify.model = v.to_string(),
            "unify.timeout_secs" => self.unify.timeout_secs = parse(key, v)?,
            "evaluator.failure_fraction" => self.evaluator.failure_fraction = parse(key, v)?,
            "evaluator.failure_seed" => self.evaluator.failure_seed = parse(key, v)?,
            "surrogate.base_lambda" => self.surrogate.base_lambda = parse(key, v)?,
            "surrogate.mask_seed" => self.surrogate.mask_seed = parse(key, v)?,
            "surrogate.mask_fraction" => self.surrogate.mask_fraction = parse(key, v)?,
            "surrogate.time_mode" => {
                self.surrogate.time_mode = match v {
                    "simulated" => TimeMode::Simulated,
                    "wall_clock" => TimeMode::WallClock,
                    _ => return Err(CliError::Usage(format!("{key}: expected simulated or wall_clock, got '{v}'"))),
                }
            }
            "synthetic.n_genes" => self.synthetic.n_genes = parse(key, v)?,
            "synthetic.n_perts" => self.synthetic.n_perts = parse(key, v)?,
            "synthetic.n_combos" => self.synthetic.n_combos = parse(key, v)?,
            "synthetic.cells_per_condition" => self.synthetic.cells_per_condition = parse(key, v)?,
            "synthetic.noise_sigma" => self.synthetic.noise_sigma = parse(key, v)?,
            "synthetic.effect_sparsity" => self.synthetic.effect_sparsity = parse(key, v)?,
            "synthetic.seed" => self.synthetic.seed = parse(key, v)?,
            _ => return Err(CliError::Usage(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn surrogate_options(&self) -> SurrogateOptions {
        SurrogateOptions {
            base_lambda: self.surrogate.base_lambda,
            mask_seed: self.surrogate.mask_seed,
            mask_fraction: self.surrogate.mask_fraction,
            time_mode: self.surrogate.time_mode,
        }
    }

    /// Sections relevant to `command`, for the run manifest.
    pub fn resolved(&self, sections: &[&str]) -> Value {
        let all = serde_json::to_value(self).expect("settings serialize");
        let mut out = serde_json::Map::new();
        for s in sections {
            out.insert(s.to_string(), all[*s].clone());
        }
        Value::Object(out)
    }
}

pub fn parse_mode(v: &str) -> Result<SearchMode, CliError> {
    match v {
        "hierarchical" => Ok(SearchMode::Hierarchical),
        "flat" | "flat_ablation" => Ok(SearchMode::FlatAblation),
        _ => Err(CliError::Usage(format!("mode must be hierarchical or flat, got '{v}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nsearch.n_sim = 64\nsearch.c=2\n\nretrieval.tau=0.6\n").unwrap();
        let s = Settings::load(Some(&path), &["search.c=0.5".into()]).unwrap();
        assert_eq!((s.search.n_sim, s.search.c, s.retrieval.tau), (64, 0.5, 0.6));
        assert_eq!(s.search.w_p, 0.8);
    }

    #[test]
    fn bad_keys_and_values() {
        assert!(Settings::load(None, &["search.nsim=3".into()]).unwrap_err().to_string().contains("unknown config key"));
        assert!(Settings::load(None, &["search.n_sim=x".into()]).is_err());
        assert!(Settings::load(None, &["search.n_sim".into()]).is_err());
        let s = Settings::load(None, &["search.mode=flat".into()]).unwrap();
        assert_eq!(s.search.mode, SearchMode::FlatAblation);
    }

    #[test]
    fn resolved_sections() {
        let v = Settings::default().resolved(&["search", "retrieval"]);
        assert_eq!(v["search"]["n_sim"], 32);
        assert_eq!(v["retrieval"]["tau_filter"], 0.3);
        assert!(v.get("kb").is_none());
    }
}
