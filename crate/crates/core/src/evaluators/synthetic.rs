use ndarray::Array2;
use rand::seq::{index::sample, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{pathway_mask, EvalError};
use crate::model::{normalize_log1p, CanonicalDataset, CanonicalObs, CanonicalVar, PertType};

/// Restricts every perturbation effect to the genes selected by
/// [`pathway_mask`] with this seed and fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathwaySupport {
    pub seed: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_genes: usize,
    pub n_perts: usize,
    /// Cells per condition, control included.
    pub cells_per_condition: usize,
    /// Standard deviation of additive Gaussian noise in linear space.
    pub noise_sigma: f64,
    /// Fraction of genes each perturbation moves.
    pub effect_sparsity: f64,
    pub seed: u64,
    /// Number of two-perturbation conditions with additive effects.
    #[serde(default)]
    pub n_combos: usize,
    #[serde(default)]
    pub pathway: Option<PathwaySupport>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_genes: 100,
            n_perts: 10,
            cells_per_condition: 20,
            noise_sigma: 1.0,
            effect_sparsity: 0.1,
            seed: 0,
            n_combos: 10,
            pathway: None,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::Config(m));
        if self.n_genes == 0 || self.n_perts == 0 || self.cells_per_condition == 0 {
            return bad("n_genes, n_perts and cells_per_condition must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.effect_sparsity) {
            return bad(format!("effect_sparsity must be in [0, 1], got {}", self.effect_sparsity));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be finite and >= 0, got {}", self.noise_sigma));
        }
        let pairs = self.n_perts * (self.n_perts - 1) / 2;
        if self.n_combos > pairs {
            return bad(format!("n_combos {} exceeds the {pairs} available pairs", self.n_combos));
        }
        if let Some(p) = &self.pathway {
            if !(p.fraction > 0.0 && p.fraction <= 1.0) {
                return bad(format!("pathway fraction must be in (0, 1], got {}", p.fraction));
            }
        }
        Ok(())
    }

    pub fn n_affected(&self) -> usize {
        (self.effect_sparsity * self.n_genes as f64 - 1e-9).ceil().max(0.0) as usize
    }
}

/// Hidden quantities behind a generated dataset, in linear (pre-log) space.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Basal mean profile, one value per gene.
    pub basal: Vec<f64>,
    /// Effect of each single perturbation (rows follow `pert_vocab`).
    pub effects: Array2<f64>,
    /// Condition names in generation order, control first.
    pub conditions: Vec<String>,
    /// Noisy expression clipped at 0, before normalization (cells x genes).
    pub linear: Array2<f64>,
    /// Genes effects were drawn from, when restricted.
    pub support: Option<Vec<usize>>,
}

impl GroundTruth {
    /// Sum of the effects of the perturbations in a condition name like `P01+P04`.
    pub fn condition_effect(&self, condition: &str, vocab: &[String]) -> Option<Vec<f64>> {
        let mut out = vec![0.0; self.basal.len()];
        if condition == super::CONTROL_NAME {
            return Some(out);
        }
        for part in condition.split('+') {
            let p = vocab.iter().position(|v| v == part)?;
            for (o, e) in out.iter_mut().zip(self.effects.row(p)) {
                *o += e;
            }
        }
        Some(out)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "basal": self.basal,
            "effects": self.effects.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
            "conditions": self.conditions,
            "support": self.support,
        })
    }
}

pub fn ensembl_id(g: usize) -> String {
    format!("ENSG{g:011}")
}

/// Draws a dataset where every cell is `basal + sum of its perturbation
/// effects + noise`, clipped at 0, then library-size normalized and log1p'd.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(CanonicalDataset, GroundTruth), EvalError> {
    cfg.validate()?;
    let g = cfg.n_genes;
    let p = cfg.n_perts;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ensembl: Vec<String> = (0..g).map(ensembl_id).collect();

    let basal: Vec<f64> = (0..g).map(|_| rng.random_range(5.0..50.0)).collect();

    let support: Option<Vec<usize>> = cfg.pathway.map(|pw| {
        let mask = pathway_mask(&ensembl, pw.seed, pw.fraction);
        (0..g).filter(|&j| mask[j]).collect()
    });
    let pool: Vec<usize> = support.clone().unwrap_or_else(|| (0..g).collect());
    let k = cfg.n_affected();
    if k > pool.len() {
        return Err(EvalError::Config(format!(
            "effect_sparsity asks for {k} affected genes but only {} genes are eligible",
            pool.len()
        )));
    }
    let mut effects = Array2::<f64>::zeros((p, g));
    for i in 0..p {
        for idx in sample(&mut rng, pool.len(), k) {
            let j = pool[idx];
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            effects[[i, j]] = sign * rng.random_range(0.3..0.45) * basal[j];
        }
    }

    let width = (p.saturating_sub(1)).to_string().len().max(2);
    let vocab: Vec<String> = (0..p).map(|i| format!("P{i:0width$}")).collect();
    let mut all_pairs: Vec<(usize, usize)> = (0..p).flat_map(|a| (a + 1..p).map(move |b| (a, b))).collect();
    all_pairs.shuffle(&mut rng);
    let mut combos: Vec<(usize, usize)> = all_pairs.into_iter().take(cfg.n_combos).collect();
    combos.sort_unstable();

    let mut conditions: Vec<(String, Vec<usize>)> = vec![(super::CONTROL_NAME.to_string(), vec![])];
    conditions.extend((0..p).map(|i| (vocab[i].clone(), vec![i])));
    conditions.extend(combos.iter().map(|&(a, b)| (format!("{}+{}", vocab[a], vocab[b]), vec![a, b])));

    let n_cells = conditions.len() * cfg.cells_per_condition;
    let mut linear = Array2::<f64>::zeros((n_cells, g));
    let mut mask = Array2::<u8>::zeros((n_cells, p));
    let mut names = Vec::with_capacity(n_cells);
    let mut is_control = Vec::with_capacity(n_cells);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut row = 0;
    for (name, members) in &conditions {
        let mut mean = basal.clone();
        for &m in members {
            for (x, e) in mean.iter_mut().zip(effects.row(m)) {
                *x += e;
            }
        }
        for _ in 0..cfg.cells_per_condition {
            for j in 0..g {
                let eps = if cfg.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                linear[[row, j]] = (mean[j] + eps).max(0.0);
            }
            for &m in members {
                mask[[row, m]] = 1;
            }
            names.push(name.clone());
            is_control.push(members.is_empty());
            row += 1;
        }
    }

    let x = normalize_log1p(&linear, 1e4, false, true).map_err(|e| EvalError::Config(e.to_string()))?;
    let ds = CanonicalDataset {
        obs: CanonicalObs {
            cell_type: vec!["synthetic".into(); n_cells],
            batch_id: vec!["batch0".into(); n_cells],
            donor_id: vec!["donor0".into(); n_cells],
            pert_type: is_control.iter().map(|&c| if c { PertType::Control } else { PertType::Crispr }).collect(),
            is_control,
            condition_name: names,
            extra: Default::default(),
        },
        var: CanonicalVar { ensembl_id: ensembl, gene_symbol: (0..g).map(|j| format!("GENE{j}")).collect() },
        x,
        pert_dose: mask.mapv(f64::from),
        pert_mask: mask,
        pert_vocab: vocab,
    };
    let truth = GroundTruth {
        basal,
        effects,
        conditions: conditions.into_iter().map(|c| c.0).collect(),
        linear,
        support,
    };
    Ok((ds, truth))
}
