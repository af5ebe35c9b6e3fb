use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{pathway_mask, EvalError};
use crate::metrics::evaluate_predictions;
use crate::model::{CanonicalDataset, PseudoBulkProfile, SplitAssignment, SplitLabel};
use crate::search::{Backbone, Candidate, EvalOutcome, Evaluator, LossKind, Score};

const CONTROL_PROFILE: &str = "__control__";
const HUBER_K: f64 = 1.345;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    /// Deterministic cost table; keeps the evaluator pure.
    #[default]
    Simulated,
    /// Measured fit-and-predict time. Not pure.
    WallClock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateOptions {
    /// Ridge penalty before the Hyperparam `reg_scale` multiplier.
    pub base_lambda: f64,
    pub mask_seed: u64,
    pub mask_fraction: f64,
    pub time_mode: TimeMode,
}

impl Default for SurrogateOptions {
    fn default() -> Self {
        SurrogateOptions { base_lambda: 1e-2, mask_seed: 0, mask_fraction: 0.5, time_mode: TimeMode::Simulated }
    }
}

#[derive(Debug, Clone)]
struct TrainCondition {
    members: Vec<usize>,
    mean: Vec<f64>,
    huber: Vec<f64>,
}

#[derive(Debug, Clone)]
struct ValCondition {
    members: Vec<usize>,
    truth: PseudoBulkProfile,
}

#[derive(Debug, Clone)]
struct Prepared {
    train: Vec<TrainCondition>,
    ctrl_mean: Vec<f64>,
    ctrl_huber: Vec<f64>,
    /// Pooled within-condition variance of train cells, per gene.
    noise_var: Vec<f64>,
    mean_cells: f64,
    val: Vec<ValCondition>,
    val_ctrl: PseudoBulkProfile,
}

/// Closed-form stand-ins for the neural backbones. Each fits condition-level
/// shifts (`train condition profile - train control profile`) on the train
/// split and predicts `val control mean + predicted shift` for every val
/// condition. `m_val` is `max(0, mean DeltaPCC)` over val conditions.
///
/// - ResNet: ridge regression of shifts on the multi-hot perturbation design.
/// - GatedMLP: the same ridge fit with a per-gene gate `v / (v + s)`, where `v`
///   is the spread of fitted coefficients and `s` the noise variance of a
///   condition mean.
/// - PathwayMasked: ridge fit, genes outside a seeded mask predicted as 0.
/// - ConditionalVAE: per-perturbation mean shifts shrunk toward their grand
///   mean (James-Stein); unseen perturbations get the grand mean.
/// - FlowMatching: each component moves a fraction `t` of the way from the
///   grand mean to its own mean shift, `t = 1 / (1 + reg_scale / 4)`.
///
/// Huber loss swaps per-condition means for Huber location estimates.
/// `reg_scale` multiplies the ridge penalty or the shrinkage intensity, and
/// `dropout` soft-thresholds the predicted shift at `dropout * sd(shift)`.
#[derive(Debug, Clone)]
pub struct SurrogateEvaluator {
    opts: SurrogateOptions,
    n_perts: usize,
    n_genes: usize,
    size: f64,
    mask: Vec<bool>,
    prepared: Result<Prepared, String>,
}

impl SurrogateEvaluator {
    pub fn new(ds: &CanonicalDataset, split: &SplitAssignment, opts: SurrogateOptions) -> Result<Self, EvalError> {
        if split.labels.len() != ds.n_cells() {
            return Err(EvalError::Shape(format!(
                "split has {} labels for {} cells",
                split.labels.len(),
                ds.n_cells()
            )));
        }
        if !(opts.base_lambda > 0.0) {
            return Err(EvalError::Config(format!("base_lambda must be > 0, got {}", opts.base_lambda)));
        }
        Ok(SurrogateEvaluator {
            opts,
            n_perts: ds.n_perts(),
            n_genes: ds.n_genes(),
            size: (ds.n_cells() * ds.n_genes()) as f64,
            mask: pathway_mask(&ds.var.ensembl_id, opts.mask_seed, opts.mask_fraction),
            prepared: prepare(ds, split),
        })
    }

    pub fn options(&self) -> &SurrogateOptions {
        &self.opts
    }

    /// Simulated seconds for one fit.
    pub fn simulated_time(&self, c: &Candidate) -> f64 {
        let family = match c.backbone {
            Backbone::ResNet => 60.0,
            Backbone::GatedMlp => 66.0,
            Backbone::PathwayMasked => 42.0,
            Backbone::ConditionalVae => 72.0,
            Backbone::FlowMatching => 78.0,
        };
        let hp = c.effective_hyperparams();
        let lr = (1e-3 / hp.lr).powf(0.25);
        let loss = if c.loss == LossKind::Huber { 1.2 } else { 1.0 };
        family * (self.size / 1e5).max(0.01) * lr * loss
    }

    /// Predicted shift for every val condition, in val order.
    fn predict(&self, p: &Prepared, c: &Candidate) -> Result<Vec<Vec<f64>>, String> {
        let hp = c.effective_hyperparams();
        let huber = c.loss == LossKind::Huber;
        let ctrl = if huber { &p.ctrl_huber } else { &p.ctrl_mean };
        let shifts: Vec<Vec<f64>> = p
            .train
            .iter()
            .map(|t| {
                let prof = if huber { &t.huber } else { &t.mean };
                prof.iter().zip(ctrl).map(|(a, b)| a - b).collect()
            })
            .collect();

        let per_pert: Vec<Option<Vec<f64>>> = match c.backbone {
            Backbone::ResNet | Backbone::GatedMlp | Backbone::PathwayMasked => {
                let coef = ridge(&p.train, &shifts, self.n_perts, self.n_genes, self.opts.base_lambda * hp.reg_scale)?;
                let seen = seen_perts(&p.train, self.n_perts);
                let mut coef: Vec<Option<Vec<f64>>> =
                    coef.into_iter().zip(&seen).map(|(row, &s)| s.then_some(row)).collect();
                if c.backbone == Backbone::GatedMlp {
                    gate(&mut coef, &p.noise_var, p.mean_cells);
                }
                if c.backbone == Backbone::PathwayMasked {
                    for row in coef.iter_mut().flatten() {
                        for (v, &keep) in row.iter_mut().zip(&self.mask) {
                            if !keep {
                                *v = 0.0;
                            }
                        }
                    }
                }
                coef
            }
            Backbone::ConditionalVae | Backbone::FlowMatching => {
                let raw = component_means(&p.train, &shifts, self.n_perts, self.n_genes);
                let grand = grand_mean(&raw, self.n_genes);
                if c.backbone == Backbone::ConditionalVae {
                    let s = p.noise_var.iter().sum::<f64>() / self.n_genes as f64 / p.mean_cells;
                    let fill = grand.clone();
                    raw.into_iter()
                        .map(|e| Some(e.map_or_else(|| fill.clone(), |e| james_stein(&e, &grand, s * hp.reg_scale))))
                        .collect()
                } else {
                    let t = 1.0 / (1.0 + hp.reg_scale / 4.0);
                    raw.into_iter()
                        .map(|e| {
                            Some(match e {
                                Some(e) => e.iter().zip(&grand).map(|(a, g)| t * a + (1.0 - t) * g).collect(),
                                None => grand.clone(),
                            })
                        })
                        .collect()
                }
            }
        };

        Ok(p.val
            .iter()
            .map(|v| {
                let mut delta = vec![0.0; self.n_genes];
                for &m in &v.members {
                    if let Some(row) = &per_pert[m] {
                        for (d, x) in delta.iter_mut().zip(row) {
                            *d += x;
                        }
                    }
                }
                soft_threshold(&mut delta, hp.dropout);
                delta
            })
            .collect())
    }

    fn score(&self, c: &Candidate) -> Result<Score, String> {
        let p = self.prepared.as_ref().map_err(Clone::clone)?;
        let deltas = self.predict(p, c)?;
        let preds: Vec<PseudoBulkProfile> = p
            .val
            .iter()
            .zip(deltas)
            .map(|(v, d)| PseudoBulkProfile {
                condition_name: v.truth.condition_name.clone(),
                mean_expr: p.val_ctrl.mean_expr.iter().zip(&d).map(|(a, b)| a + b).collect(),
                n_cells: v.truth.n_cells,
            })
            .collect();
        let truths: Vec<PseudoBulkProfile> = p.val.iter().map(|v| v.truth.clone()).collect();
        let report = evaluate_predictions(&truths, &preds, &p.val_ctrl).map_err(|e| e.to_string())?;
        Ok(match report.aggregate.delta_pcc {
            Some(v) => Score::Value(v.max(0.0)),
            None => Score::Undefined,
        })
    }
}

impl Evaluator for SurrogateEvaluator {
    fn evaluate(&self, candidate: &Candidate, _seed: u64) -> EvalOutcome {
        let started = Instant::now();
        let score = self.score(candidate).unwrap_or_else(Score::Failed);
        let t_exec = match self.opts.time_mode {
            TimeMode::Simulated => self.simulated_time(candidate),
            TimeMode::WallClock => started.elapsed().as_secs_f64(),
        };
        EvalOutcome { score, t_exec }
    }
}

fn prepare(ds: &CanonicalDataset, split: &SplitAssignment) -> Result<Prepared, String> {
    let g = ds.n_genes();
    let mut train_groups: Vec<(String, Vec<usize>)> = Vec::new();
    let mut val_groups: Vec<(String, Vec<usize>)> = Vec::new();
    let mut train_ctrl = Vec::new();
    let mut val_ctrl = Vec::new();
    for i in 0..ds.n_cells() {
        let label = split.labels[i];
        if ds.obs.is_control[i] {
            match label {
                SplitLabel::Train => train_ctrl.push(i),
                SplitLabel::Val => val_ctrl.push(i),
                SplitLabel::Test => {}
            }
            continue;
        }
        let groups = match label {
            SplitLabel::Train => &mut train_groups,
            SplitLabel::Val => &mut val_groups,
            SplitLabel::Test => continue,
        };
        let name = &ds.obs.condition_name[i];
        match groups.iter_mut().find(|(n, _)| n == name) {
            Some((_, cells)) => cells.push(i),
            None => groups.push((name.clone(), vec![i])),
        }
    }
    if train_ctrl.is_empty() {
        return Err("train split has no control cells".into());
    }
    if train_groups.is_empty() {
        return Err("train split has no perturbed conditions".into());
    }
    if val_groups.is_empty() {
        return Err("val split has no perturbed conditions".into());
    }
    let members = |cell: usize| -> Vec<usize> { (0..ds.n_perts()).filter(|&p| ds.pert_mask[[cell, p]] != 0).collect() };

    let mut noise_num = vec![0.0; g];
    let mut noise_den = 0usize;
    let mut train = Vec::new();
    for (_, cells) in &train_groups {
        let mean = column_means(ds, cells);
        for &i in cells {
            for j in 0..g {
                let d = ds.x[[i, j]] - mean[j];
                noise_num[j] += d * d;
            }
        }
        noise_den += cells.len() - 1;
        train.push(TrainCondition { members: members(cells[0]), huber: huber_profile(ds, cells), mean });
    }
    let noise_var = noise_num.iter().map(|v| if noise_den > 0 { v / noise_den as f64 } else { 0.0 }).collect();
    let mean_cells = train_groups.iter().map(|(_, c)| c.len()).sum::<usize>() as f64 / train_groups.len() as f64;

    let ctrl_mean = column_means(ds, &train_ctrl);
    let val_ctrl_profile = PseudoBulkProfile {
        condition_name: CONTROL_PROFILE.into(),
        mean_expr: if val_ctrl.is_empty() { ctrl_mean.clone() } else { column_means(ds, &val_ctrl) },
        n_cells: if val_ctrl.is_empty() { train_ctrl.len() } else { val_ctrl.len() },
    };
    let val = val_groups
        .iter()
        .map(|(name, cells)| ValCondition {
            members: members(cells[0]),
            truth: PseudoBulkProfile { condition_name: name.clone(), mean_expr: column_means(ds, cells), n_cells: cells.len() },
        })
        .collect();
    Ok(Prepared {
        ctrl_huber: huber_profile(ds, &train_ctrl),
        ctrl_mean,
        train,
        noise_var,
        mean_cells,
        val,
        val_ctrl: val_ctrl_profile,
    })
}

fn column_means(ds: &CanonicalDataset, cells: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; ds.n_genes()];
    for &i in cells {
        for (o, v) in out.iter_mut().zip(ds.x.row(i)) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|v| *v /= cells.len() as f64);
    out
}

fn huber_profile(ds: &CanonicalDataset, cells: &[usize]) -> Vec<f64> {
    (0..ds.n_genes())
        .map(|j| {
            let xs: Vec<f64> = cells.iter().map(|&i| ds.x[[i, j]]).collect();
            huber_location(&xs)
        })
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Huber M-estimate of location with MAD scale, by iterative reweighting.
pub(crate) fn huber_location(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    let med = median(&mut sorted);
    let mut dev: Vec<f64> = xs.iter().map(|x| (x - med).abs()).collect();
    let scale = 1.4826 * median(&mut dev);
    if !(scale > 0.0) {
        return xs.iter().sum::<f64>() / xs.len() as f64;
    }
    let cut = HUBER_K * scale;
    let mut mu = med;
    for _ in 0..50 {
        let (mut num, mut den) = (0.0, 0.0);
        for &x in xs {
            let r = (x - mu).abs();
            let w = if r <= cut { 1.0 } else { cut / r };
            num += w * x;
            den += w;
        }
        let next = num / den;
        let done = (next - mu).abs() <= 1e-12 * (1.0 + mu.abs());
        mu = next;
        if done {
            break;
        }
    }
    mu
}

fn seen_perts(train: &[TrainCondition], n_perts: usize) -> Vec<bool> {
    let mut seen = vec![false; n_perts];
    for t in train {
        for &m in &t.members {
            seen[m] = true;
        }
    }
    seen
}

/// Solves `(M'M + lambda I) B = M'D` for the multi-hot design `M`.
fn ridge(
    train: &[TrainCondition],
    shifts: &[Vec<f64>],
    n_perts: usize,
    n_genes: usize,
    lambda: f64,
) -> Result<Vec<Vec<f64>>, String> {
    let m = DMatrix::from_fn(train.len(), n_perts, |i, p| if train[i].members.contains(&p) { 1.0 } else { 0.0 });
    let d = DMatrix::from_fn(train.len(), n_genes, |i, j| shifts[i][j]);
    let mut gram = m.transpose() * &m;
    for p in 0..n_perts {
        gram[(p, p)] += lambda;
    }
    let chol = gram.cholesky().ok_or_else(|| "ridge normal equations are not positive definite".to_string())?;
    let b = chol.solve(&(m.transpose() * d));
    Ok((0..n_perts).map(|p| b.row(p).iter().copied().collect()).collect())
}

fn gate(coef: &mut [Option<Vec<f64>>], noise_var: &[f64], mean_cells: f64) {
    let rows: Vec<&Vec<f64>> = coef.iter().flatten().collect();
    if rows.is_empty() {
        return;
    }
    let n = rows.len() as f64;
    let gates: Vec<f64> = (0..noise_var.len())
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let v = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let s = noise_var[j] / mean_cells;
            if v + s > 0.0 {
                v / (v + s)
            } else {
                0.0
            }
        })
        .collect();
    for row in coef.iter_mut().flatten() {
        for (x, g) in row.iter_mut().zip(&gates) {
            *x *= g;
        }
    }
}

/// Mean shift attributed to each perturbation: the single-perturbation
/// condition when present, otherwise the average share of the conditions it
/// appears in.
fn component_means(train: &[TrainCondition], shifts: &[Vec<f64>], n_perts: usize, n_genes: usize) -> Vec<Option<Vec<f64>>> {
    (0..n_perts)
        .map(|p| {
            let singles: Vec<usize> = (0..train.len()).filter(|&i| train[i].members == [p]).collect();
            let (rows, share): (Vec<usize>, bool) = if singles.is_empty() {
                ((0..train.len()).filter(|&i| train[i].members.contains(&p)).collect(), true)
            } else {
                (singles, false)
            };
            if rows.is_empty() {
                return None;
            }
            let mut out = vec![0.0; n_genes];
            for &i in &rows {
                let k = if share { train[i].members.len() as f64 } else { 1.0 };
                for (o, v) in out.iter_mut().zip(&shifts[i]) {
                    *o += v / k;
                }
            }
            out.iter_mut().for_each(|v| *v /= rows.len() as f64);
            Some(out)
        })
        .collect()
}

fn grand_mean(rows: &[Option<Vec<f64>>], n_genes: usize) -> Vec<f64> {
    let seen: Vec<&Vec<f64>> = rows.iter().flatten().collect();
    let mut out = vec![0.0; n_genes];
    for r in &seen {
        for (o, v) in out.iter_mut().zip(r.iter()) {
            *o += v;
        }
    }
    if !seen.is_empty() {
        out.iter_mut().for_each(|v| *v /= seen.len() as f64);
    }
    out
}

/// Positive-part James-Stein shrinkage of `e` toward `target` with
/// per-coordinate noise variance `s`.
fn james_stein(e: &[f64], target: &[f64], s: f64) -> Vec<f64> {
    let dist2: f64 = e.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum();
    let k = e.len() as f64;
    let factor = if dist2 > 0.0 { (1.0 - (k - 2.0).max(0.0) * s / dist2).max(0.0) } else { 0.0 };
    e.iter().zip(target).map(|(a, b)| b + factor * (a - b)).collect()
}

fn soft_threshold(delta: &mut [f64], dropout: f64) {
    if dropout <= 0.0 || delta.is_empty() {
        return;
    }
    let n = delta.len() as f64;
    let mean = delta.iter().sum::<f64>() / n;
    let sd = (delta.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
    let cut = dropout * sd;
    for d in delta.iter_mut() {
        *d = d.signum() * (d.abs() - cut).max(0.0);
    }
}
