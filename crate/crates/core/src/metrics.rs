//! Pseudo-bulk evaluation metrics.
//!
//! All three metrics act on per-condition pseudo-bulk vectors. DeltaPCC and
//! CosLogFC compare shift vectors `delta = y_p - y_ctrl` and
//! `delta_hat = y_hat_p - y_ctrl`. Zero-variance or zero-norm inputs make a
//! metric undefined (`None`); undefined values are excluded from aggregates
//! and listed in the report rather than coerced to a number.

use indexmap::IndexMap;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::model::PseudoBulkProfile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} components, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("predicted condition '{0}' has no matching truth profile")]
    UnmatchedCondition(String),
    #[error("condition '{0}' is the control profile and cannot be evaluated against itself")]
    ControlEvaluated(String),
}

fn check_lengths(a: &[f64], b: &[f64], need: usize) -> Result<(), MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < need {
        return Err(MetricsError::TooShort { need, got: a.len() });
    }
    Ok(())
}

/// Root mean squared error over genes.
pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(y, y_hat, 1)?;
    let mut acc = 0.0;
    for (a, b) in y.iter().zip(y_hat) {
        acc += (a - b) * (a - b);
    }
    Ok((acc / y.len() as f64).sqrt())
}

/// Treats sums of squares at rounding-noise level as exactly zero.
fn negligible(sum_sq: f64, values: &[f64]) -> bool {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    sum_sq <= (4.0 * f64::EPSILON * scale).powi(2) * values.len() as f64
}

/// Pearson correlation of two shift vectors; `None` when either is constant.
pub fn delta_pcc(delta: &[f64], delta_hat: &[f64]) -> Result<Option<f64>, MetricsError> {
    check_lengths(delta, delta_hat, 2)?;
    let n = delta.len() as f64;
    let ma = delta.iter().sum::<f64>() / n;
    let mb = delta_hat.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (a, b) in delta.iter().zip(delta_hat) {
        let (da, db) = (a - ma, b - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 || negligible(saa, delta) || negligible(sbb, delta_hat) {
        return Ok(None);
    }
    Ok(Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)))
}

/// Cosine similarity of two shift vectors; `None` when either has zero norm.
pub fn cos_logfc(delta: &[f64], delta_hat: &[f64]) -> Result<Option<f64>, MetricsError> {
    check_lengths(delta, delta_hat, 1)?;
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (a, b) in delta.iter().zip(delta_hat) {
        dot += a * b;
        na += a * a;
        nb += b * b;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(None);
    }
    Ok(Some((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)))
}

fn ser_metric<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_str("undefined"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionMetrics {
    pub rmse: f64,
    #[serde(serialize_with = "ser_metric")]
    pub delta_pcc: Option<f64>,
    #[serde(serialize_with = "ser_metric")]
    pub cos_logfc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateMetrics {
    #[serde(serialize_with = "ser_metric")]
    pub rmse: Option<f64>,
    #[serde(serialize_with = "ser_metric")]
    pub delta_pcc: Option<f64>,
    #[serde(serialize_with = "ser_metric")]
    pub cos_logfc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedCondition {
    pub condition: String,
    pub undefined: Vec<&'static str>,
}

/// Per-condition metrics plus unweighted means over the defined values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub n_conditions: usize,
    pub aggregate: AggregateMetrics,
    pub per_condition: IndexMap<String, ConditionMetrics>,
    pub skipped: Vec<SkippedCondition>,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values.flatten() {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Scores each predicted condition against its truth profile, with shifts
/// taken relative to `control`.
pub fn evaluate_predictions(
    truth: &[PseudoBulkProfile],
    predicted: &[PseudoBulkProfile],
    control: &PseudoBulkProfile,
) -> Result<MetricReport, MetricsError> {
    let mut per_condition = IndexMap::new();
    let mut skipped = Vec::new();
    for pred in predicted {
        if pred.condition_name == control.condition_name {
            return Err(MetricsError::ControlEvaluated(pred.condition_name.clone()));
        }
        let t = truth
            .iter()
            .find(|t| t.condition_name == pred.condition_name)
            .ok_or_else(|| MetricsError::UnmatchedCondition(pred.condition_name.clone()))?;
        check_lengths(&t.mean_expr, &pred.mean_expr, 1)?;
        check_lengths(&t.mean_expr, &control.mean_expr, 1)?;
        let delta: Vec<f64> = t.mean_expr.iter().zip(&control.mean_expr).map(|(a, c)| a - c).collect();
        let delta_hat: Vec<f64> = pred.mean_expr.iter().zip(&control.mean_expr).map(|(a, c)| a - c).collect();
        let m = ConditionMetrics {
            rmse: rmse(&t.mean_expr, &pred.mean_expr)?,
            delta_pcc: if delta.len() >= 2 { delta_pcc(&delta, &delta_hat)? } else { None },
            cos_logfc: cos_logfc(&delta, &delta_hat)?,
        };
        let mut undefined = Vec::new();
        if m.delta_pcc.is_none() {
            undefined.push("delta_pcc");
        }
        if m.cos_logfc.is_none() {
            undefined.push("cos_logfc");
        }
        if !undefined.is_empty() {
            skipped.push(SkippedCondition { condition: pred.condition_name.clone(), undefined });
        }
        per_condition.insert(pred.condition_name.clone(), m);
    }
    let aggregate = AggregateMetrics {
        rmse: mean_defined(per_condition.values().map(|m| Some(m.rmse))),
        delta_pcc: mean_defined(per_condition.values().map(|m| m.delta_pcc)),
        cos_logfc: mean_defined(per_condition.values().map(|m| m.cos_logfc)),
    };
    Ok(MetricReport { n_conditions: per_condition.len(), aggregate, per_condition, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profile(name: &str, v: &[f64]) -> PseudoBulkProfile {
        PseudoBulkProfile { condition_name: name.into(), mean_expr: v.to_vec(), n_cells: 1 }
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[1.0, 2.0, 3.0], &[1.0, 1.0, 3.0]).unwrap() - 0.577_350_269_189_625_8).abs() < 1e-15);
        assert_eq!(rmse(&[0.0], &[2.0]).unwrap(), 2.0);
        assert_eq!(rmse(&[1.0], &[1.0, 2.0]), Err(MetricsError::LengthMismatch(1, 2)));
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn pcc_examples() {
        let d = [1.0, 2.0, 3.0];
        assert!((delta_pcc(&d, &[2.0, 4.0, 6.0]).unwrap().unwrap() - 1.0).abs() < 1e-15);
        assert!((delta_pcc(&d, &[-1.0, -2.0, -3.0]).unwrap().unwrap() + 1.0).abs() < 1e-15);
        // cov = 1, var(d) = 2, var(dh) = 8/3 (sums) -> 1/sqrt(4/3) = 0.8660254
        assert!((delta_pcc(&d, &[1.0, 1.0, 3.0]).unwrap().unwrap() - 0.866_025_403_784_438_6).abs() < 1e-12);
        assert_eq!(delta_pcc(&d, &[5.0, 5.0, 5.0]).unwrap(), None);
        assert!(matches!(delta_pcc(&[1.0], &[1.0]), Err(MetricsError::TooShort { .. })));
    }

    #[test]
    fn cosine_examples() {
        let d = [1.0, 2.0, 3.0];
        assert!((cos_logfc(&d, &[3.0, 6.0, 9.0]).unwrap().unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cos_logfc(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), Some(0.0));
        assert!((cos_logfc(&d, &[1.0, 1.0, 3.0]).unwrap().unwrap() - 12.0 / 154f64.sqrt()).abs() < 1e-15);
        assert_eq!(cos_logfc(&d, &[0.0, 0.0, 0.0]).unwrap(), None);
    }

    #[test]
    fn perfect_predictions() {
        let ctrl = profile("ctrl", &[1.0, 1.0, 1.0]);
        let truth = vec![profile("A", &[2.0, 0.5, 1.0]), profile("B", &[0.0, 3.0, 1.5])];
        let r = evaluate_predictions(&truth, &truth, &ctrl).unwrap();
        assert_eq!(r.n_conditions, 2);
        assert_eq!(r.aggregate.rmse, Some(0.0));
        assert!((r.aggregate.delta_pcc.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.aggregate.cos_logfc.unwrap() - 1.0).abs() < 1e-12);
        assert!(r.skipped.is_empty());
    }

    #[test]
    fn constant_shift_skips_pcc_only() {
        let ctrl = profile("ctrl", &[1.0, 1.0, 1.0]);
        let truth = vec![profile("A", &[2.0, 2.0, 2.0])];
        let pred = vec![profile("A", &[2.0, 2.5, 2.0])];
        let r = evaluate_predictions(&truth, &pred, &ctrl).unwrap();
        let m = &r.per_condition["A"];
        assert_eq!(m.delta_pcc, None);
        assert!(m.cos_logfc.is_some());
        assert!(m.rmse > 0.0);
        assert_eq!(r.skipped, vec![SkippedCondition { condition: "A".into(), undefined: vec!["delta_pcc"] }]);
        assert_eq!(r.aggregate.delta_pcc, None);
        let json = r.to_json();
        assert!(json.contains("\"delta_pcc\": \"undefined\""));
        // Fixed key order.
        let pos = |k: &str| json.find(k).unwrap();
        assert!(pos("n_conditions") < pos("aggregate") && pos("aggregate") < pos("per_condition"));
    }

    #[test]
    fn unmatched_and_control_errors() {
        let ctrl = profile("ctrl", &[1.0, 1.0]);
        let truth = vec![profile("A", &[2.0, 0.0])];
        assert_eq!(
            evaluate_predictions(&truth, &[profile("B", &[1.0, 1.0])], &ctrl),
            Err(MetricsError::UnmatchedCondition("B".into()))
        );
        assert!(matches!(
            evaluate_predictions(&truth, &[profile("ctrl", &[1.0, 1.0])], &ctrl),
            Err(MetricsError::ControlEvaluated(_))
        ));
    }

    proptest! {
        #[test]
        fn affine_and_scale_invariance(
            d in prop::collection::vec(-5.0f64..5.0, 3..20),
            dh in prop::collection::vec(-5.0f64..5.0, 20),
            a in 0.1f64..10.0,
            b in -3.0f64..3.0,
        ) {
            let dh = &dh[..d.len()];
            if let Some(p) = delta_pcc(&d, dh).unwrap() {
                let shifted: Vec<f64> = dh.iter().map(|x| a * x + b).collect();
                let q = delta_pcc(&d, &shifted).unwrap().unwrap();
                prop_assert!((p - q).abs() < 1e-12);
                prop_assert_eq!(delta_pcc(dh, &d).unwrap(), Some(p));
            }
            if let Some(c) = cos_logfc(&d, dh).unwrap() {
                let scaled: Vec<f64> = dh.iter().map(|x| a * x).collect();
                prop_assert!((cos_logfc(&d, &scaled).unwrap().unwrap() - c).abs() < 1e-12);
                prop_assert!((cos_logfc(dh, &d).unwrap().unwrap() - c).abs() < 1e-15);
            }
        }

        #[test]
        fn rmse_zero_iff_equal(y in prop::collection::vec(-5.0f64..5.0, 1..10), k in 0usize..10, bump in 1e-6f64..1.0) {
            prop_assert_eq!(rmse(&y, &y).unwrap(), 0.0);
            let mut z = y.clone();
            let k = k % z.len();
            z[k] += bump;
            prop_assert!(rmse(&y, &z).unwrap() > 0.0);
        }
    }
}
