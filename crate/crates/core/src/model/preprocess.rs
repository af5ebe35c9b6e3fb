use ndarray::Array2;

use super::{CanonicalDataset, ModelError};

/// Library-size normalization followed by `log1p`.
///
/// Rows are scaled to sum to `target_sum` when `normalization_required`;
/// rows summing to zero pass through unscaled. When `is_already_log1p` the
/// input is returned unchanged.
pub fn normalize_log1p(
    x: &Array2<f64>,
    target_sum: f64,
    is_already_log1p: bool,
    normalization_required: bool,
) -> Result<Array2<f64>, ModelError> {
    if !(target_sum > 0.0) || !target_sum.is_finite() {
        return Err(ModelError::Parameter(format!("target_sum must be positive, got {target_sum}")));
    }
    for ((row, col), &v) in x.indexed_iter() {
        if !v.is_finite() {
            return Err(ModelError::NonFinite { row, col });
        }
        if v < 0.0 {
            return Err(ModelError::NegativeValue { row, col, value: v });
        }
    }
    if is_already_log1p {
        return Ok(x.clone());
    }
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        if normalization_required {
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                let scale = target_sum / total;
                row.mapv_inplace(|v| v * scale);
            }
        }
        row.mapv_inplace(f64::ln_1p);
    }
    Ok(out)
}

/// Keeps the `k` genes with the largest variance of the stored values.
/// Ties go to the lower gene index; output keeps the original gene order.
pub fn select_hvg(ds: &CanonicalDataset, k: usize) -> Result<CanonicalDataset, ModelError> {
    let g = ds.n_genes();
    if k == 0 || k > g {
        return Err(ModelError::Parameter(format!("k must be in 1..={g}, got {k}")));
    }
    if k == g {
        return Ok(ds.clone());
    }
    let variances = gene_variances(&ds.x);
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&a, &b| variances[b].total_cmp(&variances[a]).then(a.cmp(&b)));
    let mut keep = order[..k].to_vec();
    keep.sort_unstable();
    Ok(ds.select_genes(&keep))
}

/// Population variance per gene (two-pass, ascending cell order).
pub(crate) fn gene_variances(x: &Array2<f64>) -> Vec<f64> {
    let n = x.nrows();
    if n == 0 {
        return vec![0.0; x.ncols()];
    }
    x.columns()
        .into_iter()
        .map(|col| {
            let mean = col.iter().sum::<f64>() / n as f64;
            col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
        })
        .collect()
}
