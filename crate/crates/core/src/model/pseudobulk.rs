use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{CanonicalDataset, ModelError};

/// Mean expression of one condition over its member cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoBulkProfile {
    pub condition_name: String,
    pub mean_expr: Vec<f64>,
    pub n_cells: usize,
}

/// One profile per condition present in `cells`, in first-appearance order.
/// Control cells form their own profile under their condition name.
pub fn pseudo_bulk(ds: &CanonicalDataset, cells: &[usize]) -> Result<Vec<PseudoBulkProfile>, ModelError> {
    if cells.is_empty() {
        return Err(ModelError::Parameter("pseudo_bulk needs a nonempty cell subset".into()));
    }
    let n = ds.n_cells();
    if let Some(&bad) = cells.iter().find(|&&c| c >= n) {
        return Err(ModelError::Parameter(format!("cell index {bad} out of range for {n} cells")));
    }
    let mut groups: IndexMap<&str, Vec<usize>> = IndexMap::new();
    for &c in cells {
        groups.entry(ds.obs.condition_name[c].as_str()).or_default().push(c);
    }
    Ok(groups
        .into_iter()
        .map(|(name, mut members)| {
            members.sort_unstable();
            PseudoBulkProfile {
                condition_name: name.to_string(),
                mean_expr: mean_rows(&ds.x, &members),
                n_cells: members.len(),
            }
        })
        .collect())
}

/// Per-gene arithmetic mean over `rows`, summed in the given row order.
pub(crate) fn mean_rows(x: &ndarray::Array2<f64>, rows: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0; x.ncols()];
    for &r in rows {
        for (a, v) in acc.iter_mut().zip(x.row(r).iter()) {
            *a += v;
        }
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::canonical::tests::fixture;
    use ndarray::array;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn six_cell() -> CanonicalDataset {
        let mut ds = fixture().select_cells(&[0, 0, 1, 1, 2, 2]);
        ds.x = array![[1.0, 2.0], [3.0, 4.0], [0.5, 0.0], [1.5, 7.0], [2.0, 2.0], [4.0, 1.0]];
        ds
    }

    #[test]
    fn two_cell_mean() {
        let ds = six_cell();
        let p = pseudo_bulk(&ds, &[0, 1]).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].condition_name, "DMSO");
        assert_eq!(p[0].mean_expr, vec![2.0, 3.0]);
        assert_eq!(p[0].n_cells, 2);
    }

    #[test]
    fn singleton_equals_row() {
        let ds = fixture();
        let p = pseudo_bulk(&ds, &[0, 1, 2]).unwrap();
        for (i, prof) in p.iter().enumerate() {
            assert_eq!(prof.mean_expr, ds.x.row(i).to_vec());
        }
    }

    #[test]
    fn matches_grouping_oracle() {
        let ds = six_cell();
        // Independent grouping: BTreeMap keyed by name, naive accumulation.
        let mut oracle: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
        for i in 0..ds.n_cells() {
            let e = oracle.entry(ds.obs.condition_name[i].clone()).or_insert((vec![0.0; 2], 0));
            e.0[0] += ds.x[[i, 0]];
            e.0[1] += ds.x[[i, 1]];
            e.1 += 1;
        }
        let got = pseudo_bulk(&ds, &(0..6).collect::<Vec<_>>()).unwrap();
        assert_eq!(got.len(), 3);
        for prof in got {
            let (sum, n) = &oracle[&prof.condition_name];
            assert_eq!(prof.n_cells, *n);
            for j in 0..2 {
                assert!((prof.mean_expr[j] - sum[j] / *n as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn empty_subset_is_error() {
        assert!(matches!(pseudo_bulk(&fixture(), &[]), Err(ModelError::Parameter(_))));
    }

    proptest! {
        #[test]
        fn union_is_count_weighted_average(split in prop::collection::vec(any::<bool>(), 6)) {
            let ds = six_cell();
            let a: Vec<usize> = (0..6).filter(|&i| split[i]).collect();
            let b: Vec<usize> = (0..6).filter(|&i| !split[i]).collect();
            prop_assume!(!a.is_empty() && !b.is_empty());
            let all = pseudo_bulk(&ds, &(0..6).collect::<Vec<_>>()).unwrap();
            let pa = pseudo_bulk(&ds, &a).unwrap();
            let pb = pseudo_bulk(&ds, &b).unwrap();
            for prof in all {
                let fa = pa.iter().find(|p| p.condition_name == prof.condition_name);
                let fb = pb.iter().find(|p| p.condition_name == prof.condition_name);
                let (na, nb) = (fa.map_or(0, |p| p.n_cells), fb.map_or(0, |p| p.n_cells));
                prop_assert_eq!(na + nb, prof.n_cells);
                for j in 0..2 {
                    let wa = fa.map_or(0.0, |p| p.mean_expr[j] * na as f64);
                    let wb = fb.map_or(0.0, |p| p.mean_expr[j] * nb as f64);
                    prop_assert!(((wa + wb) / prof.n_cells as f64 - prof.mean_expr[j]).abs() < 1e-12);
                }
            }
        }
    }
}
