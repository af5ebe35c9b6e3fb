use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CanonicalDataset, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitLabel {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    UnseenPerturbation,
    UnseenCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub labels: Vec<SplitLabel>,
    pub split_kind: SplitKind,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn cells(&self, label: SplitLabel) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, &l)| l == label).map(|(i, _)| i).collect()
    }

    pub fn count(&self, label: SplitLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Holds out whole perturbation conditions. Conditions are sorted, shuffled
/// by `seed`, the first `floor(train_frac * n)` go to train and the rest
/// alternate val/test starting with val. Control cells are shuffled and
/// split with the resulting perturbed-cell ratios.
pub fn split_unseen_perturbation(
    ds: &CanonicalDataset,
    train_frac: f64,
    seed: u64,
) -> Result<SplitAssignment, ModelError> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(ModelError::Parameter(format!("train_frac must be in (0, 1), got {train_frac}")));
    }
    let mut conditions = ds.perturbed_conditions();
    if conditions.len() < 2 {
        return Err(ModelError::Parameter(format!(
            "unseen-perturbation split needs at least 2 non-control conditions, found {}",
            conditions.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    conditions.shuffle(&mut rng);

    let n_train = (train_frac * conditions.len() as f64 + 1e-9).floor() as usize;
    let mut by_condition: HashMap<&str, SplitLabel> = HashMap::new();
    for (i, name) in conditions.iter().enumerate() {
        let label = if i < n_train {
            SplitLabel::Train
        } else if (i - n_train).is_multiple_of(2) {
            SplitLabel::Val
        } else {
            SplitLabel::Test
        };
        by_condition.insert(name.as_str(), label);
    }

    let mut labels = vec![SplitLabel::Train; ds.n_cells()];
    let mut counts = [0usize; 3];
    let mut controls = Vec::new();
    for i in 0..ds.n_cells() {
        if ds.obs.is_control[i] {
            controls.push(i);
        } else {
            let l = by_condition[ds.obs.condition_name[i].as_str()];
            labels[i] = l;
            counts[label_index(l)] += 1;
        }
    }

    controls.shuffle(&mut rng);
    let n_pert = counts.iter().sum::<usize>() as f64;
    let n_ctrl = controls.len();
    let n_ctrl_train = (n_ctrl as f64 * counts[0] as f64 / n_pert).round() as usize;
    let n_ctrl_val = ((n_ctrl as f64 * counts[1] as f64 / n_pert).round() as usize).min(n_ctrl - n_ctrl_train);
    for (k, &cell) in controls.iter().enumerate() {
        labels[cell] = if k < n_ctrl_train {
            SplitLabel::Train
        } else if k < n_ctrl_train + n_ctrl_val {
            SplitLabel::Val
        } else {
            SplitLabel::Test
        };
    }
    Ok(SplitAssignment { labels, split_kind: SplitKind::UnseenPerturbation, seed })
}

/// Holds out one cell type: every other cell trains, holdout cells are
/// shuffled and split into val (`round(val_frac * n)`) and test.
pub fn split_unseen_cell(
    ds: &CanonicalDataset,
    holdout_cell_type: &str,
    val_frac_of_holdout: f64,
    seed: u64,
) -> Result<SplitAssignment, ModelError> {
    if !(val_frac_of_holdout > 0.0 && val_frac_of_holdout < 1.0) {
        return Err(ModelError::Parameter(format!(
            "val_frac_of_holdout must be in (0, 1), got {val_frac_of_holdout}"
        )));
    }
    let mut holdout: Vec<usize> =
        (0..ds.n_cells()).filter(|&i| ds.obs.cell_type[i] == holdout_cell_type).collect();
    if holdout.is_empty() {
        let mut known: Vec<&str> = ds.obs.cell_type.iter().map(String::as_str).collect();
        known.sort_unstable();
        known.dedup();
        return Err(ModelError::Parameter(format!(
            "cell type '{holdout_cell_type}' has no cells; known types: {}",
            known.join(", ")
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    holdout.shuffle(&mut rng);
    let n_val = (val_frac_of_holdout * holdout.len() as f64).round() as usize;
    let mut labels = vec![SplitLabel::Train; ds.n_cells()];
    for (k, &cell) in holdout.iter().enumerate() {
        labels[cell] = if k < n_val { SplitLabel::Val } else { SplitLabel::Test };
    }
    Ok(SplitAssignment { labels, split_kind: SplitKind::UnseenCell, seed })
}

fn label_index(l: SplitLabel) -> usize {
    match l {
        SplitLabel::Train => 0,
        SplitLabel::Val => 1,
        SplitLabel::Test => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::canonical::tests::fixture;
    use crate::model::PertType;
    use std::collections::{BTreeMap, BTreeSet};

    /// `n_cond` perturbed conditions with `per` cells each, plus `n_ctrl` controls.
    fn conditions_fixture(n_cond: usize, per: usize, n_ctrl: usize) -> CanonicalDataset {
        let base = fixture();
        let mut rows = Vec::new();
        let mut names = Vec::new();
        for c in 0..n_cond {
            for _ in 0..per {
                rows.push(1);
                names.push(format!("C{c}"));
            }
        }
        for _ in 0..n_ctrl {
            rows.push(0);
            names.push("DMSO".to_string());
        }
        let mut ds = base.select_cells(&rows);
        ds.obs.condition_name = names;
        ds.pert_mask.fill(0);
        ds.pert_dose.fill(0.0);
        ds
    }

    fn condition_labels(ds: &CanonicalDataset, s: &SplitAssignment) -> BTreeMap<String, BTreeSet<SplitLabel>> {
        let mut out: BTreeMap<String, BTreeSet<SplitLabel>> = BTreeMap::new();
        for i in 0..ds.n_cells() {
            if !ds.obs.is_control[i] {
                out.entry(ds.obs.condition_name[i].clone()).or_default().insert(s.labels[i]);
            }
        }
        out
    }

    fn condition_counts(ds: &CanonicalDataset, s: &SplitAssignment) -> [usize; 3] {
        let mut c = [0; 3];
        for labels in condition_labels(ds, s).values() {
            assert_eq!(labels.len(), 1, "condition spans splits");
            c[label_index(*labels.iter().next().unwrap())] += 1;
        }
        c
    }

    #[test]
    fn ten_conditions_eight_one_one() {
        let ds = conditions_fixture(10, 3, 30);
        let s = split_unseen_perturbation(&ds, 0.8, 1).unwrap();
        assert_eq!(condition_counts(&ds, &s), [8, 1, 1]);
    }

    #[test]
    fn seven_conditions_remainder_alternates() {
        // Enumerate every seed in a small range: the rule must always give 5/1/1.
        let ds = conditions_fixture(7, 2, 14);
        for seed in 0..50 {
            let s = split_unseen_perturbation(&ds, 0.8, seed).unwrap();
            assert_eq!(condition_counts(&ds, &s), [5, 1, 1]);
        }
    }

    #[test]
    fn controls_follow_cell_ratios() {
        let ds = conditions_fixture(10, 4, 40);
        let s = split_unseen_perturbation(&ds, 0.8, 3).unwrap();
        let ctrl: Vec<usize> = (0..ds.n_cells()).filter(|&i| ds.obs.is_control[i]).collect();
        let count = |l| ctrl.iter().filter(|&&i| s.labels[i] == l).count();
        assert_eq!((count(SplitLabel::Train), count(SplitLabel::Val), count(SplitLabel::Test)), (32, 4, 4));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let ds = conditions_fixture(10, 2, 10);
        let a = split_unseen_perturbation(&ds, 0.8, 11).unwrap();
        assert_eq!(a, split_unseen_perturbation(&ds, 0.8, 11).unwrap());
        let differs = (0..20).any(|s| split_unseen_perturbation(&ds, 0.8, s).unwrap().labels != a.labels);
        assert!(differs);
    }

    #[test]
    fn too_few_conditions() {
        let ds = conditions_fixture(1, 3, 3);
        assert!(matches!(split_unseen_perturbation(&ds, 0.8, 0), Err(ModelError::Parameter(_))));
        assert!(split_unseen_perturbation(&conditions_fixture(3, 1, 1), 1.0, 0).is_err());
    }

    fn cell_types_fixture() -> CanonicalDataset {
        let mut ds = fixture().select_cells(&[1; 30]);
        ds.obs.cell_type = (0..30)
            .map(|i| ["K562", "MCF7", "A549"][i / 10].to_string())
            .collect();
        ds.obs.pert_type = vec![PertType::Drug; 30];
        ds
    }

    #[test]
    fn unseen_cell_holdout() {
        let ds = cell_types_fixture();
        let s = split_unseen_cell(&ds, "A549", 0.5, 4).unwrap();
        for i in 0..20 {
            assert_eq!(s.labels[i], SplitLabel::Train);
        }
        assert_eq!(s.count(SplitLabel::Val), 5);
        assert_eq!(s.count(SplitLabel::Test), 5);
        assert_eq!(s, split_unseen_cell(&ds, "A549", 0.5, 4).unwrap());
    }

    #[test]
    fn unseen_cell_unknown_type() {
        let err = split_unseen_cell(&cell_types_fixture(), "HeLa", 0.5, 0).unwrap_err();
        assert!(err.to_string().contains("HeLa"));
        assert!(split_unseen_cell(&cell_types_fixture(), "A549", 1.0, 0).is_err());
    }
}
