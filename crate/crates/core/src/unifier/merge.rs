use std::collections::HashMap;

use indexmap::{IndexMap, IndexSet};
use ndarray::{Array2, Axis};

use super::UnifierError;
use crate::model::{validate_canonical, CanonicalDataset, CanonicalObs, CanonicalVar};

/// Provenance column added to merged obs.
pub const SOURCE_COLUMN: &str = "source_dataset";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MergeReport {
    pub warnings: Vec<String>,
}

/// Merges parts named `part0`, `part1`, ...
pub fn merge_datasets(parts: &[CanonicalDataset]) -> Result<(CanonicalDataset, MergeReport), UnifierError> {
    let named: Vec<(String, &CanonicalDataset)> = parts.iter().enumerate().map(|(i, p)| (format!("part{i}"), p)).collect();
    merge_named(&named)
}

/// Concatenates cells over the shared genes. Gene order follows the first
/// part, the vocabulary is the first-seen union, and X values are copied
/// without renormalization.
pub fn merge_named(parts: &[(String, &CanonicalDataset)]) -> Result<(CanonicalDataset, MergeReport), UnifierError> {
    if parts.len() < 2 {
        return Err(UnifierError::Merge(format!("need at least 2 parts, got {}", parts.len())));
    }
    let mut report = MergeReport::default();
    let first = parts[0].1;
    let lookups: Vec<HashMap<&str, usize>> = parts
        .iter()
        .map(|(_, p)| p.var.ensembl_id.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect())
        .collect();
    let genes: Vec<usize> = (0..first.n_genes())
        .filter(|&g| lookups.iter().all(|l| l.contains_key(first.var.ensembl_id[g].as_str())))
        .collect();
    if genes.is_empty() {
        return Err(UnifierError::Merge("the parts share no ensembl ids".into()));
    }
    let var = CanonicalVar {
        ensembl_id: genes.iter().map(|&g| first.var.ensembl_id[g].clone()).collect(),
        gene_symbol: genes.iter().map(|&g| first.var.gene_symbol[g].clone()).collect(),
    };
    for (k, (name, p)) in parts.iter().enumerate().skip(1) {
        for (id, sym) in var.ensembl_id.iter().zip(&var.gene_symbol) {
            let other = &p.var.gene_symbol[lookups[k][id.as_str()]];
            if other != sym {
                report.warnings.push(format!("{id}: gene_symbol '{other}' in {name} conflicts with '{sym}'; keeping '{sym}'"));
            }
        }
    }

    let vocab: IndexSet<String> = parts.iter().flat_map(|(_, p)| p.pert_vocab.iter().cloned()).collect();
    let n: usize = parts.iter().map(|(_, p)| p.n_cells()).sum();
    let (g, v) = (genes.len(), vocab.len());
    let mut x = Array2::<f64>::zeros((n, g));
    let mut pert_mask = Array2::<u8>::zeros((n, v));
    let mut pert_dose = Array2::<f64>::zeros((n, v));
    let mut obs = CanonicalObs::default();
    let mut extra_keys: IndexSet<String> = parts.iter().flat_map(|(_, p)| p.obs.extra.keys().cloned()).collect();
    extra_keys.shift_remove(SOURCE_COLUMN);
    let mut extra: IndexMap<String, Vec<String>> = extra_keys.iter().map(|k| (k.clone(), Vec::with_capacity(n))).collect();
    let mut source = Vec::with_capacity(n);

    let mut offset = 0;
    for (k, (name, p)) in parts.iter().enumerate() {
        let cols: Vec<usize> = var.ensembl_id.iter().map(|id| lookups[k][id.as_str()]).collect();
        let sub = p.x.select(Axis(1), &cols);
        let rows = p.n_cells();
        x.slice_mut(ndarray::s![offset..offset + rows, ..]).assign(&sub);
        for (j, pert) in p.pert_vocab.iter().enumerate() {
            let to = vocab.get_index_of(pert).expect("vocab holds every part's perturbations");
            for i in 0..rows {
                pert_mask[[offset + i, to]] = p.pert_mask[[i, j]];
                pert_dose[[offset + i, to]] = p.pert_dose[[i, j]];
            }
        }
        obs.cell_type.extend_from_slice(&p.obs.cell_type);
        obs.batch_id.extend_from_slice(&p.obs.batch_id);
        obs.donor_id.extend_from_slice(&p.obs.donor_id);
        obs.pert_type.extend_from_slice(&p.obs.pert_type);
        obs.is_control.extend_from_slice(&p.obs.is_control);
        obs.condition_name.extend_from_slice(&p.obs.condition_name);
        for (key, col) in extra.iter_mut() {
            match p.obs.extra.get(key) {
                Some(values) => col.extend_from_slice(values),
                None => col.extend(std::iter::repeat_n(String::new(), rows)),
            }
        }
        source.extend(std::iter::repeat_n(name.clone(), rows));
        offset += rows;
    }
    extra.insert(SOURCE_COLUMN.to_string(), source);
    obs.extra = extra;

    let ds = CanonicalDataset { obs, var, x, pert_mask, pert_dose, pert_vocab: vocab.into_iter().collect() };
    let check = validate_canonical(&ds);
    if !check.is_empty() {
        return Err(UnifierError::Validation(check));
    }
    Ok((ds, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PertType;
    use ndarray::array;

    fn part(genes: &[&str], vocab: &[&str], x: Array2<f64>, mask: Array2<u8>) -> CanonicalDataset {
        let n = x.nrows();
        let names: Vec<String> = (0..n)
            .map(|i| {
                let m: Vec<&str> = (0..vocab.len()).filter(|&j| mask[[i, j]] == 1).map(|j| vocab[j]).collect();
                if m.is_empty() { "ctrl".into() } else { m.join("+") }
            })
            .collect();
        CanonicalDataset {
            obs: CanonicalObs {
                cell_type: vec!["T".into(); n],
                batch_id: vec!["b".into(); n],
                donor_id: vec!["d".into(); n],
                pert_type: names.iter().map(|s| if s == "ctrl" { PertType::Control } else { PertType::Crispr }).collect(),
                is_control: names.iter().map(|s| s == "ctrl").collect(),
                condition_name: names,
                extra: IndexMap::new(),
            },
            var: CanonicalVar {
                ensembl_id: genes.iter().map(|s| s.to_string()).collect(),
                gene_symbol: genes.iter().map(|s| s.to_lowercase()).collect(),
            },
            pert_dose: mask.mapv(f64::from),
            x,
            pert_mask: mask,
            pert_vocab: vocab.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn intersection_and_reindexing() {
        let a = part(&["G1", "G2", "G3"], &["A", "B"], array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], array![[1, 0], [0, 1]]);
        let b = part(&["G4", "G3", "G2"], &["B", "C"], array![[7.0, 8.0, 9.0], [0.0, 0.0, 0.0]], array![[1, 0], [0, 0]]);
        let (m, report) = merge_datasets(&[a.clone(), b]).unwrap();
        assert!(report.warnings.is_empty());
        assert_eq!(m.var.ensembl_id, vec!["G2", "G3"]);
        assert_eq!(m.pert_vocab, vec!["A", "B", "C"]);
        assert_eq!(m.pert_mask.row(2).to_vec(), vec![0, 1, 0]);
        assert_eq!(m.x, array![[2.0, 3.0], [5.0, 6.0], [9.0, 8.0], [0.0, 0.0]]);
        assert_eq!(m.obs.extra[SOURCE_COLUMN], vec!["part0", "part0", "part1", "part1"]);
        assert_eq!(m.x.slice(ndarray::s![0..2, ..]), a.x.select(Axis(1), &[1, 2]));
    }

    #[test]
    fn self_merge_and_errors() {
        let a = part(&["G1", "G2"], &["A"], array![[1.0, 2.0], [0.5, 0.5]], array![[1], [0]]);
        let (m, _) = merge_datasets(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(m.n_cells(), 4);
        assert_eq!(m.var, a.var);
        let disjoint = part(&["G9"], &["A"], array![[1.0]], array![[1]]);
        assert!(matches!(merge_datasets(&[a.clone(), disjoint]), Err(UnifierError::Merge(_))));
        assert!(matches!(merge_datasets(&[a.clone()]), Err(UnifierError::Merge(_))));
        let mut renamed = a.clone();
        renamed.var.gene_symbol[0] = "other".into();
        let (m, report) = merge_datasets(&[a, renamed]).unwrap();
        assert_eq!(report.warnings.len(), 1);
        assert_eq!(m.var.gene_symbol[0], "g1");
    }
}
