use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Canonical obs keys, in schema order.
pub const CANONICAL_OBS_KEYS: [&str; 6] =
    ["cell_type", "batch_id", "donor_id", "pert_type", "is_control", "condition_name"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PertType {
    Drug,
    Crispr,
    Mixed,
    Control,
}

impl PertType {
    pub fn as_str(self) -> &'static str {
        match self {
            PertType::Drug => "drug",
            PertType::Crispr => "crispr",
            PertType::Mixed => "mixed",
            PertType::Control => "control",
        }
    }
}

impl fmt::Display for PertType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PertType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "drug" => Ok(PertType::Drug),
            "crispr" => Ok(PertType::Crispr),
            "mixed" => Ok(PertType::Mixed),
            "control" => Ok(PertType::Control),
            other => Err(format!("'{other}' is not one of drug/crispr/mixed/control")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CanonicalObs {
    pub cell_type: Vec<String>,
    pub batch_id: Vec<String>,
    pub donor_id: Vec<String>,
    pub pert_type: Vec<PertType>,
    pub is_control: Vec<bool>,
    pub condition_name: Vec<String>,
    /// Additional string columns such as `source_dataset` provenance after a merge.
    pub extra: IndexMap<String, Vec<String>>,
}

impl CanonicalObs {
    pub fn len(&self) -> usize {
        self.condition_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.condition_name.is_empty()
    }

    /// Restricts and reorders rows.
    pub fn take(&self, rows: &[usize]) -> CanonicalObs {
        fn pick<T: Clone>(v: &[T], rows: &[usize]) -> Vec<T> {
            rows.iter().map(|&r| v[r].clone()).collect()
        }
        CanonicalObs {
            cell_type: pick(&self.cell_type, rows),
            batch_id: pick(&self.batch_id, rows),
            donor_id: pick(&self.donor_id, rows),
            pert_type: pick(&self.pert_type, rows),
            is_control: pick(&self.is_control, rows),
            condition_name: pick(&self.condition_name, rows),
            extra: self.extra.iter().map(|(k, v)| (k.clone(), pick(v, rows))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CanonicalVar {
    pub ensembl_id: Vec<String>,
    pub gene_symbol: Vec<String>,
}

impl CanonicalVar {
    pub fn len(&self) -> usize {
        self.ensembl_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ensembl_id.is_empty()
    }
}

/// The unified schema. X holds normalized-then-log1p values; `pert_mask` and
/// `pert_dose` are indexed by `pert_vocab`; doses are in nM.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalDataset {
    pub obs: CanonicalObs,
    pub var: CanonicalVar,
    pub x: Array2<f64>,
    pub pert_mask: Array2<u8>,
    pub pert_dose: Array2<f64>,
    pub pert_vocab: Vec<String>,
}

impl CanonicalDataset {
    pub fn n_cells(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_genes(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_perts(&self) -> usize {
        self.pert_vocab.len()
    }

    /// Row subset, keeping all genes and the perturbation vocabulary.
    pub fn select_cells(&self, rows: &[usize]) -> CanonicalDataset {
        CanonicalDataset {
            obs: self.obs.take(rows),
            var: self.var.clone(),
            x: self.x.select(ndarray::Axis(0), rows),
            pert_mask: self.pert_mask.select(ndarray::Axis(0), rows),
            pert_dose: self.pert_dose.select(ndarray::Axis(0), rows),
            pert_vocab: self.pert_vocab.clone(),
        }
    }

    /// Column subset over genes, in the given order.
    pub fn select_genes(&self, cols: &[usize]) -> CanonicalDataset {
        CanonicalDataset {
            obs: self.obs.clone(),
            var: CanonicalVar {
                ensembl_id: cols.iter().map(|&c| self.var.ensembl_id[c].clone()).collect(),
                gene_symbol: cols.iter().map(|&c| self.var.gene_symbol[c].clone()).collect(),
            },
            x: self.x.select(ndarray::Axis(1), cols),
            pert_mask: self.pert_mask.clone(),
            pert_dose: self.pert_dose.clone(),
            pert_vocab: self.pert_vocab.clone(),
        }
    }

    /// Distinct condition names of non-control cells, sorted.
    pub fn perturbed_conditions(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .obs
            .condition_name
            .iter()
            .zip(&self.obs.is_control)
            .filter(|(_, &c)| !c)
            .map(|(n, _)| n.clone())
            .collect();
        names.sort();
        names.dedup();
        names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Shape,
    DuplicateEnsemblId,
    MaskNotBinary,
    DoseWithoutMask,
    NegativeDose,
    ControlWithMask,
    NegativeExpression,
    InconsistentConditionName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Cell rows (or gene rows for var violations) involved.
    pub rows: Vec<usize>,
    pub col: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{}", v.message)?;
        }
        Ok(())
    }
}

/// Checks every canonical invariant and lists each violation with its
/// coordinates. An empty report means the dataset is valid.
pub fn validate_canonical(ds: &CanonicalDataset) -> ValidationReport {
    let mut out = Vec::new();
    let n = ds.x.nrows();
    let g = ds.x.ncols();
    let p = ds.pert_vocab.len();

    let mut shape = |msg: String| {
        out.push(Violation { kind: ViolationKind::Shape, rows: vec![], col: None, message: msg });
    };
    let obs_lens = [
        ("cell_type", ds.obs.cell_type.len()),
        ("batch_id", ds.obs.batch_id.len()),
        ("donor_id", ds.obs.donor_id.len()),
        ("pert_type", ds.obs.pert_type.len()),
        ("is_control", ds.obs.is_control.len()),
        ("condition_name", ds.obs.condition_name.len()),
    ];
    for (name, len) in obs_lens {
        if len != n {
            shape(format!("obs.{name} has {len} rows, X has {n}"));
        }
    }
    for (name, col) in &ds.obs.extra {
        if col.len() != n {
            shape(format!("obs.{name} has {} rows, X has {n}", col.len()));
        }
    }
    if ds.var.ensembl_id.len() != g || ds.var.gene_symbol.len() != g {
        shape(format!(
            "var has {} ensembl ids and {} symbols, X has {g} genes",
            ds.var.ensembl_id.len(),
            ds.var.gene_symbol.len()
        ));
    }
    if ds.pert_mask.dim() != (n, p) {
        shape(format!("pert_mask is {:?}, expected ({n}, {p})", ds.pert_mask.dim()));
    }
    if ds.pert_dose.dim() != (n, p) {
        shape(format!("pert_dose is {:?}, expected ({n}, {p})", ds.pert_dose.dim()));
    }
    if !out.is_empty() {
        // Element checks below index by shape; stop here.
        return ValidationReport { violations: out };
    }

    let mut first_seen: HashMap<&str, usize> = HashMap::new();
    for (i, id) in ds.var.ensembl_id.iter().enumerate() {
        if let Some(&j) = first_seen.get(id.as_str()) {
            out.push(Violation {
                kind: ViolationKind::DuplicateEnsemblId,
                rows: vec![j, i],
                col: None,
                message: format!("var.ensembl_id '{id}' duplicated at gene rows {j} and {i}"),
            });
        } else {
            first_seen.insert(id, i);
        }
    }

    for i in 0..n {
        let mut control_flagged = false;
        for j in 0..p {
            let m = ds.pert_mask[[i, j]];
            let d = ds.pert_dose[[i, j]];
            if m > 1 {
                out.push(Violation {
                    kind: ViolationKind::MaskNotBinary,
                    rows: vec![i],
                    col: Some(j),
                    message: format!("pert_mask[{i}, {j}] = {m} is not binary"),
                });
            }
            if !(d >= 0.0) {
                out.push(Violation {
                    kind: ViolationKind::NegativeDose,
                    rows: vec![i],
                    col: Some(j),
                    message: format!("pert_dose[{i}, {j}] = {d} is negative or NaN"),
                });
            }
            if m == 0 && d != 0.0 && d >= 0.0 {
                out.push(Violation {
                    kind: ViolationKind::DoseWithoutMask,
                    rows: vec![i],
                    col: Some(j),
                    message: format!("pert_dose[{i}, {j}] = {d} but pert_mask is 0"),
                });
            }
            if ds.obs.is_control[i] && m != 0 && !control_flagged {
                control_flagged = true;
                out.push(Violation {
                    kind: ViolationKind::ControlWithMask,
                    rows: vec![i],
                    col: Some(j),
                    message: format!("control cell {i} has nonzero pert_mask (first at column {j})"),
                });
            }
        }
        for j in 0..g {
            let v = ds.x[[i, j]];
            if !(v >= 0.0) {
                out.push(Violation {
                    kind: ViolationKind::NegativeExpression,
                    rows: vec![i],
                    col: Some(j),
                    message: format!("X[{i}, {j}] = {v} is negative or NaN"),
                });
            }
        }
    }

    // (mask row, dose row) pattern -> first row with that pattern.
    let mut patterns: HashMap<(Vec<u8>, Vec<u64>), usize> = HashMap::new();
    for i in 0..n {
        let key = (
            ds.pert_mask.row(i).to_vec(),
            ds.pert_dose.row(i).iter().map(|d| d.to_bits()).collect::<Vec<_>>(),
        );
        match patterns.get(&key) {
            Some(&first) if ds.obs.condition_name[first] != ds.obs.condition_name[i] => {
                out.push(Violation {
                    kind: ViolationKind::InconsistentConditionName,
                    rows: vec![first, i],
                    col: None,
                    message: format!(
                        "cells {first} and {i} share a perturbation pattern but have condition names '{}' and '{}'",
                        ds.obs.condition_name[first], ds.obs.condition_name[i]
                    ),
                });
            }
            Some(_) => {}
            None => {
                patterns.insert(key, i);
            }
        }
    }

    ValidationReport { violations: out }
}
