use std::collections::BTreeSet;

use indexmap::IndexMap;
use ndarray::Array2;

use super::spec::{Entry, IndexType, MappingSpec};
use super::UnifierError;
use crate::dsl::{self, ColumnValue, DslError};
use crate::model::{
    format_float, normalize_log1p, validate_canonical, CanonicalDataset, CanonicalObs, CanonicalVar, Column, PertType, RawTable,
};

/// Fallback for absent string metadata.
pub const UNKNOWN: &str = "unknown";

/// Produces a canonical dataset from `table`. Pure; the result always
/// passes [`validate_canonical`], otherwise the report is returned as an
/// error.
pub fn apply_mapping(table: &RawTable, spec: &MappingSpec) -> Result<CanonicalDataset, UnifierError> {
    let n = table.n_cells();
    require_column(table, "pert_mask_source", &spec.obsm.pert_mask_source)?;
    let entries = spec.obs.iter().map(|(k, e)| (k.as_str(), e));
    for (key, entry) in entries.chain([("pert_dose_source", &spec.obsm.pert_dose_source)]) {
        if let Entry::Direct { source_key } = entry {
            require_column(table, key, source_key)?;
        }
    }

    let text = |key: &str| -> Result<Vec<String>, UnifierError> {
        Ok(match spec.entry(key) {
            Entry::Absent => vec![UNKNOWN.to_string(); n],
            e => strings(resolve(table, key, e)?),
        })
    };
    let cell_type = text("cell_type")?;
    let batch_id = text("batch_id")?;
    let donor_id = text("donor_id")?;

    let is_control = match spec.entry("is_control") {
        Entry::Absent => vec![false; n],
        e => match resolve(table, "is_control", e)? {
            ColumnValue::Bool(b) => b,
            ColumnValue::Str(s) => s
                .iter()
                .enumerate()
                .map(|(row, v)| match v.as_str() {
                    "true" | "True" => Ok(true),
                    "false" | "False" => Ok(false),
                    _ => Err(type_err("is_control", format!("row {row}: '{v}' is not a boolean"))),
                })
                .collect::<Result<_, _>>()?,
            other => return Err(type_err("is_control", format!("expected bool values, got {}", other.type_name()))),
        },
    };

    let mut pert_type = match spec.entry("pert_type") {
        Entry::Absent => vec![PertType::Mixed; n],
        e => strings(resolve(table, "pert_type", e)?)
            .iter()
            .enumerate()
            .map(|(row, s)| s.parse::<PertType>().map_err(|_| type_err("pert_type", format!("row {row}: '{s}' is not a perturbation type"))))
            .collect::<Result<_, _>>()?,
    };
    for (t, &c) in pert_type.iter_mut().zip(&is_control) {
        if c {
            *t = PertType::Control;
        }
    }

    let pert_names = strings(
        resolve(table, "pert_mask_source", &Entry::Direct { source_key: spec.obsm.pert_mask_source.clone() })?,
    );
    let condition_name = match spec.entry("condition_name") {
        Entry::Absent => pert_names.clone(),
        e => strings(resolve(table, "condition_name", e)?),
    };

    let delim = spec.combo_delimiter.as_str();
    let members = |name: &str| -> Vec<String> {
        name.split(delim).map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect()
    };
    let vocab: Vec<String> = pert_names
        .iter()
        .zip(&is_control)
        .filter(|(_, &c)| !c)
        .flat_map(|(name, _)| members(name))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: IndexMap<&str, usize> = vocab.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();

    let dose = match &spec.obsm.pert_dose_source {
        Entry::Absent => None,
        e => Some(floats("pert_dose_source", resolve(table, "pert_dose_source", e)?)?),
    };
    let mut pert_mask = Array2::<u8>::zeros((n, vocab.len()));
    let mut pert_dose = Array2::<f64>::zeros((n, vocab.len()));
    for row in 0..n {
        if is_control[row] {
            continue;
        }
        for m in members(&pert_names[row]) {
            let j = index[m.as_str()];
            pert_mask[[row, j]] = 1;
            if let Some(d) = &dose {
                pert_dose[[row, j]] = d[row];
            }
        }
    }

    let var = table.var();
    let symbols = match &spec.var.gene_symbol_col {
        Some(col) => var.columns.get(col).cloned().ok_or_else(|| UnifierError::MissingColumn {
            key: "var.gene_symbol_col".into(),
            column: col.clone(),
            available: var.columns.keys().cloned().collect(),
        })?,
        None => var.index.clone(),
    };
    // No ID translation: a symbol index doubles as the gene identifier.
    let var = match spec.var.index_type {
        IndexType::Ensembl => CanonicalVar { ensembl_id: var.index.clone(), gene_symbol: symbols },
        IndexType::Symbol => CanonicalVar { ensembl_id: var.index.clone(), gene_symbol: var.index.clone() },
    };

    let num = spec.numerical;
    let x = normalize_log1p(table.x(), num.target_sum, num.is_already_log1p, num.normalization_required)
        .map_err(|e| UnifierError::Numerical(e.to_string()))?;

    let ds = CanonicalDataset {
        obs: CanonicalObs { cell_type, batch_id, donor_id, pert_type, is_control, condition_name, extra: IndexMap::new() },
        var,
        x,
        pert_mask,
        pert_dose,
        pert_vocab: vocab,
    };
    let report = validate_canonical(&ds);
    if report.is_empty() {
        Ok(ds)
    } else {
        Err(UnifierError::Validation(report))
    }
}

fn require_column(table: &RawTable, key: &str, column: &str) -> Result<(), UnifierError> {
    if table.column(column).is_none() {
        return Err(UnifierError::MissingColumn {
            key: key.to_string(),
            column: column.to_string(),
            available: table.obs().keys().cloned().collect(),
        });
    }
    Ok(())
}

fn type_err(key: &str, message: String) -> UnifierError {
    UnifierError::Type { key: key.to_string(), message }
}

fn resolve(table: &RawTable, key: &str, entry: &Entry) -> Result<ColumnValue, UnifierError> {
    let n = table.n_cells();
    let wrap = |source: DslError| match source {
        DslError::MissingColumn { name, available } => UnifierError::MissingColumn { key: key.to_string(), column: name, available },
        source => UnifierError::Eval { key: key.to_string(), source },
    };
    match entry {
        Entry::Direct { source_key } => {
            require_column(table, key, source_key)?;
            Ok(match &table.obs()[source_key.as_str()] {
                Column::Float(v) => ColumnValue::Float(v.clone()),
                Column::Bool(v) => ColumnValue::Bool(v.clone()),
                col => ColumnValue::Str((0..n).map(|r| col.display(r)).collect()),
            })
        }
        Entry::Logic { expr, .. } => dsl::evaluate(expr, table).map_err(wrap),
        Entry::Constant { value } => Ok(match value {
            serde_json::Value::Bool(b) => ColumnValue::Bool(vec![*b; n]),
            serde_json::Value::Number(x) => ColumnValue::Float(vec![x.as_f64().unwrap_or(f64::NAN); n]),
            serde_json::Value::String(s) => ColumnValue::Str(vec![s.clone(); n]),
            other => return Err(type_err(key, format!("unsupported constant {other}"))),
        }),
        Entry::Absent => Err(type_err(key, "no source".into())),
    }
}

fn strings(v: ColumnValue) -> Vec<String> {
    match v {
        ColumnValue::Str(s) => s,
        ColumnValue::Float(f) => f.into_iter().map(format_float).collect(),
        ColumnValue::Bool(b) => b.iter().map(bool::to_string).collect(),
    }
}

fn floats(key: &str, v: ColumnValue) -> Result<Vec<f64>, UnifierError> {
    match v {
        ColumnValue::Float(f) => Ok(f),
        ColumnValue::Str(s) => s
            .iter()
            .enumerate()
            .map(|(row, v)| v.trim().parse::<f64>().map_err(|_| type_err(key, format!("row {row}: '{v}' is not a number"))))
            .collect(),
        ColumnValue::Bool(_) => Err(type_err(key, "expected numbers, got bool".into())),
    }
}
