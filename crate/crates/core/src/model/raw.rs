use indexmap::IndexMap;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    String,
    Float,
    Bool,
    Categorical,
}

/// A typed obs column. Categorical columns store level codes.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Str(Vec<String>),
    Float(Vec<f64>),
    Bool(Vec<bool>),
    Categorical { codes: Vec<u32>, levels: Vec<String> },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Str(v) => v.len(),
            Column::Float(v) => v.len(),
            Column::Bool(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column_type(&self) -> ColumnType {
        match self {
            Column::Str(_) => ColumnType::String,
            Column::Float(_) => ColumnType::Float,
            Column::Bool(_) => ColumnType::Bool,
            Column::Categorical { .. } => ColumnType::Categorical,
        }
    }

    /// Builds a categorical column with levels in first-seen order.
    pub fn categorical<S: AsRef<str>>(values: &[S]) -> Column {
        let mut levels: Vec<String> = Vec::new();
        let mut lookup: IndexMap<String, u32> = IndexMap::new();
        let codes = values
            .iter()
            .map(|v| {
                let v = v.as_ref();
                *lookup.entry(v.to_string()).or_insert_with(|| {
                    levels.push(v.to_string());
                    (levels.len() - 1) as u32
                })
            })
            .collect();
        Column::Categorical { codes, levels }
    }

    /// Text rendering of a single cell, as it would appear in a TSV file.
    pub fn display(&self, row: usize) -> String {
        match self {
            Column::Str(v) => v[row].clone(),
            Column::Float(v) => format_float(v[row]),
            Column::Bool(v) => v[row].to_string(),
            Column::Categorical { codes, levels } => levels[codes[row] as usize].clone(),
        }
    }

    /// Parses untyped text cells, inferring float, then bool, then string.
    pub fn infer(values: Vec<String>) -> Column {
        if !values.is_empty() {
            if let Ok(floats) = values.iter().map(|v| v.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>() {
                return Column::Float(floats);
            }
            if values.iter().all(|v| matches!(v.as_str(), "true" | "false" | "True" | "False")) {
                return Column::Bool(values.iter().map(|v| v.eq_ignore_ascii_case("true")).collect());
            }
        }
        Column::Str(values)
    }

    /// Parses text cells as the requested type.
    pub fn parse_as(values: Vec<String>, ty: ColumnType) -> Result<Column, String> {
        match ty {
            ColumnType::String => Ok(Column::Str(values)),
            ColumnType::Categorical => Ok(Column::categorical(&values)),
            ColumnType::Float => values
                .iter()
                .enumerate()
                .map(|(i, v)| v.trim().parse::<f64>().map_err(|_| format!("row {i}: '{v}' is not a float")))
                .collect::<Result<Vec<_>, _>>()
                .map(Column::Float),
            ColumnType::Bool => values
                .iter()
                .enumerate()
                .map(|(i, v)| match v.trim() {
                    "true" | "True" | "1" => Ok(true),
                    "false" | "False" | "0" => Ok(false),
                    other => Err(format!("row {i}: '{other}' is not a bool")),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Column::Bool),
        }
    }
}

/// Shortest round-tripping decimal rendering; integers print without a fraction.
pub(crate) fn format_float(v: f64) -> String {
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Gene metadata: a string index plus string-valued annotation columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VarTable {
    pub index: Vec<String>,
    pub columns: IndexMap<String, Vec<String>>,
}

impl VarTable {
    pub fn new(index: Vec<String>) -> Self {
        Self { index, columns: IndexMap::new() }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

/// An unharmonized dataset: arbitrary obs columns, gene table, expression matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    obs: IndexMap<String, Column>,
    var: VarTable,
    x: Array2<f64>,
    obsm: IndexMap<String, Array2<f64>>,
}

impl RawTable {
    pub fn new(obs: IndexMap<String, Column>, var: VarTable, x: Array2<f64>) -> Result<Self, ModelError> {
        Self::with_obsm(obs, var, x, IndexMap::new())
    }

    pub fn with_obsm(
        obs: IndexMap<String, Column>,
        var: VarTable,
        x: Array2<f64>,
        obsm: IndexMap<String, Array2<f64>>,
    ) -> Result<Self, ModelError> {
        let (n_cells, n_genes) = x.dim();
        if n_genes != var.len() {
            return Err(ModelError::Shape(format!("X has {n_genes} genes but var has {} rows", var.len())));
        }
        for (name, col) in &var.columns {
            if col.len() != n_genes {
                return Err(ModelError::Shape(format!("var column '{name}' has {} rows, expected {n_genes}", col.len())));
            }
        }
        for (name, col) in &obs {
            if col.len() != n_cells {
                return Err(ModelError::Shape(format!("obs column '{name}' has {} rows, expected {n_cells}", col.len())));
            }
        }
        for (name, m) in &obsm {
            if m.nrows() != n_cells {
                return Err(ModelError::Shape(format!("obsm '{name}' has {} rows, expected {n_cells}", m.nrows())));
            }
        }
        Ok(Self { obs, var, x, obsm })
    }

    pub fn n_cells(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_genes(&self) -> usize {
        self.x.ncols()
    }

    pub fn obs(&self) -> &IndexMap<String, Column> {
        &self.obs
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.obs.get(name)
    }

    pub fn var(&self) -> &VarTable {
        &self.var
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn obsm(&self) -> &IndexMap<String, Array2<f64>> {
        &self.obsm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_mismatched_obs_length() {
        let mut obs = IndexMap::new();
        obs.insert("a".to_string(), Column::Str(vec!["x".into()]));
        let err = RawTable::new(obs, VarTable::new(vec!["g".into()]), array![[1.0], [2.0]]).unwrap_err();
        assert!(matches!(err, ModelError::Shape(_)));
    }

    #[test]
    fn infers_column_types() {
        assert_eq!(Column::infer(vec!["1".into(), "2.5".into()]), Column::Float(vec![1.0, 2.5]));
        assert_eq!(Column::infer(vec!["true".into(), "False".into()]), Column::Bool(vec![true, false]));
        assert_eq!(Column::infer(vec!["a".into(), "1".into()]).column_type(), ColumnType::String);
    }

    #[test]
    fn categorical_levels_first_seen() {
        let c = Column::categorical(&["b", "a", "b"]);
        assert_eq!(c, Column::Categorical { codes: vec![0, 1, 0], levels: vec!["b".into(), "a".into()] });
        assert_eq!(c.display(2), "b");
    }

    #[test]
    fn float_display() {
        assert_eq!(format_float(10.0), "10");
        assert_eq!(format_float(0.25), "0.25");
    }
}
