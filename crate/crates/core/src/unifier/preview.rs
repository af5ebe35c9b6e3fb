use serde::{Deserialize, Serialize};

use crate::model::{ColumnType, RawTable};

/// Above this X maximum the preview notes that values look like raw counts.
pub const RAW_COUNT_THRESHOLD: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsColumnPreview {
    pub name: String,
    pub column_type: ColumnType,
    /// First distinct values in row order.
    pub samples: Vec<String>,
    pub n_distinct: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaPreview {
    pub obs_columns: Vec<ObsColumnPreview>,
    pub var_index_samples: Vec<String>,
    pub var_columns: Vec<String>,
    pub x_stats: XStats,
    pub n_cells: usize,
    pub n_genes: usize,
    /// Advisory remarks for the prompt.
    pub notes: Vec<String>,
}

pub fn preview_schema(table: &RawTable, sample_size: usize) -> SchemaPreview {
    let sample_size = sample_size.max(1);
    let obs_columns = table
        .obs()
        .iter()
        .map(|(name, col)| {
            let mut distinct: Vec<String> = Vec::new();
            let mut seen = std::collections::HashSet::new();
            for row in 0..col.len() {
                let v = col.display(row);
                if seen.insert(v.clone()) && distinct.len() < sample_size {
                    distinct.push(v);
                }
            }
            ObsColumnPreview { name: name.clone(), column_type: col.column_type(), samples: distinct, n_distinct: seen.len() }
        })
        .collect();

    let x = table.x();
    let x_stats = if x.is_empty() {
        XStats { min: 0.0, max: 0.0, mean: 0.0 }
    } else {
        let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for &v in x {
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        XStats { min, max, mean: sum / x.len() as f64 }
    };
    let mut notes = Vec::new();
    if x_stats.max > RAW_COUNT_THRESHOLD {
        notes.push(format!("likely raw counts: X max {} exceeds {RAW_COUNT_THRESHOLD}", x_stats.max));
    }

    SchemaPreview {
        obs_columns,
        var_index_samples: table.var().index.iter().take(sample_size).cloned().collect(),
        var_columns: table.var().columns.keys().cloned().collect(),
        x_stats,
        n_cells: table.n_cells(),
        n_genes: table.n_genes(),
        notes,
    }
}

impl SchemaPreview {
    /// Plain-text rendering used inside the induction prompt.
    pub fn to_prompt_text(&self) -> String {
        let mut out = format!("cells: {}\ngenes: {}\n\nobs columns:\n", self.n_cells, self.n_genes);
        for c in &self.obs_columns {
            let ty = serde_json::to_value(c.column_type).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            let samples: Vec<String> = c.samples.iter().map(|s| format!("{s:?}")).collect();
            out.push_str(&format!("- {} ({ty}, {} distinct): [{}]\n", c.name, c.n_distinct, samples.join(", ")));
        }
        out.push_str(&format!("\nvar index samples: [{}]\n", self.var_index_samples.join(", ")));
        out.push_str(&format!("var columns: [{}]\n", self.var_columns.join(", ")));
        out.push_str(&format!(
            "\nX statistics: min {}, max {}, mean {:.4}\n",
            self.x_stats.min, self.x_stats.max, self.x_stats.mean
        ));
        for n in &self.notes {
            out.push_str(&format!("note: {n}\n"));
        }
        out
    }
}
