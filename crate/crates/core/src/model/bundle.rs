//! Portable on-disk dataset bundle.
//!
//! A bundle is a directory holding:
//!
//! | file            | content                                                        |
//! |-----------------|----------------------------------------------------------------|
//! | `manifest.json` | `n_cells`, `n_genes`, `P`, `flags`, `pert_vocab`, column types |
//! | `obs.tsv`       | tab-separated, header row, one row per cell                    |
//! | `var.tsv`       | tab-separated, header row, one row per gene                    |
//! | `X.f64`         | row-major little-endian f64, exactly `n_cells * n_genes` values |
//! | `pert_mask.u8`  | optional, row-major `n_cells * P` bytes                        |
//! | `pert_dose.f64` | optional, row-major little-endian f64, `n_cells * P` values    |
//!
//! Raw bundles may carry extra cell matrices as `obsm.<name>.f64`, with
//! their widths listed under `obsm` in the manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CanonicalDataset, CanonicalObs, CanonicalVar, Column, ColumnType, PertType, RawTable, VarTable};

pub const BUNDLE_FORMAT: &str = "scpilot-bundle";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{file}: expected {expected} bytes, found {actual}")]
    SizeMismatch { file: String, expected: u64, actual: u64 },
    #[error("{file}: {message}")]
    Format { file: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BundleError + '_ {
    move |source| BundleError::Io { path: path.to_path_buf(), source }
}

fn format_err(file: &str, message: impl Into<String>) -> BundleError {
    BundleError::Format { file: file.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BundleKind {
    Raw,
    Canonical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleFlags {
    /// X already holds normalized log1p values.
    pub is_log1p: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub kind: BundleKind,
    pub n_cells: usize,
    pub n_genes: usize,
    #[serde(rename = "P")]
    pub n_perts: usize,
    pub flags: BundleFlags,
    pub pert_vocab: Vec<String>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub obs_types: IndexMap<String, ColumnType>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub obsm: IndexMap<String, usize>,
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, BundleError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| format_err("manifest.json", e.to_string()))?;
    if m.format != BUNDLE_FORMAT {
        return Err(format_err("manifest.json", format!("unknown format '{}'", m.format)));
    }
    if m.n_perts != m.pert_vocab.len() {
        return Err(format_err(
            "manifest.json",
            format!("P = {} but pert_vocab has {} entries", m.n_perts, m.pert_vocab.len()),
        ));
    }
    Ok(m)
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<(), BundleError> {
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(m).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}

fn read_exact_bytes(dir: &Path, file: &str, expected: u64) -> Result<Vec<u8>, BundleError> {
    let path = dir.join(file);
    let actual = fs::metadata(&path).map_err(io_err(&path))?.len();
    if actual != expected {
        return Err(BundleError::SizeMismatch { file: file.to_string(), expected, actual });
    }
    fs::read(&path).map_err(io_err(&path))
}

fn read_f64_matrix(dir: &Path, file: &str, rows: usize, cols: usize) -> Result<Array2<f64>, BundleError> {
    let bytes = read_exact_bytes(dir, file, (rows * cols * 8) as u64)?;
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
}

fn write_f64_matrix(dir: &Path, file: &str, m: &Array2<f64>) -> Result<(), BundleError> {
    let mut bytes = Vec::with_capacity(m.len() * 8);
    for v in m.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let path = dir.join(file);
    fs::write(&path, bytes).map_err(io_err(&path))
}

fn read_u8_matrix(dir: &Path, file: &str, rows: usize, cols: usize) -> Result<Array2<u8>, BundleError> {
    let bytes = read_exact_bytes(dir, file, (rows * cols) as u64)?;
    Ok(Array2::from_shape_vec((rows, cols), bytes).expect("length checked"))
}

fn write_u8_matrix(dir: &Path, file: &str, m: &Array2<u8>) -> Result<(), BundleError> {
    let path = dir.join(file);
    fs::write(&path, m.iter().copied().collect::<Vec<u8>>()).map_err(io_err(&path))
}

/// Reads a TSV file into its header and string columns.
fn read_tsv(dir: &Path, file: &str, expected_rows: usize) -> Result<IndexMap<String, Vec<String>>, BundleError> {
    let path = dir.join(file);
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .from_path(&path)
        .map_err(|e| format_err(file, e.to_string()))?;
    let headers: Vec<String> =
        reader.headers().map_err(|e| format_err(file, e.to_string()))?.iter().map(str::to_string).collect();
    let mut columns: IndexMap<String, Vec<String>> = IndexMap::new();
    for h in &headers {
        if columns.insert(h.clone(), Vec::with_capacity(expected_rows)).is_some() {
            return Err(format_err(file, format!("duplicate column '{h}'")));
        }
    }
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| format_err(file, e.to_string()))?;
        if rec.len() != headers.len() {
            return Err(format_err(file, format!("row {i} has {} fields, header has {}", rec.len(), headers.len())));
        }
        for (col, field) in columns.values_mut().zip(rec.iter()) {
            col.push(field.to_string());
        }
    }
    let rows = columns.values().next().map_or(0, Vec::len);
    if !headers.is_empty() && rows != expected_rows {
        return Err(format_err(file, format!("expected {expected_rows} rows, found {rows}")));
    }
    Ok(columns)
}

fn write_tsv(dir: &Path, file: &str, columns: &[(&str, Vec<String>)]) -> Result<(), BundleError> {
    let path = dir.join(file);
    let mut writer = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_path(&path)
        .map_err(|e| format_err(file, e.to_string()))?;
    let n_rows = columns.first().map_or(0, |(_, c)| c.len());
    writer.write_record(columns.iter().map(|(h, _)| *h)).map_err(|e| format_err(file, e.to_string()))?;
    for r in 0..n_rows {
        writer.write_record(columns.iter().map(|(_, c)| c[r].as_str())).map_err(|e| format_err(file, e.to_string()))?;
    }
    writer.flush().map_err(io_err(&path))
}

fn ensure_dir(dir: &Path) -> Result<(), BundleError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn write_raw(dir: &Path, table: &RawTable) -> Result<(), BundleError> {
    ensure_dir(dir)?;
    let manifest = Manifest {
        format: BUNDLE_FORMAT.into(),
        version: 1,
        kind: BundleKind::Raw,
        n_cells: table.n_cells(),
        n_genes: table.n_genes(),
        n_perts: 0,
        flags: BundleFlags { is_log1p: false },
        pert_vocab: vec![],
        obs_types: table.obs().iter().map(|(k, c)| (k.clone(), c.column_type())).collect(),
        obsm: table.obsm().iter().map(|(k, m)| (k.clone(), m.ncols())).collect(),
    };
    write_manifest(dir, &manifest)?;
    let obs: Vec<(&str, Vec<String>)> = table
        .obs()
        .iter()
        .map(|(k, c)| (k.as_str(), (0..c.len()).map(|r| c.display(r)).collect()))
        .collect();
    write_tsv(dir, "obs.tsv", &obs)?;
    let mut var: Vec<(&str, Vec<String>)> = vec![("index", table.var().index.clone())];
    var.extend(table.var().columns.iter().map(|(k, c)| (k.as_str(), c.clone())));
    write_tsv(dir, "var.tsv", &var)?;
    write_f64_matrix(dir, "X.f64", table.x())?;
    for (name, m) in table.obsm() {
        write_f64_matrix(dir, &format!("obsm.{name}.f64"), m)?;
    }
    Ok(())
}

pub fn read_raw(dir: &Path) -> Result<RawTable, BundleError> {
    let m = read_manifest(dir)?;
    let obs_text = read_tsv(dir, "obs.tsv", m.n_cells)?;
    let mut obs = IndexMap::new();
    for (name, values) in obs_text {
        let col = match m.obs_types.get(&name) {
            Some(&ty) => Column::parse_as(values, ty).map_err(|e| format_err("obs.tsv", format!("column '{name}': {e}")))?,
            None => Column::infer(values),
        };
        obs.insert(name, col);
    }
    let mut var_text = read_tsv(dir, "var.tsv", m.n_genes)?;
    let index = var_text
        .shift_remove("index")
        .ok_or_else(|| format_err("var.tsv", "missing 'index' column"))?;
    let var = VarTable { index, columns: var_text };
    let x = read_f64_matrix(dir, "X.f64", m.n_cells, m.n_genes)?;
    let mut obsm = IndexMap::new();
    for (name, &k) in &m.obsm {
        obsm.insert(name.clone(), read_f64_matrix(dir, &format!("obsm.{name}.f64"), m.n_cells, k)?);
    }
    RawTable::with_obsm(obs, var, x, obsm).map_err(|e| format_err("manifest.json", e.to_string()))
}

pub fn write_canonical(dir: &Path, ds: &CanonicalDataset) -> Result<(), BundleError> {
    ensure_dir(dir)?;
    let manifest = Manifest {
        format: BUNDLE_FORMAT.into(),
        version: 1,
        kind: BundleKind::Canonical,
        n_cells: ds.n_cells(),
        n_genes: ds.n_genes(),
        n_perts: ds.n_perts(),
        flags: BundleFlags { is_log1p: true },
        pert_vocab: ds.pert_vocab.clone(),
        obs_types: IndexMap::new(),
        obsm: IndexMap::new(),
    };
    write_manifest(dir, &manifest)?;
    let o = &ds.obs;
    let mut obs: Vec<(&str, Vec<String>)> = vec![
        ("cell_type", o.cell_type.clone()),
        ("batch_id", o.batch_id.clone()),
        ("donor_id", o.donor_id.clone()),
        ("pert_type", o.pert_type.iter().map(|p| p.to_string()).collect()),
        ("is_control", o.is_control.iter().map(|b| b.to_string()).collect()),
        ("condition_name", o.condition_name.clone()),
    ];
    obs.extend(o.extra.iter().map(|(k, v)| (k.as_str(), v.clone())));
    write_tsv(dir, "obs.tsv", &obs)?;
    write_tsv(
        dir,
        "var.tsv",
        &[("ensembl_id", ds.var.ensembl_id.clone()), ("gene_symbol", ds.var.gene_symbol.clone())],
    )?;
    write_f64_matrix(dir, "X.f64", &ds.x)?;
    write_u8_matrix(dir, "pert_mask.u8", &ds.pert_mask)?;
    write_f64_matrix(dir, "pert_dose.f64", &ds.pert_dose)?;
    Ok(())
}

pub fn read_canonical(dir: &Path) -> Result<CanonicalDataset, BundleError> {
    let m = read_manifest(dir)?;
    if m.kind != BundleKind::Canonical {
        return Err(format_err("manifest.json", "expected a canonical bundle, found a raw one"));
    }
    let mut obs_text = read_tsv(dir, "obs.tsv", m.n_cells)?;
    let mut take = |key: &str| {
        obs_text.shift_remove(key).ok_or_else(|| format_err("obs.tsv", format!("missing column '{key}'")))
    };
    let cell_type = take("cell_type")?;
    let batch_id = take("batch_id")?;
    let donor_id = take("donor_id")?;
    let pert_type = take("pert_type")?
        .iter()
        .map(|s| s.parse::<PertType>().map_err(|e| format_err("obs.tsv", e)))
        .collect::<Result<Vec<_>, _>>()?;
    let is_control = take("is_control")?
        .iter()
        .map(|s| match s.as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(format_err("obs.tsv", format!("is_control value '{other}' is not true/false"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let condition_name = take("condition_name")?;
    let obs = CanonicalObs { cell_type, batch_id, donor_id, pert_type, is_control, condition_name, extra: obs_text };

    let mut var_text = read_tsv(dir, "var.tsv", m.n_genes)?;
    let ensembl_id =
        var_text.shift_remove("ensembl_id").ok_or_else(|| format_err("var.tsv", "missing column 'ensembl_id'"))?;
    let gene_symbol =
        var_text.shift_remove("gene_symbol").ok_or_else(|| format_err("var.tsv", "missing column 'gene_symbol'"))?;

    let x = read_f64_matrix(dir, "X.f64", m.n_cells, m.n_genes)?;
    let pert_mask = if dir.join("pert_mask.u8").exists() {
        read_u8_matrix(dir, "pert_mask.u8", m.n_cells, m.n_perts)?
    } else {
        Array2::zeros((m.n_cells, m.n_perts))
    };
    let pert_dose = if dir.join("pert_dose.f64").exists() {
        read_f64_matrix(dir, "pert_dose.f64", m.n_cells, m.n_perts)?
    } else {
        Array2::zeros((m.n_cells, m.n_perts))
    };
    Ok(CanonicalDataset {
        obs,
        var: CanonicalVar { ensembl_id, gene_symbol },
        x,
        pert_mask,
        pert_dose,
        pert_vocab: m.pert_vocab,
    })
}

/// Names of the files that make up a canonical bundle, in a fixed order.
pub const CANONICAL_FILES: [&str; 6] =
    ["manifest.json", "obs.tsv", "var.tsv", "X.f64", "pert_mask.u8", "pert_dose.f64"];
