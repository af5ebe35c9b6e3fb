//! Python bindings for `scpilot_core`.
//!
//! Structured results (reports, search outcomes) come back as plain Python
//! dicts and lists. Every core error surfaces as `ValueError`.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde_json::Value;

use scpilot_core::evaluators::{
    generate_synthetic as core_generate, LandscapeOracle as CoreLandscape, SurrogateEvaluator, SurrogateOptions,
    SyntheticConfig,
};
use scpilot_core::kb::{self, KnowledgeBase, RetrievalParams, RetrievalResult, TokenHashEmbedder};
use scpilot_core::metrics;
use scpilot_core::model::{self, bundle, PseudoBulkProfile};
use scpilot_core::search::{self, EvalOutcome, Evaluator, GridProposer, NodeStats, SearchConfig, SearchMode};
use scpilot_core::{dsl, unifier};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(v).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

fn ser_to_py(py: Python<'_>, v: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    to_py(py, &serde_json::to_value(v).map_err(err)?)
}

fn parse_mode(mode: &str) -> PyResult<SearchMode> {
    match mode {
        "hierarchical" => Ok(SearchMode::Hierarchical),
        "flat" | "flat_ablation" => Ok(SearchMode::FlatAblation),
        other => Err(err(format!("unknown search mode {other:?}; expected hierarchical or flat"))),
    }
}

/// Time-efficiency score of a runtime ratio.
#[pyfunction]
fn f_time(t_ratio: f64) -> PyResult<f64> {
    search::f_time(t_ratio).map_err(err)
}

/// Scalar reward of one evaluation. A failed evaluation scores only its time term.
#[pyfunction]
#[pyo3(signature = (m_val, t_ratio, failed=false, w_p=0.8, w_e=0.2))]
fn reward(m_val: f64, t_ratio: f64, failed: bool, w_p: f64, w_e: f64) -> PyResult<f64> {
    let cfg = SearchConfig { w_p, w_e, ..SearchConfig::default() };
    let outcome = if failed { EvalOutcome::failed("failed", 1.0) } else { EvalOutcome::value(m_val, 1.0) };
    search::reward(&outcome, t_ratio, &cfg).map_err(err)
}

/// Optimistic UCT score of a child node.
#[pyfunction]
#[pyo3(signature = (parent_n, n, q_sum, q_max, c=1.0, alpha_qmix=0.7, uct_epsilon=1e-6))]
fn uct_score(parent_n: u64, n: u64, q_sum: f64, q_max: f64, c: f64, alpha_qmix: f64, uct_epsilon: f64) -> f64 {
    let cfg = SearchConfig { c, alpha_qmix, uct_epsilon, ..SearchConfig::default() };
    search::uct_score(parent_n, &NodeStats { n, q_sum, q_max }, &cfg)
}

/// Ranking weight of a knowledge base entry that passed the similarity filter.
#[pyfunction]
#[pyo3(signature = (s, r, r_min, r_max, tau_filter=0.3, alpha_retrieval=0.5))]
fn composite_weight(s: f64, r: f64, r_min: f64, r_max: f64, tau_filter: f64, alpha_retrieval: f64) -> PyResult<f64> {
    kb::composite_weight(s, r, r_min, r_max, tau_filter, alpha_retrieval).map_err(err)
}

/// Parses a mapping expression and returns its canonical text.
#[pyfunction]
fn dsl_normalize(text: &str) -> PyResult<String> {
    dsl::parse(text).map(|e| dsl::format(&e)).map_err(err)
}

/// Raw columns an expression reads, in order of appearance.
#[pyfunction]
fn dsl_columns(text: &str) -> PyResult<Vec<String>> {
    let e = dsl::parse(text).map_err(err)?;
    Ok(e.columns().into_iter().map(str::to_string).collect())
}

/// Scores predicted pseudo-bulk profiles against the truth.
///
/// `truth` and `predicted` map condition names to mean expression vectors;
/// `control` is the control mean expression.
#[pyfunction]
#[pyo3(signature = (truth, predicted, control, control_name="control"))]
fn evaluate_predictions(
    py: Python<'_>,
    truth: &Bound<'_, PyDict>,
    predicted: &Bound<'_, PyDict>,
    control: Vec<f64>,
    control_name: &str,
) -> PyResult<Py<PyAny>> {
    let profiles = |rows: &Bound<'_, PyDict>| -> PyResult<Vec<PseudoBulkProfile>> {
        rows.iter()
            .map(|(k, v)| Ok(PseudoBulkProfile { condition_name: k.extract()?, mean_expr: v.extract()?, n_cells: 1 }))
            .collect()
    };
    let control = PseudoBulkProfile { condition_name: control_name.to_string(), mean_expr: control, n_cells: 1 };
    let report = metrics::evaluate_predictions(&profiles(truth)?, &profiles(predicted)?, &control).map_err(err)?;
    ser_to_py(py, &report)
}

/// Canonical dataset loaded from (or written to) a bundle directory.
#[pyclass(module = "scpilot")]
struct CanonicalDataset {
    inner: model::CanonicalDataset,
}

#[pymethods]
impl CanonicalDataset {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(CanonicalDataset { inner: bundle::read_canonical(&path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        bundle::write_canonical(&path, &self.inner).map_err(err)
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.inner.n_cells()
    }

    #[getter]
    fn n_genes(&self) -> usize {
        self.inner.n_genes()
    }

    #[getter]
    fn pert_vocab(&self) -> Vec<String> {
        self.inner.pert_vocab.clone()
    }

    #[getter]
    fn condition_names(&self) -> Vec<String> {
        self.inner.obs.condition_name.clone()
    }

    #[getter]
    fn gene_symbols(&self) -> Vec<String> {
        self.inner.var.gene_symbol.clone()
    }

    /// Expression matrix as a list of rows.
    fn x(&self) -> Vec<Vec<f64>> {
        self.inner.x.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    /// Schema violations; empty when the dataset is valid.
    fn validate(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        ser_to_py(py, &model::validate_canonical(&self.inner).violations)
    }

    /// Per-condition mean expression over all cells.
    fn pseudo_bulk(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let cells: Vec<usize> = (0..self.inner.n_cells()).collect();
        let profiles = model::pseudo_bulk(&self.inner, &cells).map_err(err)?;
        let out = PyDict::new(py);
        for p in profiles {
            out.set_item(p.condition_name, p.mean_expr)?;
        }
        Ok(out.into_any().unbind())
    }

    fn __repr__(&self) -> String {
        format!(
            "CanonicalDataset(n_cells={}, n_genes={}, n_perts={})",
            self.inner.n_cells(),
            self.inner.n_genes(),
            self.inner.n_perts()
        )
    }
}

/// Metadata mapping from a raw table onto the canonical schema.
#[pyclass(module = "scpilot")]
struct MappingSpec {
    inner: unifier::MappingSpec,
}

#[pymethods]
impl MappingSpec {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(MappingSpec { inner: unifier::MappingSpec::from_json_str(text).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn to_json(&self) -> String {
        self.inner.to_json_string()
    }

    /// Maps the raw bundle at `raw_dir` into a canonical dataset.
    fn apply(&self, raw_dir: PathBuf) -> PyResult<CanonicalDataset> {
        let table = bundle::read_raw(&raw_dir).map_err(err)?;
        let ds = unifier::apply_mapping(&table, &self.inner).map_err(err)?;
        Ok(CanonicalDataset { inner: ds })
    }
}

/// Writes a synthetic canonical bundle to `out_dir` and returns the dataset
/// with its ground truth.
#[pyfunction]
#[pyo3(signature = (out_dir=None, seed=0, n_genes=100, n_perts=10, cells_per_condition=20, noise_sigma=1.0, effect_sparsity=0.1, n_combos=10))]
#[allow(clippy::too_many_arguments)]
fn generate_synthetic(
    py: Python<'_>,
    out_dir: Option<PathBuf>,
    seed: u64,
    n_genes: usize,
    n_perts: usize,
    cells_per_condition: usize,
    noise_sigma: f64,
    effect_sparsity: f64,
    n_combos: usize,
) -> PyResult<(CanonicalDataset, Py<PyAny>)> {
    let cfg = SyntheticConfig {
        n_genes,
        n_perts,
        cells_per_condition,
        noise_sigma,
        effect_sparsity,
        seed,
        n_combos,
        pathway: None,
    };
    let (ds, truth) = core_generate(&cfg).map_err(err)?;
    if let Some(dir) = out_dir {
        bundle::write_canonical(&dir, &ds).map_err(err)?;
    }
    Ok((CanonicalDataset { inner: ds }, to_py(py, &truth.to_json())?))
}

/// Precomputed score table over the candidate grid.
#[pyclass(module = "scpilot")]
struct LandscapeOracle {
    inner: CoreLandscape,
}

#[pymethods]
impl LandscapeOracle {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(LandscapeOracle { inner: CoreLandscape::load(&path).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(LandscapeOracle { inner: CoreLandscape::from_json(text).map_err(err)? })
    }

    fn __len__(&self) -> usize {
        self.inner.table.len()
    }
}

fn retrieval_for(kb_path: Option<PathBuf>, profile: Option<&str>) -> PyResult<Option<RetrievalResult>> {
    let Some(path) = kb_path else { return Ok(None) };
    let dim = kb::read_dim(&path).map_err(err)?.unwrap_or(256);
    let entries = KnowledgeBase::new(path, dim).load().map_err(err)?;
    let embedder = TokenHashEmbedder { dim, seed: 0 };
    kb::retrieve(profile.unwrap_or(""), &entries, &RetrievalParams::default(), &embedder).map(Some).map_err(err)
}

fn search_with(
    py: Python<'_>,
    evaluator: &(dyn Evaluator + Sync),
    cfg: SearchConfig,
    retrieval: Option<RetrievalResult>,
) -> PyResult<Py<PyAny>> {
    let result = py
        .detach(|| search::run_search(&cfg, evaluator, retrieval.as_ref(), &GridProposer))
        .map_err(err)?;
    let out = serde_json::json!({
        "best": result.best.as_ref().map(|b| b.to_json()),
        "trajectory": result.trajectory.iter().map(|r| r.to_json()).collect::<Vec<_>>(),
        "expansions": result.expansions,
        "budget_exhausted": result.budget_exhausted,
        "retrieval": retrieval.map(|r| serde_json::to_value(r).unwrap_or(Value::Null)),
    });
    to_py(py, &out)
}

/// Runs the tree search against a landscape table.
#[pyfunction]
#[pyo3(signature = (oracle, n_sim=32, seed=0, mode="hierarchical", kb_path=None, profile=None))]
fn search_landscape(
    py: Python<'_>,
    oracle: &LandscapeOracle,
    n_sim: usize,
    seed: u64,
    mode: &str,
    kb_path: Option<PathBuf>,
    profile: Option<&str>,
) -> PyResult<Py<PyAny>> {
    let cfg = SearchConfig { n_sim, seed, mode: parse_mode(mode)?, ..SearchConfig::default() };
    let retrieval = retrieval_for(kb_path, profile)?;
    search_with(py, &oracle.inner, cfg, retrieval)
}

/// Runs the tree search with the closed-form surrogate trainers on `dataset`.
#[pyfunction]
#[pyo3(signature = (dataset, n_sim=32, seed=0, mode="hierarchical", train_frac=0.8, split_seed=0, kb_path=None, profile=None))]
#[allow(clippy::too_many_arguments)]
fn search_surrogate(
    py: Python<'_>,
    dataset: &CanonicalDataset,
    n_sim: usize,
    seed: u64,
    mode: &str,
    train_frac: f64,
    split_seed: u64,
    kb_path: Option<PathBuf>,
    profile: Option<&str>,
) -> PyResult<Py<PyAny>> {
    let cfg = SearchConfig { n_sim, seed, mode: parse_mode(mode)?, ..SearchConfig::default() };
    let split = model::split_unseen_perturbation(&dataset.inner, train_frac, split_seed).map_err(err)?;
    let ev = SurrogateEvaluator::new(&dataset.inner, &split, SurrogateOptions::default()).map_err(err)?;
    let retrieval = retrieval_for(kb_path, profile)?;
    search_with(py, &ev, cfg, retrieval)
}

#[pymodule]
fn scpilot(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(f_time, m)?)?;
    m.add_function(wrap_pyfunction!(reward, m)?)?;
    m.add_function(wrap_pyfunction!(uct_score, m)?)?;
    m.add_function(wrap_pyfunction!(composite_weight, m)?)?;
    m.add_function(wrap_pyfunction!(dsl_normalize, m)?)?;
    m.add_function(wrap_pyfunction!(dsl_columns, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_predictions, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(search_landscape, m)?)?;
    m.add_function(wrap_pyfunction!(search_surrogate, m)?)?;
    m.add_class::<CanonicalDataset>()?;
    m.add_class::<MappingSpec>()?;
    m.add_class::<LandscapeOracle>()?;
    Ok(())
}
