use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Subcommand};
use indexmap::IndexMap;
use serde_json::{json, Value};

use scpilot_core::evaluators::{
    generate_synthetic, FailureInjector, LandscapeOracle, SurrogateEvaluator,
};
use scpilot_core::kb::{self, KbError, KnowledgeBase, KnowledgeEntry, RetrievalResult, TokenHashEmbedder};
use scpilot_core::metrics::{evaluate_predictions, MetricsError};
use scpilot_core::model::bundle::{self, BundleError};
use scpilot_core::model::{pseudo_bulk, split_unseen_perturbation, PseudoBulkProfile};
use scpilot_core::search::{run_search, Action, Evaluator, GridProposer, SearchError};
use scpilot_core::unifier::{
    apply_mapping, induce_mapping, preview_schema, LlmClient, MappingSpec, UnifierError,
};
use scpilot_core::CanonicalDataset;

use crate::config::{parse_mode, Settings};
use crate::manifest::{digest_path, now_secs, RunManifest};
use crate::{CliError, ConfigArgs};

pub const BUNDLE_DIR: &str = "bundle";
const DEFAULT_TASK: &str = "Map this perturbation screen onto the canonical schema.";

fn bundle_err(e: BundleError) -> CliError {
    match e {
        BundleError::Io { path, source } => CliError::io(&path, source),
        other => CliError::validation(other.to_string(), Value::Null),
    }
}

fn kb_err(e: KbError) -> CliError {
    match e {
        KbError::Io { path, source } => CliError::io(&path, source),
        other => CliError::validation(other.to_string(), Value::Null),
    }
}

fn search_err(e: SearchError) -> CliError {
    CliError::validation(e.to_string(), Value::Null)
}

fn unifier_err(e: UnifierError) -> CliError {
    let raw = e.raw_response().map(str::to_string);
    let with_raw = |mut v: Value| {
        if let Some(r) = &raw {
            v["raw_response"] = json!(r);
        }
        v
    };
    match e.root() {
        UnifierError::Transport(_) | UnifierError::NoJsonBlock => {
            CliError::Transport { message: e.to_string(), detail: with_raw(json!({})) }
        }
        _ if raw.is_some() => CliError::Transport { message: e.to_string(), detail: with_raw(json!({})) },
        UnifierError::MissingColumn { key, column, available } => CliError::validation(
            e.to_string(),
            json!({ "key": key, "column": column, "available": available }),
        ),
        UnifierError::Validation(report) => CliError::validation(
            "canonical validation failed",
            serde_json::to_value(report).expect("report serializes"),
        ),
        UnifierError::Schema { violations } => CliError::validation(e.to_string(), json!({ "violations": violations })),
        _ => CliError::validation(e.to_string(), Value::Null),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}

fn require_exists(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} not found: {}", path.display())))
    }
}

fn load_canonical(path: &Path) -> Result<CanonicalDataset, CliError> {
    require_exists(path, "bundle")?;
    bundle::read_canonical(path).map_err(bundle_err)
}

// ---------------------------------------------------------------- unify

#[derive(Args, Debug)]
pub struct UnifyArgs {
    /// Raw bundle directory.
    pub raw: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Mapping specification file.
    #[arg(long, conflicts_with = "induce", required_unless_present = "induce")]
    pub mapping: Option<PathBuf>,
    /// Ask the LLM gateway for a mapping.
    #[arg(long)]
    pub induce: bool,
    /// Replay recorded responses instead of calling the endpoint.
    #[arg(long, requires = "induce", conflicts_with = "mock")]
    pub replay: Option<PathBuf>,
    /// Use a fixed response file as the LLM reply.
    #[arg(long, requires = "induce")]
    pub mock: Option<PathBuf>,
    /// Task description included in the prompt.
    #[arg(long, default_value = DEFAULT_TASK)]
    pub task: String,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn unify(a: UnifyArgs) -> Result<Value, CliError> {
    let started = now_secs();
    let settings = Settings::load(a.config.config.as_deref(), &a.config.overrides)?;
    require_exists(&a.raw, "raw bundle")?;
    let table = bundle::read_raw(&a.raw).map_err(bundle_err)?;

    let mut inputs = IndexMap::new();
    inputs.insert("raw".to_string(), digest_path(&a.raw)?);
    let mut config = settings.resolved(&["unify"]);
    config["task"] = json!(a.task);

    let spec = if let Some(path) = &a.mapping {
        require_exists(path, "mapping")?;
        inputs.insert("mapping".to_string(), digest_path(path)?);
        config["source"] = json!("mapping");
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        MappingSpec::from_json_str(&text).map_err(unifier_err)?
    } else {
        let mut client = if let Some(p) = &a.replay {
            require_exists(p, "replay file")?;
            inputs.insert("replay".to_string(), digest_path(p)?);
            config["source"] = json!("replay");
            LlmClient::replay(p).map_err(unifier_err)?
        } else if let Some(p) = &a.mock {
            inputs.insert("mock".to_string(), digest_path(p)?);
            config["source"] = json!("mock");
            LlmClient::mock(fs::read_to_string(p).map_err(|e| CliError::io(p, e))?)
        } else {
            config["source"] = json!("live");
            LlmClient::from_env(&settings.unify.model, Duration::from_secs(settings.unify.timeout_secs))
                .map_err(unifier_err)?
        };
        let preview = preview_schema(&table, settings.unify.sample_size);
        induce_mapping(&preview, &mut client, &a.task).map_err(unifier_err)?
    };

    let manifest = RunManifest::new("unify", config, inputs, 0, started);
    create_dir(&a.out)?;
    write_file(&a.out.join("mapping.json"), spec.to_json_string() + "\n")?;
    let ds = match apply_mapping(&table, &spec) {
        Ok(ds) => ds,
        Err(e) => {
            let err = unifier_err(e);
            if let CliError::Validation { detail, .. } = &err {
                if detail.get("violations").is_some() {
                    write_file(&a.out.join("validation_report.json"), pretty(detail))?;
                }
            }
            manifest.append(&a.out, json!({ "status": "rejected", "error": err.to_string() }))?;
            return Err(err);
        }
    };
    let report = scpilot_core::model::validate_canonical(&ds);
    write_file(&a.out.join("validation_report.json"), pretty(&report))?;
    let bundle_dir = a.out.join(BUNDLE_DIR);
    bundle::write_canonical(&bundle_dir, &ds).map_err(bundle_err)?;
    let outcome = json!({
        "status": "ok",
        "bundle": bundle_dir,
        "bundle_digest": digest_path(&bundle_dir)?,
        "n_cells": ds.n_cells(),
        "n_genes": ds.n_genes(),
        "n_perts": ds.n_perts(),
    });
    let m = manifest.append(&a.out, outcome.clone())?;
    Ok(json!({ "run_id": m.run_id, "outcome": outcome }))
}

// ---------------------------------------------------------------- search

#[derive(Args, Debug)]
pub struct SearchArgs {
    /// Canonical bundle directory.
    pub bundle: PathBuf,
    /// `surrogate` or `landscape:<table.json>`.
    #[arg(long, default_value = "surrogate")]
    pub evaluator: String,
    /// `hierarchical` or `flat`.
    #[arg(long)]
    pub mode: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Knowledge base file for retrieval and recording.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_sim: Option<usize>,
    /// Re-run every evaluation and fail on any difference.
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

enum EvaluatorChoice {
    Surrogate,
    Landscape(PathBuf),
}

fn parse_evaluator(s: &str) -> Result<EvaluatorChoice, CliError> {
    match s.split_once(':') {
        None if s == "surrogate" => Ok(EvaluatorChoice::Surrogate),
        Some(("landscape", p)) if !p.is_empty() => Ok(EvaluatorChoice::Landscape(PathBuf::from(p))),
        _ => Err(CliError::Usage(format!("evaluator must be surrogate or landscape:<table>, got '{s}'"))),
    }
}

/// Text describing a dataset for knowledge-base embedding. Deterministic in
/// the dataset contents, so re-runs on the same data retrieve their own entry.
pub fn profile_text(ds: &CanonicalDataset) -> String {
    let distinct = |v: &[String]| v.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect::<Vec<_>>();
    let types: BTreeSet<_> = ds.obs.pert_type.iter().map(|t| t.as_str()).collect();
    format!(
        "cells {} genes {} perturbations {} pert_types {} cell_types {} vocab {}",
        ds.n_cells(),
        ds.n_genes(),
        ds.n_perts(),
        types.into_iter().collect::<Vec<_>>().join(" "),
        distinct(&ds.obs.cell_type).join(" "),
        ds.pert_vocab.join(" "),
    )
}

pub fn search(a: SearchArgs) -> Result<Value, CliError> {
    let started = now_secs();
    let mut settings = Settings::load(a.config.config.as_deref(), &a.config.overrides)?;
    if let Some(m) = &a.mode {
        settings.search.mode = parse_mode(m)?;
    }
    if let Some(s) = a.seed {
        settings.search.seed = s;
    }
    if let Some(n) = a.n_sim {
        settings.search.n_sim = n;
    }
    if a.strict {
        settings.search.strict = true;
    }
    settings.search.validate().map_err(search_err)?;
    let choice = parse_evaluator(&a.evaluator)?;

    let ds = load_canonical(&a.bundle)?;
    let mut inputs = IndexMap::new();
    inputs.insert("bundle".to_string(), digest_path(&a.bundle)?);
    let mut sections = vec!["search", "evaluator"];
    let inner: Box<dyn Evaluator> = match &choice {
        EvaluatorChoice::Surrogate => {
            sections.extend(["split", "surrogate"]);
            let split = split_unseen_perturbation(&ds, settings.split.train_frac, settings.split.seed)
                .map_err(|e| CliError::validation(e.to_string(), Value::Null))?;
            Box::new(
                SurrogateEvaluator::new(&ds, &split, settings.surrogate_options())
                    .map_err(|e| CliError::validation(e.to_string(), Value::Null))?,
            )
        }
        EvaluatorChoice::Landscape(p) => {
            require_exists(p, "landscape table")?;
            inputs.insert("landscape".to_string(), digest_path(p)?);
            Box::new(LandscapeOracle::load(p).map_err(|e| CliError::validation(e.to_string(), Value::Null))?)
        }
    };
    let evaluator: Box<dyn Evaluator> = if settings.evaluator.failure_fraction > 0.0 {
        Box::new(FailureInjector::new(inner, settings.evaluator.failure_fraction, settings.evaluator.failure_seed))
    } else {
        inner
    };

    let profile = profile_text(&ds);
    let mut kb_handle = None;
    let retrieval = if let Some(path) = &a.kb {
        sections.extend(["retrieval", "kb"]);
        let dim = kb::read_dim(path).map_err(kb_err)?.unwrap_or(settings.kb.dim);
        settings.kb.dim = dim;
        let base = KnowledgeBase::new(path, dim);
        let entries = base.load().map_err(kb_err)?;
        inputs.insert("kb_entries".to_string(), entries.len().to_string());
        let embedder = TokenHashEmbedder { dim, seed: 0 };
        let r = kb::retrieve(&profile, &entries, &settings.retrieval, &embedder).map_err(kb_err)?;
        kb_handle = Some((base, embedder));
        r
    } else {
        RetrievalResult::ab_initio()
    };

    let mut config = settings.resolved(&sections);
    config["evaluator"]["kind"] = json!(a.evaluator);
    let manifest = RunManifest::new("search", config, inputs, settings.search.seed, started);

    let result = run_search(&settings.search, evaluator.as_ref(), Some(&retrieval), &GridProposer).map_err(search_err)?;

    create_dir(&a.out)?;
    write_file(&a.out.join("retrieval.json"), pretty(&retrieval))?;
    write_file(&a.out.join("trajectory.jsonl"), result.trajectory_jsonl())?;
    write_file(&a.out.join("tree.json"), pretty(&result.tree.to_json()))?;
    let best_json = result.best.as_ref().map(|b| b.to_json()).unwrap_or(Value::Null);
    write_file(&a.out.join("best_candidate.json"), pretty(&best_json))?;

    let outcome = json!({
        "status": if result.best.is_some() { "ok" } else { "no_candidate" },
        "best": best_json,
        "iterations": result.trajectory.len(),
        "expansions": result.expansions,
        "budget_exhausted": result.budget_exhausted,
        "retrieval_mode": retrieval.mode,
    });
    let m = manifest.append(&a.out, outcome.clone())?;
    let Some(best) = &result.best else {
        return Err(CliError::NoCandidate { iterations: result.trajectory.len() });
    };
    if let Some((base, embedder)) = kb_handle {
        let entry = KnowledgeEntry::new(profile, &embedder, best.path.clone(), best.reward, now_secs() as u64)
            .map_err(kb_err)?;
        base.record(&entry).map_err(kb_err)?;
    }
    Ok(json!({ "run_id": m.run_id, "outcome": outcome }))
}

// ---------------------------------------------------------------- evaluate

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Canonical bundle holding the ground truth.
    pub bundle: PathBuf,
    /// JSON object mapping condition names to predicted mean expression.
    pub predictions: PathBuf,
}

pub fn evaluate(a: EvaluateArgs) -> Result<Value, CliError> {
    let ds = load_canonical(&a.bundle)?;
    require_exists(&a.predictions, "predictions")?;
    let text = fs::read_to_string(&a.predictions).map_err(|e| CliError::io(&a.predictions, e))?;
    let preds: IndexMap<String, Vec<f64>> = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("predictions: {e}"), Value::Null))?;
    let g = ds.n_genes();
    for (name, v) in &preds {
        if v.len() != g {
            return Err(CliError::validation(
                format!("condition '{name}': expected {g} genes, got {}", v.len()),
                json!({ "condition": name, "expected": g, "actual": v.len() }),
            ));
        }
    }

    let ctrl_cells: Vec<usize> = (0..ds.n_cells()).filter(|&i| ds.obs.is_control[i]).collect();
    if ctrl_cells.is_empty() {
        return Err(CliError::validation("bundle has no control cells", Value::Null));
    }
    let mut ctrl = vec![0.0; g];
    for &i in &ctrl_cells {
        for (j, c) in ctrl.iter_mut().enumerate() {
            *c += ds.x[[i, j]];
        }
    }
    ctrl.iter_mut().for_each(|c| *c /= ctrl_cells.len() as f64);
    let control = PseudoBulkProfile { condition_name: "__control__".into(), mean_expr: ctrl, n_cells: ctrl_cells.len() };

    let perturbed: Vec<usize> = (0..ds.n_cells()).filter(|&i| !ds.obs.is_control[i]).collect();
    let truth = if perturbed.is_empty() {
        Vec::new()
    } else {
        pseudo_bulk(&ds, &perturbed).map_err(|e| CliError::validation(e.to_string(), Value::Null))?
    };
    let predicted: Vec<PseudoBulkProfile> = preds
        .into_iter()
        .map(|(condition_name, mean_expr)| PseudoBulkProfile { condition_name, mean_expr, n_cells: 0 })
        .collect();
    let report = evaluate_predictions(&truth, &predicted, &control).map_err(|e| match &e {
        MetricsError::UnmatchedCondition(c) => CliError::validation(e.to_string(), json!({ "condition": c })),
        _ => CliError::validation(e.to_string(), Value::Null),
    })?;
    Ok(serde_json::to_value(&report).expect("report serializes"))
}

// ---------------------------------------------------------------- gen-synthetic

#[derive(Args, Debug)]
pub struct GenSyntheticArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn gen_synthetic(a: GenSyntheticArgs) -> Result<Value, CliError> {
    let started = now_secs();
    let mut settings = Settings::load(a.config.config.as_deref(), &a.config.overrides)?;
    if let Some(s) = a.seed {
        settings.synthetic.seed = s;
    }
    let manifest =
        RunManifest::new("gen-synthetic", settings.resolved(&["synthetic"]), IndexMap::new(), settings.synthetic.seed, started);
    let (ds, truth) =
        generate_synthetic(&settings.synthetic).map_err(|e| CliError::validation(e.to_string(), Value::Null))?;
    create_dir(&a.out)?;
    let bundle_dir = a.out.join(BUNDLE_DIR);
    bundle::write_canonical(&bundle_dir, &ds).map_err(bundle_err)?;
    write_file(&a.out.join("ground_truth.json"), pretty(&truth.to_json()))?;
    let outcome = json!({
        "status": "ok",
        "bundle": bundle_dir,
        "bundle_digest": digest_path(&bundle_dir)?,
        "n_cells": ds.n_cells(),
        "n_genes": ds.n_genes(),
        "n_perts": ds.n_perts(),
    });
    let m = manifest.append(&a.out, outcome.clone())?;
    Ok(json!({ "run_id": m.run_id, "outcome": outcome }))
}

// ---------------------------------------------------------------- kb

#[derive(Subcommand, Debug)]
pub enum KbAction {
    /// Summarize every entry. A missing file lists as empty.
    List {
        #[arg(long)]
        kb: PathBuf,
    },
    /// Print one entry in full.
    Show {
        #[arg(long)]
        kb: PathBuf,
        /// 0-based entry index.
        index: usize,
    },
    /// Append an entry.
    Add {
        #[arg(long)]
        kb: PathBuf,
        /// Profile text to embed.
        #[arg(long)]
        profile: String,
        /// Action path, e.g. `paradigm:discriminative,backbone:resnet`.
        #[arg(long, value_delimiter = ',', required = true)]
        path: Vec<String>,
        #[arg(long)]
        reward: f64,
        /// Embedding dimension for a new file.
        #[arg(long, default_value_t = 256)]
        dim: usize,
    },
}

fn open_kb(path: &Path, default_dim: usize) -> Result<KnowledgeBase, CliError> {
    let dim = kb::read_dim(path).map_err(kb_err)?.unwrap_or(default_dim);
    Ok(KnowledgeBase::new(path, dim))
}

fn summary(i: usize, e: &KnowledgeEntry) -> Value {
    json!({
        "index": i,
        "reward": e.reward,
        "created_at": e.created_at,
        "action_path": e.action_path,
        "profile_text": e.profile_text,
    })
}

pub fn kb(action: KbAction) -> Result<Value, CliError> {
    match action {
        KbAction::List { kb } => {
            let entries = open_kb(&kb, 256)?.load().map_err(kb_err)?;
            let list: Vec<Value> = entries.iter().enumerate().map(|(i, e)| summary(i, e)).collect();
            Ok(json!({ "count": list.len(), "entries": list }))
        }
        KbAction::Show { kb, index } => {
            let entries = open_kb(&kb, 256)?.load().map_err(kb_err)?;
            let e = entries
                .get(index)
                .ok_or_else(|| CliError::Usage(format!("no entry {index}; the base holds {}", entries.len())))?;
            Ok(serde_json::to_value(e).expect("entry serializes"))
        }
        KbAction::Add { kb, profile, path, reward, dim } => {
            let actions = path
                .iter()
                .map(|s| s.trim().parse::<Action>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let base = open_kb(&kb, dim)?;
            let embedder = TokenHashEmbedder { dim: base.dim(), seed: 0 };
            let entry =
                KnowledgeEntry::new(profile, &embedder, actions, reward, now_secs() as u64).map_err(kb_err)?;
            base.record(&entry).map_err(kb_err)?;
            let n = base.load().map_err(kb_err)?.len();
            Ok(json!({ "added": summary(n - 1, &entry), "count": n }))
        }
    }
}
