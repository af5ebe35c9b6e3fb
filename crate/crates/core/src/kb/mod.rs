//! Knowledge base of past search outcomes and warm-start retrieval.
//!
//! Storage is an append-only JSON-lines file. The first line is a header
//! `{"kb_version":1,"dim":D}`; every following line is one entry. Writers
//! take an exclusive advisory lock for the duration of an append.
//!
//! Retrieval embeds the query, scores every entry by cosine similarity `s`,
//! keeps entries with `s > tau_filter`, and ranks them by
//! `w = a * (s - tau_filter) / (1 - tau_filter) + (1 - a) * (r - r_min) / (r_max - r_min)`,
//! where the reward range is taken over the kept entries. The search is
//! warm-started from the top entry when the best similarity exceeds `tau`.

mod embed;

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::search::{validate_action_path, Action};

pub use embed::{Embedder, HttpEmbedder, TokenHashEmbedder};

pub const KB_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("knowledge base I/O on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} line {line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid entry: {0}")]
    InvalidEntry(String),
    #[error("embedding failed: {0}")]
    Embedding(String),
    #[error("cosine similarity needs equal dimensions, got {0} and {1}")]
    SimilarityDimension(usize, usize),
    #[error("similarity {s} does not exceed tau_filter {tau_filter}")]
    BelowFilter { s: f64, tau_filter: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub profile_text: String,
    pub embedding: Vec<f64>,
    pub action_path: Vec<Action>,
    pub reward: f64,
    /// Unix seconds.
    pub created_at: u64,
}

impl KnowledgeEntry {
    pub fn new(
        profile_text: impl Into<String>,
        embedder: &dyn Embedder,
        action_path: Vec<Action>,
        reward: f64,
        created_at: u64,
    ) -> Result<Self, KbError> {
        let profile_text = profile_text.into();
        let embedding = embedder.embed(&profile_text)?;
        let e = KnowledgeEntry { profile_text, embedding, action_path, reward, created_at };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<(), KbError> {
        let norm = self.embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(KbError::InvalidEntry(format!("embedding norm is {norm}, expected 1")));
        }
        if !(0.0..=1.0).contains(&self.reward) {
            return Err(KbError::InvalidEntry(format!("reward {} outside [0, 1]", self.reward)));
        }
        validate_action_path(&self.action_path).map_err(|e| KbError::InvalidEntry(e.to_string()))?;
        Ok(())
    }
}

/// Dot product of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, KbError> {
    if a.len() != b.len() {
        return Err(KbError::SimilarityDimension(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0))
}

/// Ranking weight of a filtered entry. A degenerate reward range counts as 1.
pub fn composite_weight(
    s: f64,
    r: f64,
    r_min: f64,
    r_max: f64,
    tau_filter: f64,
    alpha_retrieval: f64,
) -> Result<f64, KbError> {
    if !(s > tau_filter) {
        return Err(KbError::BelowFilter { s, tau_filter });
    }
    let sim = (s - tau_filter) / (1.0 - tau_filter);
    let rew = if r_max == r_min { 1.0 } else { (r - r_min) / (r_max - r_min) };
    Ok(alpha_retrieval * sim + (1.0 - alpha_retrieval) * rew)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalParams {
    pub tau_filter: f64,
    pub m: usize,
    pub alpha_retrieval: f64,
    /// Warm-start threshold on the best similarity.
    pub tau: f64,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        RetrievalParams { tau_filter: 0.3, m: 3, alpha_retrieval: 0.5, tau: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    WarmStart,
    AbInitio,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedEntry {
    /// Position in the knowledge base.
    pub index: usize,
    pub entry: KnowledgeEntry,
    pub similarity: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalResult {
    /// Best similarity over all entries; `None` for an empty knowledge base.
    pub rho: Option<f64>,
    pub mode: RetrievalMode,
    pub ranked: Vec<RankedEntry>,
    pub epsilon0: Option<Vec<Action>>,
}

impl RetrievalResult {
    pub fn ab_initio() -> Self {
        RetrievalResult { rho: None, mode: RetrievalMode::AbInitio, ranked: Vec::new(), epsilon0: None }
    }
}

/// Embeds `query_text` and ranks `entries` against it.
pub fn retrieve(
    query_text: &str,
    entries: &[KnowledgeEntry],
    params: &RetrievalParams,
    embedder: &dyn Embedder,
) -> Result<RetrievalResult, KbError> {
    if entries.is_empty() {
        return Ok(RetrievalResult::ab_initio());
    }
    let q = embedder.embed(query_text)?;
    let sims = entries.iter().map(|e| cosine_similarity(&q, &e.embedding)).collect::<Result<Vec<_>, _>>()?;
    Ok(rank_entries(entries, &sims, params))
}

/// Ranking step of [`retrieve`] given precomputed similarities. If `tau` is
/// below `tau_filter` and nothing survives the filter, the result is ab initio.
pub fn rank_entries(entries: &[KnowledgeEntry], sims: &[f64], params: &RetrievalParams) -> RetrievalResult {
    assert_eq!(entries.len(), sims.len(), "one similarity per entry");
    let rho = sims.iter().copied().fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.max(s))));
    let kept: Vec<usize> = (0..entries.len()).filter(|&i| sims[i] > params.tau_filter).collect();
    let r_min = kept.iter().map(|&i| entries[i].reward).fold(f64::INFINITY, f64::min);
    let r_max = kept.iter().map(|&i| entries[i].reward).fold(f64::NEG_INFINITY, f64::max);
    let mut ranked: Vec<RankedEntry> = kept
        .iter()
        .map(|&i| RankedEntry {
            index: i,
            entry: entries[i].clone(),
            similarity: sims[i],
            weight: composite_weight(sims[i], entries[i].reward, r_min, r_max, params.tau_filter, params.alpha_retrieval)
                .expect("entry passed the filter"),
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then(b.entry.created_at.cmp(&a.entry.created_at))
            .then(b.index.cmp(&a.index))
    });
    ranked.truncate(params.m);
    let warm = rho.is_some_and(|r| r > params.tau) && !ranked.is_empty();
    RetrievalResult {
        rho,
        mode: if warm { RetrievalMode::WarmStart } else { RetrievalMode::AbInitio },
        epsilon0: warm.then(|| ranked[0].entry.action_path.clone()),
        ranked,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kb_version: u32,
    dim: usize,
}

/// Handle on a knowledge-base file. The file is created on first append.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    path: PathBuf,
    dim: usize,
}

impl KnowledgeBase {
    pub fn new(path: impl Into<PathBuf>, dim: usize) -> Self {
        KnowledgeBase { path: path.into(), dim }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// All entries in insertion order. A missing file is an empty base.
    pub fn load(&self) -> Result<Vec<KnowledgeEntry>, KbError> {
        let file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(self.io(e)),
        };
        let mut entries = Vec::new();
        for (k, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| self.io(e))?;
            let lineno = k + 1;
            if k == 0 {
                self.check_header(&line, lineno)?;
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let entry: KnowledgeEntry = serde_json::from_str(&line).map_err(|e| self.format(lineno, e.to_string()))?;
            if entry.embedding.len() != self.dim {
                return Err(self.format(
                    lineno,
                    format!("embedding has dimension {}, header says {}", entry.embedding.len(), self.dim),
                ));
            }
            entry.validate().map_err(|e| self.format(lineno, e.to_string()))?;
            entries.push(entry);
        }
        Ok(entries)
    }

    /// Appends one entry under an exclusive file lock.
    pub fn record(&self, entry: &KnowledgeEntry) -> Result<(), KbError> {
        entry.validate()?;
        if entry.embedding.len() != self.dim {
            return Err(KbError::DimensionMismatch { expected: self.dim, found: entry.embedding.len() });
        }
        let mut file =
            OpenOptions::new().create(true).read(true).append(true).open(&self.path).map_err(|e| self.io(e))?;
        file.lock().map_err(|e| self.io(e))?;
        let result = self.append_locked(&mut file, entry);
        let _ = file.unlock();
        result
    }

    fn append_locked(&self, file: &mut File, entry: &KnowledgeEntry) -> Result<(), KbError> {
        let len = file.metadata().map_err(|e| self.io(e))?.len();
        let mut out = String::new();
        if len == 0 {
            out.push_str(&serde_json::to_string(&Header { kb_version: KB_VERSION, dim: self.dim }).expect("header"));
            out.push('\n');
        } else {
            let mut first = String::new();
            BufReader::new(File::open(&self.path).map_err(|e| self.io(e))?)
                .read_line(&mut first)
                .map_err(|e| self.io(e))?;
            self.check_header(first.trim_end(), 1)?;
        }
        out.push_str(&serde_json::to_string(entry).expect("entry serializes"));
        out.push('\n');
        file.write_all(out.as_bytes()).map_err(|e| self.io(e))?;
        file.sync_data().map_err(|e| self.io(e))
    }

    fn check_header(&self, line: &str, lineno: usize) -> Result<(), KbError> {
        let h: Header = serde_json::from_str(line)
            .map_err(|e| self.format(lineno, format!("expected header {{\"kb_version\":1,\"dim\":N}}: {e}")))?;
        if h.kb_version != KB_VERSION {
            return Err(self.format(lineno, format!("unsupported kb_version {}", h.kb_version)));
        }
        if h.dim != self.dim {
            return Err(self.format(lineno, format!("file has dimension {}, expected {}", h.dim, self.dim)));
        }
        Ok(())
    }

    fn io(&self, source: std::io::Error) -> KbError {
        KbError::Io { path: self.path.clone(), source }
    }

    fn format(&self, line: usize, message: String) -> KbError {
        KbError::Format { path: self.path.clone(), line, message }
    }
}

/// Reads just the header dimension of an existing file.
pub fn read_dim(path: &Path) -> Result<Option<usize>, KbError> {
    let io = |source| KbError::Io { path: path.to_path_buf(), source };
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io(e)),
    };
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first).map_err(io)?;
    if first.trim().is_empty() {
        return Ok(None);
    }
    let h: Header = serde_json::from_str(first.trim_end())
        .map_err(|e| KbError::Format { path: path.to_path_buf(), line: 1, message: e.to_string() })?;
    Ok(Some(h.dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::{Backbone, Paradigm};
    use proptest::prelude::*;

    fn path(b: Backbone) -> Vec<Action> {
        vec![Action::Paradigm(b.paradigm()), Action::Backbone(b)]
    }

    fn entry(reward: f64, created_at: u64, b: Backbone) -> KnowledgeEntry {
        let mut e = KnowledgeEntry::new("x", &TokenHashEmbedder::default(), path(b), reward, created_at).unwrap();
        e.profile_text = format!("entry {created_at}");
        e
    }

    #[test]
    fn cosine_examples() {
        let a = [0.6, 0.8];
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&a, &[-0.6, -0.8]).unwrap() + 1.0).abs() < 1e-15);
        assert!(cosine_similarity(&a, &[1.0]).is_err());
    }

    #[test]
    fn weight_examples() {
        assert!((composite_weight(0.65, 0.6, 0.6, 0.9, 0.3, 0.5).unwrap() - 0.25).abs() < 1e-12);
        assert!((composite_weight(0.5, 0.9, 0.6, 0.9, 0.3, 0.5).unwrap() - (0.25 / 0.7 * 0.4 + 0.5)).abs() < 1e-12);
        assert!((composite_weight(0.5, 0.9, 0.6, 0.9, 0.3, 0.5).unwrap() - 0.642_857_142_857).abs() < 1e-9);
        assert_eq!(composite_weight(1.0, 0.4, 0.4, 0.4, 0.3, 0.5).unwrap(), 1.0);
        assert!(composite_weight(0.3, 0.4, 0.4, 0.4, 0.3, 0.5).is_err());
    }

    #[test]
    fn ranking_example() {
        let entries = vec![entry(0.6, 1, Backbone::ResNet), entry(0.9, 2, Backbone::ConditionalVae)];
        let r = rank_entries(&entries, &[0.65, 0.5], &RetrievalParams::default());
        assert_eq!(r.rho, Some(0.65));
        assert_eq!(r.mode, RetrievalMode::WarmStart);
        assert_eq!(r.ranked[0].index, 1);
        assert_eq!(r.epsilon0, Some(path(Backbone::ConditionalVae)));

        let low = rank_entries(&entries, &[0.3, 0.1], &RetrievalParams::default());
        assert_eq!(low.mode, RetrievalMode::AbInitio);
        assert!(low.ranked.is_empty() && low.epsilon0.is_none());
    }

    #[test]
    fn empty_kb_and_ties() {
        let r = retrieve("q", &[], &RetrievalParams::default(), &TokenHashEmbedder::default()).unwrap();
        assert_eq!(r, RetrievalResult::ab_initio());
        let entries = vec![entry(0.5, 1, Backbone::ResNet), entry(0.5, 5, Backbone::GatedMlp), entry(0.5, 5, Backbone::FlowMatching)];
        let r = rank_entries(&entries, &[0.6, 0.6, 0.6], &RetrievalParams::default());
        let order: Vec<usize> = r.ranked.iter().map(|e| e.index).collect();
        assert_eq!(order, vec![2, 1, 0]);
    }

    #[test]
    fn record_retrieve_reload() {
        let dir = tempfile::tempdir().unwrap();
        let kb = KnowledgeBase::new(dir.path().join("kb.jsonl"), 256);
        assert!(kb.load().unwrap().is_empty());
        let emb = TokenHashEmbedder::default();
        let a = KnowledgeEntry::new("norman crispra k562 unseen perturbation", &emb, path(Backbone::GatedMlp), 0.7, 10).unwrap();
        let b = KnowledgeEntry::new("srivatsan drug a549", &emb, path(Backbone::FlowMatching), 0.4, 11).unwrap();
        kb.record(&a).unwrap();
        kb.record(&b).unwrap();
        let reopened = KnowledgeBase::new(kb.path(), 256);
        let loaded = reopened.load().unwrap();
        assert_eq!(loaded, vec![a.clone(), b]);
        let r = retrieve(&a.profile_text, &loaded, &RetrievalParams::default(), &emb).unwrap();
        assert!((r.rho.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r.epsilon0, Some(a.action_path));

        let text = std::fs::read_to_string(kb.path()).unwrap();
        assert!(text.starts_with("{\"kb_version\":1,\"dim\":256}\n"));
        assert!(matches!(KnowledgeBase::new(kb.path(), 8).load(), Err(KbError::Format { line: 1, .. })));
        assert_eq!(read_dim(kb.path()).unwrap(), Some(256));
    }

    #[test]
    fn invalid_entries_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let kb = KnowledgeBase::new(dir.path().join("kb.jsonl"), 2);
        let mut e = KnowledgeEntry {
            profile_text: "p".into(),
            embedding: vec![1.0, 1.0],
            action_path: path(Backbone::ResNet),
            reward: 0.5,
            created_at: 0,
        };
        assert!(matches!(kb.record(&e), Err(KbError::InvalidEntry(_))));
        e.embedding = vec![1.0, 0.0];
        e.action_path = vec![Action::Paradigm(Paradigm::Generative), Action::Backbone(Backbone::ResNet)];
        assert!(matches!(kb.record(&e), Err(KbError::InvalidEntry(_))));
        e.action_path = path(Backbone::ResNet);
        kb.record(&e).unwrap();
        assert!(!dir.path().join("missing").exists());

        // A line with the wrong dimension is reported with its line number.
        let mut text = std::fs::read_to_string(kb.path()).unwrap();
        text.push_str(&serde_json::to_string(&KnowledgeEntry { embedding: vec![1.0, 0.0, 0.0], ..e }).unwrap());
        text.push('\n');
        std::fs::write(kb.path(), text).unwrap();
        let err = kb.load().unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    proptest! {
        #[test]
        fn raising_reward_never_lowers_rank(
            pairs in prop::collection::vec((0.31f64..1.0, 0.0f64..1.0), 2..8),
            pick in 0usize..8,
            bump in 0.0f64..0.5,
        ) {
            let k = pick % pairs.len();
            let mut entries: Vec<KnowledgeEntry> = pairs.iter().enumerate()
                .map(|(i, &(_, r))| entry(r, i as u64, Backbone::ResNet)).collect();
            let sims: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let params = RetrievalParams { m: 8, ..RetrievalParams::default() };
            let before = rank_entries(&entries, &sims, &params).ranked.iter().position(|e| e.index == k).unwrap();
            // Keep the reward range fixed: cap at the max and leave a unique minimum alone.
            let r_min = entries.iter().map(|e| e.reward).fold(1.0, f64::min);
            prop_assume!(entries[k].reward > r_min || entries.iter().filter(|e| e.reward == r_min).count() > 1);
            let r_max = entries.iter().map(|e| e.reward).fold(0.0, f64::max);
            entries[k].reward = (entries[k].reward + bump).min(r_max);
            let after = rank_entries(&entries, &sims, &params).ranked.iter().position(|e| e.index == k).unwrap();
            prop_assert!(after <= before);
        }
    }
}
