use std::time::Duration;

use serde_json::json;

use super::KbError;
use crate::hash::fnv1a;

pub trait Embedder {
    fn dim(&self) -> usize;
    /// Unit-norm vector of length [`Embedder::dim`].
    fn embed(&self, text: &str) -> Result<Vec<f64>, KbError>;
}

/// Term-frequency vector over hashed, lowercased whitespace tokens.
/// Case and runs of whitespace do not affect the result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenHashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for TokenHashEmbedder {
    fn default() -> Self {
        TokenHashEmbedder { dim: 256, seed: 0 }
    }
}

impl Embedder for TokenHashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, KbError> {
        if self.dim == 0 {
            return Err(KbError::Embedding("embedding dimension must be >= 1".into()));
        }
        let mut v = vec![0.0; self.dim];
        let lower = text.to_lowercase();
        for tok in lower.split_whitespace() {
            v[(fnv1a(self.seed, tok.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        normalize(v).ok_or_else(|| KbError::Embedding("cannot embed empty text".into()))
    }
}

/// Calls an embedding endpoint with `{"input": text}` and reads
/// `{"embedding": [...]}` from the response.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub dim: usize,
    pub timeout: Duration,
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, KbError> {
        let resp = crate::http::post_json(&self.endpoint, self.api_key.as_deref(), &json!({ "input": text }), self.timeout)
            .map_err(KbError::Embedding)?;
        let raw: Vec<f64> = resp
            .get("embedding")
            .and_then(|e| serde_json::from_value(e.clone()).ok())
            .ok_or_else(|| KbError::Embedding("response has no numeric 'embedding' array".into()))?;
        if raw.len() != self.dim {
            return Err(KbError::DimensionMismatch { expected: self.dim, found: raw.len() });
        }
        normalize(raw).ok_or_else(|| KbError::Embedding("endpoint returned a zero vector".into()))
    }
}

pub(crate) fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}
