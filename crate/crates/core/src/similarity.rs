//! Sentence-embedding similarity and nearest-topic ranking.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::http::{agent, ApiConfig};

pub const FALLBACK_DIMENSION: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimilarityError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no candidates to rank")]
    NoCandidates,
    #[error("embedder failed: {0}")]
    Embedder(String),
    #[error("embedding has {got} dimensions, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Cosine similarity clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    pub const ZERO: SimilarityScore = SimilarityScore(0.0);
    pub const ONE: SimilarityScore = SimilarityScore(1.0);

    /// Negative and NaN cosines map to 0, values above 1 to 1.
    pub fn from_cosine(c: f64) -> Self {
        if c.is_nan() {
            return Self::ZERO;
        }
        Self(c.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for SimilarityScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.0)
    }
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, SimilarityError>;
}

impl<T: Embedder + ?Sized> Embedder for Arc<T> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, text: &str) -> Result<Vec<f64>, SimilarityError> {
        (**self).embed(text)
    }
}

impl<T: Embedder + ?Sized> Embedder for &T {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, text: &str) -> Result<Vec<f64>, SimilarityError> {
        (**self).embed(text)
    }
}

/// Lowercase word tokens: whitespace split, punctuation trimmed from both
/// ends. Text with no word characters becomes a single token.
pub fn tokenize(text: &str) -> Vec<String> {
    let tokens: Vec<String> = text
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect();
    if tokens.is_empty() && !text.trim().is_empty() {
        return vec![text.trim().to_lowercase()];
    }
    tokens
}

fn fnv1a(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Hashed bag of words with term-frequency weights. Needs no model and no
/// network, so maps and scripts evaluate reproducibly anywhere.
#[derive(Debug, Clone, Copy)]
pub struct FallbackEmbedder {
    dimension: usize,
}

impl Default for FallbackEmbedder {
    fn default() -> Self {
        Self {
            dimension: FALLBACK_DIMENSION,
        }
    }
}

impl FallbackEmbedder {
    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dimension as u64) as usize
    }
}

impl Embedder for FallbackEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, SimilarityError> {
        if text.trim().is_empty() {
            return Err(SimilarityError::EmptyText);
        }
        let mut v = vec![0.0; self.dimension];
        for token in tokenize(text) {
            v[self.bucket(&token)] += 1.0;
        }
        Ok(v)
    }
}

/// Memoizes another embedder by exact text.
pub struct CachedEmbedder<E> {
    inner: E,
    cache: RwLock<HashMap<String, Vec<f64>>>,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn cached_len(&self) -> usize {
        self.cache.read().unwrap_or_else(|e| e.into_inner()).len()
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, SimilarityError> {
        if let Some(v) = self.cache.read().unwrap_or_else(|e| e.into_inner()).get(text) {
            return Ok(v.clone());
        }
        let v = self.inner.embed(text)?;
        self.cache
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .entry(text.to_owned())
            .or_insert_with(|| v.clone());
        Ok(v)
    }
}

/// Client for an OpenAI-compatible `/embeddings` endpoint. Wrap it in a
/// [`CachedEmbedder`] for repeated texts.
pub struct RemoteEmbedder {
    config: ApiConfig,
    agent: ureq::Agent,
    dimension: usize,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingData>,
}

#[derive(Deserialize)]
struct EmbeddingData {
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(config: ApiConfig, dimension: usize) -> Self {
        let agent = agent(config.timeout);
        Self {
            config,
            agent,
            dimension,
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, SimilarityError> {
        if text.trim().is_empty() {
            return Err(SimilarityError::EmptyText);
        }
        let mut req = self.agent.post(self.config.endpoint("embeddings"));
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(json!({ "model": self.config.model, "input": text }))
            .map_err(|e| SimilarityError::Embedder(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(SimilarityError::Embedder(format!("HTTP {status}")));
        }
        let parsed: EmbeddingResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| SimilarityError::Embedder(e.to_string()))?;
        let v = parsed
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| SimilarityError::Embedder("empty embedding list".into()))?;
        if v.len() != self.dimension {
            return Err(SimilarityError::Dimension {
                expected: self.dimension,
                got: v.len(),
            });
        }
        Ok(v)
    }
}

/// Cosine of two equal-length vectors; 0 when either is all zeros.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb).sqrt()
}

pub(crate) fn embed_checked(text: &str, e: &dyn Embedder) -> Result<Vec<f64>, SimilarityError> {
    if text.trim().is_empty() {
        return Err(SimilarityError::EmptyText);
    }
    e.embed(text)
}

pub fn similarity(a: &str, b: &str, e: &dyn Embedder) -> Result<SimilarityScore, SimilarityError> {
    let va = embed_checked(a, e)?;
    let vb = embed_checked(b, e)?;
    Ok(SimilarityScore::from_cosine(cosine(&va, &vb)))
}

/// Top `k` candidates by descending similarity to `query`; equal scores
/// are ordered by ascending id.
pub fn find_closest<I: Ord + Clone, S: AsRef<str>>(
    query: &str,
    candidates: &[(I, S)],
    e: &dyn Embedder,
    k: usize,
) -> Result<Vec<(I, SimilarityScore)>, SimilarityError> {
    if k == 0 {
        return Err(SimilarityError::ZeroK);
    }
    if candidates.is_empty() {
        return Err(SimilarityError::NoCandidates);
    }
    let q = embed_checked(query, e)?;
    let mut scored = candidates
        .iter()
        .map(|(id, text)| {
            let v = embed_checked(text.as_ref(), e)?;
            Ok((id.clone(), SimilarityScore::from_cosine(cosine(&q, &v))))
        })
        .collect::<Result<Vec<_>, SimilarityError>>()?;
    scored.sort_by(|a, b| b.1.value().total_cmp(&a.1.value()).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_trims_punctuation() {
        assert_eq!(tokenize("Hold your fire!"), vec!["hold", "your", "fire"]);
        assert_eq!(tokenize("  soldier's (duty), "), vec!["soldier's", "duty"]);
        assert_eq!(tokenize("!!!"), vec!["!!!"]);
        assert!(tokenize("  ").is_empty());
    }

    #[test]
    fn identity_and_disjoint() {
        let e = FallbackEmbedder::default();
        let s = similarity("hold your fire", "hold your fire", &e).unwrap();
        assert!((s.value() - 1.0).abs() < 1e-9);
        assert_eq!(similarity("alpha beta", "gamma delta", &e).unwrap(), SimilarityScore::ZERO);
        assert!((similarity("?!", "?!", &e).unwrap().value() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_text_is_an_error() {
        let e = FallbackEmbedder::default();
        assert_eq!(similarity("", "x", &e), Err(SimilarityError::EmptyText));
        assert_eq!(similarity("x", " \n", &e), Err(SimilarityError::EmptyText));
    }

    #[test]
    fn scores_clamp() {
        assert_eq!(SimilarityScore::from_cosine(-0.3), SimilarityScore::ZERO);
        assert_eq!(SimilarityScore::from_cosine(1.0 + 1e-15), SimilarityScore::ONE);
        assert_eq!(SimilarityScore::from_cosine(f64::NAN), SimilarityScore::ZERO);
    }

    #[test]
    fn find_closest_ranks_exact_match_first() {
        let e = FallbackEmbedder::default();
        let cands = [(1, "do not engage"), (2, "weapons free"), (3, "hold your fire")];
        let top = find_closest("weapons free", &cands, &e, 2).unwrap();
        assert_eq!(top[0].0, 2);
        assert!((top[0].1.value() - 1.0).abs() < 1e-9);
        assert_eq!(top.len(), 2);
        let all = find_closest("weapons free", &cands, &e, 10).unwrap();
        assert_eq!(all.len(), 3);
        assert!(all.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn ties_break_by_id() {
        let e = FallbackEmbedder::default();
        let cands = [(5, "x y"), (2, "x y"), (9, "q")];
        let ids: Vec<_> = find_closest("x", &cands, &e, 3).unwrap().into_iter().map(|c| c.0).collect();
        assert_eq!(ids, vec![2, 5, 9]);
    }

    #[test]
    fn find_closest_errors() {
        let e = FallbackEmbedder::default();
        assert_eq!(find_closest("x", &[(1, "x")], &e, 0), Err(SimilarityError::ZeroK));
        assert_eq!(find_closest::<u32, &str>("x", &[], &e, 1), Err(SimilarityError::NoCandidates));
    }

    #[test]
    fn cache_returns_same_vectors() {
        let e = CachedEmbedder::new(FallbackEmbedder::default());
        let a = e.embed("hold fire").unwrap();
        let b = e.embed("hold fire").unwrap();
        assert_eq!(a, b);
        assert_eq!(e.cached_len(), 1);
        assert_eq!(a, FallbackEmbedder::default().embed("hold fire").unwrap());
    }
}
