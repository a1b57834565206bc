use alloc::string::String;
use alloc::vec::Vec;
use core::cell::Cell;

use super::{check_lengths, MetricError, TokenizationScheme};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbedError(pub String);

/// Produces one vector per token.
pub trait Embedder {
    fn embed(&self, tokens: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn embed(&self, tokens: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        (**self).embed(tokens)
    }
}

/// BERTScore F1 on a 0-100 scale: greedy max-cosine matching, no idf
/// weighting, no baseline rescaling.
///
/// Per pair, precision is the mean over candidate tokens of the best cosine
/// to any reference token, recall the converse; both are floored at zero
/// before the harmonic mean. The corpus score is the mean per-pair F1.
pub fn bertscore_f1<C: AsRef<str>, R: AsRef<str>>(
    candidates: &[C],
    references: &[R],
    scheme: TokenizationScheme,
    embedder: &dyn Embedder,
) -> Result<f64, MetricError> {
    check_lengths(candidates.len(), references.len())?;
    let dim = Cell::new(None);
    let mut total = 0.0;
    for (c, r) in candidates.iter().zip(references) {
        let c_vecs = embed_normalized(embedder, &scheme.tokenize(c.as_ref()), &dim)?;
        let r_vecs = embed_normalized(embedder, &scheme.tokenize(r.as_ref()), &dim)?;
        total += pair_f1(&c_vecs, &r_vecs);
    }
    Ok(100.0 * total / candidates.len() as f64)
}

fn embed_normalized(
    embedder: &dyn Embedder,
    tokens: &[&str],
    dim: &Cell<Option<usize>>,
) -> Result<Vec<Vec<f64>>, MetricError> {
    if tokens.is_empty() {
        return Ok(Vec::new());
    }
    let vectors = embedder.embed(tokens).map_err(|e| MetricError::Embedder(e.0))?;
    if vectors.len() != tokens.len() {
        return Err(MetricError::VectorCountMismatch { expected: tokens.len(), found: vectors.len() });
    }
    let mut out = Vec::with_capacity(vectors.len());
    for (mut v, token) in vectors.into_iter().zip(tokens) {
        match dim.get() {
            None => dim.set(Some(v.len())),
            Some(d) if d != v.len() => {
                return Err(MetricError::DimensionMismatch { expected: d, found: v.len() })
            }
            Some(_) => {}
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if norm == 0.0 || !norm.is_finite() {
            return Err(MetricError::ZeroVector((*token).into()));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        out.push(v);
    }
    Ok(out)
}

fn pair_f1(cand: &[Vec<f64>], refs: &[Vec<f64>]) -> f64 {
    match (cand.is_empty(), refs.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let greedy = |from: &[Vec<f64>], to: &[Vec<f64>]| {
        let sum: f64 = from
            .iter()
            .map(|a| to.iter().map(|b| dot(a, b)).fold(f64::NEG_INFINITY, f64::max))
            .sum();
        (sum / from.len() as f64).max(0.0)
    };
    let precision = greedy(cand, refs);
    let recall = greedy(refs, cand);
    if precision + recall == 0.0 {
        0.0
    } else {
        (2.0 * precision * recall / (precision + recall)).min(1.0)
    }
}

/// Deterministic stand-in embedder: each distinct token maps to a fixed
/// pseudo-random vector derived from its FNV-1a hash.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: 64 }
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, tokens: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError("embedding dimension must be positive".into()));
        }
        Ok(tokens
            .iter()
            .map(|t| {
                let mut state = fnv1a(t.as_bytes());
                (0..self.dim)
                    .map(|_| {
                        state = crate::seed::splitmix64(state);
                        // Top 53 bits mapped into [-1, 1).
                        (state >> 11) as f64 / (1u64 << 52) as f64 - 1.0
                    })
                    .collect()
            })
            .collect())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3))
}
