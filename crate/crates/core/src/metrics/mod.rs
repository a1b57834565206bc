//! Surface and embedding metrics for generated comments.
//!
//! Scores are reported on a 0-100 scale.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod bertscore;
mod bleu;
mod meteor;

pub use bertscore::{bertscore_f1, EmbedError, Embedder, HashEmbedder};
pub use bleu::{bleu, sentence_bleu, BLEU_SMOOTHING_EPSILON};
pub use meteor::{meteor_alignment, meteor_corpus, meteor_exact, Alignment};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("candidate and reference lists differ in length ({candidates} vs {references})")]
    LengthMismatch { candidates: usize, references: usize },
    #[error("no candidate/reference pairs to score")]
    Empty,
    #[error("embedding backend failed: {0}")]
    Embedder(String),
    #[error("embedding dimension changed from {expected} to {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding backend returned {found} vectors for {expected} tokens")]
    VectorCountMismatch { expected: usize, found: usize },
    #[error("embedding for token `{0}` has zero norm")]
    ZeroVector(String),
}

/// How strings are split into tokens before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizationScheme {
    /// Every Unicode scalar value is a token; nothing is stripped.
    Character,
    /// Split on runs of Unicode whitespace.
    Whitespace,
}

impl TokenizationScheme {
    pub fn tokenize(self, text: &str) -> Vec<&str> {
        match self {
            TokenizationScheme::Character => text
                .char_indices()
                .map(|(i, c)| &text[i..i + c.len_utf8()])
                .collect(),
            TokenizationScheme::Whitespace => text.split_whitespace().collect(),
        }
    }

    /// Character tokens when any text contains Japanese script, whitespace otherwise.
    pub fn detect<S: AsRef<str>>(texts: &[S]) -> Self {
        if texts.iter().any(|t| t.as_ref().chars().any(is_japanese)) {
            TokenizationScheme::Character
        } else {
            TokenizationScheme::Whitespace
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            TokenizationScheme::Character => "char",
            TokenizationScheme::Whitespace => "ws",
        }
    }
}

fn is_japanese(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF   // hiragana, katakana
        | 0x3400..=0x4DBF // CJK extension A
        | 0x4E00..=0x9FFF // CJK unified
        | 0xFF00..=0xFFEF // full-width forms
        | 0x3000..=0x303F) // CJK punctuation
}

impl fmt::Display for TokenizationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for TokenizationScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "char" | "character" => Ok(TokenizationScheme::Character),
            "ws" | "whitespace" => Ok(TokenizationScheme::Whitespace),
            other => Err(alloc::format!("unknown tokenization scheme `{other}` (expected char or ws)")),
        }
    }
}

/// Scores for one set of candidate/reference pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu: f64,
    pub meteor: f64,
    pub bertscore_f1: Option<f64>,
    pub n_pairs: usize,
    pub scheme: TokenizationScheme,
    /// METEOR here matches exact tokens only (no stemming or synonyms).
    pub meteor_variant: String,
}

impl MetricReport {
    /// Corpus BLEU, mean exact-match METEOR, and BERTScore F1 when an
    /// embedder is supplied.
    pub fn compute<C: AsRef<str>, R: AsRef<str>>(
        candidates: &[C],
        references: &[R],
        scheme: TokenizationScheme,
        embedder: Option<&dyn Embedder>,
    ) -> Result<Self, MetricError> {
        let bleu = bleu(candidates, references, scheme, 4)?;
        let meteor = meteor_corpus(candidates, references, scheme)?;
        let bertscore_f1 = match embedder {
            Some(e) => Some(bertscore_f1(candidates, references, scheme, e)?),
            None => None,
        };
        Ok(MetricReport {
            bleu,
            meteor,
            bertscore_f1,
            n_pairs: candidates.len(),
            scheme,
            meteor_variant: "exact".into(),
        })
    }
}

pub(crate) fn check_lengths(candidates: usize, references: usize) -> Result<(), MetricError> {
    if candidates != references {
        return Err(MetricError::LengthMismatch { candidates, references });
    }
    if candidates == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}
