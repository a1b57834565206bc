use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::{check_lengths, MetricError, TokenizationScheme};

/// Numerator added to an n-gram precision whose match count is zero.
pub const BLEU_SMOOTHING_EPSILON: f64 = 1e-9;

/// Corpus-level BLEU on a 0-100 scale.
///
/// Clipped n-gram matches and candidate n-gram totals are summed over the
/// corpus for n = 1..=`max_n`. Orders for which the candidates contain no
/// n-grams at all are left out of the geometric mean, so short identical
/// strings still score 100. Brevity penalty is `min(1, exp(1 - r/c))` over
/// total token lengths.
pub fn bleu<C: AsRef<str>, R: AsRef<str>>(
    candidates: &[C],
    references: &[R],
    scheme: TokenizationScheme,
    max_n: usize,
) -> Result<f64, MetricError> {
    check_lengths(candidates.len(), references.len())?;
    let max_n = max_n.max(1);
    let mut stats = Stats::new(max_n);
    for (c, r) in candidates.iter().zip(references) {
        stats.add(&scheme.tokenize(c.as_ref()), &scheme.tokenize(r.as_ref()));
    }
    Ok(stats.score())
}

/// Mean of per-pair BLEU scores.
pub fn sentence_bleu<C: AsRef<str>, R: AsRef<str>>(
    candidates: &[C],
    references: &[R],
    scheme: TokenizationScheme,
    max_n: usize,
) -> Result<f64, MetricError> {
    check_lengths(candidates.len(), references.len())?;
    let max_n = max_n.max(1);
    let total: f64 = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| {
            let mut stats = Stats::new(max_n);
            stats.add(&scheme.tokenize(c.as_ref()), &scheme.tokenize(r.as_ref()));
            stats.score()
        })
        .sum();
    Ok(total / candidates.len() as f64)
}

struct Stats {
    matches: Vec<u64>,
    totals: Vec<u64>,
    candidate_len: u64,
    reference_len: u64,
}

impl Stats {
    fn new(max_n: usize) -> Self {
        Stats { matches: vec![0; max_n], totals: vec![0; max_n], candidate_len: 0, reference_len: 0 }
    }

    fn add(&mut self, candidate: &[&str], reference: &[&str]) {
        self.candidate_len += candidate.len() as u64;
        self.reference_len += reference.len() as u64;
        for n in 1..=self.matches.len() {
            let cand_counts = ngram_counts(candidate, n);
            let ref_counts = ngram_counts(reference, n);
            for (gram, count) in &cand_counts {
                let clip = ref_counts.get(gram).copied().unwrap_or(0);
                self.matches[n - 1] += (*count).min(clip);
                self.totals[n - 1] += *count;
            }
        }
    }

    fn score(&self) -> f64 {
        if self.candidate_len == 0 {
            return if self.reference_len == 0 { 100.0 } else { 0.0 };
        }
        let mut log_sum = 0.0;
        let mut orders = 0usize;
        for (&m, &t) in self.matches.iter().zip(&self.totals) {
            if t == 0 {
                continue;
            }
            let numerator = if m == 0 { BLEU_SMOOTHING_EPSILON } else { m as f64 };
            log_sum += libm::log(numerator / t as f64);
            orders += 1;
        }
        let c = self.candidate_len as f64;
        let r = self.reference_len as f64;
        let bp = if c >= r { 1.0 } else { libm::exp(1.0 - r / c) };
        100.0 * bp * libm::exp(log_sum / orders as f64)
    }
}

fn ngram_counts<'a, 'b>(tokens: &'b [&'a str], n: usize) -> BTreeMap<&'b [&'a str], u64> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}
