//! METEOR restricted to exact token matches.
//!
//! The alignment has the maximum possible number of matches and, among those,
//! the fewest chunks (runs of matches adjacent in both strings). The chunk
//! minimum is found by a memoised search over candidate positions; inputs
//! whose search space exceeds [`SEARCH_STATE_LIMIT`] fall back to a greedy
//! alignment that prefers extending the current chunk.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::{check_lengths, MetricError, TokenizationScheme};

/// Memo entries allowed before the exact search gives up.
pub const SEARCH_STATE_LIMIT: usize = 200_000;

/// Match statistics behind one METEOR score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
    pub candidate_len: usize,
    pub reference_len: usize,
    /// False when the search limit was hit and the greedy alignment was used.
    pub exact: bool,
}

impl Alignment {
    /// Score on a 0-100 scale.
    pub fn score(&self) -> f64 {
        if self.matches == 0 {
            return 0.0;
        }
        let m = self.matches as f64;
        let precision = m / self.candidate_len as f64;
        let recall = m / self.reference_len as f64;
        let fmean = 10.0 * precision * recall / (recall + 9.0 * precision);
        let frag = self.chunks as f64 / m;
        let penalty = 0.5 * frag * frag * frag;
        100.0 * fmean * (1.0 - penalty)
    }
}

/// Exact-match METEOR for one pair, 0-100.
pub fn meteor_exact(candidate: &str, reference: &str, scheme: TokenizationScheme) -> f64 {
    meteor_alignment(candidate, reference, scheme).score()
}

/// Arithmetic mean of [`meteor_exact`] over pairs.
pub fn meteor_corpus<C: AsRef<str>, R: AsRef<str>>(
    candidates: &[C],
    references: &[R],
    scheme: TokenizationScheme,
) -> Result<f64, MetricError> {
    check_lengths(candidates.len(), references.len())?;
    let total: f64 = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| meteor_exact(c.as_ref(), r.as_ref(), scheme))
        .sum();
    Ok(total / candidates.len() as f64)
}

pub fn meteor_alignment(candidate: &str, reference: &str, scheme: TokenizationScheme) -> Alignment {
    let cand = scheme.tokenize(candidate);
    let refs = scheme.tokenize(reference);
    align(&cand, &refs)
}

fn align<'a>(cand: &[&'a str], refs: &[&'a str]) -> Alignment {
    // Intern tokens so the search works on small integers.
    let mut vocab: BTreeMap<&'a str, usize> = BTreeMap::new();
    let mut intern = |t: &'a str| -> usize {
        let next = vocab.len();
        *vocab.entry(t).or_insert(next)
    };
    let c: Vec<usize> = cand.iter().map(|t| intern(t)).collect();
    let r: Vec<usize> = refs.iter().map(|t| intern(t)).collect();
    let types = vocab.len();

    let mut c_count = vec![0usize; types];
    let mut r_count = vec![0usize; types];
    c.iter().for_each(|&t| c_count[t] += 1);
    r.iter().for_each(|&t| r_count[t] += 1);
    let matches: usize = (0..types).map(|t| c_count[t].min(r_count[t])).sum();

    let mut out = Alignment {
        matches,
        chunks: 0,
        candidate_len: c.len(),
        reference_len: r.len(),
        exact: true,
    };
    if matches == 0 {
        return out;
    }

    let mut positions: Vec<Vec<usize>> = vec![Vec::new(); types];
    for (j, &t) in r.iter().enumerate() {
        positions[t].push(j);
    }
    let mut search = Search {
        c: &c,
        positions: &positions,
        skip_budget: (0..types).map(|t| c_count[t] - c_count[t].min(r_count[t])).collect(),
        prefix_count: prefix_counts(&c, types),
        memo: BTreeMap::new(),
    };
    let mut used = vec![0u64; r.len().div_ceil(64)];
    match search.solve(0, None, &mut used) {
        Some(chunks) => out.chunks = chunks,
        None => {
            out.chunks = greedy_chunks(&c, &r);
            out.exact = false;
        }
    }
    out
}

struct Search<'a> {
    c: &'a [usize],
    positions: &'a [Vec<usize>],
    skip_budget: Vec<usize>,
    // prefix_count[i][t]: occurrences of type t in c[..i].
    prefix_count: Vec<Vec<usize>>,
    memo: BTreeMap<(usize, Option<usize>, Vec<u64>), usize>,
}

impl Search<'_> {
    /// Fewest chunks for c[i..] given the used reference positions and the
    /// reference position matched to c[i - 1], or `None` when the limit is hit.
    fn solve(&mut self, i: usize, prev: Option<usize>, used: &mut Vec<u64>) -> Option<usize> {
        if i == self.c.len() {
            return Some(0);
        }
        let key = (i, prev, used.clone());
        if let Some(&v) = self.memo.get(&key) {
            return Some(v);
        }
        if self.memo.len() >= SEARCH_STATE_LIMIT {
            return None;
        }
        let t = self.c[i];
        let mut best = usize::MAX;
        let mut matched_of_type = 0;
        for k in 0..self.positions[t].len() {
            let j = self.positions[t][k];
            if is_set(used, j) {
                matched_of_type += 1;
                continue;
            }
            let cost = usize::from(!(j > 0 && prev == Some(j - 1)));
            set(used, j, true);
            let rest = self.solve(i + 1, Some(j), used);
            set(used, j, false);
            best = best.min(cost + rest?);
        }
        let skipped = self.prefix_count[i][t] - matched_of_type;
        if skipped < self.skip_budget[t] {
            best = best.min(self.solve(i + 1, None, used)?);
        }
        self.memo.insert(key, best);
        Some(best)
    }
}

fn prefix_counts(c: &[usize], types: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(c.len() + 1);
    let mut running = vec![0usize; types];
    out.push(running.clone());
    for &t in c {
        running[t] += 1;
        out.push(running.clone());
    }
    out
}

fn is_set(bits: &[u64], j: usize) -> bool {
    bits[j / 64] & (1 << (j % 64)) != 0
}

fn set(bits: &mut [u64], j: usize, on: bool) {
    if on {
        bits[j / 64] |= 1 << (j % 64);
    } else {
        bits[j / 64] &= !(1 << (j % 64));
    }
}

// Left-to-right: extend the current chunk when possible, otherwise start at
// the free reference position with the longest common run ahead.
fn greedy_chunks(c: &[usize], r: &[usize]) -> usize {
    let mut used = vec![false; r.len()];
    let mut prev: Option<usize> = None;
    let mut chunks = 0;
    for (i, &t) in c.iter().enumerate() {
        let next = prev.map(|p| p + 1).filter(|&j| j < r.len() && !used[j] && r[j] == t);
        let pick = next.or_else(|| {
            (0..r.len())
                .filter(|&j| !used[j] && r[j] == t)
                .max_by_key(|&j| {
                    let run = c[i..].iter().zip(&r[j..]).take_while(|(a, b)| a == b).count();
                    (run, core::cmp::Reverse(j))
                })
        });
        match pick {
            Some(j) => {
                if next.is_none() {
                    chunks += 1;
                }
                used[j] = true;
                prev = Some(j);
            }
            None => prev = None,
        }
    }
    chunks
}
