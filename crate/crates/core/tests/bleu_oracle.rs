//! Corpus BLEU on single pairs against a naive counting oracle.

use tsprompt_core::{bleu, TokenizationScheme};

fn all_strings(max_len: usize) -> Vec<Vec<&'static str>> {
    let alphabet = ["a", "b", "c"];
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for t in alphabet {
                let mut e: Vec<&str> = s.clone();
                e.push(t);
                next.push(e);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

// Counts occurrences by direct scanning, distinct n-grams tracked in a Vec.
fn oracle(c: &[&str], r: &[&str]) -> f64 {
    if c.is_empty() {
        return if r.is_empty() { 100.0 } else { 0.0 };
    }
    let mut product = 1.0f64;
    let mut orders = 0;
    for n in 1..=4usize {
        if c.len() < n {
            continue;
        }
        let grams_c: Vec<&[&str]> = (0..=c.len() - n).map(|i| &c[i..i + n]).collect();
        let grams_r: Vec<&[&str]> = if r.len() >= n { (0..=r.len() - n).map(|i| &r[i..i + n]).collect() } else { vec![] };
        let mut distinct: Vec<&[&str]> = Vec::new();
        for g in &grams_c {
            if !distinct.contains(g) {
                distinct.push(g);
            }
        }
        let matched: usize = distinct
            .iter()
            .map(|g| {
                let in_c = grams_c.iter().filter(|x| *x == g).count();
                let in_r = grams_r.iter().filter(|x| *x == g).count();
                in_c.min(in_r)
            })
            .sum();
        let p = if matched == 0 { 1e-9 / grams_c.len() as f64 } else { matched as f64 / grams_c.len() as f64 };
        product *= p;
        orders += 1;
    }
    let bp = if c.len() >= r.len() { 1.0 } else { (1.0 - r.len() as f64 / c.len() as f64).exp() };
    100.0 * bp * product.powf(1.0 / orders as f64)
}

#[test]
fn matches_oracle_up_to_four_tokens() {
    let strings = all_strings(4);
    for c in &strings {
        for r in &strings {
            let (cs, rs) = (c.join(" "), r.join(" "));
            let got = bleu(&[&cs], &[&rs], TokenizationScheme::Whitespace, 4).unwrap();
            let want = oracle(c, r);
            assert!((got - want).abs() <= 1e-9, "{cs:?} vs {rs:?}: {got} != {want}");
        }
    }
}
