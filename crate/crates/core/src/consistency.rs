//! Automated movement-consistency judgment.
//!
//! A gold movement label is derived from the series (target price versus the
//! previous daily close) and compared with the movement terms found in a
//! generated comment. This approximates a human judge reading the comment
//! against the data; it only looks at direction and continuation terms and,
//! optionally, `N円高` / `N円安` magnitude claims.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::price::Yen;
use crate::timeseries::{window_until, TaskInstance, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsistencyError {
    #[error("instance `{0}` has no short-term price at or before the target time")]
    NoCurrentPrice(String),
    #[error("instance `{id}` is missing the {days}-day-ago close")]
    MissingClose { id: String, days: u8 },
    #[error("lexicon term must be non-empty")]
    EmptyTerm,
    #[error("duplicate lexicon term `{0}`")]
    DuplicateTerm(String),
    #[error("unknown {kind} `{value}`")]
    UnknownLabel { kind: &'static str, value: String },
    #[error("continuation must be unspecified for a flat entry")]
    FlatWithContinuation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Continuation {
    /// Today's move reverses the previous day's.
    Rebound,
    /// Today's move extends the previous day's.
    Continuation,
    Unspecified,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Flat => "flat",
        }
    }
}

impl Continuation {
    pub fn as_str(self) -> &'static str {
        match self {
            Continuation::Rebound => "rebound",
            Continuation::Continuation => "continuation",
            Continuation::Unspecified => "unspecified",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Continuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = ConsistencyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "up" => Ok(Direction::Up),
            "down" => Ok(Direction::Down),
            "flat" => Ok(Direction::Flat),
            _ => Err(ConsistencyError::UnknownLabel { kind: "direction", value: s.into() }),
        }
    }
}

impl FromStr for Continuation {
    type Err = ConsistencyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rebound" => Ok(Continuation::Rebound),
            "continuation" => Ok(Continuation::Continuation),
            "unspecified" | "" | "-" => Ok(Continuation::Unspecified),
            _ => Err(ConsistencyError::UnknownLabel { kind: "continuation", value: s.into() }),
        }
    }
}

/// Gold movement at the target time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MovementLabel {
    pub direction: Direction,
    pub continuation: Continuation,
    /// Current price minus previous close.
    pub magnitude_yen: Yen,
}

/// Gold label with the default flat threshold (exact equality only).
pub fn derive_gold_label(instance: &TaskInstance) -> Result<MovementLabel, ConsistencyError> {
    derive_gold_label_with(instance, Yen::ZERO)
}

/// Gold label where moves with `|delta| <= flat_threshold` count as flat.
///
/// The current price is the latest short-term price at or before the target
/// time; the previous close is the `1DayAgo` long-term price. Continuation
/// compares today's sign with the sign of `1DayAgo - 2DaysAgo`.
pub fn derive_gold_label_with(
    instance: &TaskInstance,
    flat_threshold: Yen,
) -> Result<MovementLabel, ConsistencyError> {
    let window = window_until(instance.short_term(), instance.target_time());
    let current = window
        .points()
        .first()
        .map(|(_, p)| *p)
        .ok_or_else(|| ConsistencyError::NoCurrentPrice(instance.id().into()))?;
    let close = |days: u8| {
        instance
            .long_term()
            .price_at(Timestamp::DaysAgo(days))
            .ok_or_else(|| ConsistencyError::MissingClose { id: instance.id().into(), days })
    };
    let previous_close = close(1)?;
    let before_that = close(2)?;

    let magnitude = current - previous_close;
    let direction = if magnitude.abs() <= flat_threshold.abs() {
        Direction::Flat
    } else if magnitude.signum() > 0 {
        Direction::Up
    } else {
        Direction::Down
    };
    let prior = (previous_close - before_that).signum();
    let continuation = match direction {
        Direction::Flat => Continuation::Unspecified,
        _ if prior == 0 => Continuation::Unspecified,
        _ if prior == magnitude.signum() => Continuation::Continuation,
        _ => Continuation::Rebound,
    };
    Ok(MovementLabel { direction, continuation, magnitude_yen: magnitude })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub term: String,
    pub direction: Direction,
    pub continuation: Continuation,
}

/// Movement terms and what they assert.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MovementLexicon {
    // Longest term first so the first hit at a position is the longest.
    entries: Vec<LexiconEntry>,
}

impl MovementLexicon {
    pub fn new(entries: Vec<LexiconEntry>) -> Result<Self, ConsistencyError> {
        let mut seen: Vec<&str> = Vec::new();
        for e in &entries {
            if e.term.is_empty() {
                return Err(ConsistencyError::EmptyTerm);
            }
            if seen.contains(&e.term.as_str()) {
                return Err(ConsistencyError::DuplicateTerm(e.term.clone()));
            }
            if e.direction == Direction::Flat && e.continuation != Continuation::Unspecified {
                return Err(ConsistencyError::FlatWithContinuation);
            }
            seen.push(&e.term);
        }
        let mut entries = entries;
        entries.sort_by(|a, b| b.term.chars().count().cmp(&a.term.chars().count()).then_with(|| a.term.cmp(&b.term)));
        Ok(MovementLexicon { entries })
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }
}

impl Default for MovementLexicon {
    fn default() -> Self {
        let e = |term: &str, direction, continuation| LexiconEntry { term: term.into(), direction, continuation };
        MovementLexicon::new(alloc::vec![
            e("続伸", Direction::Up, Continuation::Continuation),
            e("反発", Direction::Up, Continuation::Rebound),
            e("続落", Direction::Down, Continuation::Continuation),
            e("反落", Direction::Down, Continuation::Rebound),
            e("高", Direction::Up, Continuation::Unspecified),
            e("安", Direction::Down, Continuation::Unspecified),
        ])
        .expect("default lexicon is valid")
    }
}

/// Longest-match lexicon hits in reading order; a hit consumes its span, so
/// shorter terms inside it are not reported.
pub fn extract_movement_terms<'a>(comment: &str, lexicon: &'a MovementLexicon) -> Vec<&'a LexiconEntry> {
    let mut hits = Vec::new();
    let mut rest = comment;
    while let Some(c) = rest.chars().next() {
        match lexicon.entries.iter().find(|e| rest.starts_with(e.term.as_str())) {
            Some(entry) => {
                hits.push(entry);
                rest = &rest[entry.term.len()..];
            }
            None => rest = &rest[c.len_utf8()..],
        }
    }
    hits
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    NoClaim,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Consistent => "consistent",
            Verdict::Inconsistent => "inconsistent",
            Verdict::NoClaim => "noclaim",
        }
    }
}

/// Compares the movement terms of `comment` with `gold`.
///
/// Any term whose direction differs from the gold direction, or whose
/// rebound/continuation reading contradicts the gold one, makes the comment
/// inconsistent. Unspecified continuation on either side never contradicts.
pub fn judge(comment: &str, gold: &MovementLabel, lexicon: &MovementLexicon) -> Verdict {
    let terms = extract_movement_terms(comment, lexicon);
    if terms.is_empty() {
        return Verdict::NoClaim;
    }
    let contradicts = |e: &&LexiconEntry| {
        e.direction != gold.direction
            || (e.continuation != Continuation::Unspecified
                && gold.continuation != Continuation::Unspecified
                && e.continuation != gold.continuation)
    };
    if terms.iter().any(contradicts) {
        Verdict::Inconsistent
    } else {
        Verdict::Consistent
    }
}

/// A `N円高` / `N円安` figure found in a comment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MagnitudeClaim {
    pub amount: Yen,
    pub direction: Direction,
    /// Whether `amount` is within the tolerance of `|magnitude_yen|`.
    pub within_tolerance: bool,
}

/// Finds magnitude claims and checks each against the gold move.
///
/// Digits may be ASCII or full-width, with `,` separators and a `万`
/// (ten-thousand) unit, e.g. `1万6349円高`.
pub fn check_magnitude_claims(comment: &str, gold: &MovementLabel, tolerance: Yen) -> Vec<MagnitudeClaim> {
    let actual = gold.magnitude_yen.abs();
    let mut claims = Vec::new();
    for (idx, _) in comment.match_indices('円') {
        let after = &comment[idx + '円'.len_utf8()..];
        let direction = match after.chars().next() {
            Some('高') => Direction::Up,
            Some('安') => Direction::Down,
            _ => continue,
        };
        let Some(amount) = parse_amount_before(&comment[..idx]) else { continue };
        let within_tolerance = (amount - actual).abs() <= tolerance.abs();
        claims.push(MagnitudeClaim { amount, direction, within_tolerance });
    }
    claims
}

fn parse_amount_before(prefix: &str) -> Option<Yen> {
    let start = prefix
        .char_indices()
        .rev()
        .take_while(|(_, c)| ascii_digit(*c).is_some() || matches!(c, ',' | '，' | '万'))
        .last()
        .map(|(i, _)| i)?;
    let digits = &prefix[start..];
    let mut total: i64 = 0;
    let mut current: i64 = 0;
    let mut any = false;
    for c in digits.chars() {
        if let Some(d) = ascii_digit(c) {
            current = current.checked_mul(10)?.checked_add(i64::from(d))?;
            any = true;
        } else if c == '万' {
            if !any {
                return None;
            }
            total = total.checked_add(current.checked_mul(10_000)?)?;
            current = 0;
        }
    }
    if !any {
        return None;
    }
    Some(Yen::from_hundredths(total.checked_add(current)?.checked_mul(100)?))
}

fn ascii_digit(c: char) -> Option<u8> {
    match c {
        '0'..='9' => Some(c as u8 - b'0'),
        '０'..='９' => Some((c as u32 - '０' as u32) as u8),
        _ => None,
    }
}
