//! Dataset JSONL: one task instance per line.
//!
//! ```text
//! {"id":"d1","target_time":"15:00","short_term":[["15:00",9988.05],...],
//!  "long_term":[[7,9950.00],...],"reference_comment":"...","split":"test"}
//! ```

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Number;
use tsprompt_core::{ClockTime, PriceSeries, SeriesKind, Split, TaskInstance, Timestamp, Yen};

use super::price_csv::DEFAULT_INDEX_NAME;
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    id: String,
    target_time: String,
    short_term: Vec<(String, Number)>,
    long_term: Vec<(u32, Number)>,
    reference_comment: String,
    split: String,
}

/// Instance counts per split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SplitCounts {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn of(instances: &[TaskInstance]) -> Self {
        let mut counts = SplitCounts::default();
        for inst in instances {
            match inst.split() {
                Split::Train => counts.train += 1,
                Split::Valid => counts.valid += 1,
                Split::Test => counts.test += 1,
            }
        }
        counts
    }
}

pub fn load_dataset_jsonl(path: &Path) -> Result<Vec<TaskInstance>> {
    let text = super::read_to_string(path)?;
    parse_dataset_jsonl(&text, &path.display().to_string())
}

pub fn parse_dataset_jsonl(text: &str, source_name: &str) -> Result<Vec<TaskInstance>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::parse(source_name, line_no, msg);
        let line: Line = serde_json::from_str(raw).map_err(|e| err(schema_message(&e)))?;
        let instance = convert(line).map_err(err)?;
        if !seen.insert(instance.id().to_owned()) {
            return Err(err(format!("duplicate id `{}`", instance.id())));
        }
        out.push(instance);
    }
    if out.is_empty() {
        return Err(Error::parse(source_name, 0, "no data rows"));
    }
    Ok(out)
}

fn schema_message(e: &serde_json::Error) -> String {
    // serde_json appends " at line 1 column N"; the line is ours to report.
    let msg = e.to_string();
    let msg = msg.rsplit_once(" at line ").map_or(msg.as_str(), |(head, _)| head);
    format!("schema violation: {msg}")
}

fn convert(line: Line) -> std::result::Result<TaskInstance, String> {
    let target: ClockTime = line.target_time.parse().map_err(|e| format!("field `target_time`: {e}"))?;
    if line.short_term.is_empty() {
        return Err("field `short_term`: must contain at least one point".into());
    }
    let short = line
        .short_term
        .iter()
        .map(|(t, p)| {
            let clock: ClockTime = t.parse().map_err(|e| format!("field `short_term`: {e}"))?;
            Ok((Timestamp::Clock(clock), price(p, "short_term")?))
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    let long = line
        .long_term
        .iter()
        .map(|(d, p)| {
            let ts = Timestamp::days_ago(*d).map_err(|e| format!("field `long_term`: {e}"))?;
            Ok((ts, price(p, "long_term")?))
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    let short = PriceSeries::new(SeriesKind::ShortTerm, short, DEFAULT_INDEX_NAME)
        .map_err(|e| format!("field `short_term`: {e}"))?;
    let long = PriceSeries::new(SeriesKind::LongTerm, long, DEFAULT_INDEX_NAME)
        .map_err(|e| format!("field `long_term`: {e}"))?;
    long.ensure_complete().map_err(|e| format!("field `long_term`: {e}"))?;
    let split: Split = line.split.parse().map_err(|e| format!("field `split`: {e}"))?;
    TaskInstance::new(line.id, target, short, long, line.reference_comment, split).map_err(|e| e.to_string())
}

fn price(n: &Number, field: &str) -> std::result::Result<Yen, String> {
    let p = Yen::parse_lenient(&n.to_string()).map_err(|e| format!("field `{field}`: {e}"))?;
    if !p.is_positive() {
        return Err(format!("field `{field}`: non-positive price {p}"));
    }
    Ok(p)
}

fn number(p: Yen) -> Number {
    p.to_string().parse().expect("two-decimal price is a valid JSON number")
}

/// One JSON line (no trailing newline) in the loader's schema.
pub fn instance_to_json(instance: &TaskInstance) -> String {
    let line = Line {
        id: instance.id().into(),
        target_time: instance.target_time().to_string(),
        short_term: instance
            .short_term()
            .points()
            .iter()
            .map(|(t, p)| (t.to_string(), number(*p)))
            .collect(),
        long_term: instance
            .long_term()
            .points()
            .iter()
            .map(|(t, p)| (u32::from(t.as_days_ago().unwrap_or(0)), number(*p)))
            .collect(),
        reference_comment: instance.reference_comment().into(),
        split: instance.split().as_str().into(),
    };
    serde_json::to_string(&line).expect("dataset line serializes")
}

pub fn write_dataset_jsonl(instances: &[TaskInstance]) -> String {
    let mut out = String::new();
    for inst in instances {
        out.push_str(&instance_to_json(inst));
        out.push('\n');
    }
    out
}
