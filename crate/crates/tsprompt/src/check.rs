//! Consistency counts per generation method against dataset gold labels.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;
use tsprompt_core::consistency::{check_magnitude_claims, derive_gold_label_with};
use tsprompt_core::{judge, ConsistencyCounts, MovementLexicon, PromptFormat, TaskInstance, Yen};

use crate::error::{Error, Result};
use crate::llm::extract_comment;

/// A generations line. Plain `{id, method, comment}` objects and runner
/// records (`instance_id`, `bundle.format`, `extracted_comment`) both work.
#[derive(Debug, Deserialize)]
struct GenerationLine {
    #[serde(alias = "instance_id")]
    id: String,
    #[serde(default)]
    method: Option<String>,
    #[serde(default)]
    bundle: Option<BundleRef>,
    #[serde(default)]
    comment: Option<String>,
    #[serde(default)]
    extracted_comment: Option<String>,
    #[serde(default)]
    raw_response: Option<String>,
}

#[derive(Debug, Deserialize)]
struct BundleRef {
    format: PromptFormat,
    shot_count: usize,
}

/// One comment to judge, tagged with the method that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    pub instance_id: String,
    pub method: String,
    pub comment: Option<String>,
}

pub fn load_generations(path: &Path) -> Result<Vec<Generation>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_generations(&text, &path.display().to_string())
}

pub fn parse_generations(text: &str, source_name: &str) -> Result<Vec<Generation>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let g: GenerationLine =
            serde_json::from_str(line).map_err(|e| Error::parse(source_name, i + 1, format!("bad generation: {e}")))?;
        let method = match (g.method, &g.bundle) {
            (Some(m), _) => m,
            (None, Some(b)) => format!("{} {}-shot", b.format.display_name(), b.shot_count),
            (None, None) => "default".into(),
        };
        let comment = g
            .comment
            .or(g.extracted_comment)
            .or_else(|| g.raw_response.and_then(|r| extract_comment(&r).comment))
            .filter(|c| !c.trim().is_empty());
        out.push(Generation { instance_id: g.id, method, comment });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MethodCounts {
    pub counts: ConsistencyCounts,
    /// Generations with no usable comment.
    pub missing: usize,
    pub magnitude_claims: usize,
    pub magnitude_within_tolerance: usize,
}

/// Judges every generation against the gold label of its instance.
pub fn check_consistency(
    dataset: &[TaskInstance],
    generations: &[Generation],
    lexicon: &MovementLexicon,
    flat_threshold: Yen,
    magnitude_tolerance: Yen,
) -> Result<BTreeMap<String, MethodCounts>> {
    let by_id: HashMap<&str, &TaskInstance> = dataset.iter().map(|i| (i.id(), i)).collect();
    let mut out: BTreeMap<String, MethodCounts> = BTreeMap::new();
    for g in generations {
        let inst = by_id
            .get(g.instance_id.as_str())
            .ok_or_else(|| Error::Invalid(format!("generation refers to unknown instance `{}`", g.instance_id)))?;
        let entry = out.entry(g.method.clone()).or_default();
        let Some(comment) = &g.comment else {
            entry.missing += 1;
            continue;
        };
        let gold = derive_gold_label_with(inst, flat_threshold)?;
        entry.counts.record(judge(comment, &gold, lexicon));
        for claim in check_magnitude_claims(comment, &gold, magnitude_tolerance) {
            entry.magnitude_claims += 1;
            entry.magnitude_within_tolerance += usize::from(claim.within_tolerance);
        }
    }
    Ok(out)
}

pub fn counts_csv(counts: &BTreeMap<String, MethodCounts>) -> String {
    let mut out = String::from("method,consistent,inconsistent,noclaim,missing,magnitude_claims,magnitude_within_tolerance\n");
    for (method, c) in counts {
        let method = if method.contains([',', '"', '\n']) { format!("\"{}\"", method.replace('"', "\"\"")) } else { method.clone() };
        let _ = writeln!(
            out,
            "{method},{},{},{},{},{},{}",
            c.counts.consistent, c.counts.inconsistent, c.counts.noclaim, c.missing, c.magnitude_claims, c.magnitude_within_tolerance
        );
    }
    out
}
