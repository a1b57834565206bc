//! Averaging cell scores over repeats.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consistency::Verdict;
use crate::serializers::PromptFormat;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("no results to aggregate")]
    Empty,
    #[error("results come from different plans (`{0}` and `{1}`)")]
    MixedPlans(String, String),
    #[error("repeat {repeat} of {format} with {shots} shots appears twice")]
    DuplicateRepeat { format: PromptFormat, shots: usize, repeat: usize },
    #[error("BERTScore is present for only some repeats of {format} with {shots} shots")]
    PartialBertScore { format: PromptFormat, shots: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyCounts {
    pub consistent: usize,
    pub inconsistent: usize,
    pub noclaim: usize,
}

impl ConsistencyCounts {
    pub fn record(&mut self, verdict: Verdict) {
        match verdict {
            Verdict::Consistent => self.consistent += 1,
            Verdict::Inconsistent => self.inconsistent += 1,
            Verdict::NoClaim => self.noclaim += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.consistent + self.inconsistent + self.noclaim
    }
}

impl core::ops::AddAssign for ConsistencyCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.consistent += rhs.consistent;
        self.inconsistent += rhs.inconsistent;
        self.noclaim += rhs.noclaim;
    }
}

/// Scores of one (format, shots, repeat) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub plan_id: String,
    pub format: PromptFormat,
    pub shot_count: usize,
    pub repeat_index: usize,
    pub seed: u64,
    pub bleu: f64,
    pub meteor: f64,
    pub bertscore: Option<f64>,
    pub consistency: ConsistencyCounts,
    pub n_excluded: usize,
    pub n_records: usize,
    pub valid: bool,
}

/// Mean and sample standard deviation for one (format, shots) row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub format: PromptFormat,
    pub shots: usize,
    pub repeats: usize,
    pub bleu_mean: f64,
    pub bleu_std: f64,
    pub meteor_mean: f64,
    pub meteor_std: f64,
    pub bertscore_mean: Option<f64>,
    pub bertscore_std: Option<f64>,
    /// Summed over repeats.
    pub consistency: ConsistencyCounts,
    pub n_excluded: usize,
    pub invalid_repeats: usize,
}

/// Groups cells by (format, shots), ordered by format then shot count.
pub fn aggregate(cells: &[CellSummary]) -> Result<Vec<AggregateRow>, AggregateError> {
    let first = cells.first().ok_or(AggregateError::Empty)?;
    let mut groups: BTreeMap<(PromptFormat, usize), Vec<&CellSummary>> = BTreeMap::new();
    for cell in cells {
        if cell.plan_id != first.plan_id {
            return Err(AggregateError::MixedPlans(first.plan_id.clone(), cell.plan_id.clone()));
        }
        let group = groups.entry((cell.format, cell.shot_count)).or_default();
        if group.iter().any(|c| c.repeat_index == cell.repeat_index) {
            return Err(AggregateError::DuplicateRepeat {
                format: cell.format,
                shots: cell.shot_count,
                repeat: cell.repeat_index,
            });
        }
        group.push(cell);
    }

    let mut rows = Vec::with_capacity(groups.len());
    for ((format, shots), mut group) in groups {
        // Fixed summation order regardless of input order.
        group.sort_by_key(|c| c.repeat_index);
        let (bleu_mean, bleu_std) = mean_std(group.iter().map(|c| c.bleu));
        let (meteor_mean, meteor_std) = mean_std(group.iter().map(|c| c.meteor));
        let with_bert = group.iter().filter(|c| c.bertscore.is_some()).count();
        let (bertscore_mean, bertscore_std) = if with_bert == 0 {
            (None, None)
        } else if with_bert == group.len() {
            let (m, s) = mean_std(group.iter().filter_map(|c| c.bertscore));
            (Some(m), Some(s))
        } else {
            return Err(AggregateError::PartialBertScore { format, shots });
        };
        let mut consistency = ConsistencyCounts::default();
        group.iter().for_each(|c| consistency += c.consistency);
        rows.push(AggregateRow {
            format,
            shots,
            repeats: group.len(),
            bleu_mean,
            bleu_std,
            meteor_mean,
            meteor_std,
            bertscore_mean,
            bertscore_std,
            consistency,
            n_excluded: group.iter().map(|c| c.n_excluded).sum(),
            invalid_repeats: group.iter().filter(|c| !c.valid).count(),
        });
    }
    Ok(rows)
}

/// Arithmetic mean and sample (n - 1) standard deviation; std is 0 for n = 1.
pub fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, libm::sqrt(var))
}
