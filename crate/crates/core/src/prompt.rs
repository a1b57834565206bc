//! Zero- and few-shot prompt assembly.
//!
//! Layout (LF newlines):
//!
//! ```text
//! Output the market comment at the current time in the form of a <comment>market comment</comment>.
//!
//! ###
//!
//! Input:
//! <short-term block>
//! <long-term block>
//! Output:
//! <reference comment of the shot>
//!
//! ###
//!
//! Input:
//! <short-term block>
//! <long-term block>
//! Output:␠
//! ```
//!
//! One `###` block per shot, then the target block, which ends with
//! `Output:` and a single space.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::serializers::{serialize_pair, PromptFormat, SerializeError, SerializerConfig};
use crate::timeseries::TaskInstance;

pub const INSTRUCTION: &str =
    "Output the market comment at the current time in the form of a <comment>market comment</comment>.";

pub const BLOCK_SEPARATOR: &str = "###";

/// Upper bound on shots per prompt.
pub const MAX_SHOTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("requested {requested} shots, but at most {max} are allowed")]
    TooManyShots { requested: usize, max: usize },
    #[error("requested {requested} shots from only {available} training instances")]
    NotEnoughInstances { requested: usize, available: usize },
    #[error("shot `{0}` is the target instance")]
    ShotIsTarget(String),
    #[error("shot `{0}` appears more than once")]
    DuplicateShot(String),
    #[error("empty {0} in exemplar")]
    EmptyExemplar(&'static str),
    #[error(transparent)]
    Serialize(#[from] SerializeError),
}

/// A solved example placed before the target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub instance_id: String,
    pub input_block: String,
    pub output_comment: String,
}

impl Exemplar {
    pub fn from_instance(
        instance: &TaskInstance,
        format: PromptFormat,
        config: &SerializerConfig,
    ) -> Result<Self, PromptError> {
        let input_block = serialize_pair(instance, format, config)?;
        let output_comment = String::from(instance.reference_comment().trim());
        if output_comment.is_empty() {
            return Err(PromptError::EmptyExemplar("output comment"));
        }
        Ok(Exemplar { instance_id: instance.id().into(), input_block, output_comment })
    }
}

/// The assembled prompt and where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub text: String,
    pub format: PromptFormat,
    pub shot_count: usize,
    pub seed: u64,
    pub exemplar_ids: Vec<String>,
    pub target_id: String,
}

/// Draws `k` distinct instances uniformly without replacement, in draw order.
pub fn sample_shots(
    train: &[TaskInstance],
    k: usize,
    seed: u64,
) -> Result<Vec<&TaskInstance>, PromptError> {
    Ok(sample_indices(train.len(), k, seed)?.into_iter().map(|i| &train[i]).collect())
}

/// The positions [`sample_shots`] would draw from a pool of `n` instances.
pub fn sample_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>, PromptError> {
    if k > MAX_SHOTS {
        return Err(PromptError::TooManyShots { requested: k, max: MAX_SHOTS });
    }
    if k > n {
        return Err(PromptError::NotEnoughInstances { requested: k, available: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, n, k).into_vec())
}

/// Builds the prompt for `target` preceded by `shots` in the given order.
///
/// `seed` is recorded as provenance only.
pub fn build_prompt(
    target: &TaskInstance,
    shots: &[&TaskInstance],
    format: PromptFormat,
    config: &SerializerConfig,
    seed: u64,
) -> Result<PromptBundle, PromptError> {
    if shots.len() > MAX_SHOTS {
        return Err(PromptError::TooManyShots { requested: shots.len(), max: MAX_SHOTS });
    }
    let mut exemplar_ids: Vec<String> = Vec::with_capacity(shots.len());
    for shot in shots {
        if shot.id() == target.id() {
            return Err(PromptError::ShotIsTarget(shot.id().into()));
        }
        if exemplar_ids.iter().any(|id| id == shot.id()) {
            return Err(PromptError::DuplicateShot(shot.id().into()));
        }
        exemplar_ids.push(shot.id().into());
    }

    let mut text = String::from(INSTRUCTION);
    for shot in shots {
        let exemplar = Exemplar::from_instance(shot, format, config)?;
        push_block(&mut text, &exemplar.input_block);
        text.push('\n');
        text.push_str(&exemplar.output_comment);
    }
    push_block(&mut text, &serialize_pair(target, format, config)?);
    text.push(' ');

    Ok(PromptBundle {
        text,
        format,
        shot_count: shots.len(),
        seed,
        exemplar_ids,
        target_id: target.id().into(),
    })
}

// Appends "\n\n###\n\nInput:\n<input>\nOutput:".
fn push_block(text: &mut String, input: &str) {
    text.push_str("\n\n");
    text.push_str(BLOCK_SEPARATOR);
    text.push_str("\n\nInput:\n");
    text.push_str(input);
    text.push_str("\nOutput:");
}
