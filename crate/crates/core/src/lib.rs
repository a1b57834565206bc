//! Core algorithms for turning aligned price series into LLM prompts and
//! scoring the generated market comments.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, the network or the command line lives in the `tsprompt`
//! companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod aggregate;
pub mod consistency;
pub mod metrics;
pub mod price;
pub mod prompt;
pub mod seed;
pub mod serializers;
pub mod timeseries;

pub use aggregate::{aggregate, AggregateError, AggregateRow, CellSummary, ConsistencyCounts};
pub use consistency::{
    derive_gold_label, extract_movement_terms, judge, Continuation, Direction, LexiconEntry,
    MovementLabel, MovementLexicon, Verdict,
};
pub use metrics::{
    bertscore_f1, bleu, meteor_corpus, meteor_exact, sentence_bleu, Embedder, MetricError,
    MetricReport, TokenizationScheme,
};
pub use price::{Yen, YenParseError};
pub use prompt::{build_prompt, sample_shots, Exemplar, PromptBundle, PromptError, MAX_SHOTS};
pub use serializers::{serialize, serialize_pair, Language, PromptFormat, SerializeError, SerializerConfig};
pub use timeseries::{
    window_until, ClockTime, PriceSeries, SeriesError, SeriesKind, Split, TaskInstance, Timestamp,
};
