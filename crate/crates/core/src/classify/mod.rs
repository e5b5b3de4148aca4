//! Data-type classification of raw payload keys.
//!
//! Two composable classifiers assign level-3 ontology labels to distinct raw
//! keys: a deterministic baseline matcher over the ontology's level-4
//! example phrases, and a remote chat-completion classifier run at five
//! temperatures whose per-run results are aggregated by majority vote and
//! confidence-thresholded. A recorded-fixture replay client makes the whole
//! stage bit-deterministic offline, and a validation harness scores voted
//! labels against a hand-labeled sample.

mod baseline;
mod client;
mod ensemble;
mod normalize;
mod prompt;
mod response;
mod validate;
mod vote;

pub use baseline::baseline_classify;
pub use client::{ChatClient, ChatRequest, LiveChatClient, ReplayChatClient};
pub use ensemble::{
    classification_prompt_hash, run_ensemble, EnsembleOutcome, EnsembleSettings, RunCache,
};
pub use normalize::normalize_key;
pub use prompt::{build_prompt, prompt_preamble, DEFAULT_BATCH_SIZE};
pub use response::parse_llm_response;
pub use validate::{
    validate_against_sample, AccuracyReport, LabeledSample, ThresholdRow,
    DEFAULT_VALIDATION_THRESHOLDS,
};
pub use vote::{apply_threshold, majority_vote, VoteMode, VotedLabel};

use serde::{Deserialize, Serialize};

/// Default ensemble temperatures: 0 to 1 in increments of 0.25.
pub const DEFAULT_TEMPERATURES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Default confidence threshold for keeping a voted label.
pub const DEFAULT_THRESHOLD: f64 = 0.8;

/// Result of one classification run for one key at one temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleRunResult {
    pub key: String,
    /// Canonical level-3 label; None unless `parse_ok`.
    pub label: Option<String>,
    pub confidence: f64,
    pub explanation: String,
    pub temperature: f64,
    pub parse_ok: bool,
    /// Why the run produced no usable label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SingleRunResult {
    pub fn failed(key: &str, temperature: f64, error: &str) -> Self {
        SingleRunResult {
            key: key.to_string(),
            label: None,
            confidence: 0.0,
            explanation: String::new(),
            temperature,
            parse_ok: false,
            error: Some(error.to_string()),
        }
    }
}
