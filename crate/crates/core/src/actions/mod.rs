//! Ruleset interpretation and the two-pass de-identification pipeline.

mod engine;
mod pipeline;
mod ruleset;

pub use engine::{element_digest, ActionEngine, ActionLogEntry, ApplyOutcome, EngineError};
pub use pipeline::{
    rename_patient_component, run_pipeline, CorpusSummary, FailedFile, PipelineError,
    PipelineOptions, ACTION_LOG_FILE, DATE_OFFSETS_FILE, PATIENT_MAPPING_FILE, SUMMARY_FILE,
    UID_MAPPING_FILE,
};
pub use ruleset::{
    ActionCode, ActionRule, Ruleset, RulesetError, TagPattern, DEFAULT_RULESET_TEXT,
};

/// Bundled allow/deny list text, aligned with the synthetic vocabulary used
/// by the corpus generator.
pub const DEFAULT_ALLOW_TEXT: &str = include_str!("../assets/default_allow.txt");
pub const DEFAULT_DENY_TEXT: &str = include_str!("../assets/default_deny.txt");

/// The default recognizer battery: built-in patterns plus the bundled lists.
pub fn default_recognizers() -> crate::scrub::RecognizerSet {
    let mut set = crate::scrub::RecognizerSet::builtin();
    crate::scrub::extend_from_text(&mut set, DEFAULT_ALLOW_TEXT, DEFAULT_DENY_TEXT);
    set
}
