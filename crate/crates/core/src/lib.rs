//! Synthetic NER data from a handful of gold seed examples.
//!
//! The pipeline samples seed datapoints ([`seedgen`]), prompts a chat model
//! for new ones ([`gateway`]), salvages and validates what comes back
//! ([`harvest`]), compiles the result into datasets ([`datasets`]) and scores
//! NER predictions with exact-span F1 ([`eval`]).

pub mod corpus;
pub mod datasets;
pub mod eval;
pub mod gateway;
pub mod harvest;
pub mod seedgen;

pub use corpus::{
    decode_spans, decode_spans_with, encode_spans, validate_datapoint, BioMode, Candidate,
    CorpusError, DataPoint, EntitySpan, ErrorClass, LabelSpace, TagId, ValidationPolicy, Verdict,
};
pub use datasets::{
    compile, remap_labels, subset_ladder, Dataset, DatasetError, Provenance, ProvenanceKind,
    RemapPolicy, Rung, SizeLadder,
};
pub use eval::{diff_spans, evaluate, evaluate_points, EvalError, EvalReport, Scores, SpanDiff};
pub use gateway::{
    mock_complete, run_plan, ChatClient, FinishReason, InjectionProfile, MockProvider, Provider,
    ProviderConfig, RawResponse, RunSummary,
};
pub use harvest::{
    classify, dedup, extract_candidates, harvest_run, Extracted, HarvestReport, Harvester,
    RejectReason,
};
pub use seedgen::{
    build_prompt, plan_call, plan_calls, sample_seeds, GenerationPlan, PromptBundle, ProviderKind,
};
