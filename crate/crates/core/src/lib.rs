//! Multi-agent referring audio-visual segmentation.
//!
//! A clip goes through three stages. A panel of analysts agrees on which
//! cues (audio, visual or both) the expression depends on
//! ([`consensus`]); reasoning agents routed by that difficulty name the
//! referred object ([`reasoning`]); a segmenter masks it and a check agent
//! inspects and revises the object prompt ([`reflect`]). [`pipeline`] runs
//! the stages over a dataset and [`metrics`] scores the result.

pub mod backends;
pub mod config;
pub mod consensus;
pub mod dataset;
pub mod error;
pub mod mask;
pub mod media;
pub mod metrics;
pub mod model;
pub mod overlay;
pub mod pipeline;
pub mod prompts;
pub mod reasoning;
pub mod reflect;
pub mod report;
pub mod schema;
#[cfg(test)]
mod testutil;
pub mod trace;

pub use config::RunConfig;
pub use mask::{Mask, MaskSequence};
pub use model::{
    classify_difficulty, AnalysisVerdict, CandidateList, Difficulty, MediaBundle, Modality, ModalityRole,
    ReasoningResult, Subset,
};
pub use pipeline::{ablate_reflect, emit_report, evaluate, run_pipeline, RunManifest, RunOptions};
pub use trace::{ExecutionTrace, Phase};
