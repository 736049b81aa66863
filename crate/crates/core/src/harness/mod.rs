//! Synthetic scenarios, the end-to-end masking loop, and failure classification.

pub mod classify;
pub mod pipeline;
pub mod scenario;

pub use classify::{classify_failures, ClassifierConfig, Finding, Subject, Verdict};
pub use pipeline::{run_pipeline, PipelineConfig, RunReport, StepRecord};
pub use scenario::{generate_scenario, rect_zone, Archetype, BlobSpec, ScenarioSpec};
