//! Adaptive cross-attention masking for text-to-image denoisers.
//!
//! The crate selects, for every picked prompt token, the pixels where that
//! token's cross-attention is strong while penalizing overlap between tokens,
//! turns the selection into an additive pre-softmax mask, and keeps the
//! selection stable over denoising steps with a momentum blend of attention
//! maps. A synthetic harness reproduces the typical failure patterns
//! (overlapping, preempted and misplaced attention) without a real model.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision for the common cases.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod error;
pub mod formats;
pub mod harness;
pub mod maskgen;
pub mod matrix;
pub mod regionsel;
pub mod scalar;
pub mod selection;
pub mod smoothing;
pub mod temporal;

pub use attention::{
    attend, compute_logits, masked_softmax, softmax, AttentionKind, AttentionMask, AttentionState,
    GridShape, ProjectionSet, PromptEmbedding,
};
pub use error::{Error, Result};
pub use maskgen::{build_mask, should_mask, MaskGenConfig};
pub use matrix::Matrix;
pub use regionsel::{
    eligible_pixels, objective_exact, objective_surrogate, solve_regions_approx, solve_regions_exact,
    PixelSet, RegionAssignment, RegionSelectionConfig,
};
pub use scalar::Scalar;
pub use selection::{PickedToken, TokenSelection};
pub use smoothing::{smooth_map, smooth_tokens, GaussianKernel, GaussianKernelSpec};
pub use temporal::{averaged_map, top_fraction_score, MomentumConfig, TemporalState};

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type AttentionState64 = AttentionState<f64>;
pub type AttentionState32 = AttentionState<f32>;
pub type AttentionMask64 = AttentionMask<f64>;
pub type AttentionMask32 = AttentionMask<f32>;
pub type PromptEmbedding64 = PromptEmbedding<f64>;
pub type ProjectionSet64 = ProjectionSet<f64>;
pub type RegionSelectionConfig64 = RegionSelectionConfig<f64>;
pub type MaskGenConfig64 = MaskGenConfig<f64>;
pub type MomentumConfig64 = MomentumConfig<f64>;
pub type ScenarioSpec64 = harness::ScenarioSpec<f64>;
pub type PipelineConfig64 = harness::PipelineConfig<f64>;
pub type RunReport64 = harness::RunReport<f64>;
