//! Toy denoising loop driving the full masking pipeline over a scenario.

use std::time::{Duration, Instant};

use crate::attention::{masked_softmax, AttentionMask, AttentionState};
use crate::error::Result;
use crate::harness::classify::{classify_failures, ClassifierConfig, Finding};
use crate::harness::scenario::{generate_scenario, ScenarioSpec};
use crate::maskgen::{build_mask, should_mask, MaskGenConfig};
use crate::matrix::Matrix;
use crate::regionsel::{solve_regions_approx, RegionAssignment, RegionSelectionConfig};
use crate::scalar::Scalar;
use crate::selection::TokenSelection;
use crate::smoothing::{smooth_tokens, GaussianKernel, GaussianKernelSpec};
use crate::temporal::{top_fraction_score, MomentumConfig, TemporalState};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig<T> {
    pub smoothing: GaussianKernelSpec<T>,
    pub regions: RegionSelectionConfig<T>,
    pub mask: MaskGenConfig<T>,
    pub momentum: MomentumConfig<T>,
    pub classifier: ClassifierConfig<T>,
}

impl<T: Scalar> Default for PipelineConfig<T> {
    fn default() -> Self {
        Self {
            smoothing: GaussianKernelSpec::default(),
            regions: RegionSelectionConfig::default(),
            mask: MaskGenConfig::default(),
            momentum: MomentumConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T> {
    pub step: usize,
    /// Probabilities actually produced at this step (with the previous mask).
    pub probabilities: AttentionState<T>,
    /// Whether a nonzero mask was applied to produce `probabilities`.
    pub mask_applied: bool,
    /// Regions selected from the momentum-blended, smoothed maps.
    pub assignment: RegionAssignment,
    /// Mask derived from `assignment`; applied at the next step.
    pub mask: AttentionMask<T>,
    /// Top-fraction score of each picked token's probability map.
    pub scores: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct RunReport<T> {
    pub spec: ScenarioSpec<T>,
    pub config: PipelineConfig<T>,
    pub masking_enabled: bool,
    pub selection: TokenSelection,
    pub steps: Vec<StepRecord<T>>,
    /// Per picked token, the mean of its raw probability maps over all steps.
    pub averaged_maps: Vec<Matrix<T>>,
    pub findings: Vec<Finding<T>>,
    pub elapsed: Duration,
}

/// Runs the scenario from step `T−1` down to `0`. At each step: softmax with
/// the previous step's mask, momentum blend, smoothing, region selection and
/// mask construction. With masking disabled (or at an unmasked resolution)
/// every recorded mask is zero and nothing is applied.
pub fn run_pipeline<T: Scalar>(
    spec: &ScenarioSpec<T>,
    masking_enabled: bool,
    config: &PipelineConfig<T>,
) -> Result<RunReport<T>> {
    let started = Instant::now();
    config.regions.validate()?;
    config.mask.validate()?;
    config.momentum.validate()?;
    config.classifier.validate()?;
    let kernel = GaussianKernel::new(config.smoothing)?;
    let logits = generate_scenario(spec)?;
    let selection = spec.selection();
    let picked = selection.indices();
    let num_tokens = spec.num_tokens();
    let gate = masking_enabled && should_mask(spec.shape, &config.mask);

    let mut temporal = TemporalState::new();
    let mut previous_mask: Option<AttentionMask<T>> = None;
    let mut steps = Vec::with_capacity(logits.len());
    for (iteration, step_logits) in logits.iter().enumerate() {
        let step = spec.step_at(iteration);
        let applied = if gate { previous_mask.as_ref() } else { None };
        let probabilities = masked_softmax(step_logits, applied)?;
        let blended = temporal.momentum_update(step, &probabilities, &config.momentum)?;
        let smoothed = smooth_tokens(&blended, &picked, &kernel)?;
        let assignment = solve_regions_approx(&smoothed, &picked, &config.regions)?;
        let mask = if gate {
            build_mask(&assignment, &selection, spec.shape, num_tokens, &config.mask)?
        } else {
            AttentionMask::zeros(spec.shape, num_tokens)
        };
        let scores = picked
            .iter()
            .map(|&t| top_fraction_score(&probabilities.token_map(t)?, config.classifier.score_fraction))
            .collect::<Result<Vec<_>>>()?;
        steps.push(StepRecord {
            step,
            probabilities,
            mask_applied: applied.is_some_and(|m| !m.is_zero()),
            assignment,
            mask: mask.clone(),
            scores,
        });
        previous_mask = Some(mask);
    }

    let averaged_maps = picked
        .iter()
        .map(|&t| temporal.averaged_map(t))
        .collect::<Result<Vec<_>>>()?;

    let mut report = RunReport {
        spec: spec.clone(),
        config: config.clone(),
        masking_enabled,
        selection,
        steps,
        averaged_maps,
        findings: Vec::new(),
        elapsed: Duration::ZERO,
    };
    let lenient = ClassifierConfig {
        require_zones: false,
        ..config.classifier
    };
    report.findings = classify_failures(&report, &report.selection, &lenient)?;
    report.elapsed = started.elapsed();
    Ok(report)
}

impl<T: Scalar> RunReport<T> {
    /// Final findings for the given subject, if any.
    pub fn finding(&self, subject: crate::harness::classify::Subject) -> Option<&Finding<T>> {
        self.findings.iter().find(|f| f.subject == subject)
    }
}
