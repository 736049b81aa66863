//! Failure-mode classification over a finished run.
//!
//! Metrics are computed on the final averaged maps:
//!
//! - `overlap(i, j) = |R_i ∩ R_j| / min(|R_i|, |R_j|)`
//! - `gap(i, j) = score_i / score_j` (top-fraction scores)
//! - `misplacement(i) = 1 − mass(R_i ∩ zone_i) / mass(R_i)`
//!
//! A pair is *overlapping* when it overlaps by at least `overlap_threshold`
//! with an imbalance `max(gap, 1/gap)` of at most `balance_threshold`, and
//! *preempted* when the imbalance reaches `gap_threshold`. A token is in the
//! *wrong region* when its misplacement reaches `misplacement_threshold`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::pipeline::RunReport;
use crate::matrix::Matrix;
use crate::regionsel::{solve_regions_approx, PixelSet};
use crate::scalar::Scalar;
use crate::selection::TokenSelection;
use crate::smoothing::{smooth_map, GaussianKernel};
use crate::temporal::top_fraction_score;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig<T> {
    pub overlap_threshold: T,
    pub balance_threshold: T,
    pub gap_threshold: T,
    pub misplacement_threshold: T,
    pub score_fraction: T,
    /// Fail when a picked token has no expected zone instead of skipping it.
    pub require_zones: bool,
}

impl<T: Scalar> Default for ClassifierConfig<T> {
    fn default() -> Self {
        Self {
            overlap_threshold: T::lit(0.5),
            balance_threshold: T::lit(2.0),
            gap_threshold: T::lit(5.0),
            misplacement_threshold: T::lit(0.5),
            score_fraction: T::lit(0.25),
            require_zones: false,
        }
    }
}

impl<T: Scalar> ClassifierConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.score_fraction > T::zero() && self.score_fraction <= T::one()) {
            return Err(Error::invalid("score fraction must lie in (0, 1]"));
        }
        if !(self.balance_threshold >= T::one() && self.gap_threshold >= T::one()) {
            return Err(Error::invalid("imbalance thresholds must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Verdict {
    Overlapping,
    Preempted,
    WrongRegion,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Overlapping => "overlapping",
            Verdict::Preempted => "preempted",
            Verdict::WrongRegion => "wrong_region",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Verdict::Overlapping, Verdict::Preempted, Verdict::WrongRegion]
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown verdict `{s}`")))
    }
}

/// Prompt token indices the finding is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subject {
    Pair(usize, usize),
    Token(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finding<T> {
    pub subject: Subject,
    pub verdicts: Vec<Verdict>,
    pub overlap: Option<T>,
    pub gap: Option<T>,
    pub misplacement: Option<T>,
}

impl<T: Scalar> Finding<T> {
    /// `max(gap, 1/gap)` for pair findings.
    pub fn imbalance(&self) -> Option<T> {
        self.gap.map(imbalance)
    }
}

fn imbalance<T: Scalar>(gap: T) -> T {
    gap.max(gap.recip())
}

/// Classifies every picked pair and every picked token of a finished run.
pub fn classify_failures<T: Scalar>(
    report: &RunReport<T>,
    selection: &TokenSelection,
    config: &ClassifierConfig<T>,
) -> Result<Vec<Finding<T>>> {
    config.validate()?;
    let picked = selection.picked();
    if picked.len() != report.averaged_maps.len() {
        return Err(Error::shape(format!(
            "selection has {} tokens, report has {} averaged maps",
            picked.len(),
            report.averaged_maps.len()
        )));
    }
    if config.require_zones {
        if let Some(t) = picked.iter().find(|t| t.expected_zone.is_none()) {
            return Err(Error::MissingZone(t.index));
        }
    }

    let kernel = GaussianKernel::new(report.config.smoothing)?;
    let smoothed = report
        .averaged_maps
        .iter()
        .map(|m| smooth_map(m, &kernel))
        .collect::<Result<Vec<_>>>()?;
    let indices = selection.indices();
    let regions = solve_regions_approx(&smoothed, &indices, &report.config.regions)?.regions;
    let scores = report
        .averaged_maps
        .iter()
        .map(|m| top_fraction_score(m, config.score_fraction))
        .collect::<Result<Vec<_>>>()?;

    let mut findings = Vec::new();
    for i in 0..picked.len() {
        for j in i + 1..picked.len() {
            let overlap = overlap_ratio::<T>(&regions[i], &regions[j]);
            let gap = if scores[j] > T::zero() {
                scores[i] / scores[j]
            } else if scores[i] > T::zero() {
                T::infinity()
            } else {
                T::one()
            };
            let imb = imbalance(gap);
            let mut verdicts = Vec::new();
            if overlap >= config.overlap_threshold && imb <= config.balance_threshold {
                verdicts.push(Verdict::Overlapping);
            }
            if imb >= config.gap_threshold {
                verdicts.push(Verdict::Preempted);
            }
            findings.push(Finding {
                subject: Subject::Pair(picked[i].index, picked[j].index),
                verdicts,
                overlap: Some(overlap),
                gap: Some(gap),
                misplacement: None,
            });
        }
    }
    for (i, token) in picked.iter().enumerate() {
        let Some(zone) = &token.expected_zone else {
            continue;
        };
        let misplacement = misplacement(&regions[i], zone, &report.averaged_maps[i]);
        let mut verdicts = Vec::new();
        if misplacement.is_some_and(|m| m >= config.misplacement_threshold) {
            verdicts.push(Verdict::WrongRegion);
        }
        findings.push(Finding {
            subject: Subject::Token(token.index),
            verdicts,
            overlap: None,
            gap: None,
            misplacement,
        });
    }
    Ok(findings)
}

fn overlap_ratio<T: Scalar>(a: &PixelSet, b: &PixelSet) -> T {
    let smaller = a.len().min(b.len());
    if smaller == 0 {
        return T::zero();
    }
    T::lit(a.intersection(b).count() as f64) / T::lit(smaller as f64)
}

/// `None` when the region carries no mass.
fn misplacement<T: Scalar>(region: &PixelSet, zone: &PixelSet, map: &Matrix<T>) -> Option<T> {
    let values = map.as_slice();
    let total: T = region.iter().map(|&p| values[p]).sum();
    if !(total > T::zero()) {
        return None;
    }
    let inside: T = region.intersection(zone).map(|&p| values[p]).sum();
    Some(T::one() - inside / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::pipeline::{run_pipeline, PipelineConfig};
    use crate::harness::scenario::{Archetype, ScenarioSpec};

    fn set(p: &[usize]) -> PixelSet {
        p.iter().copied().collect()
    }

    #[test]
    fn overlap_and_misplacement_arithmetic() {
        assert_eq!(overlap_ratio::<f64>(&set(&[1, 2, 3]), &set(&[3, 4])), 0.5);
        assert_eq!(overlap_ratio::<f64>(&set(&[]), &set(&[3, 4])), 0.0);
        let map = Matrix::from_vec(1, 4, vec![0.1, 0.3, 0.6, 0.0]).unwrap();
        assert_eq!(misplacement(&set(&[1, 2]), &set(&[1, 2, 3]), &map), Some(0.0));
        let m: f64 = misplacement(&set(&[1, 2]), &set(&[1]), &map).unwrap();
        assert!((m - 0.6 / 0.9).abs() < 1e-12);
        assert_eq!(misplacement(&set(&[3]), &set(&[1]), &map), None);
    }

    #[test]
    fn tenfold_score_ratio_is_preempted() {
        let gap: f64 = 0.1247 / 0.0117;
        assert!((gap - 10.658).abs() < 1e-3);
        assert!(imbalance(gap) >= 5.0);
        assert!(imbalance(1.0 / gap) >= 5.0);
    }

    fn report(archetype: Archetype) -> RunReport<f64> {
        run_pipeline(&ScenarioSpec::preset(archetype, 7), false, &PipelineConfig::default()).unwrap()
    }

    #[test]
    fn identical_tokens_overlap() {
        let mut r = report(Archetype::Clean);
        r.averaged_maps[1] = r.averaged_maps[0].clone();
        let f = classify_failures(&r, &r.selection, &ClassifierConfig::default()).unwrap();
        let pair = f.iter().find(|f| matches!(f.subject, Subject::Pair(..))).unwrap();
        assert_eq!(pair.overlap, Some(1.0));
        assert_eq!(pair.gap, Some(1.0));
        assert_eq!(pair.verdicts, vec![Verdict::Overlapping]);
    }

    #[test]
    fn missing_zone_is_an_error_only_when_required() {
        let mut spec = ScenarioSpec::<f64>::preset(Archetype::Clean, 7);
        spec.tokens[1].expected_zone = None;
        let r = run_pipeline(&spec, false, &PipelineConfig::default()).unwrap();
        let strict = ClassifierConfig {
            require_zones: true,
            ..Default::default()
        };
        assert!(matches!(
            classify_failures(&r, &r.selection, &strict),
            Err(Error::MissingZone(2))
        ));
        let lenient = classify_failures(&r, &r.selection, &ClassifierConfig::default()).unwrap();
        assert!(lenient.iter().all(|f| f.subject != Subject::Token(2)));
    }

    #[test]
    fn contained_region_is_not_misplaced() {
        let r = report(Archetype::Clean);
        for f in &r.findings {
            if let Subject::Token(_) = f.subject {
                assert!(f.misplacement.unwrap() < 0.5);
                assert!(f.verdicts.is_empty());
            }
        }
    }
}
