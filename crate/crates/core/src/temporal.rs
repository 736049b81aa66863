//! Momentum blending of attention maps across denoising steps, and
//! cross-step aggregation.
//!
//! Steps run backwards, `T-1` down to `0`. At each step the incoming
//! probability map is blended with the carried (already blended) map from the
//! previous step, `α·carried + β·incoming`. With the default coefficients
//! `α + β = 1.02`, so a blended map is not row-stochastic; a constant input
//! `c` converges to `c·β/(1−α)`. Downstream thresholds are max-relative and
//! therefore unaffected by the scale.

use crate::attention::{AttentionKind, AttentionState};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{from_count, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumConfig<T> {
    /// Weight of the carried map from step `t+1`.
    pub alpha: T,
    /// Weight of the current step's map.
    pub beta: T,
}

impl<T: Scalar> Default for MomentumConfig<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(0.03),
            beta: T::lit(0.99),
        }
    }
}

impl<T: Scalar> MomentumConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= T::zero() && self.beta >= T::zero())
            || !self.alpha.is_finite()
            || !self.beta.is_finite()
        {
            return Err(Error::invalid(format!(
                "momentum coefficients must be non-negative, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// Limit of the recurrence under a constant input `c`, when `α < 1`.
    pub fn fixed_point(&self, c: T) -> T {
        c * self.beta / (T::one() - self.alpha)
    }
}

/// Per-run momentum state. Owned by a single denoising run.
#[derive(Debug, Clone, Default)]
pub struct TemporalState<T> {
    current_step: Option<usize>,
    carried: Option<AttentionState<T>>,
    history: Vec<AttentionState<T>>,
}

impl<T: Scalar> TemporalState<T> {
    pub fn new() -> Self {
        Self {
            current_step: None,
            carried: None,
            history: Vec::new(),
        }
    }

    pub fn current_step(&self) -> Option<usize> {
        self.current_step
    }

    pub fn carried(&self) -> Option<&AttentionState<T>> {
        self.carried.as_ref()
    }

    /// Raw (pre-momentum) maps, oldest step first.
    pub fn history(&self) -> &[AttentionState<T>] {
        &self.history
    }

    /// Blends `incoming` (probabilities of time step `step`) with the carried
    /// map. The first call passes `incoming` through. The result becomes the
    /// new carried map and `incoming` is appended to the history.
    pub fn momentum_update(
        &mut self,
        step: usize,
        incoming: &AttentionState<T>,
        config: &MomentumConfig<T>,
    ) -> Result<AttentionState<T>> {
        config.validate()?;
        if incoming.kind() != AttentionKind::Probabilities {
            return Err(Error::invalid("momentum expects a probability map"));
        }
        if let Some(previous) = self.current_step {
            if previous == 0 || step != previous - 1 {
                return Err(Error::StepOrder {
                    previous,
                    got: step,
                });
            }
        }
        let blended = match &self.carried {
            None => incoming.clone(),
            Some(carried) => {
                if carried.shape() != incoming.shape() || carried.num_tokens() != incoming.num_tokens() {
                    return Err(Error::shape(format!(
                        "incoming {}x{} over {} tokens, carried {}x{} over {}",
                        incoming.shape().height(),
                        incoming.shape().width(),
                        incoming.num_tokens(),
                        carried.shape().height(),
                        carried.shape().width(),
                        carried.num_tokens()
                    )));
                }
                let values: Vec<T> = carried
                    .values()
                    .as_slice()
                    .iter()
                    .zip(incoming.values().as_slice())
                    .map(|(&c, &x)| config.alpha * c + config.beta * x)
                    .collect();
                let values = Matrix::from_vec(incoming.values().rows(), incoming.num_tokens(), values)?;
                AttentionState::from_parts_unchecked(incoming.shape(), AttentionKind::Blended, values)
            }
        };
        self.current_step = Some(step);
        self.carried = Some(blended.clone());
        self.history.push(incoming.clone());
        Ok(blended)
    }

    /// Element-wise mean of a token's raw spatial map over all recorded steps.
    pub fn averaged_map(&self, token: usize) -> Result<Matrix<T>> {
        averaged_map(&self.history, token)
    }
}

/// Element-wise mean of `token`'s spatial map across `history`.
pub fn averaged_map<T: Scalar>(history: &[AttentionState<T>], token: usize) -> Result<Matrix<T>> {
    let first = history.first().ok_or(Error::Empty("attention history"))?;
    let mut acc = first.token_map(token)?;
    for state in &history[1..] {
        if state.shape() != first.shape() {
            return Err(Error::shape("history mixes grid shapes"));
        }
        let map = state.token_map(token)?;
        for (a, &v) in acc.as_mut_slice().iter_mut().zip(map.as_slice()) {
            *a += v;
        }
    }
    let count: T = from_count(history.len());
    Ok(acc.map(|v| v / count))
}

/// Mean of the largest `⌈fraction·N⌉` values of a map.
pub fn top_fraction_score<T: Scalar>(map: &Matrix<T>, fraction: T) -> Result<T> {
    let values = map.as_slice();
    if values.is_empty() {
        return Err(Error::Empty("attention map"));
    }
    if !map.is_finite() {
        return Err(Error::NonFinite("attention map"));
    }
    if !(fraction > T::zero() && fraction <= T::one()) {
        return Err(Error::invalid(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    // Guard against 0.25·N landing a hair above an integer.
    let raw = fraction.as_f64() * values.len() as f64;
    let count = ((raw - 1e-9).ceil() as usize).clamp(1, values.len());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let top: T = sorted[..count].iter().copied().sum();
    Ok(top / from_count(count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::GridShape;

    fn probs(rows: &[Vec<f64>]) -> AttentionState<f64> {
        AttentionState::new(
            GridShape::new(1, rows.len()).unwrap(),
            AttentionKind::Probabilities,
            Matrix::from_rows(rows).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn first_step_passes_through() {
        let mut state = TemporalState::new();
        let x = probs(&[vec![0.25, 0.75], vec![0.6, 0.4]]);
        let out = state.momentum_update(9, &x, &MomentumConfig::default()).unwrap();
        assert_eq!(out, x);
        assert_eq!(state.current_step(), Some(9));
    }

    #[test]
    fn blend_arithmetic() {
        let mut state = TemporalState::new();
        let cfg = MomentumConfig::default();
        state.momentum_update(5, &probs(&[vec![1.0, 0.0]]), &cfg).unwrap();
        let out = state.momentum_update(4, &probs(&[vec![0.0, 1.0]]), &cfg).unwrap();
        assert_eq!(out.kind(), AttentionKind::Blended);
        assert!((out.values()[(0, 0)] - 0.03).abs() < 1e-15);
        assert!((out.values()[(0, 1)] - 0.99).abs() < 1e-15);
        // carried 1.0, incoming 2.0 → 2.01
        assert!((0.03 * 1.0 + 0.99 * 2.0 - 2.01f64).abs() < 1e-15);
        assert_eq!(state.history().len(), 2);
    }

    #[test]
    fn steps_must_descend_by_one() {
        let mut state = TemporalState::new();
        let cfg = MomentumConfig::default();
        let x = probs(&[vec![0.5, 0.5]]);
        state.momentum_update(5, &x, &cfg).unwrap();
        assert!(matches!(
            state.momentum_update(3, &x, &cfg),
            Err(Error::StepOrder { previous: 5, got: 3 })
        ));
        state.momentum_update(4, &x, &cfg).unwrap();
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut state = TemporalState::new();
        let cfg = MomentumConfig::default();
        state.momentum_update(1, &probs(&[vec![0.5, 0.5]]), &cfg).unwrap();
        assert!(matches!(
            state.momentum_update(0, &probs(&[vec![0.5, 0.5], vec![1.0, 0.0]]), &cfg),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn constant_input_reaches_fixed_point() {
        let cfg = MomentumConfig::default();
        let c = 0.5;
        let mut state = TemporalState::new();
        let x = probs(&[vec![c, 1.0 - c]]);
        let mut last = 0.0;
        for step in (0..200).rev() {
            last = state.momentum_update(step, &x, &cfg).unwrap().values()[(0, 0)];
        }
        let expected = cfg.fixed_point(c);
        assert!((expected / c - 1.020_618_556_701_030_9).abs() < 1e-12);
        assert!((last - expected).abs() < 1e-12);
    }

    #[test]
    fn averaging() {
        let mut state = TemporalState::new();
        let cfg = MomentumConfig::default();
        assert!(matches!(state.averaged_map(0), Err(Error::Empty(_))));
        state.momentum_update(1, &probs(&[vec![0.1, 0.9], vec![0.2, 0.8]]), &cfg).unwrap();
        let one = state.averaged_map(0).unwrap();
        assert_eq!(one.as_slice(), &[0.1, 0.2]);
        state.momentum_update(0, &probs(&[vec![0.3, 0.7], vec![0.6, 0.4]]), &cfg).unwrap();
        let two = state.averaged_map(0).unwrap();
        assert!((two[(0, 0)] - 0.2).abs() < 1e-15);
        assert!((two[(0, 1)] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn top_fraction_examples() {
        let m = Matrix::from_vec(2, 2, vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        assert_eq!(top_fraction_score(&m, 0.25).unwrap(), 0.4);
        let m = Matrix::from_vec(2, 2, vec![0.8, 0.6, 0.2, 0.0]).unwrap();
        assert!((top_fraction_score::<f64>(&m, 0.5).unwrap() - 0.7).abs() < 1e-15);
        let c = Matrix::filled(3, 5, 0.3);
        assert!((top_fraction_score::<f64>(&c, 0.1).unwrap() - 0.3).abs() < 1e-15);
        assert!((top_fraction_score::<f64>(&c, 1.0).unwrap() - 0.3).abs() < 1e-15);
        assert!(top_fraction_score(&Matrix::<f64>::zeros(0, 0), 0.25).is_err());
        assert!(top_fraction_score(&c, 0.0).is_err());
    }
}
