//! Adaptive mask generation: turns selected regions into additive logit boosts.

use std::collections::BTreeSet;

use crate::attention::{AttentionMask, GridShape};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::regionsel::RegionAssignment;
use crate::scalar::Scalar;
use crate::selection::TokenSelection;

#[derive(Debug, Clone, PartialEq)]
pub struct MaskGenConfig<T> {
    /// Additive boost `w₀`.
    pub w0: T,
    /// Square grid side lengths at which masks are applied.
    pub masked_resolutions: BTreeSet<usize>,
}

impl<T: Scalar> Default for MaskGenConfig<T> {
    fn default() -> Self {
        Self {
            w0: T::lit(5.0),
            masked_resolutions: BTreeSet::from([16]),
        }
    }
}

impl<T: Scalar> MaskGenConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.w0 > T::zero()) || !self.w0.is_finite() {
            return Err(Error::invalid(format!("w0 must be positive, got {}", self.w0)));
        }
        if self.masked_resolutions.is_empty() {
            return Err(Error::invalid("masked resolutions must not be empty"));
        }
        Ok(())
    }
}

/// Builds the `N × L` mask: `M[p][i] = w₀` for every pixel `p` of region
/// `R_i` of picked token `i`, zero everywhere else.
///
/// `assignment.token_indices` must list the picked tokens in selection order.
pub fn build_mask<T: Scalar>(
    assignment: &RegionAssignment,
    picked_tokens: &TokenSelection,
    shape: GridShape,
    num_tokens: usize,
    config: &MaskGenConfig<T>,
) -> Result<AttentionMask<T>> {
    config.validate()?;
    let picked = picked_tokens.indices();
    if assignment.token_indices != picked || assignment.regions.len() != picked.len() {
        return Err(Error::shape(format!(
            "assignment covers tokens {:?}, selection picks {:?}",
            assignment.token_indices, picked
        )));
    }
    let n = shape.num_pixels();
    let mut values = Matrix::zeros(n, num_tokens);
    for (&token, region) in picked.iter().zip(&assignment.regions) {
        if token >= num_tokens {
            return Err(Error::OutOfRange {
                what: "token",
                index: token,
                limit: num_tokens,
            });
        }
        for &pixel in region {
            if pixel >= n {
                return Err(Error::OutOfRange {
                    what: "pixel",
                    index: pixel,
                    limit: n,
                });
            }
            // Each (pixel, token) pair is visited once.
            if values[(pixel, token)] != T::zero() {
                return Err(Error::invalid(format!(
                    "pixel {pixel} boosted twice for token {token}"
                )));
            }
            values[(pixel, token)] = config.w0;
        }
    }
    Ok(AttentionMask::from_parts_unchecked(shape, values))
}

/// True iff the grid is square with a side length in `masked_resolutions`.
pub fn should_mask<T: Scalar>(shape: GridShape, config: &MaskGenConfig<T>) -> bool {
    shape.is_square() && config.masked_resolutions.contains(&shape.height())
}
