//! Gaussian filtering of per-token spatial attention maps.

use crate::attention::AttentionState;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernelSpec<T> {
    pub radius: usize,
    pub sigma: T,
}

impl<T: Scalar> Default for GaussianKernelSpec<T> {
    fn default() -> Self {
        Self {
            radius: 1,
            sigma: T::lit(0.5),
        }
    }
}

/// Normalized `(2r+1) × (2r+1)` Gaussian weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel<T> {
    radius: usize,
    weights: Matrix<T>,
}

impl<T: Scalar> GaussianKernel<T> {
    pub fn new(spec: GaussianKernelSpec<T>) -> Result<Self> {
        if !(spec.sigma > T::zero()) || !spec.sigma.is_finite() {
            return Err(Error::invalid(format!(
                "kernel sigma must be positive, got {}",
                spec.sigma
            )));
        }
        let r = spec.radius;
        let size = 2 * r + 1;
        let two_sigma_sq = T::lit(2.0) * spec.sigma * spec.sigma;
        let mut weights = Matrix::zeros(size, size);
        for dy in 0..size {
            for dx in 0..size {
                let oy = T::lit(dy as f64 - r as f64);
                let ox = T::lit(dx as f64 - r as f64);
                weights[(dy, dx)] = (-(ox * ox + oy * oy) / two_sigma_sq).exp();
            }
        }
        let total = weights.sum();
        let weights = weights.map(|w| w / total);
        Ok(Self { radius: r, weights })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }
}

/// Maps an out-of-range coordinate back into `[0, len)` by mirroring about
/// the edge sample (`… c b a | a b c …`), for any offset.
fn reflect(index: isize, len: usize) -> usize {
    let period = 2 * len as isize;
    let m = index.rem_euclid(period) as usize;
    if m < len {
        m
    } else {
        2 * len - 1 - m
    }
}

/// 2-D convolution of a non-negative map with the kernel, reflect-padded.
pub fn smooth_map<T: Scalar>(map: &Matrix<T>, kernel: &GaussianKernel<T>) -> Result<Matrix<T>> {
    if !map.is_finite() {
        return Err(Error::NonFinite("attention map"));
    }
    if map.as_slice().iter().any(|&v| v < T::zero()) {
        return Err(Error::invalid("smoothing expects a non-negative map"));
    }
    let r = kernel.radius as isize;
    if r == 0 {
        return Ok(map.clone());
    }
    let (h, w) = (map.rows(), map.cols());
    let mut out = Matrix::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for dy in -r..=r {
                let sy = reflect(y as isize + dy, h);
                for dx in -r..=r {
                    let sx = reflect(x as isize + dx, w);
                    acc += kernel.weights[((dy + r) as usize, (dx + r) as usize)] * map[(sy, sx)];
                }
            }
            out[(y, x)] = acc;
        }
    }
    Ok(out)
}

/// Smooths the spatial map of every listed token independently.
pub fn smooth_tokens<T: Scalar>(
    state: &AttentionState<T>,
    tokens: &[usize],
    kernel: &GaussianKernel<T>,
) -> Result<Vec<Matrix<T>>> {
    tokens
        .iter()
        .map(|&t| smooth_map(&state.token_map(t)?, kernel))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(radius: usize, sigma: f64) -> GaussianKernel<f64> {
        GaussianKernel::new(GaussianKernelSpec { radius, sigma }).unwrap()
    }

    #[test]
    fn reflect_indexing() {
        assert_eq!(reflect(-1, 4), 0);
        assert_eq!(reflect(-2, 4), 1);
        assert_eq!(reflect(4, 4), 3);
        assert_eq!(reflect(5, 4), 2);
        assert_eq!(reflect(-3, 1), 0);
        assert_eq!(reflect(9, 4), 1);
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = kernel(2, 1.3);
        assert!((k.weights().sum() - 1.0).abs() < 1e-12);
        let n = 5;
        for y in 0..n {
            for x in 0..n {
                let v = k.weights()[(y, x)];
                assert_eq!(v, k.weights()[(n - 1 - y, x)]);
                assert_eq!(v, k.weights()[(y, n - 1 - x)]);
                assert_eq!(v, k.weights()[(x, y)]);
            }
        }
    }

    #[test]
    fn constant_map_is_preserved() {
        let map = Matrix::filled(5, 7, 0.37);
        let out = smooth_map(&map, &kernel(1, 0.5)).unwrap();
        assert!(out.as_slice().iter().all(|&v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn delta_response_matches_closed_form() {
        // exp(-(dx²+dy²)/(2σ²)) with σ = 0.5: 1, e^-2, e^-4; normalized over
        // the 3x3 support by 1 + 4e^-2 + 4e^-4 = 1.6146014...
        let z = 1.0 + 4.0 * (-2.0f64).exp() + 4.0 * (-4.0f64).exp();
        let (center, edge, corner) = (1.0 / z, (-2.0f64).exp() / z, (-4.0f64).exp() / z);
        assert!((center - 0.61934).abs() < 1e-5);
        assert!((edge - 0.08382).abs() < 1e-5);
        assert!((corner - 0.01134).abs() < 1e-5);

        let mut map = Matrix::zeros(5, 5);
        map[(2, 2)] = 1.0;
        let out = smooth_map(&map, &kernel(1, 0.5)).unwrap();
        assert!((out[(2, 2)] - center).abs() < 1e-15);
        assert!((out[(1, 2)] - edge).abs() < 1e-15);
        assert!((out[(2, 3)] - edge).abs() < 1e-15);
        assert!((out[(1, 1)] - corner).abs() < 1e-15);
        assert!((out[(3, 3)] - corner).abs() < 1e-15);
        assert!((out.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_radius_is_identity() {
        let map = Matrix::from_rows(&[vec![0.1, 0.7], vec![0.3, 0.0]]).unwrap();
        let out = smooth_map(&map, &kernel(0, 0.5)).unwrap();
        for (a, b) in out.as_slice().iter().zip(map.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_bad_input() {
        let mut map = Matrix::zeros(2, 2);
        map[(0, 1)] = f64::NAN;
        assert!(matches!(smooth_map(&map, &kernel(1, 0.5)), Err(Error::NonFinite(_))));
        assert!(GaussianKernel::new(GaussianKernelSpec { radius: 1, sigma: 0.0f64 }).is_err());
    }

    #[test]
    fn single_pixel_grid_with_wide_kernel() {
        let map = Matrix::filled(1, 1, 0.25);
        let out = smooth_map(&map, &kernel(3, 2.0)).unwrap();
        assert!((out[(0, 0)] - 0.25).abs() < 1e-15);
    }
}
