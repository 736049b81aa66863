//! Per-token region selection with a cross-token overlap penalty.
//!
//! Each picked token `i` owns a smoothed spatial map `C_i`. A pixel is
//! eligible for token `i` when `C_i[p] ≥ τ_i = threshold_ratio · max C_i`.
//! Regions `R_i` are chosen to maximize
//!
//! ```text
//! Σ_i Σ_{p∈R_i} C_i[p]  −  λ Σ_{i≠j} Σ_{p∈R_i∩R_j} C_i[p]
//! ```
//!
//! which couples the tokens. The fast path replaces `R_j` in the penalty with
//! the fixed eligible sets `A_j`; the surrogate then separates per pixel and
//! is maximized in `O(S·N)`. An exhaustive solver for the coupled objective
//! is kept for small instances.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Sorted set of row-major pixel indices.
pub type PixelSet = BTreeSet<usize>;

/// Token limit of [`solve_regions_exact`].
pub const MAX_EXACT_TOKENS: usize = 3;
/// Per-token eligible-set limit of [`solve_regions_exact`].
pub const MAX_EXACT_ELIGIBLE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionSelectionConfig<T> {
    /// Overlap penalty weight.
    pub lambda: T,
    /// `τ_i` as a fraction of token `i`'s maximum.
    pub threshold_ratio: T,
    /// Optional cap on the size of each eligible set.
    pub top_k: Option<usize>,
}

impl<T: Scalar> Default for RegionSelectionConfig<T> {
    fn default() -> Self {
        Self {
            lambda: T::lit(0.5),
            threshold_ratio: T::lit(0.5),
            top_k: None,
        }
    }
}

impl<T: Scalar> RegionSelectionConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= T::zero()) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.threshold_ratio > T::zero() && self.threshold_ratio <= T::one()) {
            return Err(Error::invalid(format!(
                "threshold ratio must lie in (0, 1], got {}",
                self.threshold_ratio
            )));
        }
        if self.top_k == Some(0) {
            return Err(Error::invalid("top_k must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionAssignment {
    pub token_indices: Vec<usize>,
    /// Selected regions `R_i`, parallel to `token_indices`.
    pub regions: Vec<PixelSet>,
    /// Eligible (approximate) regions `A_i`; `R_i ⊆ A_i`.
    pub approx_regions: Vec<PixelSet>,
}

impl RegionAssignment {
    pub fn empty() -> Self {
        Self {
            token_indices: Vec::new(),
            regions: Vec::new(),
            approx_regions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// `{p : map[p] ≥ ratio · max(map)}`, optionally truncated to the `top_k`
/// largest values (ties go to the lower pixel index). Empty for an all-zero map.
pub fn eligible_pixels<T: Scalar>(map: &Matrix<T>, config: &RegionSelectionConfig<T>) -> Result<PixelSet> {
    config.validate()?;
    check_map(map)?;
    let max = map.max_value().unwrap_or_else(T::zero);
    if max <= T::zero() {
        return Ok(PixelSet::new());
    }
    let tau = config.threshold_ratio * max;
    let mut picked: Vec<(usize, T)> = map
        .as_slice()
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, v)| v >= tau)
        .collect();
    if let Some(k) = config.top_k {
        if picked.len() > k {
            picked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            picked.truncate(k);
        }
    }
    Ok(picked.into_iter().map(|(p, _)| p).collect())
}

fn check_map<T: Scalar>(map: &Matrix<T>) -> Result<()> {
    if !map.is_finite() {
        return Err(Error::NonFinite("attention map"));
    }
    if map.as_slice().iter().any(|&v| v < T::zero()) {
        return Err(Error::invalid("region selection expects non-negative maps"));
    }
    Ok(())
}

fn check_maps<T: Scalar>(maps: &[Matrix<T>]) -> Result<usize> {
    let n = maps.first().map_or(0, |m| m.as_slice().len());
    for (i, m) in maps.iter().enumerate() {
        if m.as_slice().len() != n || m.rows() != maps[0].rows() {
            return Err(Error::shape(format!(
                "map {i} is {}x{}, map 0 is {}x{}",
                m.rows(),
                m.cols(),
                maps[0].rows(),
                maps[0].cols()
            )));
        }
        check_map(m)?;
    }
    Ok(n)
}

fn check_regions(regions: &[PixelSet], n: usize, what: &'static str) -> Result<()> {
    for r in regions {
        if let Some(&p) = r.iter().next_back() {
            if p >= n {
                return Err(Error::OutOfRange {
                    what,
                    index: p,
                    limit: n,
                });
            }
        }
    }
    Ok(())
}

/// The coupled objective, with the penalty summed over ordered pairs `i ≠ j`
/// and each intersection weighed by the owning token's map `C_i`.
pub fn objective_exact<T: Scalar>(regions: &[PixelSet], maps: &[Matrix<T>], lambda: T) -> Result<T> {
    if regions.len() != maps.len() {
        return Err(Error::shape(format!(
            "{} regions for {} maps",
            regions.len(),
            maps.len()
        )));
    }
    let n = check_maps(maps)?;
    check_regions(regions, n, "pixel")?;
    let mut gain = T::zero();
    let mut penalty = T::zero();
    for (i, region) in regions.iter().enumerate() {
        let c = maps[i].as_slice();
        gain += region.iter().map(|&p| c[p]).sum::<T>();
        for (j, other) in regions.iter().enumerate() {
            if i != j {
                penalty += region.intersection(other).map(|&p| c[p]).sum::<T>();
            }
        }
    }
    Ok(gain - lambda * penalty)
}

/// The decoupled objective: `R_j` in the penalty is replaced by the fixed `A_j`.
pub fn objective_surrogate<T: Scalar>(
    regions: &[PixelSet],
    approx_regions: &[PixelSet],
    maps: &[Matrix<T>],
    lambda: T,
) -> Result<T> {
    if regions.len() != maps.len() || approx_regions.len() != maps.len() {
        return Err(Error::shape(format!(
            "{} regions and {} approximate regions for {} maps",
            regions.len(),
            approx_regions.len(),
            maps.len()
        )));
    }
    let n = check_maps(maps)?;
    check_regions(regions, n, "pixel")?;
    check_regions(approx_regions, n, "pixel")?;
    let mut gain = T::zero();
    let mut penalty = T::zero();
    for (i, region) in regions.iter().enumerate() {
        let c = maps[i].as_slice();
        gain += region.iter().map(|&p| c[p]).sum::<T>();
        for (j, approx) in approx_regions.iter().enumerate() {
            if i != j {
                penalty += region.intersection(approx).map(|&p| c[p]).sum::<T>();
            }
        }
    }
    Ok(gain - lambda * penalty)
}

fn check_tokens<T>(maps: &[Matrix<T>], token_indices: &[usize]) -> Result<()> {
    if maps.len() != token_indices.len() {
        return Err(Error::shape(format!(
            "{} maps for {} token indices",
            maps.len(),
            token_indices.len()
        )));
    }
    Ok(())
}

/// Decides every pixel independently: `p ∈ R_i` iff `p ∈ A_i` and
/// `C_i[p] · (1 − λ·|{j ≠ i : p ∈ A_j}|) > 0`. This exactly maximizes the
/// surrogate objective.
pub fn solve_regions_approx<T: Scalar>(
    maps: &[Matrix<T>],
    token_indices: &[usize],
    config: &RegionSelectionConfig<T>,
) -> Result<RegionAssignment> {
    config.validate()?;
    check_tokens(maps, token_indices)?;
    let n = check_maps(maps)?;
    let approx_regions = maps
        .iter()
        .map(|m| eligible_pixels(m, config))
        .collect::<Result<Vec<_>>>()?;

    let mut cover = vec![0usize; n];
    for a in &approx_regions {
        for &p in a {
            cover[p] += 1;
        }
    }

    let regions = approx_regions
        .iter()
        .zip(maps)
        .map(|(a, map)| {
            let c = map.as_slice();
            a.iter()
                .copied()
                .filter(|&p| {
                    let others = T::lit((cover[p] - 1) as f64);
                    c[p] * (T::one() - config.lambda * others) > T::zero()
                })
                .collect()
        })
        .collect();

    Ok(RegionAssignment {
        token_indices: token_indices.to_vec(),
        regions,
        approx_regions,
    })
}

/// Exhaustively maximizes [`objective_exact`] over all subsets of each token's
/// eligible set. Limited to [`MAX_EXACT_TOKENS`] tokens with at most
/// [`MAX_EXACT_ELIGIBLE`] eligible pixels each.
///
/// Candidates are visited in lexicographic order of their subset codes (token 0
/// most significant; bit `k` of a code selects the `k`-th smallest eligible
/// pixel) and the first maximum wins.
pub fn solve_regions_exact<T: Scalar>(
    maps: &[Matrix<T>],
    token_indices: &[usize],
    config: &RegionSelectionConfig<T>,
) -> Result<RegionAssignment> {
    config.validate()?;
    check_tokens(maps, token_indices)?;
    check_maps(maps)?;
    if maps.len() > MAX_EXACT_TOKENS {
        return Err(Error::TooLarge(format!(
            "{} tokens (limit {MAX_EXACT_TOKENS})",
            maps.len()
        )));
    }
    let eligible = maps
        .iter()
        .map(|m| eligible_pixels(m, config))
        .collect::<Result<Vec<_>>>()?;
    if let Some((i, a)) = eligible
        .iter()
        .enumerate()
        .find(|(_, a)| a.len() > MAX_EXACT_ELIGIBLE)
    {
        return Err(Error::TooLarge(format!(
            "token {} has {} eligible pixels (limit {MAX_EXACT_ELIGIBLE})",
            token_indices[i],
            a.len()
        )));
    }
    if maps.is_empty() {
        return Ok(RegionAssignment::empty());
    }

    // Every candidate's objective is a sum over the union of eligible pixels
    // of a term that depends only on which tokens claim that pixel.
    let union: Vec<usize> = eligible.iter().flatten().copied().collect::<PixelSet>().into_iter().collect();
    let s = maps.len();
    let lambda = config.lambda;
    let table: Vec<Vec<T>> = union
        .iter()
        .map(|&p| {
            (0..1usize << s)
                .map(|claim| {
                    let owners = claim.count_ones() as usize;
                    if owners == 0 {
                        return T::zero();
                    }
                    let factor = T::one() - lambda * T::lit((owners - 1) as f64);
                    (0..s)
                        .filter(|i| claim & (1 << i) != 0)
                        .map(|i| maps[i].as_slice()[p] * factor)
                        .sum()
                })
                .collect()
        })
        .collect();

    // membership[i][code] = bitset over `union` of the pixels that code selects.
    let local: Vec<Vec<usize>> = eligible
        .iter()
        .map(|a| a.iter().map(|p| union.binary_search(p).unwrap()).collect())
        .collect();
    let membership: Vec<Vec<u32>> = local
        .iter()
        .map(|pixels| {
            (0..1u32 << pixels.len())
                .map(|code| {
                    pixels
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| code & (1 << k) != 0)
                        .fold(0u32, |acc, (_, &u)| acc | (1 << u))
                })
                .collect()
        })
        .collect();

    let limits: Vec<usize> = membership.iter().map(Vec::len).collect();
    // Tokens before the last one are enumerated by an odometer; for each of
    // their combinations the pixels outside the last token's eligible set
    // contribute a fixed amount, so the innermost loop only revisits its own.
    let last = s - 1;
    let last_pixels = &local[last];
    let in_last = last_pixels.iter().fold(0u32, |acc, &u| acc | (1 << u));
    let mut outer = vec![0usize; last];
    let mut claims = vec![0usize; union.len()];
    let mut best_codes = vec![0usize; s];
    let mut best = T::neg_infinity();
    loop {
        for (u, claim) in claims.iter_mut().enumerate() {
            *claim = (0..last).fold(0, |acc, i| acc | ((((membership[i][outer[i]] >> u) & 1) as usize) << i));
        }
        let fixed: T = (0..union.len())
            .filter(|&u| (in_last >> u) & 1 == 0)
            .map(|u| table[u][claims[u]])
            .sum();
        for code in 0..limits[last] {
            let mut value = fixed;
            for (k, &u) in last_pixels.iter().enumerate() {
                value += table[u][claims[u] | (((code >> k) & 1) << last)];
            }
            if value > best {
                best = value;
                best_codes[..last].copy_from_slice(&outer);
                best_codes[last] = code;
            }
        }
        let mut i = last;
        loop {
            if i == 0 {
                return Ok(decode(token_indices, &eligible, &best_codes));
            }
            i -= 1;
            outer[i] += 1;
            if outer[i] < limits[i] {
                break;
            }
            outer[i] = 0;
        }
    }
}

fn decode(token_indices: &[usize], eligible: &[PixelSet], codes: &[usize]) -> RegionAssignment {
    let regions = eligible
        .iter()
        .zip(codes)
        .map(|(a, &code)| {
            a.iter()
                .enumerate()
                .filter(|(k, _)| code & (1 << k) != 0)
                .map(|(_, &p)| p)
                .collect()
        })
        .collect();
    RegionAssignment {
        token_indices: token_indices.to_vec(),
        regions,
        approx_regions: eligible.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map2x2(v: [f64; 4]) -> Matrix<f64> {
        Matrix::from_vec(2, 2, v.to_vec()).unwrap()
    }

    fn set(p: &[usize]) -> PixelSet {
        p.iter().copied().collect()
    }

    #[test]
    fn threshold_selection() {
        let cfg = RegionSelectionConfig::default();
        assert_eq!(eligible_pixels(&map2x2([0.9, 0.6, 0.1, 0.1]), &cfg).unwrap(), set(&[0, 1]));
        assert_eq!(eligible_pixels(&map2x2([0.2; 4]), &cfg).unwrap(), set(&[0, 1, 2, 3]));
        assert_eq!(eligible_pixels(&map2x2([0.0, 0.0, 0.3, 0.0]), &cfg).unwrap(), set(&[2]));
        assert!(eligible_pixels(&map2x2([0.0; 4]), &cfg).unwrap().is_empty());
    }

    #[test]
    fn top_k_keeps_largest_with_low_index_ties() {
        let cfg = RegionSelectionConfig {
            top_k: Some(2),
            ..Default::default()
        };
        assert_eq!(eligible_pixels(&map2x2([0.5, 0.9, 0.5, 0.5]), &cfg).unwrap(), set(&[0, 1]));
    }

    #[test]
    fn config_validation() {
        let bad = [
            RegionSelectionConfig { lambda: -0.1, ..Default::default() },
            RegionSelectionConfig { threshold_ratio: 0.0, ..Default::default() },
            RegionSelectionConfig { threshold_ratio: 1.5, ..Default::default() },
            RegionSelectionConfig { top_k: Some(0), ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn exact_objective_hand_values() {
        let maps = [map2x2([0.9, 0.6, 0.0, 0.0]), map2x2([0.0, 0.0, 0.7, 0.1])];
        let v = objective_exact(&[set(&[0, 1]), set(&[2, 3])], &maps, 0.5).unwrap();
        assert!((v - 2.3).abs() < 1e-12);

        let shared = [map2x2([0.4, 0.0, 0.0, 0.0]), map2x2([0.4, 0.0, 0.0, 0.0])];
        let v = objective_exact(&[set(&[0]), set(&[0])], &shared, 0.5).unwrap();
        // 2v − 0.5·(v + v) = v
        assert!((v - 0.4).abs() < 1e-12);

        assert_eq!(objective_exact::<f64>(&[], &[], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn exact_objective_rejects_bad_pixels() {
        let maps = [map2x2([0.1; 4])];
        assert!(matches!(
            objective_exact(&[set(&[4])], &maps, 0.5),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn approx_pixel_rule() {
        let cfg = RegionSelectionConfig::default();
        let maps = [
            map2x2([1.0, 0.0, 0.0, 0.0]),
            map2x2([1.0, 0.0, 0.0, 0.0]),
        ];
        let a = solve_regions_approx(&maps, &[1, 2], &cfg).unwrap();
        // one competitor: 1 − 0.5 = 0.5 > 0
        assert_eq!(a.regions, vec![set(&[0]), set(&[0])]);

        let three = [
            map2x2([1.0, 0.0, 0.0, 0.0]),
            map2x2([1.0, 0.0, 0.0, 0.0]),
            map2x2([1.0, 0.0, 0.0, 0.0]),
        ];
        let a = solve_regions_approx(&three, &[1, 2, 3], &cfg).unwrap();
        // two competitors: 1 − 0.5·2 = 0
        assert!(a.regions.iter().all(PixelSet::is_empty));
        assert!(a.approx_regions.iter().all(|r| r == &set(&[0])));
    }

    #[test]
    fn single_token_region_is_eligible_set() {
        let cfg = RegionSelectionConfig::default();
        let m = [map2x2([0.9, 0.6, 0.1, 0.5])];
        let a = solve_regions_approx(&m, &[0], &cfg).unwrap();
        assert_eq!(a.regions[0], a.approx_regions[0]);
        let e = solve_regions_exact(&m, &[0], &cfg).unwrap();
        assert_eq!(e.regions[0], set(&[0, 1, 3]));
    }

    #[test]
    fn exact_disjoint_tokens_take_everything() {
        let cfg = RegionSelectionConfig::default();
        let maps = [map2x2([0.9, 0.6, 0.0, 0.0]), map2x2([0.0, 0.0, 0.7, 0.5])];
        let e = solve_regions_exact(&maps, &[0, 1], &cfg).unwrap();
        assert_eq!(e.regions, vec![set(&[0, 1]), set(&[2, 3])]);
    }

    #[test]
    fn exact_golden_two_token_instance() {
        // C_1 = [0.9, 0.6, 0, 0], C_2 = [0.8, 0, 0.7, 0], λ = 0.5.
        // Eligible: A_1 = {0, 1}, A_2 = {0, 2}. Enumerating the 16 candidates by
        // hand, pixel 0 shared scores (0.9 + 0.8)·0.5 = 0.85 against 0.9 for
        // token 1 alone, so the optimum is R_1 = {0, 1}, R_2 = {2} with value 2.2.
        let cfg = RegionSelectionConfig::default();
        let maps = [map2x2([0.9, 0.6, 0.0, 0.0]), map2x2([0.8, 0.0, 0.7, 0.0])];
        let e = solve_regions_exact(&maps, &[0, 1], &cfg).unwrap();
        assert_eq!(e.regions, vec![set(&[0, 1]), set(&[2])]);
        let v = objective_exact(&e.regions, &maps, 0.5).unwrap();
        assert!((v - 2.2).abs() < 1e-12);

        // The surrogate keeps the shared pixel for both tokens.
        let a = solve_regions_approx(&maps, &[0, 1], &cfg).unwrap();
        assert_eq!(a.regions, vec![set(&[0, 1]), set(&[0, 2])]);
        let va = objective_exact(&a.regions, &maps, 0.5).unwrap();
        assert!((va - 2.15).abs() < 1e-12);
    }

    #[test]
    fn exact_rejects_oversized_instances() {
        let cfg = RegionSelectionConfig::default();
        let big = Matrix::filled(3, 3, 1.0);
        assert!(matches!(
            solve_regions_exact(&[big], &[0], &cfg),
            Err(Error::TooLarge(_))
        ));
        let m = map2x2([1.0, 0.0, 0.0, 0.0]);
        let four = vec![m.clone(), m.clone(), m.clone(), m];
        assert!(matches!(
            solve_regions_exact(&four, &[0, 1, 2, 3], &cfg),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn mismatched_maps_rejected() {
        let cfg = RegionSelectionConfig::default();
        let maps = [map2x2([0.1; 4]), Matrix::filled(1, 3, 0.1)];
        assert!(matches!(
            solve_regions_approx(&maps, &[0, 1], &cfg),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            solve_regions_approx(&maps[..1], &[0, 1], &cfg),
            Err(Error::Shape(_))
        ));
    }
}
