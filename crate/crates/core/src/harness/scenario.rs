//! Synthetic multi-step attention scenarios.
//!
//! Every scenario token is an isotropic Gaussian blob in logit space,
//! `amplitude · exp(−d²/(2σ²))`, whose center moves by `drift` per step and is
//! clamped to the grid. Column 0 of every generated state is an implicit
//! background token with a constant logit; it soaks up attention away from the
//! blobs and is never picked. Scenario token `k` occupies column `k + 1`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::attention::{AttentionKind, AttentionState, GridShape};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::regionsel::PixelSet;
use crate::scalar::Scalar;
use crate::selection::{PickedToken, TokenSelection};

pub const BACKGROUND_LABEL: &str = "<bg>";
pub const DEFAULT_BACKGROUND_LOGIT: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Archetype {
    Overlapping,
    Preempted,
    WrongRegion,
    Clean,
}

impl Archetype {
    pub const ALL: [Archetype; 4] = [
        Archetype::Overlapping,
        Archetype::Preempted,
        Archetype::WrongRegion,
        Archetype::Clean,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Archetype::Overlapping => "overlapping",
            Archetype::Preempted => "preempted",
            Archetype::WrongRegion => "wrong_region",
            Archetype::Clean => "clean",
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Archetype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Archetype::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown archetype `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec<T> {
    pub label: String,
    /// `(row, col)` in pixel units at the first step.
    pub center: (T, T),
    pub amplitude: T,
    pub sigma: T,
    /// `(row, col)` displacement per step.
    pub drift: (T, T),
    pub expected_zone: Option<PixelSet>,
}

impl<T: Scalar> BlobSpec<T> {
    pub fn new(label: &str, center: (f64, f64), amplitude: f64, sigma: f64) -> Self {
        Self {
            label: label.to_string(),
            center: (T::lit(center.0), T::lit(center.1)),
            amplitude: T::lit(amplitude),
            sigma: T::lit(sigma),
            drift: (T::zero(), T::zero()),
            expected_zone: None,
        }
    }

    pub fn with_drift(mut self, drift: (f64, f64)) -> Self {
        self.drift = (T::lit(drift.0), T::lit(drift.1));
        self
    }

    pub fn with_zone(mut self, zone: PixelSet) -> Self {
        self.expected_zone = Some(zone);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec<T> {
    pub shape: GridShape,
    pub num_steps: usize,
    pub tokens: Vec<BlobSpec<T>>,
    pub noise_sigma: T,
    pub seed: u64,
    pub archetype: Archetype,
    pub background_logit: T,
}

/// Rectangle `[row0, row1) × [col0, col1)` clipped to the grid.
pub fn rect_zone(shape: GridShape, rows: (usize, usize), cols: (usize, usize)) -> PixelSet {
    let mut zone = PixelSet::new();
    for r in rows.0..rows.1.min(shape.height()) {
        for c in cols.0..cols.1.min(shape.width()) {
            zone.insert(shape.pixel(r, c));
        }
    }
    zone
}

impl<T: Scalar> ScenarioSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.num_steps == 0 {
            return Err(Error::invalid("scenario needs at least one step"));
        }
        if self.tokens.is_empty() {
            return Err(Error::invalid("scenario needs at least one token"));
        }
        if !(self.noise_sigma >= T::zero()) || !self.noise_sigma.is_finite() {
            return Err(Error::invalid("noise_sigma must be a non-negative number"));
        }
        if !self.background_logit.is_finite() {
            return Err(Error::NonFinite("background logit"));
        }
        let (h, w) = (self.shape.height() as f64, self.shape.width() as f64);
        for (k, t) in self.tokens.iter().enumerate() {
            let finite = [t.center.0, t.center.1, t.drift.0, t.drift.1, t.amplitude, t.sigma]
                .iter()
                .all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFinite("token blob"));
            }
            if !(t.amplitude > T::zero()) || !(t.sigma > T::zero()) {
                return Err(Error::invalid(format!(
                    "token {k} (`{}`) needs positive amplitude and sigma",
                    t.label
                )));
            }
            let (r, c) = (t.center.0.as_f64(), t.center.1.as_f64());
            if r < 0.0 || c < 0.0 || r > h - 1.0 || c > w - 1.0 {
                return Err(Error::invalid(format!(
                    "token {k} (`{}`) center ({r}, {c}) lies outside the {}x{} grid",
                    t.label,
                    self.shape.height(),
                    self.shape.width()
                )));
            }
            if let Some(zone) = &t.expected_zone {
                if let Some(&p) = zone.iter().next_back() {
                    if p >= self.shape.num_pixels() {
                        return Err(Error::OutOfRange {
                            what: "expected zone pixel",
                            index: p,
                            limit: self.shape.num_pixels(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Prompt width: background plus one column per scenario token.
    pub fn num_tokens(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn labels(&self) -> Vec<String> {
        std::iter::once(BACKGROUND_LABEL.to_string())
            .chain(self.tokens.iter().map(|t| t.label.clone()))
            .collect()
    }

    /// Every scenario token is picked; the background never is.
    pub fn selection(&self) -> TokenSelection {
        let picked = self
            .tokens
            .iter()
            .enumerate()
            .map(|(k, t)| PickedToken {
                index: k + 1,
                label: t.label.clone(),
                expected_zone: t.expected_zone.clone(),
            })
            .collect();
        TokenSelection::new(picked, self.num_tokens()).expect("scenario token indices are unique")
    }

    /// Time step `t` of the `iteration`-th generated state (`T−1` first).
    pub fn step_at(&self, iteration: usize) -> usize {
        self.num_steps - 1 - iteration
    }

    /// Blob center at a given iteration, clamped to the grid.
    pub fn center_at(&self, token: usize, iteration: usize) -> (T, T) {
        let t = &self.tokens[token];
        let k = T::lit(iteration as f64);
        let max_r = T::lit((self.shape.height() - 1) as f64);
        let max_c = T::lit((self.shape.width() - 1) as f64);
        (
            (t.center.0 + k * t.drift.0).max(T::zero()).min(max_r),
            (t.center.1 + k * t.drift.1).max(T::zero()).min(max_c),
        )
    }

    /// Canonical preset for an archetype on a 16×16 grid over 50 steps.
    pub fn preset(archetype: Archetype, seed: u64) -> Self {
        let shape = GridShape::square(16).expect("16x16 grid");
        let left = rect_zone(shape, (1, 9), (0, 8));
        let right = rect_zone(shape, (7, 15), (8, 16));
        let middle = rect_zone(shape, (4, 12), (4, 12));
        let tokens = match archetype {
            Archetype::Overlapping => vec![
                BlobSpec::new("horse", (8.0, 8.0), 6.0, 2.5).with_zone(middle.clone()),
                BlobSpec::new("dog", (8.0, 8.0), 5.8, 2.5).with_zone(middle),
            ],
            Archetype::Preempted => vec![
                BlobSpec::new("elephant", (5.0, 4.0), 10.0, 2.5).with_zone(left),
                BlobSpec::new("glasses", (11.0, 12.0), 1.0, 2.0).with_zone(right),
            ],
            Archetype::WrongRegion => vec![
                BlobSpec::new("bowl", (5.0, 4.0), 6.0, 2.5).with_zone(left.clone()),
                BlobSpec::new("bird", (11.0, 12.0), 6.0, 2.5).with_zone(right),
                BlobSpec::new("yellow", (11.0, 12.0), 4.5, 1.8).with_zone(left),
            ],
            // Both tokens clearly dominate their neighborhoods, so region
            // boundaries sit well clear of the eligibility threshold.
            Archetype::Clean => vec![
                BlobSpec::new("cat", (5.0, 4.0), 9.0, 2.0).with_zone(left),
                BlobSpec::new("dog", (11.0, 12.0), 9.0, 2.0).with_zone(right),
            ],
        };
        Self {
            shape,
            num_steps: 50,
            tokens,
            noise_sigma: T::lit(0.05),
            seed,
            archetype,
            background_logit: T::lit(DEFAULT_BACKGROUND_LOGIT),
        }
    }

    /// Two balanced blobs moving steadily across the grid.
    pub fn drifting(seed: u64) -> Self {
        let shape = GridShape::square(16).expect("16x16 grid");
        Self {
            shape,
            num_steps: 50,
            tokens: vec![
                BlobSpec::new("cat", (3.0, 2.0), 6.0, 2.0).with_drift((0.1, 0.15)),
                BlobSpec::new("dog", (12.0, 13.0), 6.0, 2.0).with_drift((-0.1, -0.15)),
            ],
            noise_sigma: T::lit(0.3),
            seed,
            archetype: Archetype::Clean,
            background_logit: T::lit(DEFAULT_BACKGROUND_LOGIT),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent noise stream per (seed, step, prompt column).
fn noise_stream(seed: u64, step: usize, column: usize) -> ChaCha8Rng {
    let s = splitmix64(splitmix64(seed ^ splitmix64(step as u64)) ^ splitmix64(!(column as u64)));
    ChaCha8Rng::seed_from_u64(s)
}

/// Logit states for every step, in generation order (time step `T−1` first).
pub fn generate_scenario<T: Scalar>(spec: &ScenarioSpec<T>) -> Result<Vec<AttentionState<T>>> {
    spec.validate()?;
    let shape = spec.shape;
    let n = shape.num_pixels();
    let l = spec.num_tokens();
    let noise_sigma = spec.noise_sigma.as_f64();
    let mut out = Vec::with_capacity(spec.num_steps);
    for iteration in 0..spec.num_steps {
        let step = spec.step_at(iteration);
        let mut values = Matrix::zeros(n, l);
        for column in 0..l {
            let mut rng = noise_stream(spec.seed, step, column);
            let blob = column.checked_sub(1).map(|k| {
                let t = &spec.tokens[k];
                (spec.center_at(k, iteration), t.amplitude, T::lit(2.0) * t.sigma * t.sigma)
            });
            for p in 0..n {
                let base = match blob {
                    None => spec.background_logit,
                    Some(((cr, cc), amp, two_sigma_sq)) => {
                        let (r, c) = shape.coords(p);
                        let dr = T::lit(r as f64) - cr;
                        let dc = T::lit(c as f64) - cc;
                        amp * (-(dr * dr + dc * dc) / two_sigma_sq).exp()
                    }
                };
                let noise = if noise_sigma > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    T::lit(noise_sigma * z)
                } else {
                    T::zero()
                };
                values[(p, column)] = base + noise;
            }
        }
        out.push(AttentionState::new(shape, AttentionKind::Logits, values)?);
    }
    Ok(out)
}
