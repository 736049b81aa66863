//! Cross-attention between spatial latents and prompt tokens, with an optional
//! additive pre-softmax mask.
//!
//! Layouts are fixed throughout the crate:
//!
//! - latents are `N × D` (one row per pixel, pixels row-major over the grid),
//! - prompt embeddings are `L × D` (one row per token),
//! - attention states and masks are `N × L`; column `i` reshaped to
//!   `height × width` is the spatial map of token `i`.
//!
//! Projections act on row vectors: `Q(x) = x · W_q`.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShape {
    height: usize,
    width: usize,
}

impl GridShape {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "grid must be at least 1x1, got {height}x{width}"
            )));
        }
        Ok(Self { height, width })
    }

    pub fn square(side: usize) -> Result<Self> {
        Self::new(side, side)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Pixel count `N`.
    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn is_square(&self) -> bool {
        self.height == self.width
    }

    pub fn pixel(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn coords(&self, pixel: usize) -> (usize, usize) {
        (pixel / self.width, pixel % self.width)
    }
}

/// Encoded prompt: `L` token embeddings of dimension `D`, plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptEmbedding<T> {
    tokens: Matrix<T>,
    labels: Vec<String>,
}

impl<T: Scalar> PromptEmbedding<T> {
    pub fn new(tokens: Matrix<T>, labels: Vec<String>) -> Result<Self> {
        if tokens.rows() == 0 || tokens.cols() == 0 {
            return Err(Error::invalid("prompt needs at least one token and one channel"));
        }
        if labels.len() != tokens.rows() {
            return Err(Error::shape(format!(
                "{} labels for {} tokens",
                labels.len(),
                tokens.rows()
            )));
        }
        if !tokens.is_finite() {
            return Err(Error::NonFinite("prompt embedding"));
        }
        Ok(Self { tokens, labels })
    }

    pub fn tokens(&self) -> &Matrix<T> {
        &self.tokens
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.rows()
    }

    pub fn dim(&self) -> usize {
        self.tokens.cols()
    }
}

/// Query, key and value projection weights, each `D × D`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet<T> {
    q_weights: Matrix<T>,
    k_weights: Matrix<T>,
    v_weights: Matrix<T>,
}

impl<T: Scalar> ProjectionSet<T> {
    pub fn new(q_weights: Matrix<T>, k_weights: Matrix<T>, v_weights: Matrix<T>) -> Result<Self> {
        let d = q_weights.rows();
        for (name, w) in [("query", &q_weights), ("key", &k_weights), ("value", &v_weights)] {
            if w.rows() != d || w.cols() != d {
                return Err(Error::shape(format!(
                    "{name} weights are {}x{}, expected {d}x{d}",
                    w.rows(),
                    w.cols()
                )));
            }
            if !w.is_finite() {
                return Err(Error::NonFinite("projection weights"));
            }
        }
        Ok(Self {
            q_weights,
            k_weights,
            v_weights,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            q_weights: Matrix::identity(dim),
            k_weights: Matrix::identity(dim),
            v_weights: Matrix::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.q_weights.rows()
    }

    pub fn q_weights(&self) -> &Matrix<T> {
        &self.q_weights
    }

    pub fn k_weights(&self) -> &Matrix<T> {
        &self.k_weights
    }

    pub fn v_weights(&self) -> &Matrix<T> {
        &self.v_weights
    }

    /// `V(P)`, the `L × D` value rows.
    pub fn values(&self, prompt: &PromptEmbedding<T>) -> Result<Matrix<T>> {
        prompt.tokens.matmul(&self.v_weights)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttentionKind {
    /// Pre-softmax similarities.
    Logits,
    /// Row-stochastic post-softmax weights.
    Probabilities,
    /// Momentum blend of probability maps; non-negative, rows need not sum to one.
    Blended,
}

/// An `N × L` attention structure on a spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionState<T> {
    shape: GridShape,
    kind: AttentionKind,
    values: Matrix<T>,
}

impl<T: Scalar> AttentionState<T> {
    pub fn new(shape: GridShape, kind: AttentionKind, values: Matrix<T>) -> Result<Self> {
        if values.rows() != shape.num_pixels() {
            return Err(Error::shape(format!(
                "{} rows for a {}x{} grid",
                values.rows(),
                shape.height(),
                shape.width()
            )));
        }
        if values.cols() == 0 {
            return Err(Error::invalid("attention state needs at least one token"));
        }
        if !values.is_finite() {
            return Err(Error::NonFinite("attention values"));
        }
        match kind {
            AttentionKind::Logits => {}
            AttentionKind::Probabilities => {
                let tol = T::ROW_SUM_TOLERANCE;
                for r in 0..values.rows() {
                    let row = values.row(r);
                    if row.iter().any(|&v| v < T::zero()) {
                        return Err(Error::invalid(format!("negative probability in row {r}")));
                    }
                    let sum: T = row.iter().copied().sum();
                    if (sum.as_f64() - 1.0).abs() > tol {
                        return Err(Error::invalid(format!("row {r} sums to {sum}, not 1")));
                    }
                }
            }
            AttentionKind::Blended => {
                if values.as_slice().iter().any(|&v| v < T::zero()) {
                    return Err(Error::invalid("negative entry in blended attention map"));
                }
            }
        }
        Ok(Self {
            shape,
            kind,
            values,
        })
    }

    /// Assembles a state from per-token spatial maps (`height × width` each).
    pub fn from_token_maps(shape: GridShape, kind: AttentionKind, maps: &[Matrix<T>]) -> Result<Self> {
        let mut values = Matrix::zeros(shape.num_pixels(), maps.len());
        for (t, map) in maps.iter().enumerate() {
            if map.rows() != shape.height() || map.cols() != shape.width() {
                return Err(Error::shape(format!(
                    "token {t} map is {}x{}, grid is {}x{}",
                    map.rows(),
                    map.cols(),
                    shape.height(),
                    shape.width()
                )));
            }
            for (p, &v) in map.as_slice().iter().enumerate() {
                values[(p, t)] = v;
            }
        }
        Self::new(shape, kind, values)
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn kind(&self) -> AttentionKind {
        self.kind
    }

    pub fn num_tokens(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    /// Column `token` reshaped to the spatial grid.
    pub fn token_map(&self, token: usize) -> Result<Matrix<T>> {
        if token >= self.num_tokens() {
            return Err(Error::OutOfRange {
                what: "token",
                index: token,
                limit: self.num_tokens(),
            });
        }
        Matrix::from_vec(
            self.shape.height(),
            self.shape.width(),
            self.values.column(token),
        )
    }

    pub(crate) fn from_parts_unchecked(shape: GridShape, kind: AttentionKind, values: Matrix<T>) -> Self {
        Self {
            shape,
            kind,
            values,
        }
    }
}

/// Additive `N × L` logit offsets. Every entry is either zero or the boost `w₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask<T> {
    shape: GridShape,
    values: Matrix<T>,
}

impl<T: Scalar> AttentionMask<T> {
    pub fn zeros(shape: GridShape, num_tokens: usize) -> Self {
        Self {
            shape,
            values: Matrix::zeros(shape.num_pixels(), num_tokens),
        }
    }

    /// Validates an externally supplied mask: finite, and all nonzero entries
    /// share one positive value.
    pub fn from_values(shape: GridShape, values: Matrix<T>) -> Result<Self> {
        if values.rows() != shape.num_pixels() {
            return Err(Error::shape(format!(
                "mask has {} rows for {} pixels",
                values.rows(),
                shape.num_pixels()
            )));
        }
        if !values.is_finite() {
            return Err(Error::NonFinite("mask"));
        }
        let mut boost: Option<T> = None;
        for &v in values.as_slice() {
            if v == T::zero() {
                continue;
            }
            if v < T::zero() {
                return Err(Error::invalid("mask entries must be 0 or a positive boost"));
            }
            match boost {
                None => boost = Some(v),
                Some(b) if b != v => {
                    return Err(Error::invalid(format!(
                        "mask mixes boosts {b} and {v}"
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(Self { shape, values })
    }

    pub(crate) fn from_parts_unchecked(shape: GridShape, values: Matrix<T>) -> Self {
        Self { shape, values }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn num_tokens(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    pub fn nonzero_count(&self) -> usize {
        self.values
            .as_slice()
            .iter()
            .filter(|&&v| v != T::zero())
            .count()
    }

    /// Nonzero entries in one token column.
    pub fn column_nonzeros(&self, token: usize) -> usize {
        (0..self.values.rows())
            .filter(|&p| self.values[(p, token)] != T::zero())
            .count()
    }

    pub fn is_zero(&self) -> bool {
        self.nonzero_count() == 0
    }
}

/// `Q(x)·K(P)ᵀ / √D` as an `N × L` logit state.
pub fn compute_logits<T: Scalar>(
    shape: GridShape,
    latent: &Matrix<T>,
    prompt: &PromptEmbedding<T>,
    proj: &ProjectionSet<T>,
) -> Result<AttentionState<T>> {
    if latent.rows() != shape.num_pixels() {
        return Err(Error::shape(format!(
            "latent has {} rows for {} pixels",
            latent.rows(),
            shape.num_pixels()
        )));
    }
    let d = proj.dim();
    if latent.cols() != d || prompt.dim() != d {
        return Err(Error::shape(format!(
            "latent dim {}, prompt dim {}, projection dim {d}",
            latent.cols(),
            prompt.dim()
        )));
    }
    if !latent.is_finite() {
        return Err(Error::NonFinite("latent"));
    }
    let queries = latent.matmul(&proj.q_weights)?;
    let keys = prompt.tokens.matmul(&proj.k_weights)?;
    let scale = T::one() / T::lit(d as f64).sqrt();
    let logits = queries.matmul_transposed(&keys)?.scale(scale);
    AttentionState::new(shape, AttentionKind::Logits, logits)
}

/// Unmasked row-wise softmax.
pub fn softmax<T: Scalar>(logits: &AttentionState<T>) -> Result<AttentionState<T>> {
    masked_softmax(logits, None)
}

/// Row-wise softmax of `logits + mask`, stabilized by subtracting the row max.
pub fn masked_softmax<T: Scalar>(
    logits: &AttentionState<T>,
    mask: Option<&AttentionMask<T>>,
) -> Result<AttentionState<T>> {
    if logits.kind != AttentionKind::Logits {
        return Err(Error::invalid("softmax expects a logit state"));
    }
    if let Some(m) = mask {
        if m.shape != logits.shape || m.num_tokens() != logits.num_tokens() {
            return Err(Error::shape(format!(
                "mask is {}x{} over {} tokens, logits are {}x{} over {}",
                m.shape.height(),
                m.shape.width(),
                m.num_tokens(),
                logits.shape.height(),
                logits.shape.width(),
                logits.num_tokens()
            )));
        }
    }
    if !logits.values.is_finite() {
        return Err(Error::NonFinite("logits"));
    }

    let (n, l) = (logits.values.rows(), logits.values.cols());
    let mut out = Matrix::zeros(n, l);
    let mut shifted = vec![T::zero(); l];
    for r in 0..n {
        let row = logits.values.row(r);
        match mask {
            Some(m) => {
                for ((s, &x), &w) in shifted.iter_mut().zip(row).zip(m.values.row(r)) {
                    *s = x + w;
                }
            }
            None => shifted.copy_from_slice(row),
        }
        softmax_row(&shifted, out.row_mut(r));
    }
    Ok(AttentionState::from_parts_unchecked(
        logits.shape,
        AttentionKind::Probabilities,
        out,
    ))
}

fn softmax_row<T: Scalar>(input: &[T], output: &mut [T]) {
    let max = input.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (o, &x) in output.iter_mut().zip(input) {
        *o = (x - max).exp();
        total += *o;
    }
    for o in output.iter_mut() {
        *o /= total;
    }
}

/// `probabilities · V(P)`, an `N × D` matrix.
pub fn attend<T: Scalar>(
    probabilities: &AttentionState<T>,
    prompt: &PromptEmbedding<T>,
    proj: &ProjectionSet<T>,
) -> Result<Matrix<T>> {
    if probabilities.kind != AttentionKind::Probabilities {
        return Err(Error::invalid("attend expects a probability state"));
    }
    if probabilities.num_tokens() != prompt.num_tokens() {
        return Err(Error::shape(format!(
            "probabilities cover {} tokens, prompt has {}",
            probabilities.num_tokens(),
            prompt.num_tokens()
        )));
    }
    if prompt.dim() != proj.dim() {
        return Err(Error::shape(format!(
            "prompt dim {} vs projection dim {}",
            prompt.dim(),
            proj.dim()
        )));
    }
    probabilities.values.matmul(&proj.values(prompt)?)
}
