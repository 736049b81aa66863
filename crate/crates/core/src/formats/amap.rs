//! AMAP: plain-text attention states and masks.
//!
//! ```text
//! AMAP 1 <LOGITS|PROBS|MASK> <height> <width> <num_tokens>
//! <num_tokens values for pixel 0>
//! ...
//! <num_tokens values for pixel N-1>
//! ```
//!
//! Values use the shortest decimal form that parses back to the same float.

use std::fmt::Write as _;

use crate::attention::{AttentionKind, AttentionMask, AttentionState, GridShape};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

const MAGIC: &str = "AMAP";
const VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq)]
pub enum Amap<T> {
    State(AttentionState<T>),
    Mask(AttentionMask<T>),
}

impl<T: Scalar> Amap<T> {
    pub fn kind_tag(&self) -> &'static str {
        match self {
            Amap::State(s) if s.kind() == AttentionKind::Logits => "LOGITS",
            Amap::State(_) => "PROBS",
            Amap::Mask(_) => "MASK",
        }
    }

    pub fn into_state(self) -> Result<AttentionState<T>> {
        match self {
            Amap::State(s) => Ok(s),
            Amap::Mask(_) => Err(Error::invalid("expected an attention state, found a MASK")),
        }
    }

    pub fn into_mask(self) -> Result<AttentionMask<T>> {
        match self {
            Amap::Mask(m) => Ok(m),
            Amap::State(_) => Err(Error::invalid("expected a MASK")),
        }
    }

    /// Spatial map of one token column.
    pub fn token_map(&self, token: usize) -> Result<Matrix<T>> {
        match self {
            Amap::State(s) => s.token_map(token),
            Amap::Mask(m) => {
                if token >= m.num_tokens() {
                    return Err(Error::OutOfRange {
                        what: "token",
                        index: token,
                        limit: m.num_tokens(),
                    });
                }
                Matrix::from_vec(m.shape().height(), m.shape().width(), m.values().column(token))
            }
        }
    }
}

fn render(tag: &str, shape: GridShape, values: &Matrix<impl Scalar>) -> String {
    let mut out = format!(
        "{MAGIC} {VERSION} {tag} {} {} {}\n",
        shape.height(),
        shape.width(),
        values.cols()
    );
    for r in 0..values.rows() {
        let mut first = true;
        for v in values.row(r) {
            if !first {
                out.push(' ');
            }
            first = false;
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn render_state<T: Scalar>(state: &AttentionState<T>) -> Result<String> {
    let tag = match state.kind() {
        AttentionKind::Logits => "LOGITS",
        AttentionKind::Probabilities => "PROBS",
        AttentionKind::Blended => {
            return Err(Error::invalid("blended maps have no AMAP representation"))
        }
    };
    Ok(render(tag, state.shape(), state.values()))
}

pub fn render_mask<T: Scalar>(mask: &AttentionMask<T>) -> String {
    render("MASK", mask.shape(), mask.values())
}

pub fn render_amap<T: Scalar>(amap: &Amap<T>) -> Result<String> {
    match amap {
        Amap::State(s) => render_state(s),
        Amap::Mask(m) => Ok(render_mask(m)),
    }
}

fn parse_usize(field: &str, line: usize, what: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} `{field}`")))
}

pub fn parse_amap<T: Scalar>(text: &str) -> Result<Amap<T>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty AMAP file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != MAGIC {
        return Err(Error::parse(
            1,
            "header must read `AMAP 1 <kind> <height> <width> <num_tokens>`",
        ));
    }
    if fields[1] != VERSION {
        return Err(Error::parse(1, format!("unsupported AMAP version `{}`", fields[1])));
    }
    let height = parse_usize(fields[3], 1, "height")?;
    let width = parse_usize(fields[4], 1, "width")?;
    let num_tokens = parse_usize(fields[5], 1, "token count")?;
    let shape = GridShape::new(height, width).map_err(|e| Error::parse(1, e.to_string()))?;
    if num_tokens == 0 {
        return Err(Error::parse(1, "token count must be positive"));
    }

    let n = shape.num_pixels();
    let mut data = Vec::with_capacity(n * num_tokens);
    let mut rows = 0;
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if rows == n {
            return Err(Error::parse(line_no, format!("more than {n} pixel rows")));
        }
        let before = data.len();
        for field in line.split_whitespace() {
            let v: T = field
                .parse()
                .map_err(|_| Error::parse(line_no, format!("invalid number `{field}`")))?;
            data.push(v);
        }
        if data.len() - before != num_tokens {
            return Err(Error::parse(
                line_no,
                format!("expected {num_tokens} values, found {}", data.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::parse(
            text.lines().count(),
            format!("expected {n} pixel rows, found {rows}"),
        ));
    }
    let values = Matrix::from_vec(n, num_tokens, data)?;
    let wrap = |e: Error| Error::parse(1, e.to_string());
    match fields[2] {
        "LOGITS" => Ok(Amap::State(
            AttentionState::new(shape, AttentionKind::Logits, values).map_err(wrap)?,
        )),
        "PROBS" => Ok(Amap::State(
            AttentionState::new(shape, AttentionKind::Probabilities, values).map_err(wrap)?,
        )),
        "MASK" => Ok(Amap::Mask(AttentionMask::from_values(shape, values).map_err(wrap)?)),
        other => Err(Error::parse(1, format!("unknown AMAP kind `{other}`"))),
    }
}
