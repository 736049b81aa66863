//! REGION: selected pixel sets per token, with objective values.
//!
//! ```text
//! REGION 1 <approx|exact> <num_tokens>
//! <token> <pixel> <pixel> ...      # one line per token, pixels ascending
//! objective <name> <value>         # zero or more
//! ```
//!
//! A file may hold several blocks back to back.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::regionsel::{PixelSet, RegionAssignment};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Approx,
    Exact,
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::Approx => "approx",
            Solver::Exact => "exact",
        })
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "approx" => Ok(Solver::Approx),
            "exact" => Ok(Solver::Exact),
            _ => Err(Error::invalid(format!("unknown solver `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionBlock<T> {
    pub solver: Solver,
    pub regions: Vec<(usize, PixelSet)>,
    pub objectives: Vec<(String, T)>,
}

impl<T: Scalar> RegionBlock<T> {
    pub fn from_assignment(solver: Solver, assignment: &RegionAssignment) -> Self {
        Self {
            solver,
            regions: assignment
                .token_indices
                .iter()
                .copied()
                .zip(assignment.regions.iter().cloned())
                .collect(),
            objectives: Vec::new(),
        }
    }

    pub fn with_objective(mut self, name: &str, value: T) -> Self {
        self.objectives.push((name.to_string(), value));
        self
    }

    pub fn objective(&self, name: &str) -> Option<T> {
        self.objectives.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }
}

pub fn render_regions<T: Scalar>(blocks: &[RegionBlock<T>]) -> String {
    let mut out = String::new();
    for b in blocks {
        writeln!(out, "REGION 1 {} {}", b.solver, b.regions.len()).unwrap();
        for (token, pixels) in &b.regions {
            write!(out, "{token}").unwrap();
            for p in pixels {
                write!(out, " {p}").unwrap();
            }
            out.push('\n');
        }
        for (name, value) in &b.objectives {
            writeln!(out, "objective {name} {value}").unwrap();
        }
    }
    out
}

pub fn parse_regions<T: Scalar>(text: &str) -> Result<Vec<RegionBlock<T>>> {
    let mut blocks: Vec<RegionBlock<T>> = Vec::new();
    let mut pending_tokens = 0usize;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields[0] == "REGION" {
            if pending_tokens > 0 {
                return Err(Error::parse(line_no, format!("{pending_tokens} token lines missing")));
            }
            if fields.len() != 4 || fields[1] != "1" {
                return Err(Error::parse(line_no, "header must read `REGION 1 <solver> <num_tokens>`"));
            }
            let solver = fields[2].parse().map_err(|e: Error| Error::parse(line_no, e.to_string()))?;
            pending_tokens = fields[3]
                .parse()
                .map_err(|_| Error::parse(line_no, format!("invalid token count `{}`", fields[3])))?;
            blocks.push(RegionBlock {
                solver,
                regions: Vec::with_capacity(pending_tokens),
                objectives: Vec::new(),
            });
            continue;
        }
        let block = blocks
            .last_mut()
            .ok_or_else(|| Error::parse(line_no, "content before the first REGION header"))?;
        if pending_tokens > 0 {
            let nums = fields
                .iter()
                .map(|f| f.parse::<usize>().map_err(|_| Error::parse(line_no, format!("invalid index `{f}`"))))
                .collect::<Result<Vec<_>>>()?;
            let pixels: PixelSet = nums[1..].iter().copied().collect();
            if pixels.len() != nums.len() - 1 || !nums[1..].windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::parse(line_no, "pixel indices must be strictly ascending"));
            }
            block.regions.push((nums[0], pixels));
            pending_tokens -= 1;
        } else if fields[0] == "objective" && fields.len() == 3 {
            let v: T = fields[2]
                .parse()
                .map_err(|_| Error::parse(line_no, format!("invalid objective value `{}`", fields[2])))?;
            block.objectives.push((fields[1].to_string(), v));
        } else {
            return Err(Error::parse(line_no, format!("unexpected line `{line}`")));
        }
    }
    if pending_tokens > 0 {
        return Err(Error::parse(text.lines().count(), format!("{pending_tokens} token lines missing")));
    }
    Ok(blocks)
}
