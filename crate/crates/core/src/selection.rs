//! The set of prompt tokens that take part in masking.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::regionsel::PixelSet;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PickedToken {
    pub index: usize,
    pub label: String,
    /// Ground-truth placement, for evaluation scenarios only.
    pub expected_zone: Option<PixelSet>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSelection {
    picked: Vec<PickedToken>,
}

impl TokenSelection {
    /// Indices must be unique and below `num_tokens`.
    pub fn new(picked: Vec<PickedToken>, num_tokens: usize) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for t in &picked {
            if t.index >= num_tokens {
                return Err(Error::OutOfRange {
                    what: "picked token",
                    index: t.index,
                    limit: num_tokens,
                });
            }
            if !seen.insert(t.index) {
                return Err(Error::invalid(format!("token {} picked twice", t.index)));
            }
        }
        Ok(Self { picked })
    }

    pub fn picked(&self) -> &[PickedToken] {
        &self.picked
    }

    pub fn indices(&self) -> Vec<usize> {
        self.picked.iter().map(|t| t.index).collect()
    }

    pub fn len(&self) -> usize {
        self.picked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.picked.is_empty()
    }
}
