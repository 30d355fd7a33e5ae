//! Knots-plus-levels representation of one fitted additive component.

use crate::error::FlamError;
use serde::{Deserialize, Serialize};

/// A piecewise-constant function on the real line: `levels[i]` is the value
/// on the interval between `knots[i-1]` and `knots[i]` (with open ends at
/// the extremes). Evaluation is right-continuous at knots and constant
/// beyond the training range `[domain_lo, domain_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub knots: Vec<f64>,
    pub levels: Vec<f64>,
    pub domain_lo: f64,
    pub domain_hi: f64,
}

impl StepFunction {
    pub fn new(
        knots: Vec<f64>,
        levels: Vec<f64>,
        domain_lo: f64,
        domain_hi: f64,
    ) -> Result<Self, FlamError> {
        if levels.len() != knots.len() + 1 {
            return Err(FlamError::invalid(format!(
                "need {} levels for {} knots, got {}",
                knots.len() + 1,
                knots.len(),
                levels.len()
            )));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FlamError::invalid("knots must be strictly increasing"));
        }
        if knots.iter().chain(levels.iter()).any(|v| !v.is_finite()) {
            return Err(FlamError::invalid("knots and levels must be finite"));
        }
        Ok(StepFunction { knots, levels, domain_lo, domain_hi })
    }

    /// A knot-free function with a single level.
    pub fn constant(level: f64, domain_lo: f64, domain_hi: f64) -> Self {
        StepFunction { knots: Vec::new(), levels: vec![level], domain_lo, domain_hi }
    }

    /// Value at `x`: the level of the segment containing `x`, with
    /// right-continuity at knots (`x == knot` takes the right level).
    pub fn evaluate(&self, x: f64) -> f64 {
        let idx = self.knots.partition_point(|&k| k <= x);
        self.levels[idx]
    }

    pub fn n_knots(&self) -> usize {
        self.knots.len()
    }
}
