use std::sync::Arc;

use super::{Objective, Problem, ProblemError};

/// Non-convex scalar objective `f(w) = 1/4 (w^2 - 1)^2 + s*w`.
///
/// Optional zero-mean sample offsets `o_j` make the per-sample loss
/// `1/4 (w^2 - 1)^2 + (s + o_j) w` so that sampled gradients are noisy while
/// the full objective is unchanged.
#[derive(Debug, Clone)]
pub struct DoubleWell {
    shift: f64,
    offsets: Vec<f64>,
}

impl DoubleWell {
    pub fn new(shift: f64) -> DoubleWell {
        DoubleWell {
            shift,
            offsets: vec![0.0],
        }
    }

    /// Offsets are re-centered to mean zero.
    pub fn with_sample_offsets(shift: f64, offsets: &[f64]) -> Result<DoubleWell, ProblemError> {
        if offsets.is_empty() {
            return Err(ProblemError::NoSamples);
        }
        let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
        Ok(DoubleWell {
            shift,
            offsets: offsets.iter().map(|o| o - mean).collect(),
        })
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }
}

impl Objective for DoubleWell {
    fn dim(&self) -> usize {
        1
    }

    fn num_samples(&self) -> usize {
        self.offsets.len()
    }

    fn value(&self, w: &[f64]) -> f64 {
        let x = w[0];
        0.25 * (x * x - 1.0).powi(2) + self.shift * x
    }

    fn add_sample_gradient(&self, w: &[f64], j: usize, scale: f64, out: &mut [f64]) {
        let x = w[0];
        out[0] += scale * (x * (x * x - 1.0) + self.shift + self.offsets[j]);
    }

    fn add_gradient(&self, w: &[f64], scale: f64, out: &mut [f64]) {
        let x = w[0];
        out[0] += scale * (x * (x * x - 1.0) + self.shift);
    }
}

/// One single-sample double well per shift; with all shifts zero the sum
/// has critical points exactly `{-1, 0, 1}`.
pub fn double_well_problem(shifts: &[f64]) -> Result<Problem, ProblemError> {
    Problem::new(
        shifts
            .iter()
            .map(|&s| Arc::new(DoubleWell::new(s)) as Arc<dyn Objective>)
            .collect(),
    )
}
