//! Per-agent empirical risks `f_i(w) = (1/m_i) sum_j l(w, xi_i^j)` and their
//! aggregate `F(w) = sum_i f_i(w_i)` over the stacked parameter vector.

pub mod checkpoint;
mod double_well;
mod quadratic;
pub mod sigmoid_net;

use std::sync::Arc;

use thiserror::Error;

pub use double_well::{double_well_problem, DoubleWell};
pub use quadratic::{quadratic_minimizer, quadratic_problem, quadratic_problem_with_samples, Quadratic};
pub use sigmoid_net::{NetObjective, SigmoidNetSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("problem needs at least one agent")]
    NoAgents,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("agent objective has no samples")]
    NoSamples,
    #[error("target is not a one-hot vector of length {0}")]
    MalformedTarget(usize),
    #[error("empty batch")]
    EmptyBatch,
}

/// A differentiable finite-sum objective owned by one agent.
///
/// Implementors provide the loss average and per-sample gradients; the full
/// gradient defaults to the exact average of all sample gradients.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    /// Number of samples `m_i`.
    fn num_samples(&self) -> usize;

    /// `f_i(w)`.
    fn value(&self, w: &[f64]) -> f64;

    /// `out += scale * grad l(w, xi^j)`.
    fn add_sample_gradient(&self, w: &[f64], j: usize, scale: f64, out: &mut [f64]);

    /// `out += scale * grad f_i(w)`.
    fn add_gradient(&self, w: &[f64], scale: f64, out: &mut [f64]) {
        let m = self.num_samples();
        let per_sample = scale / m as f64;
        for j in 0..m {
            self.add_sample_gradient(w, j, per_sample, out);
        }
    }

    fn sample_gradient(&self, w: &[f64], j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.add_sample_gradient(w, j, 1.0, &mut out);
        out
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.add_gradient(w, 1.0, &mut out);
        out
    }
}

/// One objective per agent, all sharing the parameter dimension `d_w`.
#[derive(Clone)]
pub struct Problem {
    dim: usize,
    agents: Vec<Arc<dyn Objective>>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("dim", &self.dim)
            .field("agents", &self.agents.len())
            .finish()
    }
}

impl Problem {
    pub fn new(agents: Vec<Arc<dyn Objective>>) -> Result<Problem, ProblemError> {
        let dim = agents.first().ok_or(ProblemError::NoAgents)?.dim();
        for agent in &agents {
            if agent.dim() != dim {
                return Err(ProblemError::DimensionMismatch {
                    expected: dim,
                    actual: agent.dim(),
                });
            }
            if agent.num_samples() == 0 {
                return Err(ProblemError::NoSamples);
            }
        }
        Ok(Problem { dim, agents })
    }

    pub fn agents(&self) -> usize {
        self.agents.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn agent(&self, i: usize) -> &dyn Objective {
        self.agents[i].as_ref()
    }

    pub fn agent_arc(&self, i: usize) -> Arc<dyn Objective> {
        Arc::clone(&self.agents[i])
    }

    pub(crate) fn check_stacked(&self, w: &[f64]) -> Result<(), ProblemError> {
        let expected = self.agents.len() * self.dim;
        if w.len() != expected {
            return Err(ProblemError::DimensionMismatch {
                expected,
                actual: w.len(),
            });
        }
        Ok(())
    }

    /// Per-agent values `f_i(w_i)`.
    pub fn agent_values(&self, w_stacked: &[f64]) -> Result<Vec<f64>, ProblemError> {
        self.check_stacked(w_stacked)?;
        Ok(self
            .agents
            .iter()
            .zip(w_stacked.chunks_exact(self.dim))
            .map(|(agent, w)| agent.value(w))
            .collect())
    }

    /// `F(w) = sum_i f_i(w_i)`.
    pub fn aggregate_value(&self, w_stacked: &[f64]) -> Result<f64, ProblemError> {
        Ok(self.agent_values(w_stacked)?.iter().sum())
    }

    /// Blockwise concatenation of `grad f_i(w_i)`.
    pub fn aggregate_gradient(&self, w_stacked: &[f64]) -> Result<Vec<f64>, ProblemError> {
        self.check_stacked(w_stacked)?;
        let mut out = vec![0.0; w_stacked.len()];
        for ((agent, w), g) in self
            .agents
            .iter()
            .zip(w_stacked.chunks_exact(self.dim))
            .zip(out.chunks_exact_mut(self.dim))
        {
            agent.add_gradient(w, 1.0, g);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_quadratic_at_centers_is_zero() {
        let p = quadratic_problem(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![3.0, 3.0]]).unwrap();
        let w = [1.0, 2.0, -1.0, 0.5, 3.0, 3.0];
        assert_eq!(p.aggregate_value(&w).unwrap(), 0.0);
        assert!(p.aggregate_gradient(&w).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn aggregate_blocks_are_residuals() {
        let centers = [vec![1.0, 2.0], vec![-1.0, 0.5]];
        let p = quadratic_problem(&centers).unwrap();
        let w = [0.3, -0.7, 2.5, 1.25];
        let g = p.aggregate_gradient(&w).unwrap();
        assert_eq!(g, vec![0.3 - 1.0, -0.7 - 2.0, 2.5 + 1.0, 1.25 - 0.5]);
    }

    #[test]
    fn single_agent_aggregate_equals_agent() {
        let p = double_well_problem(&[0.3]).unwrap();
        let w = [0.7];
        assert_eq!(p.aggregate_value(&w).unwrap(), p.agent(0).value(&w));
        assert_eq!(p.aggregate_gradient(&w).unwrap(), p.agent(0).gradient(&w));
    }

    #[test]
    fn length_mismatch_rejected() {
        let p = quadratic_problem(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert!(matches!(
            p.aggregate_value(&[0.0; 3]),
            Err(ProblemError::DimensionMismatch { expected: 4, actual: 3 })
        ));
        assert!(p.aggregate_gradient(&[0.0; 5]).is_err());
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let a: Arc<dyn Objective> = Arc::new(Quadratic::new(vec![vec![0.0, 0.0]]).unwrap());
        let b: Arc<dyn Objective> = Arc::new(Quadratic::new(vec![vec![0.0]]).unwrap());
        assert!(matches!(Problem::new(vec![a, b]), Err(ProblemError::DimensionMismatch { .. })));
        assert!(matches!(Problem::new(vec![]), Err(ProblemError::NoAgents)));
    }
}
