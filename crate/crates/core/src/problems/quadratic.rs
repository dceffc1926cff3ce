use std::sync::Arc;

use super::{Objective, Problem, ProblemError};

/// `f(w) = (1/m) sum_j 1/2 ||w - p_j||^2`, minimized at the mean of the points.
#[derive(Debug, Clone)]
pub struct Quadratic {
    points: Vec<Vec<f64>>,
    center: Vec<f64>,
}

impl Quadratic {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Quadratic, ProblemError> {
        let dim = points.first().ok_or(ProblemError::NoSamples)?.len();
        for p in &points {
            if p.len() != dim {
                return Err(ProblemError::DimensionMismatch {
                    expected: dim,
                    actual: p.len(),
                });
            }
        }
        let m = points.len() as f64;
        let center = (0..dim)
            .map(|c| points.iter().map(|p| p[c]).sum::<f64>() / m)
            .collect();
        Ok(Quadratic { points, center })
    }

    /// Mean of the sample points.
    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn num_samples(&self) -> usize {
        self.points.len()
    }

    fn value(&self, w: &[f64]) -> f64 {
        let total: f64 = self
            .points
            .iter()
            .map(|p| 0.5 * w.iter().zip(p).map(|(x, c)| (x - c) * (x - c)).sum::<f64>())
            .sum();
        total / self.points.len() as f64
    }

    fn add_sample_gradient(&self, w: &[f64], j: usize, scale: f64, out: &mut [f64]) {
        for ((o, x), c) in out.iter_mut().zip(w).zip(&self.points[j]) {
            *o += scale * (x - c);
        }
    }

    fn add_gradient(&self, w: &[f64], scale: f64, out: &mut [f64]) {
        for ((o, x), c) in out.iter_mut().zip(w).zip(&self.center) {
            *o += scale * (x - c);
        }
    }
}

/// One single-sample quadratic per agent, `f_i(w) = 1/2 ||w - c_i||^2`.
pub fn quadratic_problem(centers: &[Vec<f64>]) -> Result<Problem, ProblemError> {
    quadratic_problem_with_samples(centers.iter().map(|c| vec![c.clone()]).collect())
}

/// Agent `i` averages over `samples[i]`; its minimizer is the mean of those points.
pub fn quadratic_problem_with_samples(samples: Vec<Vec<Vec<f64>>>) -> Result<Problem, ProblemError> {
    let agents = samples
        .into_iter()
        .map(|pts| Quadratic::new(pts).map(|q| Arc::new(q) as Arc<dyn Objective>))
        .collect::<Result<Vec<_>, _>>()?;
    Problem::new(agents)
}

/// Minimizer of `sum_i f_i` for a quadratic problem: the mean of agent centers.
pub fn quadratic_minimizer(agents: &[&Quadratic]) -> Vec<f64> {
    let dim = agents[0].dim();
    (0..dim)
        .map(|c| agents.iter().map(|q| q.center[c]).sum::<f64>() / agents.len() as f64)
        .collect()
}
