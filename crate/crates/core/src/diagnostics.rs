//! Quantities from the convergence analysis, evaluated on a stacked state
//! `w = [w_1; ...; w_n]` without ever forming `L (x) I` or `11^T (x) I`.

use thiserror::Error;

use crate::graph::Graph;
use crate::problems::{Problem, ProblemError};
use crate::schedule::StepSchedule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("rate fit needs at least {needed} points in the window, found {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("rate fit requires positive values; got {value} at k = {k}")]
    NonPositive { k: u64, value: f64 },
    #[error("invalid window: k_min = {0} must be below k_max = {1}")]
    Window(u64, u64),
    #[error("series have different iteration grids")]
    GridMismatch,
}

/// Minimum number of points accepted by [`fit_decay_rate`].
pub const MIN_FIT_POINTS: usize = 10;

fn block_mean(w: &[f64], n: usize, d: usize) -> Vec<f64> {
    assert_eq!(w.len(), n * d, "stacked vector length must be n * d_w");
    let mut mean = vec![0.0; d];
    for block in w.chunks_exact(d) {
        for (m, x) in mean.iter_mut().zip(block) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    mean
}

/// `||(M (x) I) w||^2 = sum_i ||w_i - w_bar||^2` with `M = I - 11^T/n`.
///
/// Panics if `w.len() != n * d`.
pub fn consensus_error(w: &[f64], n: usize, d: usize) -> f64 {
    let mean = block_mean(w, n, d);
    w.chunks_exact(d)
        .map(|block| block.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>())
        .sum()
}

/// `w^T (L (x) I) w = sum_{(i,j) in E} ||w_i - w_j||^2`.
pub fn laplacian_quadratic_form(graph: &Graph, w: &[f64], d: usize) -> f64 {
    assert_eq!(w.len(), graph.agents() * d, "stacked vector length must be n * d_w");
    graph
        .edges()
        .iter()
        .map(|&(i, j)| {
            let (a, b) = (&w[i * d..(i + 1) * d], &w[j * d..(j + 1) * d]);
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
        })
        .sum()
}

/// `(L (x) I) w`, block `i` being `sum_j a_ij (w_i - w_j)`.
pub fn laplacian_apply(graph: &Graph, w: &[f64], d: usize) -> Vec<f64> {
    assert_eq!(w.len(), graph.agents() * d, "stacked vector length must be n * d_w");
    let mut out = vec![0.0; w.len()];
    for (i, block) in out.chunks_exact_mut(d).enumerate() {
        let wi = &w[i * d..(i + 1) * d];
        for &j in graph.neighbors(i) {
            let wj = &w[j * d..(j + 1) * d];
            for ((o, x), y) in block.iter_mut().zip(wi).zip(wj) {
                *o += x - y;
            }
        }
    }
    out
}

/// `V = F(w) + (1/(2 gamma)) w^T (L (x) I) w` for an explicit `gamma > 0`.
pub fn lyapunov_with_gamma(problem: &Problem, graph: &Graph, gamma: f64, w: &[f64]) -> Result<f64, ProblemError> {
    let f = problem.aggregate_value(w)?;
    Ok(f + laplacian_quadratic_form(graph, w, problem.dim()) / (2.0 * gamma))
}

/// Lyapunov function at iteration `k` with `gamma_k = alpha_k / beta_k`.
pub fn lyapunov(
    problem: &Problem,
    graph: &Graph,
    schedule: &StepSchedule,
    k: u64,
    w: &[f64],
) -> Result<f64, ProblemError> {
    lyapunov_with_gamma(problem, graph, schedule.gamma(k), w)
}

/// `grad V = grad F(w) + (1/gamma) (L (x) I) w`.
pub fn lyapunov_gradient_with_gamma(
    problem: &Problem,
    graph: &Graph,
    gamma: f64,
    w: &[f64],
) -> Result<Vec<f64>, ProblemError> {
    let mut grad = problem.aggregate_gradient(w)?;
    let lw = laplacian_apply(graph, w, problem.dim());
    for (g, l) in grad.iter_mut().zip(lw) {
        *g += l / gamma;
    }
    Ok(grad)
}

pub fn lyapunov_gradient(
    problem: &Problem,
    graph: &Graph,
    schedule: &StepSchedule,
    k: u64,
    w: &[f64],
) -> Result<Vec<f64>, ProblemError> {
    lyapunov_gradient_with_gamma(problem, graph, schedule.gamma(k), w)
}

fn average_blocks(grad: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mean = block_mean(grad, n, d);
    let mut out = Vec::with_capacity(grad.len());
    for _ in 0..n {
        out.extend_from_slice(&mean);
    }
    out
}

/// `(1/n)(11^T (x) I) grad F(w)`: every block is the mean agent gradient.
pub fn averaged_gradient(problem: &Problem, w: &[f64]) -> Result<Vec<f64>, ProblemError> {
    let grad = problem.aggregate_gradient(w)?;
    Ok(average_blocks(&grad, problem.agents(), problem.dim()))
}

/// `||avg grad F||^2 = n * ||mean_i grad f_i(w_i)||^2`.
pub fn averaged_gradient_norm_sq(problem: &Problem, w: &[f64]) -> Result<f64, ProblemError> {
    let grad = problem.aggregate_gradient(w)?;
    let mean = block_mean(&grad, problem.agents(), problem.dim());
    Ok(problem.agents() as f64 * mean.iter().map(|m| m * m).sum::<f64>())
}

/// All per-iteration diagnostics for one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub risk: f64,
    pub consensus_error: f64,
    pub avg_grad_norm_sq: f64,
    pub lyapunov: f64,
}

pub fn snapshot(problem: &Problem, graph: &Graph, gamma: f64, w: &[f64]) -> Result<Snapshot, ProblemError> {
    let n = problem.agents();
    let d = problem.dim();
    let risk = problem.aggregate_value(w)?;
    let grad = problem.aggregate_gradient(w)?;
    let mean = block_mean(&grad, n, d);
    Ok(Snapshot {
        risk,
        consensus_error: consensus_error(w, n, d),
        avg_grad_norm_sq: n as f64 * mean.iter().map(|m| m * m).sum::<f64>(),
        lyapunov: risk + laplacian_quadratic_form(graph, w, d) / (2.0 * gamma),
    })
}

/// Least-squares fit of `ln(value)` against `ln(k + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (u64, u64),
    pub points: usize,
}

impl RateFit {
    pub const CSV_HEADER: &'static str = "quantity,slope,r2,kmin,kmax,seeds";

    pub fn csv_row(&self, quantity: &str, seeds: usize) -> String {
        format!(
            "{quantity},{},{},{},{},{seeds}",
            self.slope, self.r_squared, self.window.0, self.window.1
        )
    }
}

/// Fits the decay exponent over points with `k` in `[window.0, window.1]`.
pub fn fit_decay_rate(series: &[(u64, f64)], window: (u64, u64)) -> Result<RateFit, DiagnosticsError> {
    let (k_min, k_max) = window;
    if k_min >= k_max {
        return Err(DiagnosticsError::Window(k_min, k_max));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(k, v) in series.iter().filter(|(k, _)| (k_min..=k_max).contains(k)) {
        if !(v > 0.0 && v.is_finite()) {
            return Err(DiagnosticsError::NonPositive { k, value: v });
        }
        xs.push(((k + 1) as f64).ln());
        ys.push(v.ln());
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(DiagnosticsError::TooFewPoints {
            needed: MIN_FIT_POINTS,
            found: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r_squared = if syy <= f64::EPSILON * n * my.abs().max(1.0) {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        window,
        points: xs.len(),
    })
}

/// Default fit window: drops the first 10% of iterations as burn-in.
pub fn default_window(k_max: u64) -> (u64, u64) {
    (k_max / 10, k_max)
}

/// Pointwise mean of series sampled on the same iteration grid.
pub fn mean_series(runs: &[Vec<(u64, f64)>]) -> Result<Vec<(u64, f64)>, DiagnosticsError> {
    let Some(first) = runs.first() else {
        return Ok(Vec::new());
    };
    let mut out: Vec<(u64, f64)> = first.iter().map(|&(k, _)| (k, 0.0)).collect();
    for run in runs {
        if run.len() != out.len() {
            return Err(DiagnosticsError::GridMismatch);
        }
        for ((k, acc), (k2, v)) in out.iter_mut().zip(run) {
            if k != k2 {
                return Err(DiagnosticsError::GridMismatch);
            }
            *acc += v;
        }
    }
    for (_, v) in &mut out {
        *v /= runs.len() as f64;
    }
    Ok(out)
}
