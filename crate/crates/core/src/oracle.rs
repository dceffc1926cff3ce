//! Stochastic gradient directions: single-sample, mini-batch, and mini-batch
//! scaled by a fixed symmetric positive definite matrix.
//!
//! Every agent draws from its own ChaCha stream, keyed by `(seed, agent)`, so
//! the sequence of sampled indices does not depend on the order in which
//! agents are evaluated.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::problems::Objective;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("mini-batch size must be at least 1")]
    EmptyBatch,
    #[error("mini-batch size {batch} exceeds the {samples} available samples (without replacement)")]
    BatchTooLarge { batch: usize, samples: usize },
    #[error("scaling matrix has dimension {actual}, expected {expected}")]
    ScalingDimension { expected: usize, actual: usize },
    #[error("scaling matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("unknown {what} `{value}`")]
    Parse { what: &'static str, value: String },
}

/// Fixed positive definite scaling `H_i`.
#[derive(Debug, Clone, PartialEq)]
pub enum Scaling {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl Scaling {
    fn dim(&self) -> usize {
        match self {
            Scaling::Diagonal(d) => d.len(),
            Scaling::Dense(m) => m.nrows(),
        }
    }

    fn validate(&self) -> Result<(), OracleError> {
        match self {
            Scaling::Diagonal(d) => {
                if d.iter().all(|&v| v.is_finite() && v > 0.0) {
                    Ok(())
                } else {
                    Err(OracleError::NotPositiveDefinite)
                }
            }
            Scaling::Dense(m) => {
                if !m.is_square() {
                    return Err(OracleError::ScalingDimension {
                        expected: m.nrows(),
                        actual: m.ncols(),
                    });
                }
                let tol = 1e-12 * m.amax().max(1.0);
                if (m - m.transpose()).amax() > tol || m.clone().cholesky().is_none() {
                    return Err(OracleError::NotPositiveDefinite);
                }
                Ok(())
            }
        }
    }

    /// `out = H * v`.
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Diagonal(d) => {
                for ((o, x), h) in out.iter_mut().zip(v).zip(d) {
                    *o = h * x;
                }
            }
            Scaling::Dense(m) => {
                for (r, o) in out.iter_mut().enumerate() {
                    *o = (0..v.len()).map(|c| m[(r, c)] * v[c]).sum();
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleMode {
    Single,
    MiniBatch { batch: usize },
    Scaled { batch: usize, scaling: Scaling },
}

impl OracleMode {
    pub fn batch(&self) -> usize {
        match self {
            OracleMode::Single => 1,
            OracleMode::MiniBatch { batch } | OracleMode::Scaled { batch, .. } => *batch,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// Independent uniform draws.
    #[default]
    WithReplacement,
    /// Shuffled epochs; a trailing partial batch is dropped before reshuffling.
    WithoutReplacement,
}

impl FromStr for Sampling {
    type Err = OracleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "with-replacement" => Ok(Sampling::WithReplacement),
            "without-replacement" => Ok(Sampling::WithoutReplacement),
            other => Err(OracleError::Parse {
                what: "sampling",
                value: other.to_string(),
            }),
        }
    }
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampling::WithReplacement => "with-replacement",
            Sampling::WithoutReplacement => "without-replacement",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub mode: OracleMode,
    pub sampling: Sampling,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            mode: OracleMode::Single,
            sampling: Sampling::WithReplacement,
            seed: 0,
        }
    }
}

impl OracleConfig {
    /// Checks the batch size against `samples` and the scaling matrix against `dim`.
    pub fn validate(&self, dim: usize, samples: usize) -> Result<(), OracleError> {
        let batch = self.mode.batch();
        if batch == 0 {
            return Err(OracleError::EmptyBatch);
        }
        if self.sampling == Sampling::WithoutReplacement && batch > samples {
            return Err(OracleError::BatchTooLarge { batch, samples });
        }
        if let OracleMode::Scaled { scaling, .. } = &self.mode {
            if scaling.dim() != dim {
                return Err(OracleError::ScalingDimension {
                    expected: dim,
                    actual: scaling.dim(),
                });
            }
            scaling.validate()?;
        }
        Ok(())
    }
}

/// Per-agent random stream for `seed`: ChaCha8 seeded by `seed`, stream `stream`.
pub fn agent_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One agent's sampler. Not shared between threads.
#[derive(Debug, Clone)]
pub struct GradientOracle {
    mode: OracleMode,
    sampling: Sampling,
    samples: usize,
    rng: ChaCha8Rng,
    perm: Vec<usize>,
    cursor: usize,
    batch_buf: Vec<usize>,
    scratch: Vec<f64>,
}

impl GradientOracle {
    pub fn new(cfg: &OracleConfig, agent: usize, objective: &dyn Objective) -> Result<Self, OracleError> {
        let samples = objective.num_samples();
        cfg.validate(objective.dim(), samples)?;
        let perm: Vec<usize> = (0..samples).collect();
        Ok(GradientOracle {
            mode: cfg.mode.clone(),
            sampling: cfg.sampling,
            samples,
            rng: agent_stream(cfg.seed, agent as u64),
            cursor: samples,
            perm,
            batch_buf: Vec::with_capacity(cfg.mode.batch()),
            scratch: match cfg.mode {
                OracleMode::Scaled { .. } => vec![0.0; objective.dim()],
                _ => Vec::new(),
            },
        })
    }

    /// Draws the next batch of sample indices.
    pub fn draw(&mut self) -> &[usize] {
        let batch = self.mode.batch();
        self.batch_buf.clear();
        match self.sampling {
            Sampling::WithReplacement => {
                for _ in 0..batch {
                    let j = self.rng.gen_range(0..self.samples);
                    self.batch_buf.push(j);
                }
            }
            Sampling::WithoutReplacement => {
                if self.cursor + batch > self.samples {
                    self.perm.shuffle(&mut self.rng);
                    self.cursor = 0;
                }
                self.batch_buf
                    .extend_from_slice(&self.perm[self.cursor..self.cursor + batch]);
                self.cursor += batch;
            }
        }
        &self.batch_buf
    }

    /// `out += scale * g_i(w)` for a freshly drawn batch.
    pub fn add_direction(&mut self, objective: &dyn Objective, w: &[f64], scale: f64, out: &mut [f64]) {
        self.draw();
        let per_sample = 1.0 / self.batch_buf.len() as f64;
        match &self.mode {
            OracleMode::Single | OracleMode::MiniBatch { .. } => {
                for &j in &self.batch_buf {
                    objective.add_sample_gradient(w, j, scale * per_sample, out);
                }
            }
            OracleMode::Scaled { scaling, .. } => {
                let mut avg = vec![0.0; w.len()];
                for &j in &self.batch_buf {
                    objective.add_sample_gradient(w, j, per_sample, &mut avg);
                }
                scaling.apply(&avg, &mut self.scratch);
                for (o, s) in out.iter_mut().zip(&self.scratch) {
                    *o += scale * s;
                }
            }
        }
    }

    /// `g_i(w)` for a freshly drawn batch.
    pub fn sample_direction(&mut self, objective: &dyn Objective, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; w.len()];
        self.add_direction(objective, w, 1.0, &mut out);
        out
    }
}

/// Mean of `trials` independent directions minus the full gradient.
pub fn empirical_bias(
    cfg: &OracleConfig,
    objective: &dyn Objective,
    w: &[f64],
    trials: usize,
) -> Result<Vec<f64>, OracleError> {
    let mut oracle = GradientOracle::new(cfg, 0, objective)?;
    let mut mean = vec![0.0; w.len()];
    let scale = 1.0 / trials.max(1) as f64;
    for _ in 0..trials.max(1) {
        oracle.add_direction(objective, w, scale, &mut mean);
    }
    for (m, g) in mean.iter_mut().zip(objective.gradient(w)) {
        *m -= g;
    }
    Ok(mean)
}
