//! Consensus-based distributed stochastic gradient descent.
//!
//! A network of agents, each holding a private objective `f_i`, runs
//!
//! ```text
//! w_i(k+1) = w_i(k) - beta_k * sum_j a_ij (w_i(k) - w_j(k)) - alpha_k * g_i(w_i(k))
//! ```
//!
//! over an undirected communication graph, where `g_i` is a stochastic
//! gradient direction and `alpha_k`, `beta_k` are diminishing step sizes.
//! This crate provides the building blocks (graphs, schedules, objectives,
//! gradient oracles), the synchronous simulation engine, the analysis
//! diagnostics (consensus error, Lyapunov function, averaged gradient, decay
//! rate fits) and a config-driven experiment runner used by the `csgd` binary.

pub mod config;
pub mod data;
pub mod diagnostics;
pub mod engine;
pub mod experiment;
pub mod graph;
pub mod oracle;
pub mod problems;
pub mod schedule;

use std::fmt;
use std::str::FromStr;

/// How strictly step-size and mixing conditions are enforced.
///
/// `Strict` rejects anything that does not satisfy the convergence
/// conditions as written. `Compat` downgrades boundary cases (and the mixing
/// bound) to warnings so that published experimental settings can still run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidationMode {
    Strict,
    #[default]
    Compat,
}

impl FromStr for ValidationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "strict" => Ok(ValidationMode::Strict),
            "compat" => Ok(ValidationMode::Compat),
            other => Err(format!("unknown validation mode `{other}` (expected strict|compat)")),
        }
    }
}

impl fmt::Display for ValidationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationMode::Strict => f.write_str("strict"),
            ValidationMode::Compat => f.write_str("compat"),
        }
    }
}

/// Outcome of a validation that did not hard-fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Warn,
    Fail,
}
