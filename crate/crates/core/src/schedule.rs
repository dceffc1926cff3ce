//! Diminishing step sizes `alpha_k = a/(eps*k+1)^delta2`, `beta_k = b/(eps*k+1)^delta1`.

use std::fmt;

use thiserror::Error;

use crate::{ValidationMode, Verdict};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("schedule parameter `{name}` must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("step-size conditions violated: {}", failed.join("; "))]
    Violation { failed: Vec<String> },
}

/// Step-size schedule. With `epsilon = 1` this is the canonical
/// `a/(k+1)^delta` form; other values stretch the iteration axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub a: f64,
    pub b: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub epsilon: f64,
}

impl StepSchedule {
    pub fn new(a: f64, b: f64, delta1: f64, delta2: f64) -> Self {
        StepSchedule {
            a,
            b,
            delta1,
            delta2,
            epsilon: 1.0,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    #[inline]
    fn base(&self, k: u64) -> f64 {
        self.epsilon * k as f64 + 1.0
    }

    /// Gradient step size.
    pub fn alpha(&self, k: u64) -> f64 {
        self.a / self.base(k).powf(self.delta2)
    }

    /// Consensus step size.
    pub fn beta(&self, k: u64) -> f64 {
        self.b / self.base(k).powf(self.delta1)
    }

    /// `alpha_k / beta_k`.
    pub fn gamma(&self, k: u64) -> f64 {
        self.alpha(k) / self.beta(k)
    }

    /// `(a/b) / (eps*k+1)^(delta2-delta1)`, algebraically equal to [`gamma`](Self::gamma).
    pub fn gamma_closed_form(&self, k: u64) -> f64 {
        (self.a / self.b) / self.base(k).powf(self.delta2 - self.delta1)
    }

    /// Evaluates every step-size condition. Nonpositive parameters are
    /// rejected outright regardless of mode.
    pub fn validate(&self) -> Result<ScheduleReport, ScheduleError> {
        for (name, value) in [
            ("a", self.a),
            ("b", self.b),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("epsilon", self.epsilon),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ScheduleError::NonPositive { name, value });
            }
        }
        let (d1, d2) = (self.delta1, self.delta2);
        let strict_lt = |lhs: f64, rhs: f64| {
            if lhs < rhs && !near(lhs, rhs) {
                CheckStatus::Pass
            } else if near(lhs, rhs) {
                CheckStatus::Boundary
            } else {
                CheckStatus::Fail
            }
        };
        let lt = |lhs: f64, rhs: f64| if lhs < rhs { CheckStatus::Pass } else { CheckStatus::Fail };
        let checks = vec![
            Check {
                condition: "3*delta1 < delta2",
                lhs: 3.0 * d1,
                rhs: d2,
                status: strict_lt(3.0 * d1, d2),
            },
            Check {
                condition: "delta2 <= 1",
                lhs: d2,
                rhs: 1.0,
                status: if d2 <= 1.0 { CheckStatus::Pass } else { CheckStatus::Fail },
            },
            Check {
                condition: "delta1 + delta2 > 1",
                lhs: 1.0,
                rhs: d1 + d2,
                status: lt(1.0, d1 + d2),
            },
            Check {
                condition: "delta2 > 1/2",
                lhs: 0.5,
                rhs: d2,
                status: lt(0.5, d2),
            },
        ];
        let informational = Check {
            condition: "delta2 > 2*delta1",
            lhs: 2.0 * d1,
            rhs: d2,
            status: lt(2.0 * d1, d2),
        };
        Ok(ScheduleReport {
            checks,
            informational,
        })
    }
}

fn near(x: f64, y: f64) -> bool {
    (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    /// The inequality holds with equality.
    Boundary,
    Fail,
}

/// One inequality `lhs <op> rhs` and its status.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub condition: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub status: CheckStatus,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Boundary => "boundary",
            CheckStatus::Fail => "FAIL",
        };
        write!(f, "{:<20} [{tag}] ({} vs {})", self.condition, self.lhs, self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleReport {
    pub checks: Vec<Check>,
    /// Reported only; never affects the verdict.
    pub informational: Check,
}

impl ScheduleReport {
    pub fn verdict(&self, mode: ValidationMode) -> Verdict {
        let mut verdict = Verdict::Pass;
        for check in &self.checks {
            match (check.status, mode) {
                (CheckStatus::Fail, _) | (CheckStatus::Boundary, ValidationMode::Strict) => {
                    return Verdict::Fail
                }
                (CheckStatus::Boundary, ValidationMode::Compat) => verdict = Verdict::Warn,
                (CheckStatus::Pass, _) => {}
            }
        }
        verdict
    }

    /// `Err` listing the offending conditions when the verdict is `Fail`.
    pub fn enforce(&self, mode: ValidationMode) -> Result<Verdict, ScheduleError> {
        match self.verdict(mode) {
            Verdict::Fail => Err(ScheduleError::Violation {
                failed: self
                    .checks
                    .iter()
                    .filter(|c| match c.status {
                        CheckStatus::Fail => true,
                        CheckStatus::Boundary => mode == ValidationMode::Strict,
                        CheckStatus::Pass => false,
                    })
                    .map(|c| format!("{} does not hold ({} vs {})", c.condition, c.lhs, c.rhs))
                    .collect(),
            }),
            v => Ok(v),
        }
    }
}

impl fmt::Display for ScheduleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for check in &self.checks {
            writeln!(f, "{check}")?;
        }
        write!(f, "{} (informational)", self.informational)
    }
}
