//! Synchronous simulation of the consensus SGD recursion.
//!
//! Each round every agent reads the pre-step states of its neighbors:
//!
//! ```text
//! w_i <- w_i - beta_k * sum_{j in N(i)} (w_i - w_j) - alpha_k * g_i(w_i)
//! ```
//!
//! Agents may be updated in parallel since they write disjoint blocks and
//! draw from private random streams; results do not depend on worker count.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::diagnostics::{self, Snapshot};
use crate::graph::{Graph, Topology};
use crate::oracle::{agent_stream, GradientOracle, OracleConfig, OracleError};
use crate::problems::checkpoint::{write_checkpoint, CheckpointError};
use crate::problems::{Objective, Problem, ProblemError};
use crate::schedule::StepSchedule;

/// Initialization streams are offset from oracle streams so the two never overlap.
const INIT_STREAM_BASE: u64 = 1 << 32;

/// Below this many stacked coordinates a step runs on the calling thread.
const PARALLEL_THRESHOLD: usize = 1 << 14;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("divergence at iteration {k}: agent {agent} has a non-finite parameter")]
    Diverged { k: u64, agent: usize },
    #[error("graph has {graph} agents but the problem has {problem}")]
    AgentMismatch { graph: usize, problem: usize },
    #[error("state length {actual} does not match {agents} agents x {dim}")]
    StateMismatch { agents: usize, dim: usize, actual: usize },
    #[error("metrics cadence must be at least 1")]
    Cadence,
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("metrics sink: {0}")]
    Sink(String),
}

/// Stacked parameters `w = [w_1; ...; w_n]` and the iteration counter.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    k: u64,
    agents: usize,
    dim: usize,
    w: Vec<f64>,
}

impl NetworkState {
    pub fn new(agents: usize, dim: usize, w: Vec<f64>) -> Result<Self, EngineError> {
        if w.len() != agents * dim {
            return Err(EngineError::StateMismatch {
                agents,
                dim,
                actual: w.len(),
            });
        }
        Ok(NetworkState { k: 0, agents, dim, w })
    }

    /// Every agent starts at `point`.
    pub fn consensual(agents: usize, point: &[f64]) -> Self {
        let w = point.iter().copied().cycle().take(agents * point.len()).collect();
        NetworkState {
            k: 0,
            agents,
            dim: point.len(),
            w,
        }
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.w[i * self.dim..(i + 1) * self.dim]
    }

    pub fn into_parameters(self) -> Vec<f64> {
        self.w
    }
}

/// Initial condition for every agent.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Zeros,
    /// Independent uniform draws on `[-half_width, half_width]` per agent.
    Uniform { half_width: f64 },
    /// Same point for all agents.
    Point(Vec<f64>),
    Stacked(Vec<f64>),
}

pub fn initial_state(agents: usize, dim: usize, init: &Init, seed: u64) -> Result<NetworkState, EngineError> {
    use rand::Rng;
    match init {
        Init::Zeros => NetworkState::new(agents, dim, vec![0.0; agents * dim]),
        Init::Uniform { half_width } => {
            let mut w = Vec::with_capacity(agents * dim);
            for i in 0..agents {
                let mut rng = agent_stream(seed, INIT_STREAM_BASE + i as u64);
                w.extend((0..dim).map(|_| rng.gen_range(-half_width..=*half_width)));
            }
            NetworkState::new(agents, dim, w)
        }
        Init::Point(p) => {
            if p.len() != dim {
                return Err(EngineError::StateMismatch {
                    agents: 1,
                    dim,
                    actual: p.len(),
                });
            }
            Ok(NetworkState::consensual(agents, p))
        }
        Init::Stacked(w) => NetworkState::new(agents, dim, w.clone()),
    }
}

/// Consensus-plus-gradient update for agent `i` given its direction:
/// `out = w_i - beta * sum_j (w_i - w_j) - alpha * direction`.
fn mix_block(graph: &Graph, w: &[f64], dim: usize, i: usize, beta: f64, out: &mut [f64]) {
    let wi = &w[i * dim..(i + 1) * dim];
    let block = |j: usize| &w[j * dim..(j + 1) * dim];
    // Single pass over memory for the common low-degree cases.
    match graph.neighbors(i) {
        [] => out.copy_from_slice(wi),
        &[a] => {
            for ((o, x), y) in out.iter_mut().zip(wi).zip(block(a)) {
                *o = x - beta * (x - y);
            }
        }
        &[a, b] => {
            for (((o, x), y), z) in out.iter_mut().zip(wi).zip(block(a)).zip(block(b)) {
                *o = x - beta * ((x - y) + (x - z));
            }
        }
        neighbors => {
            out.fill(0.0);
            for &j in neighbors {
                for ((o, x), y) in out.iter_mut().zip(wi).zip(block(j)) {
                    *o += x - y;
                }
            }
            for (o, x) in out.iter_mut().zip(wi) {
                *o = x - beta * *o;
            }
        }
    }
}

/// One synchronous update with externally supplied directions `g` (stacked).
pub fn consensus_update(graph: &Graph, w: &[f64], directions: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    let n = graph.agents();
    assert_eq!(w.len(), directions.len());
    assert_eq!(w.len() % n, 0);
    let dim = w.len() / n;
    let mut out = vec![0.0; w.len()];
    for (i, block) in out.chunks_exact_mut(dim).enumerate() {
        mix_block(graph, w, dim, i, beta, block);
        for (o, g) in block.iter_mut().zip(&directions[i * dim..(i + 1) * dim]) {
            *o -= alpha * g;
        }
    }
    out
}

/// Graph, schedule, problem and per-agent oracles for one run.
pub struct Simulation {
    graph: Arc<Graph>,
    schedule: StepSchedule,
    problem: Arc<Problem>,
    oracles: Vec<GradientOracle>,
    next: Vec<f64>,
    parallel: bool,
}

impl Simulation {
    pub fn new(
        graph: Arc<Graph>,
        schedule: StepSchedule,
        problem: Arc<Problem>,
        oracle: &OracleConfig,
    ) -> Result<Self, EngineError> {
        if graph.agents() != problem.agents() {
            return Err(EngineError::AgentMismatch {
                graph: graph.agents(),
                problem: problem.agents(),
            });
        }
        let oracles = (0..problem.agents())
            .map(|i| GradientOracle::new(oracle, i, problem.agent(i)))
            .collect::<Result<Vec<_>, _>>()?;
        let parallel = problem.agents() * problem.dim() >= PARALLEL_THRESHOLD;
        Ok(Simulation {
            graph,
            schedule,
            problem,
            oracles,
            next: Vec::new(),
            parallel,
        })
    }

    /// Overrides the automatic choice between threaded and serial agent updates.
    pub fn set_parallel(&mut self, parallel: bool) {
        self.parallel = parallel;
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn schedule(&self) -> &StepSchedule {
        &self.schedule
    }

    fn check_state(&self, state: &NetworkState) -> Result<(), EngineError> {
        if state.agents != self.problem.agents() || state.dim != self.problem.dim() {
            return Err(EngineError::StateMismatch {
                agents: self.problem.agents(),
                dim: self.problem.dim(),
                actual: state.w.len(),
            });
        }
        Ok(())
    }

    /// Advances `state` by one round and returns `||w_{k+1} - w_k||^2`.
    pub fn step(&mut self, state: &mut NetworkState) -> Result<f64, EngineError> {
        self.check_state(state)?;
        let k = state.k;
        let alpha = self.schedule.alpha(k);
        let beta = self.schedule.beta(k);
        let dim = state.dim;
        let graph = &*self.graph;
        let problem = &*self.problem;
        let w = &state.w;
        self.next.resize(w.len(), 0.0);

        let update = |(i, (out, oracle)): (usize, (&mut [f64], &mut GradientOracle))| {
            mix_block(graph, w, dim, i, beta, out);
            oracle.add_direction(problem.agent(i), &w[i * dim..(i + 1) * dim], -alpha, out);
        };
        if self.parallel {
            self.next
                .par_chunks_mut(dim)
                .zip(self.oracles.par_iter_mut())
                .enumerate()
                .for_each(update);
        } else {
            self.next
                .chunks_mut(dim)
                .zip(self.oracles.iter_mut())
                .enumerate()
                .for_each(update);
        }

        let step_norm_sq: f64 = self
            .next
            .iter()
            .zip(w)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if !step_norm_sq.is_finite() {
            let agent = self
                .next
                .chunks(dim)
                .position(|block| block.iter().any(|v| !v.is_finite()))
                .unwrap_or(0);
            return Err(EngineError::Diverged { k, agent });
        }
        std::mem::swap(&mut state.w, &mut self.next);
        state.k += 1;
        Ok(step_norm_sq)
    }

    /// Diagnostics of `state` at its current iteration.
    pub fn snapshot(&self, state: &NetworkState) -> Result<Snapshot, EngineError> {
        Ok(diagnostics::snapshot(
            &self.problem,
            &self.graph,
            self.schedule.gamma(state.k),
            &state.w,
        )?)
    }
}

/// One row of the metrics stream. Missing values are written as empty fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub k: u64,
    pub alpha: f64,
    pub beta: Option<f64>,
    pub risk: f64,
    pub consensus_error: Option<f64>,
    pub avg_grad_norm_sq: f64,
    pub lyapunov: f64,
    pub step_norm_sq: Option<f64>,
}

impl MetricsRecord {
    pub const CSV_HEADER: [&'static str; 8] = [
        "k",
        "alpha",
        "beta",
        "risk",
        "consensus_error",
        "avg_grad_norm_sq",
        "lyapunov",
        "step_norm_sq",
    ];

    pub fn csv_fields(&self) -> [String; 8] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.k.to_string(),
            self.alpha.to_string(),
            opt(self.beta),
            self.risk.to_string(),
            opt(self.consensus_error),
            self.avg_grad_norm_sq.to_string(),
            self.lyapunov.to_string(),
            opt(self.step_norm_sq),
        ]
    }
}

pub trait MetricsSink {
    fn record(&mut self, record: &MetricsRecord) -> Result<(), EngineError>;
}

impl MetricsSink for Vec<MetricsRecord> {
    fn record(&mut self, record: &MetricsRecord) -> Result<(), EngineError> {
        self.push(*record);
        Ok(())
    }
}

/// Streams records as CSV with the fixed header.
pub struct CsvMetricsSink<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> CsvMetricsSink<W> {
    pub fn new(inner: W) -> Result<Self, EngineError> {
        let mut writer = csv::Writer::from_writer(inner);
        writer
            .write_record(MetricsRecord::CSV_HEADER)
            .map_err(|e| EngineError::Sink(e.to_string()))?;
        Ok(CsvMetricsSink { writer })
    }

    pub fn finish(mut self) -> Result<W, EngineError> {
        self.writer.flush().map_err(|e| EngineError::Sink(e.to_string()))?;
        self.writer
            .into_inner()
            .map_err(|e| EngineError::Sink(e.to_string()))
    }
}

impl<W: Write> MetricsSink for CsvMetricsSink<W> {
    fn record(&mut self, record: &MetricsRecord) -> Result<(), EngineError> {
        self.writer
            .write_record(record.csv_fields())
            .map_err(|e| EngineError::Sink(e.to_string()))
    }
}

/// Forwards to two sinks.
pub struct Tee<'a, A: MetricsSink + ?Sized, B: MetricsSink + ?Sized>(pub &'a mut A, pub &'a mut B);

impl<A: MetricsSink + ?Sized, B: MetricsSink + ?Sized> MetricsSink for Tee<'_, A, B> {
    fn record(&mut self, record: &MetricsRecord) -> Result<(), EngineError> {
        self.0.record(record)?;
        self.1.record(record)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub iterations: u64,
    /// Record every `cadence` iterations, plus the first and last.
    pub cadence: u64,
    /// When set, `agent_<i>.ckpt` and `stacked.ckpt` are written here at the end.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            iterations: 1000,
            cadence: 100,
            checkpoint_dir: None,
        }
    }
}

fn record_for(sim: &Simulation, state: &NetworkState, step_norm_sq: Option<f64>) -> Result<MetricsRecord, EngineError> {
    let snap = sim.snapshot(state)?;
    let k = state.k;
    Ok(MetricsRecord {
        k,
        alpha: sim.schedule.alpha(k),
        beta: Some(sim.schedule.beta(k)),
        risk: snap.risk,
        consensus_error: Some(snap.consensus_error),
        avg_grad_norm_sq: snap.avg_grad_norm_sq,
        lyapunov: snap.lyapunov,
        step_norm_sq,
    })
}

/// Runs `cfg.iterations` rounds, emitting diagnostics of the pre-step state
/// together with the realized step norm at every recorded iteration.
pub fn run(
    sim: &mut Simulation,
    mut state: NetworkState,
    cfg: &RunConfig,
    sink: &mut dyn MetricsSink,
) -> Result<NetworkState, EngineError> {
    if cfg.cadence == 0 {
        return Err(EngineError::Cadence);
    }
    sim.check_state(&state)?;
    let start = state.k;
    let end = start + cfg.iterations;
    if cfg.iterations == 0 {
        sink.record(&record_for(sim, &state, None)?)?;
    }
    while state.k < end {
        let rel = state.k - start;
        let pending = if rel % cfg.cadence == 0 || state.k + 1 == end {
            Some(record_for(sim, &state, None)?)
        } else {
            None
        };
        let step_norm_sq = sim.step(&mut state)?;
        if let Some(mut record) = pending {
            record.step_norm_sq = Some(step_norm_sq);
            sink.record(&record)?;
        }
    }
    if let Some(dir) = &cfg.checkpoint_dir {
        write_checkpoints(dir, &state)?;
    }
    Ok(state)
}

pub fn write_checkpoints(dir: &std::path::Path, state: &NetworkState) -> Result<(), EngineError> {
    std::fs::create_dir_all(dir).map_err(CheckpointError::from)?;
    for i in 0..state.agents {
        write_checkpoint(&dir.join(format!("agent_{i}.ckpt")), state.block(i))?;
    }
    write_checkpoint(&dir.join("stacked.ckpt"), &state.w)?;
    Ok(())
}

struct CentralizedSink<'a>(&'a mut dyn MetricsSink);

impl MetricsSink for CentralizedSink<'_> {
    fn record(&mut self, record: &MetricsRecord) -> Result<(), EngineError> {
        self.0.record(&MetricsRecord {
            beta: None,
            consensus_error: None,
            ..*record
        })
    }
}

/// Plain SGD `w <- w - alpha_k g(w)` on a single pooled objective.
///
/// Implemented as the one-agent network, so it coincides with [`run`] on a
/// single node with the same seed; the consensus columns are left empty.
pub fn centralized_run(
    objective: Arc<dyn Objective>,
    schedule: StepSchedule,
    oracle: &OracleConfig,
    w0: Vec<f64>,
    cfg: &RunConfig,
    sink: &mut dyn MetricsSink,
) -> Result<Vec<f64>, EngineError> {
    let dim = objective.dim();
    let graph = Arc::new(Graph::build(&Topology::Ring(1)).expect("single node graph"));
    let problem = Arc::new(Problem::new(vec![objective])?);
    let mut sim = Simulation::new(graph, schedule, problem, oracle)?;
    let state = NetworkState::new(1, dim, w0)?;
    let state = run(&mut sim, state, cfg, &mut CentralizedSink(sink))?;
    Ok(state.into_parameters())
}
