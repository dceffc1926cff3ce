//! Config-driven experiment pipeline behind the `csgd` binary.
//!
//! A run goes data -> partition -> engine -> evaluation and leaves fixed
//! artifacts in the output directory: `metrics.csv`, `summary.csv`,
//! `partition.csv` (data experiments only) and `agent_<i>.ckpt`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::data::{self, DataError, Dataset, Partition, CLASSES};
use crate::diagnostics::{self, DiagnosticsError, RateFit};
use crate::engine::{
    self, centralized_run, initial_state, CsvMetricsSink, EngineError, Init, MetricsRecord, RunConfig,
    Simulation, Tee,
};
use crate::graph::{Graph, GraphError, MixingReport, Topology};
use crate::oracle::{agent_stream, OracleConfig, OracleError, OracleMode, Sampling, Scaling};
use crate::problems::{
    quadratic_problem_with_samples, DoubleWell, NetObjective, Objective, Problem, ProblemError, SigmoidNetSpec,
};
use crate::schedule::{ScheduleError, ScheduleReport, StepSchedule};
use crate::{ValidationMode, Verdict};

/// Stream offset for synthetic fixture generation, disjoint from oracle and init streams.
const FIXTURE_STREAM: u64 = 1 << 40;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {reason}")]
    Csv { path: PathBuf, reason: String },
    #[error("test sets differ: {first} has {first_hash}, {second} has {second_hash}")]
    HashMismatch {
        first: String,
        first_hash: String,
        second: String,
        second_hash: String,
    },
}

impl ExperimentError {
    /// Process exit status: 2 for configuration or validation problems, 3 for divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_)
            | ExperimentError::Invalid(_)
            | ExperimentError::Graph(_)
            | ExperimentError::Schedule(_)
            | ExperimentError::Oracle(_) => 2,
            ExperimentError::Engine(EngineError::Diverged { .. }) => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Centralized,
    DistributedRandom,
    DistributedByClass,
    SyntheticQuadratic,
    SyntheticDoubleWell,
}

impl ExperimentKind {
    pub fn uses_data(self) -> bool {
        matches!(
            self,
            ExperimentKind::Centralized | ExperimentKind::DistributedRandom | ExperimentKind::DistributedByClass
        )
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "centralized" => ExperimentKind::Centralized,
            "distributed-random" => ExperimentKind::DistributedRandom,
            "distributed-by-class" => ExperimentKind::DistributedByClass,
            "synthetic-quadratic" => ExperimentKind::SyntheticQuadratic,
            "synthetic-doublewell" => ExperimentKind::SyntheticDoubleWell,
            other => return Err(format!("unknown experiment `{other}`")),
        })
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Centralized => "centralized",
            ExperimentKind::DistributedRandom => "distributed-random",
            ExperimentKind::DistributedByClass => "distributed-by-class",
            ExperimentKind::SyntheticQuadratic => "synthetic-quadratic",
            ExperimentKind::SyntheticDoubleWell => "synthetic-doublewell",
        })
    }
}

/// Where labelled images come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Idx { images: PathBuf, labels: PathBuf },
    Csv {
        features: PathBuf,
        labels: PathBuf,
        d_in: usize,
        header: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    /// Seeded subset size drawn before splitting; 0 keeps everything.
    pub subset: usize,
    pub n_train: usize,
    /// Seed shared by subset selection and the train/test split, kept apart
    /// from `seed` so runs with different seeds evaluate on the same test set.
    pub split_seed: u64,
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub samples: usize,
    /// Quadratic sample points are uniform on `[-spread, spread]^dim`.
    pub spread: f64,
    /// Double-well per-agent linear tilt.
    pub shift: f64,
    /// Double-well sample offsets are `+offset` and `-offset`.
    pub offset: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            dim: 2,
            samples: 4,
            spread: 1.0,
            shift: 0.0,
            offset: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub graph: Topology,
    pub schedule: StepSchedule,
    pub mode: ValidationMode,
    pub oracle: OracleConfig,
    pub iterations: u64,
    pub cadence: u64,
    pub seed: u64,
    pub init_half_width: f64,
    pub data: Option<DataConfig>,
    pub synthetic: SyntheticConfig,
    pub out: PathBuf,
}

/// Every key accepted in a config file or as a `--key=value` override.
pub const KEYS: &[&str] = &[
    "experiment",
    "graph",
    "iterations",
    "cadence",
    "seed",
    "out",
    "init.half_width",
    "schedule.a",
    "schedule.b",
    "schedule.delta1",
    "schedule.delta2",
    "schedule.epsilon",
    "schedule.mode",
    "oracle.mode",
    "oracle.batch",
    "oracle.sampling",
    "oracle.seed",
    "oracle.scaling",
    "data.format",
    "data.images",
    "data.labels",
    "data.features",
    "data.d_in",
    "data.csv_header",
    "data.subset",
    "data.n_train",
    "data.split_seed",
    "net.hidden",
    "synthetic.dim",
    "synthetic.samples",
    "synthetic.spread",
    "synthetic.shift",
    "synthetic.offset",
];

fn required<'a>(c: &'a Config, key: &str) -> Result<&'a str, ConfigError> {
    c.get(key).ok_or_else(|| ConfigError::Missing(key.to_string()))
}

fn parse_diagonal(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect()
}

impl ExperimentConfig {
    /// Reads the file and applies `--key=value` overrides.
    pub fn load<S: AsRef<str>>(path: &Path, overrides: &[S]) -> Result<ExperimentConfig, ExperimentError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut c = Config::parse(&text)?;
        c.apply_overrides(overrides)?;
        Self::from_config(&c)
    }

    pub fn from_config(c: &Config) -> Result<ExperimentConfig, ExperimentError> {
        c.reject_unknown(KEYS)?;
        let experiment: ExperimentKind = c.parsed("experiment")?.ok_or_else(|| ConfigError::Missing("experiment".into()))?;
        let default_graph = if experiment == ExperimentKind::Centralized {
            Topology::Ring(1)
        } else {
            Topology::Ring(10)
        };
        let graph = c.parsed_or("graph", default_graph)?;
        let schedule = StepSchedule::new(
            c.parsed_or("schedule.a", 1.0)?,
            c.parsed_or("schedule.b", 0.2525)?,
            c.parsed_or("schedule.delta1", 1.0 / 3.0)?,
            c.parsed_or("schedule.delta2", 1.0)?,
        )
        .with_epsilon(c.parsed_or("schedule.epsilon", 1e-5)?);
        let mode = c.parsed_or("schedule.mode", ValidationMode::Compat)?;
        let seed = c.parsed_or("seed", 1u64)?;

        let batch = c.parsed_or("oracle.batch", 1usize)?;
        let mode_name = c.get("oracle.mode").unwrap_or("single");
        let oracle_mode = match mode_name {
            "single" => OracleMode::Single,
            "minibatch" => OracleMode::MiniBatch { batch },
            "scaled" => {
                let diag = parse_diagonal(required(c, "oracle.scaling")?).map_err(|reason| ConfigError::Value {
                    origin: c.origin("oracle.scaling").expect("present"),
                    key: "oracle.scaling".into(),
                    value: c.get("oracle.scaling").unwrap_or_default().into(),
                    reason,
                })?;
                OracleMode::Scaled {
                    batch,
                    scaling: Scaling::Diagonal(diag),
                }
            }
            other => {
                return Err(ExperimentError::Invalid(format!(
                    "oracle.mode `{other}` (expected single|minibatch|scaled)"
                )))
            }
        };
        let oracle = OracleConfig {
            mode: oracle_mode,
            sampling: c.parsed_or("oracle.sampling", Sampling::WithReplacement)?,
            seed: c.parsed_or("oracle.seed", seed)?,
        };

        let data = if experiment.uses_data() {
            let format = c.get("data.format").unwrap_or("idx");
            let source = match format {
                "idx" => DataSource::Idx {
                    images: required(c, "data.images")?.into(),
                    labels: required(c, "data.labels")?.into(),
                },
                "csv" => DataSource::Csv {
                    features: required(c, "data.features")?.into(),
                    labels: required(c, "data.labels")?.into(),
                    d_in: c.parsed_or("data.d_in", 400usize)?,
                    header: c.parsed_or("data.csv_header", false)?,
                },
                other => return Err(ExperimentError::Invalid(format!("data.format `{other}` (expected idx|csv)"))),
            };
            Some(DataConfig {
                source,
                subset: c.parsed_or("data.subset", 5000usize)?,
                n_train: c.parsed_or("data.n_train", 2500usize)?,
                split_seed: c.parsed_or("data.split_seed", 20190601u64)?,
                hidden: c.parsed_or("net.hidden", 50usize)?,
            })
        } else {
            None
        };
        let defaults = SyntheticConfig::default();
        let synthetic = SyntheticConfig {
            dim: c.parsed_or("synthetic.dim", defaults.dim)?,
            samples: c.parsed_or("synthetic.samples", defaults.samples)?,
            spread: c.parsed_or("synthetic.spread", defaults.spread)?,
            shift: c.parsed_or("synthetic.shift", defaults.shift)?,
            offset: c.parsed_or("synthetic.offset", defaults.offset)?,
        };
        let default_half_width = match experiment {
            ExperimentKind::SyntheticQuadratic => 1.0,
            ExperimentKind::SyntheticDoubleWell => 1.5,
            _ => 0.12,
        };
        let cfg = ExperimentConfig {
            experiment,
            graph,
            schedule,
            mode,
            oracle,
            iterations: c.parsed_or("iterations", 3_000_000u64)?,
            cadence: c.parsed_or("cadence", 100u64)?,
            seed,
            init_half_width: c.parsed_or("init.half_width", default_half_width)?,
            data,
            synthetic,
            out: c.get("out").unwrap_or("out").into(),
        };
        cfg.check_shape()?;
        Ok(cfg)
    }

    fn check_shape(&self) -> Result<(), ExperimentError> {
        let agents = self.graph.agents();
        match self.experiment {
            ExperimentKind::Centralized if agents != 1 => {
                return Err(ExperimentError::Invalid(format!(
                    "centralized experiment runs on a single node, graph has {agents}"
                )))
            }
            ExperimentKind::DistributedByClass if agents != CLASSES => {
                return Err(ExperimentError::Invalid(format!(
                    "distributed-by-class needs {CLASSES} agents, graph has {agents}"
                )))
            }
            _ => {}
        }
        if self.cadence == 0 {
            return Err(ExperimentError::Invalid("cadence must be positive".into()));
        }
        if !(self.init_half_width >= 0.0 && self.init_half_width.is_finite()) {
            return Err(ExperimentError::Invalid("init.half_width must be finite and non-negative".into()));
        }
        if self.synthetic.dim == 0 || self.synthetic.samples == 0 {
            return Err(ExperimentError::Invalid("synthetic.dim and synthetic.samples must be positive".into()));
        }
        Ok(())
    }

    /// Every effective parameter, defaults included, as config keys.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut out: Vec<(&str, String)> = vec![
            ("experiment", self.experiment.to_string()),
            ("graph", self.graph.to_string()),
            ("iterations", self.iterations.to_string()),
            ("cadence", self.cadence.to_string()),
            ("seed", self.seed.to_string()),
            ("out", self.out.display().to_string()),
            ("init.half_width", self.init_half_width.to_string()),
            ("schedule.a", self.schedule.a.to_string()),
            ("schedule.b", self.schedule.b.to_string()),
            ("schedule.delta1", self.schedule.delta1.to_string()),
            ("schedule.delta2", self.schedule.delta2.to_string()),
            ("schedule.epsilon", self.schedule.epsilon.to_string()),
            ("schedule.mode", self.mode.to_string()),
            ("oracle.batch", self.oracle.mode.batch().to_string()),
            ("oracle.sampling", self.oracle.sampling.to_string()),
            ("oracle.seed", self.oracle.seed.to_string()),
        ];
        match &self.oracle.mode {
            OracleMode::Single => out.push(("oracle.mode", "single".into())),
            OracleMode::MiniBatch { .. } => out.push(("oracle.mode", "minibatch".into())),
            OracleMode::Scaled { scaling, .. } => {
                out.push(("oracle.mode", "scaled".into()));
                if let Scaling::Diagonal(d) = scaling {
                    let text: Vec<String> = d.iter().map(f64::to_string).collect();
                    out.push(("oracle.scaling", text.join(",")));
                }
            }
        }
        if let Some(d) = &self.data {
            match &d.source {
                DataSource::Idx { images, labels } => {
                    out.push(("data.format", "idx".into()));
                    out.push(("data.images", images.display().to_string()));
                    out.push(("data.labels", labels.display().to_string()));
                }
                DataSource::Csv {
                    features,
                    labels,
                    d_in,
                    header,
                } => {
                    out.push(("data.format", "csv".into()));
                    out.push(("data.features", features.display().to_string()));
                    out.push(("data.labels", labels.display().to_string()));
                    out.push(("data.d_in", d_in.to_string()));
                    out.push(("data.csv_header", header.to_string()));
                }
            }
            out.push(("data.subset", d.subset.to_string()));
            out.push(("data.n_train", d.n_train.to_string()));
            out.push(("data.split_seed", d.split_seed.to_string()));
            out.push(("net.hidden", d.hidden.to_string()));
        } else {
            let s = &self.synthetic;
            out.push(("synthetic.dim", s.dim.to_string()));
            out.push(("synthetic.samples", s.samples.to_string()));
            out.push(("synthetic.spread", s.spread.to_string()));
            out.push(("synthetic.shift", s.shift.to_string()));
            out.push(("synthetic.offset", s.offset.to_string()));
        }
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Rebuilds a config from the `config.*` rows of a `summary.csv`.
    pub fn from_summary(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
        let summary = read_summary(path)?;
        let mut c = Config::default();
        for (k, v) in &summary {
            if let Some(key) = k.strip_prefix("config.") {
                c.set(key, v);
            }
        }
        Self::from_config(&c)
    }
}

/// Outcome of the schedule and mixing checks for a config.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub schedule: ScheduleReport,
    /// Absent for single-node runs, where no mixing happens.
    pub mixing: Option<MixingReport>,
    pub mode: ValidationMode,
}

impl ValidationReport {
    pub fn verdict(&self) -> Verdict {
        let mixing = self.mixing.as_ref().map_or(Verdict::Pass, |m| m.verdict(self.mode));
        match (self.schedule.verdict(self.mode), mixing) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::Warn, _) | (_, Verdict::Warn) => Verdict::Warn,
            _ => Verdict::Pass,
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode: {}", self.mode)?;
        writeln!(f, "{}", self.schedule)?;
        if let Some(m) = &self.mixing {
            writeln!(f, "{m}")?;
        }
        write!(f, "verdict: {:?}", self.verdict())
    }
}

/// Builds the graph and runs the schedule and mixing checks without enforcing them.
pub fn validate(cfg: &ExperimentConfig) -> Result<(Graph, ValidationReport), ExperimentError> {
    let graph = Graph::build(&cfg.graph)?;
    let schedule = cfg.schedule.validate()?;
    let mixing = if graph.agents() > 1 {
        Some(graph.validate_mixing(cfg.schedule.b)?)
    } else {
        None
    };
    Ok((
        graph,
        ValidationReport {
            schedule,
            mixing,
            mode: cfg.mode,
        },
    ))
}

/// Builds the graph and enforces the checks in the configured mode.
pub fn validated_graph(cfg: &ExperimentConfig) -> Result<(Graph, ValidationReport), ExperimentError> {
    let (graph, report) = validate(cfg)?;
    report.schedule.enforce(cfg.mode)?;
    if let Some(m) = &report.mixing {
        m.enforce(cfg.mode)?;
    }
    Ok((graph, report))
}

/// Train and test sets with the content hash of the test set.
pub struct PreparedData {
    pub train: Arc<Dataset>,
    pub test: Dataset,
    pub test_hash: String,
}

pub fn prepare_data(d: &DataConfig) -> Result<PreparedData, ExperimentError> {
    let full = match &d.source {
        DataSource::Idx { images, labels } => data::load_idx(images, labels)?,
        DataSource::Csv {
            features,
            labels,
            d_in,
            header,
        } => data::load_matrix_csv(features, labels, *d_in, *header)?,
    };
    let pool = if d.subset == 0 || d.subset == full.len() {
        full
    } else {
        data::seeded_subset(&full, d.subset, d.split_seed)?
    };
    let (train, test) = data::split_train_test(&pool, d.n_train, d.split_seed)?;
    let test_hash = test.content_hash();
    Ok(PreparedData {
        train: Arc::new(train),
        test,
        test_hash,
    })
}

/// Synthetic fixture plus, for the quadratic, its minimizer (the mean of all agents' centers).
fn synthetic_problem(cfg: &ExperimentConfig, agents: usize) -> Result<(Problem, Option<Vec<f64>>), ExperimentError> {
    let s = &cfg.synthetic;
    let mut rng = agent_stream(cfg.seed, FIXTURE_STREAM);
    match cfg.experiment {
        ExperimentKind::SyntheticQuadratic => {
            let samples: Vec<Vec<Vec<f64>>> = (0..agents)
                .map(|_| {
                    (0..s.samples)
                        .map(|_| (0..s.dim).map(|_| rng.gen_range(-s.spread..=s.spread)).collect())
                        .collect()
                })
                .collect();
            let total = (agents * s.samples) as f64;
            let minimizer = (0..s.dim)
                .map(|c| samples.iter().flatten().map(|p| p[c]).sum::<f64>() / total)
                .collect();
            Ok((quadratic_problem_with_samples(samples)?, Some(minimizer)))
        }
        ExperimentKind::SyntheticDoubleWell => {
            if s.dim != 1 {
                return Err(ExperimentError::Invalid("synthetic-doublewell is one-dimensional".into()));
            }
            let agents: Result<Vec<Arc<dyn Objective>>, ProblemError> = (0..agents)
                .map(|_| {
                    DoubleWell::with_sample_offsets(s.shift, &[s.offset, -s.offset])
                        .map(|d| Arc::new(d) as Arc<dyn Objective>)
                })
                .collect();
            Ok((Problem::new(agents?)?, None))
        }
        _ => unreachable!("data experiments do not use synthetic fixtures"),
    }
}

/// Final results of a run; written as the non-config rows of `summary.csv`.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub values: BTreeMap<String, String>,
}

impl RunSummary {
    fn put(&mut self, key: impl Into<String>, value: impl ToString) {
        self.values.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }
}

fn create_out(dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_summary(path: &Path, cfg: &ExperimentConfig, summary: &RunSummary) -> Result<(), ExperimentError> {
    let file = File::create(path).map_err(io_err(path))?;
    let csv_err = |e: csv::Error| ExperimentError::Csv {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["key", "value"]).map_err(csv_err)?;
    for (k, v) in &summary.values {
        w.write_record([k.as_str(), v.as_str()]).map_err(csv_err)?;
    }
    for (k, v) in cfg.echo() {
        w.write_record([format!("config.{k}"), v]).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a `key,value` summary file.
pub fn read_summary(path: &Path) -> Result<BTreeMap<String, String>, ExperimentError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| ExperimentError::Csv {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| ExperimentError::Csv {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if rec.len() != 2 {
            return Err(ExperimentError::Csv {
                path: path.to_path_buf(),
                reason: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        out.insert(rec[0].to_string(), rec[1].to_string());
    }
    Ok(out)
}

fn record_final(summary: &mut RunSummary, last: Option<&MetricsRecord>) {
    if let Some(r) = last {
        summary.put("final_k", r.k);
        summary.put("final_risk", r.risk);
        summary.put("final_avg_grad_norm_sq", r.avg_grad_norm_sq);
        summary.put("final_lyapunov", r.lyapunov);
        if let Some(c) = r.consensus_error {
            summary.put("final_consensus_error", c);
        }
    }
}

/// Runs one experiment into `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, ExperimentError> {
    let started = Instant::now();
    let (graph, report) = validated_graph(cfg)?;
    if report.verdict() == Verdict::Warn {
        eprintln!("warning: validation passed with warnings\n{report}");
    }
    let graph = Arc::new(graph);
    let agents = graph.agents();
    create_out(&cfg.out)?;

    let metrics_path = cfg.out.join("metrics.csv");
    let metrics_file = File::create(&metrics_path).map_err(io_err(&metrics_path))?;
    let mut csv_sink = CsvMetricsSink::new(BufWriter::new(metrics_file))?;
    let mut records: Vec<MetricsRecord> = Vec::new();
    let run_cfg = RunConfig {
        iterations: cfg.iterations,
        cadence: cfg.cadence,
        checkpoint_dir: None,
    };

    let mut summary = RunSummary::default();
    let mut prepared = None;
    let mut minimizer = None;
    let (problem, partition) = match cfg.experiment {
        ExperimentKind::SyntheticQuadratic | ExperimentKind::SyntheticDoubleWell => {
            let (problem, m) = synthetic_problem(cfg, agents)?;
            minimizer = m;
            (Arc::new(problem), None)
        }
        _ => {
            let data_cfg = cfg.data.as_ref().expect("data experiments carry a data section");
            let p = prepare_data(data_cfg)?;
            let partition = match cfg.experiment {
                ExperimentKind::Centralized => Partition {
                    assignment: vec![(0..p.train.len()).collect()],
                },
                ExperimentKind::DistributedRandom => data::partition_random_equal(p.train.len(), agents, cfg.seed)?,
                _ => data::partition_by_class(&p.train, agents)?,
            };
            let spec = SigmoidNetSpec::new(p.train.d_in(), data_cfg.hidden, CLASSES);
            let nets: Vec<Arc<NetObjective>> = partition
                .assignment
                .iter()
                .map(|idx| NetObjective::new(spec, Arc::clone(&p.train), idx.clone()).map(Arc::new))
                .collect::<Result<_, _>>()?;
            let objectives = nets.iter().map(|n| Arc::clone(n) as Arc<dyn Objective>).collect();
            summary.put("test_set_hash", &p.test_hash);
            summary.put("train_samples", p.train.len());
            summary.put("test_samples", p.test.len());
            prepared = Some((p, spec, nets));
            (Arc::new(Problem::new(objectives)?), Some(partition))
        }
    };

    if let Some(partition) = &partition {
        let path = cfg.out.join("partition.csv");
        let file = File::create(&path).map_err(io_err(&path))?;
        partition
            .write_manifest(BufWriter::new(file))
            .map_err(|e| ExperimentError::Csv {
                path: path.clone(),
                reason: e.to_string(),
            })?;
        let counts: Vec<String> = partition.counts().iter().map(usize::to_string).collect();
        summary.put("samples_per_agent", counts.join(" "));
    }

    cfg.oracle.validate(
        problem.dim(),
        (0..agents).map(|i| problem.agent(i).num_samples()).min().unwrap_or(0),
    )?;
    let init = Init::Uniform {
        half_width: cfg.init_half_width,
    };
    let state = initial_state(agents, problem.dim(), &init, cfg.seed)?;

    let final_w = if cfg.experiment == ExperimentKind::Centralized {
        let w = centralized_run(
            problem.agent_arc(0),
            cfg.schedule,
            &cfg.oracle,
            state.into_parameters(),
            &run_cfg,
            &mut Tee(&mut csv_sink, &mut records),
        )?;
        engine::NetworkState::new(1, problem.dim(), w)?
    } else {
        let mut sim = Simulation::new(Arc::clone(&graph), cfg.schedule, Arc::clone(&problem), &cfg.oracle)?;
        engine::run(&mut sim, state, &run_cfg, &mut Tee(&mut csv_sink, &mut records))?
    };
    csv_sink.finish()?;
    engine::write_checkpoints(&cfg.out, &final_w)?;
    record_final(&mut summary, records.last());
    // The last metrics row describes the state before the final step; report the end state too.
    summary.put("end_risk", problem.aggregate_value(final_w.w())?);

    if let Some((p, spec, nets)) = &prepared {
        let mut rates = Vec::with_capacity(agents);
        let mut risk_sum = 0.0;
        for i in 0..agents {
            let w = final_w.block(i);
            let rate = data::error_rate(spec, w, &p.test)?;
            summary.put(format!("error_rate_agent_{i}"), rate);
            rates.push(rate);
            risk_sum += nets[i].total_loss(w);
            if cfg.experiment == ExperimentKind::DistributedByClass {
                let recall = data::class_recall(spec, w, &p.test)?;
                let mut unseen_ok = 0;
                for (c, r) in recall.iter().enumerate() {
                    if let Some(r) = r {
                        summary.put(format!("recall_agent_{i}_class_{c}"), r);
                        if c != i && *r >= 0.5 {
                            unseen_ok += 1;
                        }
                    }
                }
                summary.put(format!("unseen_classes_recall50_agent_{i}"), unseen_ok);
            }
        }
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        summary.put("error_rate", mean);
        summary.put("error_rate_max", rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        summary.put("end_risk_sum", risk_sum);
    }
    if let Some(minimizer) = &minimizer {
        let worst = (0..agents)
            .map(|i| {
                final_w
                    .block(i)
                    .iter()
                    .zip(minimizer)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        summary.put("max_distance_to_minimizer", worst);
    }
    summary.put("wall_time_s", started.elapsed().as_secs_f64());
    write_summary(&cfg.out.join("summary.csv"), cfg, &summary)?;
    Ok(summary)
}

/// Runs the config once per seed into `<out>/seed_<s>/` and writes
/// `<out>/sweep.csv` with one row per seed, in the given order.
pub fn run_seed_sweep(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<RunSummary>, ExperimentError> {
    const COLUMNS: [&str; 5] = [
        "final_risk",
        "end_risk",
        "final_consensus_error",
        "final_avg_grad_norm_sq",
        "error_rate",
    ];
    create_out(&cfg.out)?;
    let mut summaries = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut c = cfg.clone();
        c.seed = seed;
        c.oracle.seed = seed;
        c.out = cfg.out.join(format!("seed_{seed}"));
        summaries.push(run_experiment(&c)?);
    }
    let path = cfg.out.join("sweep.csv");
    let csv_err = |e: csv::Error| ExperimentError::Csv {
        path: path.clone(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    let mut header = vec!["seed"];
    header.extend(COLUMNS);
    w.write_record(&header).map_err(csv_err)?;
    for (seed, s) in seeds.iter().zip(&summaries) {
        let mut row = vec![seed.to_string()];
        row.extend(COLUMNS.iter().map(|c| s.get(c).unwrap_or("").to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(summaries)
}

/// One row of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparedRun {
    pub label: String,
    pub error_rate: Option<f64>,
    pub final_risk: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub runs: Vec<ComparedRun>,
    /// `(i, j, error_rate_j - error_rate_i)` in percentage points, for `i < j`.
    pub deltas: Vec<(usize, usize, Option<f64>)>,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>, scale: f64| v.map_or_else(|| "-".to_string(), |x| format!("{:.4}", x * scale));
        writeln!(f, "run,error_rate_pct,final_risk")?;
        for r in &self.runs {
            writeln!(f, "{},{},{}", r.label, opt(r.error_rate, 100.0), opt(r.final_risk, 1.0))?;
        }
        writeln!(f, "first,second,delta_pp")?;
        for (i, j, d) in &self.deltas {
            writeln!(f, "{},{},{}", self.runs[*i].label, self.runs[*j].label, opt(*d, 1.0))?;
        }
        Ok(())
    }
}

/// Builds a comparison from labelled summaries; all test-set hashes must agree.
pub fn compare_summaries(runs: &[(String, BTreeMap<String, String>)]) -> Result<Comparison, ExperimentError> {
    if runs.len() < 2 {
        return Err(ExperimentError::Invalid("compare needs at least two summaries".into()));
    }
    let hash = |s: &BTreeMap<String, String>| s.get("test_set_hash").cloned().unwrap_or_else(|| "none".into());
    let (first_label, first) = &runs[0];
    for (label, s) in &runs[1..] {
        if hash(s) != hash(first) {
            return Err(ExperimentError::HashMismatch {
                first: first_label.clone(),
                first_hash: hash(first),
                second: label.clone(),
                second_hash: hash(s),
            });
        }
    }
    let num = |s: &BTreeMap<String, String>, k: &str| s.get(k).and_then(|v| v.parse::<f64>().ok());
    let compared: Vec<ComparedRun> = runs
        .iter()
        .map(|(label, s)| ComparedRun {
            label: label.clone(),
            error_rate: num(s, "error_rate"),
            final_risk: num(s, "final_risk"),
        })
        .collect();
    let mut deltas = Vec::new();
    for i in 0..compared.len() {
        for j in i + 1..compared.len() {
            let d = compared[i]
                .error_rate
                .zip(compared[j].error_rate)
                .map(|(a, b)| 100.0 * (b - a));
            deltas.push((i, j, d));
        }
    }
    Ok(Comparison { runs: compared, deltas })
}

/// Reads and compares `summary.csv` files, labelled by their paths.
pub fn compare_runs(paths: &[PathBuf]) -> Result<Comparison, ExperimentError> {
    let runs: Result<Vec<_>, _> = paths
        .iter()
        .map(|p| read_summary(p).map(|s| (p.display().to_string(), s)))
        .collect();
    compare_summaries(&runs?)
}

/// Reads `(k, column)` from a metrics file, skipping empty cells.
pub fn read_metrics_column(path: &Path, column: &str) -> Result<Vec<(u64, f64)>, ExperimentError> {
    let csv_err = |reason: String| ExperimentError::Csv {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(e.to_string()))?;
    let headers = r.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| csv_err(format!("no column `{name}`")))
    };
    let (k_col, v_col) = (find("k")?, find(column)?);
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(e.to_string()))?;
        let cell = rec.get(v_col).unwrap_or("");
        if cell.is_empty() {
            continue;
        }
        let k = rec[k_col].parse().map_err(|_| csv_err(format!("row {row}: bad k")))?;
        let v = cell.parse().map_err(|_| csv_err(format!("row {row}: bad {column}")))?;
        out.push((k, v));
    }
    Ok(out)
}

/// Log-log decay fit of one metrics column over `window` (default: drop the first 10%).
pub fn ratefit(path: &Path, column: &str, window: Option<(u64, u64)>) -> Result<RateFit, ExperimentError> {
    let series = read_metrics_column(path, column)?;
    let k_max = series.last().map_or(0, |(k, _)| *k);
    let window = window.unwrap_or_else(|| diagnostics::default_window(k_max));
    Ok(diagnostics::fit_decay_rate(&series, window)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(extra: &str) -> ExperimentConfig {
        let c = Config::parse(&format!("experiment = synthetic-quadratic\n{extra}")).unwrap();
        ExperimentConfig::from_config(&c).unwrap()
    }

    #[test]
    fn defaults_follow_reference_setting() {
        let c = synthetic("");
        assert_eq!(c.graph, Topology::Ring(10));
        assert_eq!(c.schedule.b, 0.2525);
        assert_eq!(c.schedule.delta1, 1.0 / 3.0);
        assert_eq!(c.schedule.epsilon, 1e-5);
        assert_eq!(c.iterations, 3_000_000);
        assert_eq!(c.mode, ValidationMode::Compat);
        assert_eq!(c.oracle.mode, OracleMode::Single);
    }

    #[test]
    fn echo_roundtrips() {
        let c = synthetic("graph = path:4\n[schedule]\nb = 0.2\n[oracle]\nmode = minibatch\nbatch = 3\n");
        let mut text = String::new();
        for (k, v) in c.echo() {
            text.push_str(&format!("{k} = {v}\n"));
        }
        let back = ExperimentConfig::from_config(&Config::parse(&text).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn config_errors() {
        let c = Config::parse("experiment = synthetic-quadratic\nsede = 3\n").unwrap();
        assert!(matches!(
            ExperimentConfig::from_config(&c),
            Err(ExperimentError::Config(ConfigError::UnknownKey { .. }))
        ));
        let c = Config::parse("experiment = distributed-by-class\ngraph = ring:5\ndata.images = a\ndata.labels = b\n").unwrap();
        let err = ExperimentConfig::from_config(&c).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("needs 10 agents"));
        let c = Config::parse("graph = ring:5\n").unwrap();
        assert!(matches!(
            ExperimentConfig::from_config(&c),
            Err(ExperimentError::Config(ConfigError::Missing(_)))
        ));
    }

    #[test]
    fn strict_mode_rejects_reference_exponents() {
        let c = synthetic("schedule.mode = strict\n");
        let err = validated_graph(&c).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("3*delta1 < delta2"), "{err}");
        let (_, report) = validated_graph(&synthetic("")).unwrap();
        assert_eq!(report.verdict(), Verdict::Warn);
    }

    #[test]
    fn comparison_deltas() {
        let summary = |rate: &str| {
            let mut m = BTreeMap::new();
            m.insert("error_rate".to_string(), rate.to_string());
            m.insert("test_set_hash".to_string(), "h".to_string());
            m
        };
        let cmp = compare_summaries(&[
            ("i".into(), summary("0.0712")),
            ("ii".into(), summary("0.0736")),
            ("iii".into(), summary("0.0736")),
        ])
        .unwrap();
        assert_eq!(cmp.runs.len(), 3);
        assert_eq!(cmp.deltas.len(), 3);
        assert!((cmp.deltas[0].2.unwrap() - 0.24).abs() < 1e-9);
        assert_eq!(cmp.deltas[2].2, Some(0.0));
        let mut other = summary("0.1");
        other.insert("test_set_hash".into(), "g".into());
        assert!(matches!(
            compare_summaries(&[("a".into(), summary("0.1")), ("b".into(), other)]),
            Err(ExperimentError::HashMismatch { .. })
        ));
    }
}
