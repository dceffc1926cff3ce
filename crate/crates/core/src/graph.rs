//! Undirected communication topologies and their Laplacian spectra.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::{ValidationMode, Verdict};

/// Relative tolerance (w.r.t. `max(sigma_max, 1)`) below which a Laplacian
/// eigenvalue counts as zero.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge ({a}, {b}) references a node outside 0..{n}")]
    NodeOutOfRange { a: usize, b: usize, n: usize },
    #[error("cannot parse topology `{input}`: {reason}")]
    Parse { input: String, reason: String },
    #[error("graph is disconnected; mixing is undefined")]
    Disconnected,
    #[error("mixing parameter must be positive and finite, got {0}")]
    InvalidMixingParameter(f64),
    #[error("mixing bound violated: b * sigma_max = {b} * {sigma_max} = {product} >= 1 (require b < {bound})")]
    MixingBound {
        b: f64,
        sigma_max: f64,
        product: f64,
        bound: f64,
    },
}

/// Topology description, parseable from `ring:10`, `complete:5`, `path:4` or
/// `edges:n=4;0-1,1-2,2-3`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Topology {
    Ring(usize),
    Complete(usize),
    Path(usize),
    Edges { n: usize, edges: Vec<(usize, usize)> },
}

impl Topology {
    pub fn agents(&self) -> usize {
        match self {
            Topology::Ring(n) | Topology::Complete(n) | Topology::Path(n) => *n,
            Topology::Edges { n, .. } => *n,
        }
    }

    fn edge_list(&self) -> Vec<(usize, usize)> {
        match self {
            Topology::Ring(n) => {
                let n = *n;
                match n {
                    0 | 1 => Vec::new(),
                    2 => vec![(0, 1)],
                    _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
                }
            }
            Topology::Path(n) => (1..*n).map(|i| (i - 1, i)).collect(),
            Topology::Complete(n) => {
                let n = *n;
                (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
            }
            Topology::Edges { edges, .. } => edges.clone(),
        }
    }
}

impl FromStr for Topology {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let input = s.trim();
        let err = |reason: &str| GraphError::Parse {
            input: input.to_string(),
            reason: reason.to_string(),
        };
        let (kind, rest) = input
            .split_once(':')
            .ok_or_else(|| err("expected `<kind>:<args>`"))?;
        let parse_n = |t: &str| -> Result<usize, GraphError> {
            t.trim()
                .parse::<usize>()
                .map_err(|_| err("agent count must be a non-negative integer"))
        };
        match kind.trim() {
            "ring" => Ok(Topology::Ring(parse_n(rest)?)),
            "complete" => Ok(Topology::Complete(parse_n(rest)?)),
            "path" => Ok(Topology::Path(parse_n(rest)?)),
            "edges" => {
                let (head, tail) = rest.split_once(';').unwrap_or((rest, ""));
                let n = head
                    .trim()
                    .strip_prefix("n=")
                    .ok_or_else(|| err("edge list must start with `n=<count>`"))?;
                let n = parse_n(n)?;
                let mut edges = Vec::new();
                for item in tail.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                    let (a, b) = item
                        .split_once('-')
                        .ok_or_else(|| err("edges are written `i-j`"))?;
                    edges.push((parse_n(a)?, parse_n(b)?));
                }
                Ok(Topology::Edges { n, edges })
            }
            _ => Err(err("unknown topology kind (ring|complete|path|edges)")),
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::Ring(n) => write!(f, "ring:{n}"),
            Topology::Complete(n) => write!(f, "complete:{n}"),
            Topology::Path(n) => write!(f, "path:{n}"),
            Topology::Edges { n, edges } => {
                write!(f, "edges:n={n};")?;
                for (idx, (a, b)) in edges.iter().enumerate() {
                    if idx > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}-{b}")?;
                }
                Ok(())
            }
        }
    }
}

/// Immutable undirected, unweighted graph with its Laplacian `L = D - A` and
/// cached spectrum.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    adjacency: Vec<u8>,
    laplacian: Vec<i64>,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    eigenvalues: Vec<f64>,
    lambda2: f64,
    sigma_max: f64,
}

impl Graph {
    /// Builds the graph for `topology`. Duplicate edges are merged; edge
    /// direction is irrelevant.
    pub fn build(topology: &Topology) -> Result<Graph, GraphError> {
        let n = topology.agents();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut set = BTreeSet::new();
        for (a, b) in topology.edge_list() {
            if a >= n || b >= n {
                return Err(GraphError::NodeOutOfRange { a, b, n });
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let edges: Vec<_> = set.into_iter().collect();

        let mut adjacency = vec![0u8; n * n];
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adjacency[a * n + b] = 1;
            adjacency[b * n + a] = 1;
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }

        let mut laplacian = vec![0i64; n * n];
        for i in 0..n {
            let mut degree = 0i64;
            for j in 0..n {
                let a = i64::from(adjacency[i * n + j]);
                degree += a;
                laplacian[i * n + j] = -a;
            }
            laplacian[i * n + i] = degree;
        }

        let dense = DMatrix::from_fn(n, n, |i, j| laplacian[i * n + j] as f64);
        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(dense).eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        let sigma_max = eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
        let tol = ZERO_EIGENVALUE_TOL * sigma_max.max(1.0);
        for ev in &mut eigenvalues {
            if ev.abs() <= tol {
                *ev = 0.0;
            }
        }
        let lambda2 = eigenvalues.get(1).copied().unwrap_or(0.0);

        Ok(Graph {
            n,
            adjacency,
            laplacian,
            edges,
            neighbors,
            eigenvalues,
            lambda2,
            sigma_max,
        })
    }

    pub fn agents(&self) -> usize {
        self.n
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j] == 1
    }

    /// Exact integer Laplacian entry `L[i][j]`.
    pub fn laplacian_entry(&self, i: usize, j: usize) -> i64 {
        self.laplacian[i * self.n + j]
    }

    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| f64::from(self.adjacency[i * self.n + j]))
    }

    pub fn laplacian_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.laplacian[i * self.n + j] as f64)
    }

    /// Undirected edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Laplacian eigenvalues in ascending order (near-zero values snapped to 0).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Second-smallest Laplacian eigenvalue (algebraic connectivity). Zero for
    /// disconnected graphs and for the single-node graph.
    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    /// Largest singular value of `L`, equal to its largest eigenvalue.
    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    /// Breadth-first reachability from node 0. A single node is connected.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &u in &self.neighbors[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    queue.push_back(u);
                }
            }
        }
        count == self.n
    }

    /// Checks `b * sigma_max(L) < 1`.
    pub fn validate_mixing(&self, b: f64) -> Result<MixingReport, GraphError> {
        if !(b.is_finite() && b > 0.0) {
            return Err(GraphError::InvalidMixingParameter(b));
        }
        if !self.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(MixingReport {
            b,
            sigma_max: self.sigma_max,
        })
    }

    /// `W = I - beta * L`.
    pub fn mixing_matrix(&self, beta: f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| {
            let identity = if i == j { 1.0 } else { 0.0 };
            identity - beta * self.laplacian[i * self.n + j] as f64
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingReport {
    pub b: f64,
    pub sigma_max: f64,
}

impl MixingReport {
    /// `1 / sigma_max`; infinite for the edgeless single node.
    pub fn bound(&self) -> f64 {
        1.0 / self.sigma_max
    }

    pub fn product(&self) -> f64 {
        self.b * self.sigma_max
    }

    pub fn satisfied(&self) -> bool {
        self.product() < 1.0
    }

    pub fn verdict(&self, mode: ValidationMode) -> Verdict {
        match (self.satisfied(), mode) {
            (true, _) => Verdict::Pass,
            (false, ValidationMode::Compat) => Verdict::Warn,
            (false, ValidationMode::Strict) => Verdict::Fail,
        }
    }

    /// `Err` when the bound fails in strict mode; the verdict otherwise.
    pub fn enforce(&self, mode: ValidationMode) -> Result<Verdict, GraphError> {
        match self.verdict(mode) {
            Verdict::Fail => Err(self.violation()),
            v => Ok(v),
        }
    }

    pub fn violation(&self) -> GraphError {
        GraphError::MixingBound {
            b: self.b,
            sigma_max: self.sigma_max,
            product: self.product(),
            bound: self.bound(),
        }
    }
}

impl fmt::Display for MixingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "b * sigma_max(L) = {} * {} = {} ({} 1; bound b < {})",
            self.b,
            self.sigma_max,
            self.product(),
            if self.satisfied() { "<" } else { ">=" },
            self.bound()
        )
    }
}
