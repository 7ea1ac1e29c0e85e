//! Directed communication topologies, root sets, mixing matrices and their
//! Perron eigenvectors.
//!
//! Vertices are `0..m`. An edge `(j, i)` means `j` is a parent of `i`: agent
//! `i` can receive from agent `j`.

mod mixing;
mod perron;

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::DataRng;

pub use mixing::{
    build_column_stochastic, build_laplacian_column, build_laplacian_mixing,
    build_row_stochastic, validate_assumptions, write_matrix_csv, Check, ValidationReport,
    STOCHASTIC_TOL,
};
pub use perron::{perron_pair, MixingPair, PERRON_MAX_ITER, PERRON_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("a digraph needs at least one vertex")]
    Empty,
    #[error("vertex {vertex} out of range for {m} vertices")]
    VertexOutOfRange { vertex: usize, m: usize },
    #[error("self-loop at vertex {0} (self weights belong to the matrix builders)")]
    SelfLoop(usize),
    #[error("self weight {value} at vertex {vertex} must be positive and finite")]
    BadSelfWeight { vertex: usize, value: f64 },
    #[error("expected {expected} self weights, got {got}")]
    SelfWeightCount { expected: usize, got: usize },
    #[error("Laplacian mixing needs at least one edge")]
    Edgeless,
    #[error("matrix must be square with {expected} rows, got {rows}x{cols}")]
    Shape {
        expected: usize,
        rows: usize,
        cols: usize,
    },
    #[error("edge probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("mixing matrices violate the standing assumptions: {0}")]
    Assumptions(ValidationReport),
    #[error("{which} Perron eigenvector is not unique (restarts disagree by {gap:.3e})")]
    NotUnique { which: &'static str, gap: f64 },
    #[error("{which} power iteration did not converge in {iterations} steps (residual {residual:.3e})")]
    NoConvergence {
        which: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("Perron vectors have disjoint support (uᵀv = {0:.3e})")]
    DisjointSupport(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    /// `i → i+1 (mod m)`.
    Ring,
    /// `i → i+1` for `i < m-1`.
    Line,
    /// Center `0` points at every leaf.
    Star,
    /// Erdős–Rényi digraph, densified until strongly connected.
    Random,
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TopologyKind::Ring => "ring",
            TopologyKind::Line => "line",
            TopologyKind::Star => "star",
            TopologyKind::Random => "random",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    m: usize,
    edges: BTreeSet<(usize, usize)>,
    in_nb: Vec<Vec<usize>>,
    out_nb: Vec<Vec<usize>>,
}

impl Digraph {
    pub fn new(m: usize) -> Result<Self, GraphError> {
        if m == 0 {
            return Err(GraphError::Empty);
        }
        Ok(Self {
            m,
            edges: BTreeSet::new(),
            in_nb: vec![Vec::new(); m],
            out_nb: vec![Vec::new(); m],
        })
    }

    pub fn from_edges(
        m: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let mut g = Self::new(m)?;
        for (from, to) in edges {
            g.add_edge(from, to)?;
        }
        Ok(g)
    }

    /// Digraph induced by a nonnegative matrix: `(j, i)` is an edge iff
    /// `B_ij > 0` and `i ≠ j`.
    pub fn induced_by(b: &Array2<f64>) -> Result<Self, GraphError> {
        let m = b.nrows();
        if b.ncols() != m {
            return Err(GraphError::Shape {
                expected: m,
                rows: b.nrows(),
                cols: b.ncols(),
            });
        }
        let mut g = Self::new(m)?;
        for ((i, j), &w) in b.indexed_iter() {
            if i != j && w > 0.0 {
                g.add_edge(j, i)?;
            }
        }
        Ok(g)
    }

    /// Adds `from → to`; returns `false` if the edge was already present.
    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<bool, GraphError> {
        for v in [from, to] {
            if v >= self.m {
                return Err(GraphError::VertexOutOfRange { vertex: v, m: self.m });
            }
        }
        if from == to {
            return Err(GraphError::SelfLoop(from));
        }
        if !self.edges.insert((from, to)) {
            return Ok(false);
        }
        insert_sorted(&mut self.out_nb[from], to);
        insert_sorted(&mut self.in_nb[to], from);
        Ok(true)
    }

    pub fn vertex_count(&self) -> usize {
        self.m
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    /// Parents of `i`, ascending.
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_nb[i]
    }

    /// Children of `i`, ascending.
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_nb[i]
    }

    pub fn reversed(&self) -> Self {
        let mut g = Self::new(self.m).expect("nonempty");
        for &(a, b) in &self.edges {
            g.add_edge(b, a).expect("valid edge");
        }
        g
    }

    /// Vertices reachable from `start` (including `start`) by BFS.
    pub fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.m];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &self.out_nb[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.reachable_from(0).iter().all(|&r| r) && self.reversed().reachable_from(0).iter().all(|&r| r)
    }
}

fn insert_sorted(v: &mut Vec<usize>, x: usize) {
    let pos = v.partition_point(|&y| y < x);
    v.insert(pos, x);
}

/// Builds one of the named topologies. `seed` only matters for `random`,
/// where `edge_probability` defaults to `min(1, 2 ln m / m)`.
pub fn make_topology(
    kind: TopologyKind,
    m: usize,
    seed: u64,
    edge_probability: Option<f64>,
) -> Result<Digraph, GraphError> {
    let mut g = Digraph::new(m)?;
    match kind {
        TopologyKind::Ring => {
            if m > 1 {
                for i in 0..m {
                    g.add_edge(i, (i + 1) % m)?;
                }
            }
        }
        TopologyKind::Line => {
            for i in 1..m {
                g.add_edge(i - 1, i)?;
            }
        }
        TopologyKind::Star => {
            for leaf in 1..m {
                g.add_edge(0, leaf)?;
            }
        }
        TopologyKind::Random => {
            let p = edge_probability
                .unwrap_or_else(|| (2.0 * (m as f64).ln() / m as f64).min(1.0));
            if !(0.0..=1.0).contains(&p) {
                return Err(GraphError::BadProbability(p));
            }
            let mut rng = DataRng::new(seed);
            for i in 0..m {
                for j in 0..m {
                    if i != j && rng.uniform() < p {
                        g.add_edge(i, j)?;
                    }
                }
            }
            while !g.is_strongly_connected() {
                let missing: Vec<(usize, usize)> = (0..m)
                    .flat_map(|i| (0..m).map(move |j| (i, j)))
                    .filter(|&(i, j)| i != j && !g.has_edge(i, j))
                    .collect();
                let (i, j) = missing[rng.below(missing.len())];
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(g)
}

/// Roots of all spanning trees: the vertices from which every vertex is
/// reachable. Per-vertex BFS, `O(m·|E|)`.
pub fn roots(g: &Digraph) -> BTreeSet<usize> {
    (0..g.vertex_count())
        .filter(|&v| g.reachable_from(v).iter().all(|&r| r))
        .collect()
}
