use std::collections::BTreeSet;

use ndarray::{Array1, Array2};

use super::{roots, validate_assumptions, Digraph, GraphError};
use crate::rng::DataRng;

/// Required residual for `uᵀR = uᵀ` and `Cv = v`.
pub const PERRON_TOL: f64 = 1e-10;
pub const PERRON_MAX_ITER: usize = 1_000_000;

const STOP_TOL: f64 = 1e-12;
const RESTART_GAP: f64 = 1e-8;

/// Row-stochastic `r`, column-stochastic `c` and their Perron vectors:
/// `uᵀR = uᵀ`, `uᵀ1 = m`, `Cv = v`, `1ᵀv = m`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingPair {
    pub r: Array2<f64>,
    pub c: Array2<f64>,
    pub u: Array1<f64>,
    pub v: Array1<f64>,
}

impl MixingPair {
    pub fn agents(&self) -> usize {
        self.r.nrows()
    }

    pub fn u_dot_v(&self) -> f64 {
        self.u.dot(&self.v)
    }

    /// `‖uᵀR − uᵀ‖₂`.
    pub fn left_residual(&self) -> f64 {
        let d = self.r.t().dot(&self.u) - &self.u;
        crate::linalg::norm2(d.view())
    }

    /// `‖Cv − v‖₂`.
    pub fn right_residual(&self) -> f64 {
        let d = self.c.dot(&self.v) - &self.v;
        crate::linalg::norm2(d.view())
    }

    /// The `1×1` pair used for single-agent runs.
    pub fn single_agent() -> Self {
        let one = Array2::ones((1, 1));
        Self {
            r: one.clone(),
            c: one,
            u: Array1::ones(1),
            v: Array1::ones(1),
        }
    }
}

/// Computes `u` (power iteration on `Rᵀ`) and `v` (power iteration on `C`).
///
/// Each vector is computed from two independent random starts; if they
/// disagree the eigenvector is not unique. Starts are supported on the root
/// set of the induced digraph, which the iteration leaves invariant, so
/// entries off the root set are exactly zero.
pub fn perron_pair(r: &Array2<f64>, c: &Array2<f64>) -> Result<MixingPair, GraphError> {
    let report = validate_assumptions(r, c);
    if !report.local_checks_passed() {
        return Err(GraphError::Assumptions(report));
    }
    let rt = r.t().to_owned();
    let u_support = roots(&Digraph::induced_by(r)?);
    let v_support = roots(&Digraph::induced_by(&c.t().to_owned())?);
    let u = unique_fixed_point(&rt, &u_support, "left (u)")?;
    let v = unique_fixed_point(c, &v_support, "right (v)")?;
    let uv = u.dot(&v);
    if !(uv > 0.0) {
        return Err(GraphError::DisjointSupport(uv));
    }
    Ok(MixingPair {
        r: r.clone(),
        c: c.clone(),
        u,
        v,
    })
}

fn unique_fixed_point(
    op: &Array2<f64>,
    support: &BTreeSet<usize>,
    which: &'static str,
) -> Result<Array1<f64>, GraphError> {
    let a = power_iterate(op, start_vector(op.nrows(), support, 1), which)?;
    let b = power_iterate(op, start_vector(op.nrows(), support, 2), which)?;
    let gap = (&a - &b).iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if gap > RESTART_GAP {
        return Err(GraphError::NotUnique { which, gap });
    }
    Ok(a)
}

fn start_vector(m: usize, support: &BTreeSet<usize>, seed: u64) -> Array1<f64> {
    let mut rng = DataRng::new(seed);
    Array1::from_shape_fn(m, |i| {
        let w = 0.5 + rng.uniform();
        if support.is_empty() || support.contains(&i) {
            w
        } else {
            0.0
        }
    })
}

fn power_iterate(
    op: &Array2<f64>,
    mut w: Array1<f64>,
    which: &'static str,
) -> Result<Array1<f64>, GraphError> {
    let m = w.len() as f64;
    w *= m / w.sum();
    let mut residual = f64::INFINITY;
    for _ in 0..PERRON_MAX_ITER {
        let next = op.dot(&w);
        residual = crate::linalg::norm2((&next - &w).view());
        if residual <= STOP_TOL {
            return Ok(w);
        }
        let s = next.sum();
        w = next * (m / s);
    }
    Err(GraphError::NoConvergence {
        which,
        iterations: PERRON_MAX_ITER,
        residual,
    })
}
