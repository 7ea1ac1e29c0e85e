//! Centralized reference solutions: Tikhonov points `x*_λ`, the bilevel
//! solution `x*`, and the centralized IR gradient recursion.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Schedule;
use crate::linalg::{norm2, solve, symmetric_eigen};
use crate::problems::{ProblemInstance, QuadraticModel};

/// Iteration cap of the accelerated gradient solver.
pub const AGD_MAX_ITER: usize = 5_000_000;
/// Default continuation ladder; extended by decades down to `1e-12` if the
/// last points are not yet within tolerance.
pub const CONTINUATION_LADDER: [f64; 4] = [1e-2, 1e-4, 1e-6, 1e-8];
const CONTINUATION_FLOOR: f64 = 1e-12;
/// Relative eigenvalue threshold separating range and null space.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("lambda must be positive, got {0}")]
    BadLambda(f64),
    #[error("accelerated gradient hit the cap of {iterations} iterations at lambda={lambda:e} (residual {residual:e})")]
    IterationCap {
        lambda: f64,
        iterations: usize,
        residual: f64,
    },
    #[error("continuation is not Cauchy: last step {step:e} exceeds {tol:e}")]
    NotCauchy { step: f64, tol: f64 },
    #[error("linear system is singular")]
    Singular,
    #[error("centralized recursion diverged at iteration {0}")]
    Divergence(usize),
    #[error("at least one iteration is required")]
    NoIterations,
    #[error("no feasible active set found")]
    Infeasible,
    #[error("cache {path}: {msg}")]
    Cache { path: PathBuf, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Known,
    LinearSolve,
    Accelerated,
    NullSpace,
    Continuation,
    ActiveSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub x: Vec<f64>,
    /// Regularization weight of the point; `0` for the bilevel limit.
    pub lambda: f64,
    pub residual: f64,
    pub method: Method,
}

impl OracleSolution {
    pub fn point(&self) -> Array1<f64> {
        Array1::from(self.x.clone())
    }
}

fn regularized_residual(p: &ProblemInstance, x: ArrayView1<'_, f64>, lambda: f64) -> f64 {
    norm2(p.regularized_grad(x, lambda).view())
}

/// `x*_λ = argmin g + λf`, with `‖∇g(x) + λ∇f(x)‖ ≤ tol`.
///
/// Instances with affine gradients are solved by one LU factorization (plus
/// refinement steps); the rest by [`tikhonov_point_iterative`].
pub fn tikhonov_point(p: &ProblemInstance, lambda: f64, tol: f64) -> Result<OracleSolution, OracleError> {
    tikhonov_point_from(p, lambda, tol, None)
}

fn tikhonov_point_from(
    p: &ProblemInstance,
    lambda: f64,
    tol: f64,
    start: Option<&Array1<f64>>,
) -> Result<OracleSolution, OracleError> {
    if !(lambda > 0.0) {
        return Err(OracleError::BadLambda(lambda));
    }
    match p.quadratic_model() {
        Some(q) => tikhonov_linear(p, &q, lambda, tol),
        None => tikhonov_agd(p, lambda, tol, start),
    }
}

fn tikhonov_linear(p: &ProblemInstance, q: &QuadraticModel, lambda: f64, tol: f64) -> Result<OracleSolution, OracleError> {
    let h = &q.hess_g + &(&q.hess_f * lambda);
    let rhs = -(&q.lin_g + &(&q.lin_f * lambda));
    let mut x = solve(h.view(), rhs.view()).ok_or(OracleError::Singular)?;
    let mut residual = regularized_residual(p, x.view(), lambda);
    for _ in 0..3 {
        if residual <= tol {
            break;
        }
        let r = &rhs - &h.dot(&x);
        let dx = solve(h.view(), r.view()).ok_or(OracleError::Singular)?;
        x += &dx;
        residual = regularized_residual(p, x.view(), lambda);
    }
    if residual > tol {
        // Fall back to the iterative path from the direct solution.
        return tikhonov_agd(p, lambda, tol, Some(&x));
    }
    Ok(OracleSolution {
        x: x.to_vec(),
        lambda,
        residual,
        method: Method::LinearSolve,
    })
}

/// Nesterov's method for the `λmμ_f`-strongly convex, `m(L_g + λL_f)`-smooth
/// composite, with gradient-based restarts.
pub fn tikhonov_point_iterative(p: &ProblemInstance, lambda: f64, tol: f64) -> Result<OracleSolution, OracleError> {
    if !(lambda > 0.0) {
        return Err(OracleError::BadLambda(lambda));
    }
    tikhonov_agd(p, lambda, tol, None)
}

fn tikhonov_agd(p: &ProblemInstance, lambda: f64, tol: f64, start: Option<&Array1<f64>>) -> Result<OracleSolution, OracleError> {
    let c = p.constants();
    let m = p.agents() as f64;
    let l = m * (c.l_g + lambda * c.l_f);
    let mu = lambda * m * c.mu_f;
    let beta = (l.sqrt() - mu.sqrt()) / (l.sqrt() + mu.sqrt());
    let mut x = start.cloned().unwrap_or_else(|| Array1::zeros(p.dim()));
    let mut z = x.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..AGD_MAX_ITER {
        let gz = p.regularized_grad(z.view(), lambda);
        let x_next = &z - &(&gz / l);
        let gx = p.regularized_grad(x_next.view(), lambda);
        residual = norm2(gx.view());
        if residual <= tol {
            return Ok(OracleSolution {
                x: x_next.to_vec(),
                lambda,
                residual,
                method: Method::Accelerated,
            });
        }
        let step = &x_next - &x;
        if gz.dot(&step) > 0.0 {
            z = x_next.clone();
        } else {
            z = &x_next + &(&step * beta);
        }
        x = x_next;
    }
    Err(OracleError::IterationCap {
        lambda,
        iterations: AGD_MAX_ITER,
        residual,
    })
}

/// `x* = argmin {f(x) : x ∈ argmin g}`.
///
/// Order of preference: a solution recorded on the instance, the exact
/// null-space solve for affine gradients, then λ-continuation.
pub fn bilevel_solution(p: &ProblemInstance, tol: f64) -> Result<OracleSolution, OracleError> {
    if let Some(x) = p.known_solution() {
        return Ok(OracleSolution {
            x: x.to_vec(),
            lambda: 0.0,
            residual: norm2(p.grad_g(x.view()).view()),
            method: Method::Known,
        });
    }
    if let Some(q) = p.quadratic_model() {
        return quadratic_bilevel_solution(&q);
    }
    continuation_solution(p, tol)
}

/// Tikhonov continuation along the decade ladder. Succeeds once two
/// successive points are within `tol` and `λ ≤ 1e-8` has been reached.
pub fn continuation_solution(p: &ProblemInstance, tol: f64) -> Result<OracleSolution, OracleError> {
    let inner_tol = (tol * 1e-4).max(1e-13);
    let mut prev: Option<Array1<f64>> = None;
    let mut lambda = CONTINUATION_LADDER[0];
    let mut last_step = f64::INFINITY;
    while lambda >= CONTINUATION_FLOOR * 0.5 {
        let sol = tikhonov_point_from(p, lambda, inner_tol, prev.as_ref())?;
        let x = sol.point();
        if let Some(px) = &prev {
            last_step = norm2((&x - px).view());
            if last_step <= tol && lambda <= CONTINUATION_LADDER[3] * 1.0001 {
                return Ok(OracleSolution {
                    x: x.to_vec(),
                    lambda: 0.0,
                    residual: last_step,
                    method: Method::Continuation,
                });
            }
        }
        prev = Some(x);
        lambda *= 1e-2;
    }
    Err(OracleError::NotCauchy { step: last_step, tol })
}

/// Exact bilevel solution when `∇g = H_g x + c_g`, `∇f = H_f x + c_f`:
/// `argmin g = x_p + null(H_g)`, and `f` is minimized over that affine set.
pub fn quadratic_bilevel_solution(q: &QuadraticModel) -> Result<OracleSolution, OracleError> {
    let n = q.lin_g.len();
    let (vals, vecs) = symmetric_eigen(q.hess_g.view());
    let top = vals.last().copied().unwrap_or(0.0).abs();
    let thresh = RANK_TOL * top.max(f64::MIN_POSITIVE);
    let range: Vec<usize> = (0..n).filter(|&i| vals[i] > thresh).collect();
    let null: Vec<usize> = (0..n).filter(|&i| vals[i] <= thresh).collect();
    let mut xp = Array1::zeros(n);
    for &i in &range {
        let vi = vecs.column(i);
        xp.scaled_add(-vi.dot(&q.lin_g) / vals[i], &vi);
    }
    let x = if null.is_empty() {
        xp
    } else {
        let nb = Array2::from_shape_fn((n, null.len()), |(r, c)| vecs[[r, null[c]]]);
        let reduced = nb.t().dot(&q.hess_f).dot(&nb);
        let rhs = -nb.t().dot(&(q.hess_f.dot(&xp) + &q.lin_f));
        let w = solve(reduced.view(), rhs.view()).ok_or(OracleError::Singular)?;
        xp + nb.dot(&w)
    };
    let residual = norm2((q.hess_g.dot(&x) + &q.lin_g).view());
    Ok(OracleSolution {
        x: x.to_vec(),
        lambda: 0.0,
        residual,
        method: Method::NullSpace,
    })
}

/// `min ½xᵀHx + cᵀx` s.t. `Ax = b`, `x_j ≥ 0` for `j ∈ J`, by enumerating
/// the faces `{x_S = 0}`, `S ⊆ J`. Exponential in `|J|`; meant for small
/// reference problems with positive definite `H`.
pub fn nonneg_equality_qp(
    h: ArrayView2<'_, f64>,
    c: ArrayView1<'_, f64>,
    a: ArrayView2<'_, f64>,
    b: ArrayView1<'_, f64>,
    nonneg: &[usize],
) -> Result<OracleSolution, OracleError> {
    let n = c.len();
    assert!(nonneg.len() <= 20, "active-set enumeration is limited to 20 bounds");
    let mut best: Option<(f64, Array1<f64>)> = None;
    for mask in 0u32..(1u32 << nonneg.len()) {
        let fixed: Vec<usize> = (0..nonneg.len()).filter(|t| mask & (1 << t) != 0).map(|t| nonneg[t]).collect();
        let rows = a.nrows() + fixed.len();
        if rows > n {
            continue;
        }
        let mut e = Array2::zeros((rows, n));
        e.slice_mut(ndarray::s![..a.nrows(), ..]).assign(&a);
        for (r, &j) in fixed.iter().enumerate() {
            e[[a.nrows() + r, j]] = 1.0;
        }
        let eet = crate::linalg::symmetric_eigenvalues(e.dot(&e.t()).view());
        if rows > 0 && !(eet[0] > 1e-12 * eet[rows - 1]) {
            continue;
        }
        let mut kkt = Array2::zeros((n + rows, n + rows));
        kkt.slice_mut(ndarray::s![..n, ..n]).assign(&h);
        kkt.slice_mut(ndarray::s![..n, n..]).assign(&e.t());
        kkt.slice_mut(ndarray::s![n.., ..n]).assign(&e);
        let mut rhs = Array1::zeros(n + rows);
        rhs.slice_mut(ndarray::s![..n]).assign(&(-&c));
        rhs.slice_mut(ndarray::s![n..n + a.nrows()]).assign(&b);
        let Some(sol) = solve(kkt.view(), rhs.view()) else { continue };
        let x = sol.slice(ndarray::s![..n]).to_owned();
        if nonneg.iter().any(|&j| x[j] < -1e-10) {
            continue;
        }
        let value = 0.5 * x.dot(&h.dot(&x)) + c.dot(&x);
        if best.as_ref().is_none_or(|(v, _)| value < *v) {
            best = Some((value, x));
        }
    }
    let (_, x) = best.ok_or(OracleError::Infeasible)?;
    let residual = norm2((a.dot(&x) - b).view());
    Ok(OracleSolution {
        x: x.to_vec(),
        lambda: 0.0,
        residual,
        method: Method::ActiveSet,
    })
}

/// `x_{k+1} = x_k − γ̂_k(∇g(x_k) + λ_k∇f(x_k))`; returns `x_0, …, x_K`.
pub fn centralized_ir_descent(
    p: &ProblemInstance,
    schedule: &Schedule,
    x0: Array1<f64>,
    iterations: usize,
) -> Result<Vec<Array1<f64>>, OracleError> {
    if iterations == 0 {
        return Err(OracleError::NoIterations);
    }
    let mut traj = Vec::with_capacity(iterations + 1);
    let mut x = x0;
    traj.push(x.clone());
    for k in 0..iterations {
        let g = p.regularized_grad(x.view(), schedule.lambda(k));
        let mut next = x.clone();
        next.scaled_add(-schedule.gamma_hat(k), &g);
        if next.iter().any(|v| !v.is_finite() || v.abs() > crate::engine::DIVERGENCE_THRESHOLD) {
            return Err(OracleError::Divergence(k + 1));
        }
        traj.push(next.clone());
        x = next;
    }
    Ok(traj)
}

/// Oracle results persisted as a JSON sidecar, keyed by instance
/// fingerprint, `λ` and tolerance.
#[derive(Debug, Default)]
pub struct OracleCache {
    path: Option<PathBuf>,
    entries: BTreeMap<String, OracleSolution>,
    dirty: bool,
}

impl OracleCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self, OracleError> {
        let err = |msg: String| OracleError::Cache {
            path: path.to_path_buf(),
            msg,
        };
        let entries = if path.exists() {
            let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
            serde_json::from_str(&text).map_err(|e| err(e.to_string()))?
        } else {
            BTreeMap::new()
        };
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries,
            dirty: false,
        })
    }

    pub fn key(fingerprint: &str, lambda: f64, tol: f64) -> String {
        format!("{fingerprint}|{lambda:e}|{tol:e}")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get_or_compute(
        &mut self,
        p: &ProblemInstance,
        lambda: f64,
        tol: f64,
        compute: impl FnOnce() -> Result<OracleSolution, OracleError>,
    ) -> Result<OracleSolution, OracleError> {
        let key = Self::key(&p.fingerprint(), lambda, tol);
        if let Some(hit) = self.entries.get(&key) {
            return Ok(hit.clone());
        }
        let sol = compute()?;
        self.entries.insert(key, sol.clone());
        self.dirty = true;
        Ok(sol)
    }

    pub fn tikhonov(&mut self, p: &ProblemInstance, lambda: f64, tol: f64) -> Result<OracleSolution, OracleError> {
        self.get_or_compute(p, lambda, tol, || tikhonov_point(p, lambda, tol))
    }

    pub fn bilevel(&mut self, p: &ProblemInstance, tol: f64) -> Result<OracleSolution, OracleError> {
        self.get_or_compute(p, 0.0, tol, || bilevel_solution(p, tol))
    }

    /// Writes the sidecar if anything was added.
    pub fn save(&mut self) -> Result<(), OracleError> {
        let Some(path) = &self.path else { return Ok(()) };
        if !self.dirty {
            return Ok(());
        }
        let text = serde_json::to_string_pretty(&self.entries).map_err(|e| OracleError::Cache {
            path: path.clone(),
            msg: e.to_string(),
        })?;
        fs::write(path, text).map_err(|e| OracleError::Cache {
            path: path.clone(),
            msg: e.to_string(),
        })?;
        self.dirty = false;
        Ok(())
    }
}
