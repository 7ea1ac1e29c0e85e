//! Local objective families `{f_i}, {g_i}` and the concrete instances used by
//! the experiments.
//!
//! Every instance satisfies: `f_i` is `μ_f`-strongly convex with
//! `L_f`-Lipschitz gradient, `g_i` is convex with `L_g`-Lipschitz gradient,
//! and `argmin Σ g_i` is nonempty.

mod blur;
mod constrained;
pub mod data;

/// One agent's rows `(A_i, b_i)`.
pub type DataBlock = (Array2<f64>, Array1<f64>);
mod least_squares;
mod svm;

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, Axis, Zip};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use blur::{blur_operator, gaussian_kernel, make_blur_instance, BlurMode};
pub use constrained::make_linear_constrained;
pub use least_squares::{make_least_norm_ls, LeastSquares};
pub use svm::{make_svm_instance, SvmData, SvmObjectives};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("at least one agent block is required")]
    NoBlocks,
    #[error("block {block} has width {got}, expected {expected}")]
    InconsistentWidth {
        block: usize,
        expected: usize,
        got: usize,
    },
    #[error("block {block}: {rows} matrix rows but {rhs} right-hand-side entries")]
    RhsLength { block: usize, rows: usize, rhs: usize },
    #[error("quadratic term of agent {agent} is not symmetric positive definite")]
    NotPositiveDefinite { agent: usize },
    #[error("nonnegativity index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("kernel of length {kernel} is wider than the image side {width}")]
    KernelTooWide { kernel: usize, width: usize },
    #[error("image of length {len} is not a square w×w image")]
    NotSquareImage { len: usize },
    #[error("{rows} operator rows cannot be split evenly among {agents} agents")]
    UnevenSplit { rows: usize, agents: usize },
    #[error("label {label} at sample {sample} is not ±1")]
    BadLabel { sample: usize, label: f64 },
    #[error("sample {sample} is assigned to {count} agents")]
    BadPartition { sample: usize, count: usize },
    #[error("invalid parameter {name} = {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("expected a {expected_rows}x{expected_cols} matrix, got {rows}x{cols}")]
    Dimension {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("data error: {0}")]
    Data(String),
}

/// Per-agent evaluators. Implementations are immutable after construction and
/// must be safe to evaluate from several threads at once.
pub trait LocalObjectives: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn agents(&self) -> usize;
    fn f(&self, agent: usize, x: ArrayView1<'_, f64>) -> f64;
    fn grad_f(&self, agent: usize, x: ArrayView1<'_, f64>, out: ArrayViewMut1<'_, f64>);
    fn g(&self, agent: usize, x: ArrayView1<'_, f64>) -> f64;
    fn grad_g(&self, agent: usize, x: ArrayView1<'_, f64>, out: ArrayViewMut1<'_, f64>);

    /// `∇g = H_g x + c_g` and `∇f = H_f x + c_f` for the summed functions,
    /// when both are affine.
    fn quadratic_model(&self) -> Option<QuadraticModel> {
        None
    }

    /// Constraint residual reported as infeasibility, when the instance has
    /// constraints.
    fn infeasibility(&self, _x: ArrayView1<'_, f64>) -> Option<f64> {
        None
    }

    /// Feeds every number that defines the instance into `hasher`.
    fn fingerprint(&self, hasher: &mut Sha256);
}

/// Affine gradients of the aggregated `g = Σ g_i` and `f = Σ f_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    pub hess_g: Array2<f64>,
    pub lin_g: Array1<f64>,
    pub hess_f: Array2<f64>,
    pub lin_f: Array1<f64>,
}

/// Smoothness and convexity constants of one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub mu_f: f64,
    pub l_f: f64,
    pub l_g: f64,
}

/// A bilevel instance: local objectives plus the constants and metadata the
/// engine, oracle and harness need.
#[derive(Debug)]
pub struct ProblemInstance {
    name: String,
    objectives: Box<dyn LocalObjectives>,
    constants: Constants,
    known_solution: Option<Array1<f64>>,
    notes: Vec<String>,
}

impl ProblemInstance {
    pub fn new(
        name: impl Into<String>,
        objectives: Box<dyn LocalObjectives>,
        constants: Constants,
    ) -> Self {
        Self {
            name: name.into(),
            objectives,
            constants,
            known_solution: None,
            notes: Vec::new(),
        }
    }

    pub fn with_known_solution(mut self, x: Array1<f64>) -> Self {
        self.known_solution = Some(x);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.objectives.dim()
    }

    pub fn agents(&self) -> usize {
        self.objectives.agents()
    }

    pub fn constants(&self) -> Constants {
        self.constants
    }

    /// `L_k = L_g + λ L_f`.
    pub fn smoothness_at(&self, lambda: f64) -> f64 {
        self.constants.l_g + lambda * self.constants.l_f
    }

    pub fn known_solution(&self) -> Option<&Array1<f64>> {
        self.known_solution.as_ref()
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn objectives(&self) -> &dyn LocalObjectives {
        self.objectives.as_ref()
    }

    pub fn quadratic_model(&self) -> Option<QuadraticModel> {
        self.objectives.quadratic_model()
    }

    pub fn infeasibility(&self, x: ArrayView1<'_, f64>) -> Option<f64> {
        self.objectives.infeasibility(x)
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        h.update((self.dim() as u64).to_le_bytes());
        h.update((self.agents() as u64).to_le_bytes());
        self.objectives.fingerprint(&mut h);
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn f_local(&self, agent: usize, x: ArrayView1<'_, f64>) -> f64 {
        self.objectives.f(agent, x)
    }

    pub fn g_local(&self, agent: usize, x: ArrayView1<'_, f64>) -> f64 {
        self.objectives.g(agent, x)
    }

    pub fn grad_f_local(&self, agent: usize, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.dim());
        self.objectives.grad_f(agent, x, out.view_mut());
        out
    }

    pub fn grad_g_local(&self, agent: usize, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.dim());
        self.objectives.grad_g(agent, x, out.view_mut());
        out
    }

    /// `f(x) = Σ_i f_i(x)`.
    pub fn f(&self, x: ArrayView1<'_, f64>) -> f64 {
        (0..self.agents()).map(|i| self.objectives.f(i, x)).sum()
    }

    /// `g(x) = Σ_i g_i(x)`.
    pub fn g(&self, x: ArrayView1<'_, f64>) -> f64 {
        (0..self.agents()).map(|i| self.objectives.g(i, x)).sum()
    }

    pub fn grad_f(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut total = Array1::zeros(self.dim());
        let mut buf = Array1::zeros(self.dim());
        for i in 0..self.agents() {
            buf.fill(0.0);
            self.objectives.grad_f(i, x, buf.view_mut());
            total += &buf;
        }
        total
    }

    pub fn grad_g(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut total = Array1::zeros(self.dim());
        let mut buf = Array1::zeros(self.dim());
        for i in 0..self.agents() {
            buf.fill(0.0);
            self.objectives.grad_g(i, x, buf.view_mut());
            total += &buf;
        }
        total
    }

    /// `∇g(x) + λ∇f(x)` for the aggregated functions.
    pub fn regularized_grad(&self, x: ArrayView1<'_, f64>, lambda: f64) -> Array1<f64> {
        self.grad_g(x) + &(self.grad_f(x) * lambda)
    }

    fn check_stack(&self, x: ArrayView2<'_, f64>) -> Result<(), ProblemError> {
        if x.nrows() != self.agents() || x.ncols() != self.dim() {
            return Err(ProblemError::Dimension {
                expected_rows: self.agents(),
                expected_cols: self.dim(),
                rows: x.nrows(),
                cols: x.ncols(),
            });
        }
        Ok(())
    }

    /// Row `i` of the result is `∇g_i(x_i) + λ ∇f_i(x_i)`.
    pub fn eval_regularized_gradient(
        &self,
        x: ArrayView2<'_, f64>,
        lambda: f64,
    ) -> Result<Array2<f64>, ProblemError> {
        let mut out = Array2::zeros(x.raw_dim());
        self.eval_regularized_gradient_into(x, lambda, &mut out, false)?;
        Ok(out)
    }

    /// In-place form of [`Self::eval_regularized_gradient`]. With `parallel`
    /// the rows are evaluated on the rayon pool; each row is computed by the
    /// same sequential code either way, so results do not depend on it.
    pub fn eval_regularized_gradient_into(
        &self,
        x: ArrayView2<'_, f64>,
        lambda: f64,
        out: &mut Array2<f64>,
        parallel: bool,
    ) -> Result<(), ProblemError> {
        if !(lambda >= 0.0) {
            return Err(ProblemError::BadParameter { name: "lambda", value: lambda });
        }
        self.check_stack(x)?;
        self.check_stack(out.view())?;
        let obj = self.objectives.as_ref();
        let n = self.dim();
        let row = |i: usize, xi: ArrayView1<'_, f64>, mut oi: ArrayViewMut1<'_, f64>| {
            let mut gf = Array1::zeros(n);
            obj.grad_f(i, xi, gf.view_mut());
            oi.fill(0.0);
            obj.grad_g(i, xi, oi.view_mut());
            oi.scaled_add(lambda, &gf);
        };
        let zip = Zip::indexed(out.axis_iter_mut(Axis(0))).and(x.axis_iter(Axis(0)));
        if parallel {
            zip.par_for_each(|i, oi, xi| row(i, xi, oi));
        } else {
            zip.for_each(|i, oi, xi| row(i, xi, oi));
        }
        Ok(())
    }
}

pub(crate) fn hash_array<'a>(h: &mut Sha256, xs: impl IntoIterator<Item = &'a f64>) {
    for x in xs {
        h.update(x.to_bits().to_le_bytes());
    }
}
