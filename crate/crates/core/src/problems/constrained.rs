use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1};
use sha2::Sha256;

use super::least_squares::{check_blocks, gram_sums, residual};
use super::{hash_array, Constants, LocalObjectives, ProblemError, ProblemInstance};
use crate::linalg::{gram_spectral_radius, symmetric_eigenvalues};

/// `g_i(x) = ½‖A_i x − b_i‖² + (1/2m) Σ_{j∈J} max(0, −x_j)²`,
/// `f_i(x) = ½xᵀQ_i x + q_iᵀx`.
#[derive(Debug, Clone)]
struct LinearConstrained {
    blocks: Vec<(Array2<f64>, Array1<f64>)>,
    quad: Vec<(Array2<f64>, Array1<f64>)>,
    nonneg: Vec<usize>,
    n: usize,
}

impl LinearConstrained {
    fn inv_m(&self) -> f64 {
        1.0 / self.blocks.len() as f64
    }
}

impl LocalObjectives for LinearConstrained {
    fn dim(&self) -> usize {
        self.n
    }

    fn agents(&self) -> usize {
        self.blocks.len()
    }

    fn f(&self, agent: usize, x: ArrayView1<'_, f64>) -> f64 {
        let (q, lin) = &self.quad[agent];
        0.5 * x.dot(&q.dot(&x)) + lin.dot(&x)
    }

    fn grad_f(&self, agent: usize, x: ArrayView1<'_, f64>, mut out: ArrayViewMut1<'_, f64>) {
        let (q, lin) = &self.quad[agent];
        out.assign(&(q.dot(&x) + lin));
    }

    fn g(&self, agent: usize, x: ArrayView1<'_, f64>) -> f64 {
        let (a, b) = &self.blocks[agent];
        let r = residual(a, b, x);
        let hinge: f64 = self.nonneg.iter().map(|&j| (-x[j]).max(0.0).powi(2)).sum();
        0.5 * r.dot(&r) + 0.5 * self.inv_m() * hinge
    }

    fn grad_g(&self, agent: usize, x: ArrayView1<'_, f64>, mut out: ArrayViewMut1<'_, f64>) {
        let (a, b) = &self.blocks[agent];
        let r = residual(a, b, x);
        out.assign(&a.t().dot(&r));
        let w = self.inv_m();
        for &j in &self.nonneg {
            out[j] -= w * (-x[j]).max(0.0);
        }
    }

    fn infeasibility(&self, x: ArrayView1<'_, f64>) -> Option<f64> {
        Some(
            self.blocks
                .iter()
                .map(|(a, b)| {
                    let r = residual(a, b, x);
                    r.dot(&r)
                })
                .sum(),
        )
    }

    fn quadratic_model(&self) -> Option<super::QuadraticModel> {
        if !self.nonneg.is_empty() {
            return None;
        }
        let (ata, atb) = gram_sums(&self.blocks, self.n);
        let mut hess_f = Array2::zeros((self.n, self.n));
        let mut lin_f = Array1::zeros(self.n);
        for (q, lin) in &self.quad {
            hess_f += q;
            lin_f += lin;
        }
        Some(super::QuadraticModel {
            hess_g: ata,
            lin_g: -atb,
            hess_f,
            lin_f,
        })
    }

    fn fingerprint(&self, h: &mut Sha256) {
        for (a, b) in &self.blocks {
            hash_array(h, [a.nrows() as f64].iter());
            hash_array(h, a.iter());
            hash_array(h, b.iter());
        }
        for (q, lin) in &self.quad {
            hash_array(h, q.iter());
            hash_array(h, lin.iter());
        }
        let idx: Vec<f64> = self.nonneg.iter().map(|&j| j as f64).collect();
        hash_array(h, idx.iter());
    }
}

/// Penalty reformulation of `min Σf_i s.t. Ax = b, x_J ≥ 0`.
///
/// `quad[i] = (Q_i, q_i)` with `Q_i` symmetric positive definite. Feasibility
/// of the constraint system is the caller's responsibility. The hinge terms
/// are `1/m`-smooth, so `L_g = max ρ(A_iᵀA_i) + 1/√m` is a valid bound.
pub fn make_linear_constrained(
    quad: Vec<(Array2<f64>, Array1<f64>)>,
    blocks: Vec<(Array2<f64>, Array1<f64>)>,
    nonneg: Vec<usize>,
) -> Result<ProblemInstance, ProblemError> {
    let n = check_blocks(&blocks)?;
    if quad.len() != blocks.len() {
        return Err(ProblemError::Data(format!(
            "{} quadratic terms for {} constraint blocks",
            quad.len(),
            blocks.len()
        )));
    }
    let mut mu_f = f64::INFINITY;
    let mut l_f: f64 = 0.0;
    for (i, (q, lin)) in quad.iter().enumerate() {
        if q.dim() != (n, n) || lin.len() != n {
            return Err(ProblemError::Dimension {
                expected_rows: n,
                expected_cols: n,
                rows: q.nrows(),
                cols: q.ncols(),
            });
        }
        let sym = q.iter().zip(q.t().iter()).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        let eig = symmetric_eigenvalues(q.view());
        if !sym || !(eig[0] > 0.0) {
            return Err(ProblemError::NotPositiveDefinite { agent: i });
        }
        mu_f = mu_f.min(eig[0]);
        l_f = l_f.max(eig[n - 1]);
    }
    if let Some(&j) = nonneg.iter().find(|&&j| j >= n) {
        return Err(ProblemError::IndexOutOfRange { index: j, dim: n });
    }
    let m = blocks.len() as f64;
    let rho = blocks
        .iter()
        .map(|(a, _)| gram_spectral_radius(a.view()))
        .fold(0.0, f64::max);
    let l_g = rho + if nonneg.is_empty() { 0.0 } else { 1.0 / m.sqrt() };
    let obj = LinearConstrained {
        blocks,
        quad,
        nonneg,
        n,
    };
    Ok(ProblemInstance::new(
        "constrained",
        Box::new(obj),
        Constants { mu_f, l_f, l_g },
    ))
}
