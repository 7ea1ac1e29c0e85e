use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1};
use sha2::Sha256;

use super::{hash_array, Constants, LocalObjectives, ProblemError, ProblemInstance, QuadraticModel};
use crate::linalg::gram_spectral_radius;

/// `g_i(x) = w_g‖A_i x − b_i‖²`, `f_i(x) = w_f‖x‖²`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    blocks: Vec<(Array2<f64>, Array1<f64>)>,
    n: usize,
    g_weight: f64,
    f_weight: f64,
}

impl LeastSquares {
    pub fn new(
        blocks: Vec<(Array2<f64>, Array1<f64>)>,
        g_weight: f64,
        f_weight: f64,
    ) -> Result<Self, ProblemError> {
        let n = check_blocks(&blocks)?;
        Ok(Self {
            blocks,
            n,
            g_weight,
            f_weight,
        })
    }

    pub fn blocks(&self) -> &[(Array2<f64>, Array1<f64>)] {
        &self.blocks
    }

    /// `2 w_g max_i ρ(A_iᵀA_i)`.
    pub fn l_g(&self) -> f64 {
        let rho = self
            .blocks
            .iter()
            .map(|(a, _)| gram_spectral_radius(a.view()))
            .fold(0.0, f64::max);
        2.0 * self.g_weight * rho
    }

    pub fn f_modulus(&self) -> f64 {
        2.0 * self.f_weight
    }
}

/// Validates `(A_i, b_i)` pairs and returns the common width.
pub(crate) fn check_blocks(blocks: &[(Array2<f64>, Array1<f64>)]) -> Result<usize, ProblemError> {
    let n = blocks.first().ok_or(ProblemError::NoBlocks)?.0.ncols();
    for (i, (a, b)) in blocks.iter().enumerate() {
        if a.ncols() != n {
            return Err(ProblemError::InconsistentWidth {
                block: i,
                expected: n,
                got: a.ncols(),
            });
        }
        if a.nrows() != b.len() {
            return Err(ProblemError::RhsLength {
                block: i,
                rows: a.nrows(),
                rhs: b.len(),
            });
        }
    }
    Ok(n)
}

pub(crate) fn residual(a: &Array2<f64>, b: &Array1<f64>, x: ArrayView1<'_, f64>) -> Array1<f64> {
    a.dot(&x) - b
}

pub(crate) fn gram_sums(blocks: &[(Array2<f64>, Array1<f64>)], n: usize) -> (Array2<f64>, Array1<f64>) {
    let mut ata = Array2::zeros((n, n));
    let mut atb = Array1::zeros(n);
    for (a, b) in blocks {
        ata += &a.t().dot(a);
        atb += &a.t().dot(b);
    }
    (ata, atb)
}

impl LocalObjectives for LeastSquares {
    fn dim(&self) -> usize {
        self.n
    }

    fn agents(&self) -> usize {
        self.blocks.len()
    }

    fn f(&self, _agent: usize, x: ArrayView1<'_, f64>) -> f64 {
        self.f_weight * x.dot(&x)
    }

    fn grad_f(&self, _agent: usize, x: ArrayView1<'_, f64>, mut out: ArrayViewMut1<'_, f64>) {
        out.assign(&x);
        out *= 2.0 * self.f_weight;
    }

    fn g(&self, agent: usize, x: ArrayView1<'_, f64>) -> f64 {
        let (a, b) = &self.blocks[agent];
        let r = residual(a, b, x);
        self.g_weight * r.dot(&r)
    }

    fn grad_g(&self, agent: usize, x: ArrayView1<'_, f64>, mut out: ArrayViewMut1<'_, f64>) {
        let (a, b) = &self.blocks[agent];
        let r = residual(a, b, x);
        out.assign(&a.t().dot(&r));
        out *= 2.0 * self.g_weight;
    }

    fn quadratic_model(&self) -> Option<QuadraticModel> {
        let (ata, atb) = gram_sums(&self.blocks, self.n);
        let m = self.blocks.len() as f64;
        Some(QuadraticModel {
            hess_g: ata * (2.0 * self.g_weight),
            lin_g: atb * (-2.0 * self.g_weight),
            hess_f: Array2::eye(self.n) * (2.0 * self.f_weight * m),
            lin_f: Array1::zeros(self.n),
        })
    }

    fn fingerprint(&self, h: &mut Sha256) {
        hash_array(h, [self.g_weight, self.f_weight].iter());
        for (a, b) in &self.blocks {
            hash_array(h, [a.nrows() as f64].iter());
            hash_array(h, a.iter());
            hash_array(h, b.iter());
        }
    }
}

/// Least-norm least squares: `g_i = ½‖A_i x − b_i‖²`, `f_i = ‖x‖²/m`, so
/// `μ_f = L_f = 2/m` and `L_g = max_i ρ(A_iᵀA_i)`.
pub fn make_least_norm_ls(blocks: Vec<(Array2<f64>, Array1<f64>)>) -> Result<ProblemInstance, ProblemError> {
    let m = blocks.len() as f64;
    let ls = LeastSquares::new(blocks, 0.5, 1.0 / m.max(1.0))?;
    let constants = Constants {
        mu_f: ls.f_modulus(),
        l_f: ls.f_modulus(),
        l_g: ls.l_g(),
    };
    let zero_data = ls
        .blocks
        .iter()
        .all(|(a, b)| a.iter().all(|v| *v == 0.0) && b.iter().all(|v| *v == 0.0));
    let n = ls.n;
    let p = ProblemInstance::new("least-norm", Box::new(ls), constants);
    Ok(if zero_data { p.with_known_solution(Array1::zeros(n)) } else { p })
}
