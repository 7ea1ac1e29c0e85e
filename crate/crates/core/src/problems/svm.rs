use ndarray::{s, Array1, Array2, ArrayView1, ArrayViewMut1};
use sha2::Sha256;

use super::{hash_array, Constants, LocalObjectives, ProblemError, ProblemInstance};
use crate::linalg::gram_spectral_radius;

/// A labeled dataset split into training and test indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmData {
    pub features: Array2<f64>,
    pub labels: Array1<f64>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl SvmData {
    pub fn train_features(&self) -> Array2<f64> {
        self.features.select(ndarray::Axis(0), &self.train)
    }

    pub fn train_labels(&self) -> Array1<f64> {
        self.labels.select(ndarray::Axis(0), &self.train)
    }

    /// Fraction of `indices` classified correctly by `sign(xᵀu + b)`.
    pub fn accuracy(&self, x: ArrayView1<'_, f64>, b: f64, indices: &[usize]) -> f64 {
        if indices.is_empty() {
            return f64::NAN;
        }
        let hits = indices
            .iter()
            .filter(|&&l| {
                let score = self.features.row(l).dot(&x) + b;
                score * self.labels[l] > 0.0
            })
            .count();
        hits as f64 / indices.len() as f64
    }
}

/// Penalized primal SVM over `w = (x, b, z)`.
///
/// `g_i(w) = ½ Σ_{ℓ∈S_i} [max(0, 1 − z_ℓ − v_ℓ(xᵀu_ℓ + b))² + max(0, −z_ℓ)²]`,
/// `f_i(w) = (η/2m)‖x‖² + Σ_{ℓ∈S_i} z_ℓ + (ε/2m)(b² + ‖z‖² + ‖x‖²·[η = 0])`.
#[derive(Debug, Clone)]
pub struct SvmObjectives {
    features: Array2<f64>,
    labels: Array1<f64>,
    partition: Vec<Vec<usize>>,
    eta: f64,
    eps: f64,
}

impl SvmObjectives {
    pub fn features(&self) -> usize {
        self.features.ncols()
    }

    pub fn samples(&self) -> usize {
        self.features.nrows()
    }

    /// Splits `w` into `(x, b, z)`.
    pub fn unpack<'a>(&self, w: ArrayView1<'a, f64>) -> (ArrayView1<'a, f64>, f64, ArrayView1<'a, f64>) {
        let p = self.features();
        let (x, rest) = w.split_at(ndarray::Axis(0), p);
        (x, rest[0], rest.slice_move(s![1..]))
    }

    fn margin_slack(&self, l: usize, w: ArrayView1<'_, f64>) -> f64 {
        let (x, b, z) = self.unpack(w);
        (1.0 - z[l] - self.labels[l] * (self.features.row(l).dot(&x) + b)).max(0.0)
    }

    fn x_weight(&self) -> f64 {
        if self.eta > 0.0 {
            self.eta
        } else {
            self.eps
        }
    }

    fn m(&self) -> f64 {
        self.partition.len() as f64
    }
}

impl LocalObjectives for SvmObjectives {
    fn dim(&self) -> usize {
        self.features() + 1 + self.samples()
    }

    fn agents(&self) -> usize {
        self.partition.len()
    }

    fn f(&self, agent: usize, w: ArrayView1<'_, f64>) -> f64 {
        let (x, b, z) = self.unpack(w);
        let m = self.m();
        let own: f64 = self.partition[agent].iter().map(|&l| z[l]).sum();
        0.5 * self.x_weight() / m * x.dot(&x) + own + 0.5 * self.eps / m * (b * b + z.dot(&z))
    }

    fn grad_f(&self, agent: usize, w: ArrayView1<'_, f64>, mut out: ArrayViewMut1<'_, f64>) {
        let p = self.features();
        let m = self.m();
        out.assign(&w);
        out.slice_mut(s![..p]).mapv_inplace(|v| v * self.x_weight() / m);
        out.slice_mut(s![p..]).mapv_inplace(|v| v * self.eps / m);
        for &l in &self.partition[agent] {
            out[p + 1 + l] += 1.0;
        }
    }

    fn g(&self, agent: usize, w: ArrayView1<'_, f64>) -> f64 {
        let (_, _, z) = self.unpack(w);
        0.5 * self.partition[agent]
            .iter()
            .map(|&l| self.margin_slack(l, w).powi(2) + (-z[l]).max(0.0).powi(2))
            .sum::<f64>()
    }

    fn grad_g(&self, agent: usize, w: ArrayView1<'_, f64>, mut out: ArrayViewMut1<'_, f64>) {
        let p = self.features();
        out.fill(0.0);
        for &l in &self.partition[agent] {
            let s1 = self.margin_slack(l, w);
            let zl = w[p + 1 + l];
            if s1 > 0.0 {
                let v = self.labels[l];
                out.slice_mut(s![..p]).scaled_add(-s1 * v, &self.features.row(l));
                out[p] -= s1 * v;
                out[p + 1 + l] -= s1;
            }
            out[p + 1 + l] -= (-zl).max(0.0);
        }
    }

    /// Sum of squared constraint violations, `2g`.
    fn infeasibility(&self, w: ArrayView1<'_, f64>) -> Option<f64> {
        Some(2.0 * (0..self.agents()).map(|i| self.g(i, w)).sum::<f64>())
    }

    fn fingerprint(&self, h: &mut Sha256) {
        hash_array(h, [self.eta, self.eps].iter());
        hash_array(h, self.features.iter());
        hash_array(h, self.labels.iter());
        for cell in &self.partition {
            let idx: Vec<f64> = cell.iter().map(|&l| l as f64).collect();
            hash_array(h, [idx.len() as f64].iter());
            hash_array(h, idx.iter());
        }
    }
}

/// Builds the penalized SVM. `features`/`labels` are the training samples;
/// `partition[i]` lists the samples held by agent `i` and must cover each
/// sample exactly once (empty cells are allowed). Requires `η ≥ 0`, `ε > 0`.
pub fn make_svm_instance(
    features: Array2<f64>,
    labels: Array1<f64>,
    partition: Vec<Vec<usize>>,
    eta: f64,
    eps: f64,
) -> Result<ProblemInstance, ProblemError> {
    let samples = features.nrows();
    if partition.is_empty() {
        return Err(ProblemError::NoBlocks);
    }
    if labels.len() != samples {
        return Err(ProblemError::RhsLength {
            block: 0,
            rows: samples,
            rhs: labels.len(),
        });
    }
    if let Some((l, &v)) = labels.iter().enumerate().find(|(_, v)| **v != 1.0 && **v != -1.0) {
        return Err(ProblemError::BadLabel { sample: l, label: v });
    }
    if !(eta >= 0.0) {
        return Err(ProblemError::BadParameter { name: "eta", value: eta });
    }
    if !(eps > 0.0) {
        return Err(ProblemError::BadParameter { name: "eps_sc", value: eps });
    }
    let mut count = vec![0usize; samples];
    for cell in &partition {
        for &l in cell {
            if l >= samples {
                return Err(ProblemError::IndexOutOfRange { index: l, dim: samples });
            }
            count[l] += 1;
        }
    }
    if let Some((l, &c)) = count.iter().enumerate().find(|(_, c)| **c != 1) {
        return Err(ProblemError::BadPartition { sample: l, count: c });
    }

    let p = features.ncols();
    let m = partition.len() as f64;
    // Each g_i is a sum of squared hinges of affine maps; its generalized
    // Hessian is dominated by MᵢᵀMᵢ + I, with Mᵢ stacking the margin rows.
    let l_g = partition
        .iter()
        .filter(|cell| !cell.is_empty())
        .map(|cell| {
            let mut rows = Array2::zeros((cell.len(), p + 1 + samples));
            for (r, &l) in cell.iter().enumerate() {
                let v = labels[l];
                rows.slice_mut(s![r, ..p]).assign(&(&features.row(l) * v));
                rows[[r, p]] = v;
                rows[[r, p + 1 + l]] = 1.0;
            }
            gram_spectral_radius(rows.view()) + 1.0
        })
        .fold(0.0, f64::max);
    let x_w = if eta > 0.0 { eta } else { eps };
    let constants = Constants {
        mu_f: x_w.min(eps) / m,
        l_f: x_w.max(eps) / m,
        l_g,
    };
    let obj = SvmObjectives {
        features,
        labels,
        partition,
        eta,
        eps,
    };
    Ok(ProblemInstance::new("svm", Box::new(obj), constants)
        .with_note(format!("strong-convexity augmentation eps_sc={eps:e} on (b, z{})", if eta > 0.0 { "" } else { ", x" })))
}
