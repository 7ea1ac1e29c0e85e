//! Seeded generators for the shipped instances and CSV loaders for user data.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};

use super::{DataBlock, ProblemError, SvmData};
use crate::rng::DataRng;

/// Data of a constrained quadratic program `min Σ ½xᵀQ_i x + q_iᵀx` subject
/// to `Ax = b`, `x_J ≥ 0`.
#[derive(Debug, Clone)]
pub struct ConstrainedQp {
    pub quad: Vec<(Array2<f64>, Array1<f64>)>,
    pub blocks: Vec<(Array2<f64>, Array1<f64>)>,
    pub nonneg: Vec<usize>,
    pub feasible_point: Array1<f64>,
}

/// Sensor network least squares: agent `i` observes `z_i = H_i x_true`
/// (plus optional `N(0, σ²)` noise) through a `d×n` standard normal `H_i`.
/// Returns the blocks and `x_true ~ N(0, I/n)`.
pub fn sensor_blocks(
    m: usize,
    n: usize,
    d: usize,
    noise: Option<f64>,
    seed: u64,
) -> (Vec<DataBlock>, Array1<f64>) {
    let mut rng = DataRng::new(seed);
    let x_true = Array1::from_shape_fn(n, |_| rng.normal() / (n as f64).sqrt());
    let blocks = (0..m)
        .map(|_| {
            let h = Array2::from_shape_fn((d, n), |_| rng.normal());
            let mut z = h.dot(&x_true);
            if let Some(sigma) = noise {
                z.mapv_inplace(|v| v + sigma * rng.normal());
            }
            (h, z)
        })
        .collect();
    (blocks, x_true)
}

/// A feasible QP with one unit-norm equality row per agent and
/// nonnegativity on every coordinate. The first two coordinates of the
/// generating feasible point are zero, and the quadratics are diagonal
/// with entries in `[0.5, 1.5]`, centered near the feasible set.
pub fn constrained_qp(m: usize, n: usize, seed: u64) -> ConstrainedQp {
    let mut rng = DataRng::new(seed);
    let mut a = Array2::from_shape_fn((m, n), |_| rng.normal());
    for mut row in a.axis_iter_mut(Axis(0)) {
        let norm = row.dot(&row).sqrt();
        row /= norm;
    }
    let mut feasible_point = Array1::from_shape_fn(n, |_| rng.normal().abs());
    for j in 0..n.min(2) {
        feasible_point[j] = 0.0;
    }
    let b = a.dot(&feasible_point);
    let center = &feasible_point + &Array1::from_shape_fn(n, |_| 0.3 * rng.normal());
    let quad = (0..m)
        .map(|_| {
            let d = Array1::from_shape_fn(n, |_| rng.uniform_in(0.5, 1.5));
            let shift = &center + &Array1::from_shape_fn(n, |_| 0.3 * rng.normal());
            let q = Array2::from_diag(&d);
            let lin = -q.dot(&shift);
            (q, lin)
        })
        .collect();
    let blocks = (0..m)
        .map(|i| (a.row(i).to_owned().insert_axis(Axis(0)), Array1::from_elem(1, b[i])))
        .collect();
    ConstrainedQp {
        quad,
        blocks,
        nonneg: (0..n).collect(),
        feasible_point,
    }
}

/// Piecewise-constant `w×w` test image with two rectangles and a disc,
/// values in `[0, 1]`, flattened row-major.
pub fn synthetic_image(w: usize) -> Array1<f64> {
    let wf = w as f64;
    Array1::from_shape_fn(w * w, |idx| {
        let (r, c) = ((idx / w) as f64 / wf, (idx % w) as f64 / wf);
        let mut v = 0.1;
        if (0.15..0.45).contains(&r) && (0.1..0.6).contains(&c) {
            v = 0.8;
        }
        if (0.55..0.85).contains(&r) && (0.2..0.4).contains(&c) {
            v = 0.5;
        }
        if (r - 0.65).powi(2) + (c - 0.7).powi(2) < 0.04 {
            v = 1.0;
        }
        v
    })
}

/// Two Gaussian classes in the plane, `N(±μ·1, I)`, with `samples` points
/// shuffled and split into the first `train` for training and the rest for
/// testing.
pub fn two_gaussians(samples: usize, train: usize, separation: f64, seed: u64) -> SvmData {
    let mut rng = DataRng::new(seed);
    let mut features = Array2::zeros((samples, 2));
    let mut labels = Array1::zeros(samples);
    for l in 0..samples {
        let v = if l % 2 == 0 { 1.0 } else { -1.0 };
        labels[l] = v;
        for j in 0..2 {
            features[[l, j]] = v * separation + rng.normal();
        }
    }
    let mut order: Vec<usize> = (0..samples).collect();
    rng.shuffle(&mut order);
    let train_idx = order[..train.min(samples)].to_vec();
    let test_idx = order[train.min(samples)..].to_vec();
    SvmData {
        features,
        labels,
        train: train_idx,
        test: test_idx,
    }
}

/// Balanced contiguous split of `0..n` into `m` cells (earlier cells get the
/// extra element).
pub fn contiguous_partition(n: usize, m: usize) -> Vec<Vec<usize>> {
    let base = n / m;
    let extra = n % m;
    let mut start = 0;
    (0..m)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let cell = (start..start + len).collect();
            start += len;
            cell
        })
        .collect()
}

/// Reads a dense matrix from CSV with one header row.
pub fn load_matrix_csv(path: &Path) -> Result<Array2<f64>, ProblemError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ProblemError::Data(format!("{}: {e}", path.display())))?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ProblemError::Data(format!("{}: {e}", path.display())))?;
        if *cols.get_or_insert(record.len()) != record.len() {
            return Err(ProblemError::Data(format!("{}: ragged row {}", path.display(), r + 2)));
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| {
                ProblemError::Data(format!("{}: row {}: bad number {field:?}", path.display(), r + 2))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), values).map_err(|e| ProblemError::Data(e.to_string()))
}

/// Reads a labeled dataset: every column but the last is a feature, the last
/// is the `±1` label. All samples are training samples.
pub fn load_labeled_csv(path: &Path) -> Result<SvmData, ProblemError> {
    let table = load_matrix_csv(path)?;
    if table.ncols() < 2 {
        return Err(ProblemError::Data(format!("{}: need features and a label column", path.display())));
    }
    let p = table.ncols() - 1;
    let features = table.slice(ndarray::s![.., ..p]).to_owned();
    let labels = table.column(p).to_owned();
    let n = labels.len();
    Ok(SvmData {
        features,
        labels,
        train: (0..n).collect(),
        test: Vec::new(),
    })
}
