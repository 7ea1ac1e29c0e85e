//! Small dense linear-algebra helpers shared by the problem builders and the
//! oracle. Factorizations are delegated to `nalgebra`.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

pub fn to_dmatrix(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn to_dvector(v: ArrayView1<'_, f64>) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().copied())
}

pub fn from_dvector(v: &DVector<f64>) -> Array1<f64> {
    Array1::from_iter(v.iter().copied())
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub fn norm2(v: ArrayView1<'_, f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Frobenius norm, which is the vector 2-norm of the stacked matrix.
pub fn frobenius(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(a: ArrayView2<'_, f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let eig = nalgebra::SymmetricEigen::new(to_dmatrix(a));
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// Eigen-decomposition of a symmetric matrix: ascending eigenvalues and the
/// matching orthonormal eigenvectors as columns.
pub fn symmetric_eigen(a: ArrayView2<'_, f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), Array2::zeros((0, 0)));
    }
    let eig = nalgebra::SymmetricEigen::new(to_dmatrix(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `ρ(AᵀA)`, computed on whichever of `AᵀA` and `AAᵀ` is smaller.
pub fn gram_spectral_radius(a: ArrayView2<'_, f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let gram = if a.nrows() < a.ncols() {
        a.dot(&a.t())
    } else {
        a.t().dot(&a)
    };
    symmetric_eigenvalues(gram.view())
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(0.0)
}

/// Solves `a x = b` by LU with partial pivoting.
pub fn solve(a: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Option<Array1<f64>> {
    let lu = to_dmatrix(a).lu();
    lu.solve(&to_dvector(b)).map(|x| from_dvector(&x))
}
