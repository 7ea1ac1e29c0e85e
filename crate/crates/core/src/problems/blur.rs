use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Constants, LeastSquares, ProblemError, ProblemInstance};
use crate::rng::DataRng;

/// How the 1-D kernel acts on a row-major `w×w` image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BlurMode {
    /// Along image rows only: `A = I ⊗ T`.
    Rows,
    /// Rows then columns: `A = T ⊗ T`.
    #[default]
    Separable,
}

/// Normalized Gaussian weights at offsets `-radius..=radius`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let w: Vec<f64> = (-r..=r)
        .map(|o| (-(o * o) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
fn reflect(j: isize, w: isize) -> usize {
    let r = if j < 0 {
        -j - 1
    } else if j >= w {
        2 * w - j - 1
    } else {
        j
    };
    r as usize
}

/// `w×w` 1-D convolution matrix with reflective boundary. Tap `k` sits at
/// offset `k − (len−1)/2`.
fn convolution_1d(w: usize, kernel: &[f64]) -> Array2<f64> {
    let half = ((kernel.len() - 1) / 2) as isize;
    let mut t = Array2::zeros((w, w));
    for i in 0..w {
        for (k, &wk) in kernel.iter().enumerate() {
            let j = reflect(i as isize + k as isize - half, w as isize);
            t[[i, j]] += wk;
        }
    }
    t
}

fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (p, q) = a.dim();
    let (r, c) = b.dim();
    let mut out = Array2::zeros((p * r, q * c));
    for i in 0..p {
        for j in 0..q {
            if a[[i, j]] != 0.0 {
                out.slice_mut(s![i * r..(i + 1) * r, j * c..(j + 1) * c])
                    .assign(&(b * a[[i, j]]));
            }
        }
    }
    out
}

/// Blur operator on flattened row-major `w×w` images.
pub fn blur_operator(w: usize, kernel: &[f64], mode: BlurMode) -> Result<Array2<f64>, ProblemError> {
    if kernel.is_empty() || kernel.len() > w {
        return Err(ProblemError::KernelTooWide {
            kernel: kernel.len(),
            width: w,
        });
    }
    let t = convolution_1d(w, kernel);
    Ok(match mode {
        BlurMode::Rows => kron(&Array2::eye(w), &t),
        BlurMode::Separable => kron(&t, &t),
    })
}

/// Deblurring instance: `g_i = ‖A_i x − b_i‖²` over `m` contiguous row blocks
/// of `A`, `f_i = ‖x‖²/(2m)`, `b = A·image` plus optional seeded Gaussian
/// noise `(σ, seed)`.
pub fn make_blur_instance(
    image: &Array1<f64>,
    kernel: &[f64],
    m: usize,
    mode: BlurMode,
    noise: Option<(f64, u64)>,
) -> Result<ProblemInstance, ProblemError> {
    let n = image.len();
    let w = (n as f64).sqrt().round() as usize;
    if w * w != n || n == 0 {
        return Err(ProblemError::NotSquareImage { len: n });
    }
    if m == 0 || !n.is_multiple_of(m) {
        return Err(ProblemError::UnevenSplit { rows: n, agents: m });
    }
    let a = blur_operator(w, kernel, mode)?;
    let mut b = a.dot(image);
    if let Some((sigma, seed)) = noise {
        let mut rng = DataRng::new(seed);
        b.mapv_inplace(|v| v + sigma * rng.normal());
    }
    let rows = n / m;
    let blocks = (0..m)
        .map(|i| {
            let r = i * rows..(i + 1) * rows;
            (a.slice(s![r.clone(), ..]).to_owned(), b.slice(s![r]).to_owned())
        })
        .collect();
    let ls = LeastSquares::new(blocks, 1.0, 0.5 / m as f64)?;
    let constants = Constants {
        mu_f: ls.f_modulus(),
        l_f: ls.f_modulus(),
        l_g: ls.l_g(),
    };
    let p = ProblemInstance::new("deblur", Box::new(ls), constants);
    Ok(if kernel == [1.0] && noise.is_none() {
        p.with_known_solution(image.clone())
    } else {
        p
    })
}

#[cfg(test)]
mod tests {
    use super::super::testing::{check_constants, check_gradients, random_point};
    use super::*;
    use ndarray::array;

    /// Direct reflective convolution of each image row.
    fn convolve_rows(img: &Array2<f64>, kernel: &[f64]) -> Array2<f64> {
        let (h, w) = img.dim();
        let half = (kernel.len() as isize - 1) / 2;
        Array2::from_shape_fn((h, w), |(r, c)| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, wk)| {
                    let mut j = c as isize + k as isize - half;
                    if j < 0 {
                        j = -j - 1;
                    }
                    if j >= w as isize {
                        j = 2 * w as isize - j - 1;
                    }
                    wk * img[[r, j as usize]]
                })
                .sum()
        })
    }

    #[test]
    fn identity_kernel() {
        let img = array![1.0, 2.0, 3.0, 4.0];
        let a = blur_operator(2, &[1.0], BlurMode::Separable).unwrap();
        assert_eq!(a, Array2::<f64>::eye(4));
        let p = make_blur_instance(&img, &[1.0], 1, BlurMode::Separable, None).unwrap();
        assert_eq!(p.known_solution().unwrap(), &img);
        assert_eq!(p.g(img.view()), 0.0);
    }

    #[test]
    fn two_tap_rows_match_direct_convolution() {
        let img = array![[1.0, 2.0], [3.0, 5.0]];
        let flat = Array1::from_iter(img.iter().copied());
        let a = blur_operator(2, &[0.5, 0.5], BlurMode::Rows).unwrap();
        let expected = array![
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.5, 0.5],
            [0.0, 0.0, 0.0, 1.0]
        ];
        assert_eq!(a, expected);
        let direct = convolve_rows(&img, &[0.5, 0.5]);
        assert_eq!(a.dot(&flat), Array1::from_iter(direct.iter().copied()));
    }

    #[test]
    fn separable_matches_rows_then_columns() {
        let w = 6;
        let kernel = gaussian_kernel(1.0, 2);
        let img = Array2::from_shape_fn((w, w), |(r, c)| ((r * 7 + c * 3) % 5) as f64);
        let rows = convolve_rows(&img, &kernel);
        let both = convolve_rows(&rows.t().to_owned(), &kernel).t().to_owned();
        let a = blur_operator(w, &kernel, BlurMode::Separable).unwrap();
        let got = a.dot(&Array1::from_iter(img.iter().copied()));
        for (x, y) in got.iter().zip(both.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_properties_and_errors() {
        let k = gaussian_kernel(1.0, 3);
        assert_eq!(k.len(), 7);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(k[0], k[6]);
        assert!(matches!(
            blur_operator(3, &gaussian_kernel(1.0, 2), BlurMode::Rows),
            Err(ProblemError::KernelTooWide { kernel: 5, width: 3 })
        ));
        let img = Array1::zeros(16);
        assert!(matches!(
            make_blur_instance(&img, &[1.0], 3, BlurMode::Rows, None),
            Err(ProblemError::UnevenSplit { .. })
        ));
        assert!(matches!(
            make_blur_instance(&Array1::zeros(5), &[1.0], 1, BlurMode::Rows, None),
            Err(ProblemError::NotSquareImage { len: 5 })
        ));
    }

    #[test]
    fn split_invariance() {
        let img = Array1::from_shape_fn(36, |i| (i as f64 * 0.37).sin());
        let k = gaussian_kernel(1.0, 2);
        let one = make_blur_instance(&img, &k, 1, BlurMode::Separable, Some((0.01, 5))).unwrap();
        let four = make_blur_instance(&img, &k, 4, BlurMode::Separable, Some((0.01, 5))).unwrap();
        let mut rng = DataRng::new(9);
        for _ in 0..50 {
            let x = random_point(&mut rng, 36, 1.0);
            let (g1, g4) = (one.g(x.view()), four.g(x.view()));
            assert!((g1 - g4).abs() <= 1e-10 * (1.0 + g1.abs()));
            assert!((one.f(x.view()) - 0.5 * x.dot(&x)).abs() < 1e-10);
            assert!((four.f(x.view()) - 0.5 * x.dot(&x)).abs() < 1e-10);
        }
    }

    #[test]
    fn finite_differences_and_constants() {
        let img = Array1::from_shape_fn(25, |i| (i % 3) as f64);
        let p = make_blur_instance(&img, &gaussian_kernel(1.0, 1), 5, BlurMode::Separable, None).unwrap();
        check_gradients(&p, 100, 1.0, 31);
        check_constants(&p, 100, 1.0, 32);
    }
}
