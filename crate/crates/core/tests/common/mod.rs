//! Independent reference implementations used only by the test suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sphere::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| r.sample::<f64, _>(StandardNormal))
}

/// Random orthogonal `n x n` via classical Gram–Schmidt on a Gaussian.
pub fn random_orthogonal(n: usize, r: &mut ChaCha8Rng) -> Matrix {
    let g = gaussian(n, n, r);
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| g.column(j)).collect();
    for j in 0..n {
        for _ in 0..2 {
            for i in 0..j {
                let d: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                let ci = cols[i].clone();
                for (x, y) in cols[j].iter_mut().zip(&ci) {
                    *x -= d * y;
                }
            }
        }
        let nrm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in cols[j].iter_mut() {
            *v /= nrm;
        }
    }
    Matrix::from_fn(n, n, |i, j| cols[j][i])
}

/// Classical cyclic Jacobi iteration for a symmetric matrix. Returns
/// eigenvalues in descending order with matching eigenvectors as columns.
pub fn jacobi_eigh(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let scale: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off < 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m[b][b].partial_cmp(&m[a][a]).unwrap());
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| v[i][order[j]]);
    (values, vectors)
}

/// Eigenvalues of a symmetric matrix, descending.
pub fn jacobi_eigenvalues(a: &Matrix) -> Vec<f64> {
    jacobi_eigh(a).0
}

/// Best rank-`m` approximation of a symmetric positive semidefinite matrix,
/// from its leading eigenpairs.
pub fn psd_truncation(a: &Matrix, m: usize) -> Matrix {
    let (values, vectors) = jacobi_eigh(a);
    Matrix::from_fn(a.rows(), a.cols(), |i, j| (0..m).map(|k| values[k] * vectors.get(i, k) * vectors.get(j, k)).sum())
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn gauss_jordan_inverse(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut aug: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| aug[x][col].abs().partial_cmp(&aug[y][col].abs()).unwrap()).unwrap();
        aug.swap(col, piv);
        let d = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                let pivot_row = aug[col].clone();
                for (v, p) in aug[r].iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
    }
    Matrix::from_fn(n, n, |i, j| aug[i][n + j])
}

/// Naive product, no blocking.
pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum())
}

/// Central-difference gradient of `f` at `w`.
pub fn central_diff(w: &Matrix, h: f64, f: impl Fn(&Matrix) -> f64) -> Matrix {
    let mut g = Matrix::zeros(w.rows(), w.cols());
    for i in 0..w.rows() {
        for j in 0..w.cols() {
            let mut p = w.clone();
            p.set(i, j, w.get(i, j) + h);
            let mut m = w.clone();
            m.set(i, j, w.get(i, j) - h);
            g.set(i, j, (f(&p) - f(&m)) / (2.0 * h));
        }
    }
    g
}

pub fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    let num: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.data().iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

/// Six nested loops over batch, out channel, rows, cols, in channel, taps.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv(
    x: &[f64],
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    oc: usize,
    k: usize,
    pad: usize,
) -> Vec<f64> {
    let oh = h + 2 * pad + 1 - k;
    let ow = w + 2 * pad + 1 - k;
    let mut out = vec![0.0; b * oc * oh * ow];
    for n in 0..b {
        for o in 0..oc {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = bias[o];
                    for ci in 0..c {
                        for ki in 0..k {
                            for kj in 0..k {
                                let iy = y as isize + ki as isize - pad as isize;
                                let ix = xx as isize + kj as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += weight[((o * c + ci) * k + ki) * k + kj] * x[((n * c + ci) * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                    out[((n * oc + o) * oh + y) * ow + xx] = acc;
                }
            }
        }
    }
    out
}
