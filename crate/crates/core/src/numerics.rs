//! Dense row-major matrices and the handful of linear-algebra routines the
//! rest of the crate is written against.
//!
//! Everything is `f64`. Operations are pure; the only allocation-free entry
//! point is [`gemm_into`], used by the convolution kernels.

use crate::error::{Error, Result};

/// Default guard for [`row_normalize`].
pub const ROW_NORM_EPS: f64 = 1e-8;

const SVD_MAX_SWEEPS: usize = 80;

/// Dense `rows x cols` matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix, rejecting length mismatches and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::shape("Matrix::new", format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Matrix::new"));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds from nested rows. Panics on ragged input; meant for literals.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            let row = row.as_ref();
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Columns `0..k`.
    pub fn leading_columns(&self, k: usize) -> Matrix {
        assert!(k <= self.cols);
        Matrix::from_fn(self.rows, k, |i, j| self.get(i, j))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_vec_unchecked(idx.len(), self.cols, data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(op))
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `self * rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        product(self, false, rhs, false, "matmul")
    }

    /// `selfᵀ * rhs`.
    pub fn t_matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        product(self, true, rhs, false, "t_matmul")
    }

    /// `self * rhsᵀ`.
    pub fn matmul_t(&self, rhs: &Matrix) -> Result<Matrix> {
        product(self, false, rhs, true, "matmul_t")
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, "hadamard", |a, b| a * b)
    }

    fn zip_with(&self, rhs: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != rhs.shape() {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self.shape(), rhs.shape())));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Matrix::from_vec_unchecked(self.rows, self.cols, data))
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    /// `self += c * rhs`.
    pub fn axpy(&mut self, c: f64, rhs: &Matrix) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::shape("axpy", format!("{:?} vs {:?}", self.shape(), rhs.shape())));
        }
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn sub_identity(&self) -> Result<Matrix> {
        if self.rows != self.cols {
            return Err(Error::shape("sub_identity", format!("{:?} is not square", self.shape())));
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            out.data[i * self.cols + i] -= 1.0;
        }
        Ok(out)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn product(a: &Matrix, ta: bool, b: &Matrix, tb: bool, op: &'static str) -> Result<Matrix> {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (k2, n) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    if k != k2 {
        return Err(Error::shape(op, format!("inner dims {k} vs {k2}")));
    }
    let mut c = Matrix::zeros(m, n);
    let (rsa, csa) = if ta { (1, a.cols) } else { (a.cols, 1) };
    let (rsb, csb) = if tb { (1, b.cols) } else { (b.cols, 1) };
    gemm_into(m, k, n, 1.0, &a.data, rsa, csa, &b.data, rsb, csb, 0.0, &mut c.data);
    Ok(c)
}

/// `c = alpha * op(a) * op(b) + beta * c`, `c` row-major `m x n`.
///
/// Strides are in elements. The caller guarantees the slices cover the
/// addressed ranges.
#[allow(clippy::too_many_arguments)]
pub fn gemm_into(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c[..m * n] {
            *v *= beta;
        }
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: bounds of every addressed element were checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Sum of squared entries.
pub fn frob_norm_sq(a: &Matrix) -> f64 {
    a.data.iter().map(|v| v * v).sum()
}

/// Gram matrix `A·Aᵀ`, exactly symmetric.
pub fn gram(a: &Matrix) -> Matrix {
    let mut g = a.matmul_t(a).expect("gram: shapes always agree");
    let n = g.rows;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (g.data[i * n + j] + g.data[j * n + i]);
            g.data[i * n + j] = v;
            g.data[j * n + i] = v;
        }
    }
    g
}

/// Divides each row by `max(‖row‖₂, eps)`.
pub fn row_normalize(a: &Matrix, eps: f64) -> Matrix {
    let mut out = a.clone();
    for i in 0..a.rows {
        let row = out.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(eps);
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    out
}

/// Per-row L2 norms.
pub fn row_norms(a: &Matrix) -> Vec<f64> {
    (0..a.rows).map(|i| a.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
}

/// Thin singular value decomposition `A = U·diag(S)·Vᵀ`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `rows x r`, orthonormal columns.
    pub u: Matrix,
    /// Descending, nonnegative, length `r = min(rows, cols)`.
    pub s: Vec<f64>,
    /// `cols x r`, orthonormal columns.
    pub v: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let r = self.s.len();
        let us = Matrix::from_fn(self.u.rows, r, |i, j| self.u.get(i, j) * self.s[j]);
        us.matmul_t(&self.v).expect("svd factors agree")
    }
}

/// One-sided Jacobi SVD.
///
/// Singular vectors are sign-normalized so the largest-magnitude entry of
/// every right singular vector is nonnegative. Columns belonging to
/// numerically zero singular values are completed to an orthonormal set.
pub fn svd(a: &Matrix) -> Result<SvdResult> {
    a.ensure_finite("svd")?;
    if a.rows == 0 || a.cols == 0 {
        return Err(Error::InvalidArgument("svd of an empty matrix".into()));
    }
    let transposed = a.rows < a.cols;
    let work = if transposed { a.transpose() } else { a.clone() };
    let (m, n) = work.shape();

    // Column-major working copies.
    let mut uc: Vec<Vec<f64>> = (0..n).map(|j| work.column(j)).collect();
    let mut vc: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let tol = f64::EPSILON;
    let mut converged = false;
    let mut residual = 0.0;
    for _sweep in 0..SVD_MAX_SWEEPS {
        let mut rotated = false;
        residual = 0.0f64;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let (up, uq) = (&uc[p], &uc[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for i in 0..m {
                        alpha += up[i] * up[i];
                        beta += uq[i] * uq[i];
                        gamma += up[i] * uq[i];
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 {
                    continue;
                }
                let scale = (alpha * beta).sqrt();
                let off = gamma.abs() / scale;
                if !(off > tol) {
                    continue;
                }
                residual = residual.max(off);
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut uc, p, q, c, s);
                rotate(&mut vc, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence { sweeps: SVD_MAX_SWEEPS, residual });
    }

    let sigma: Vec<f64> = uc.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap().then(i.cmp(&j)));
    let smax = sigma[order[0]];
    let zero_tol = smax * (m.max(n) as f64) * f64::EPSILON * 4.0;

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut v_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut s_out = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for &j in &order {
        let sj = sigma[j];
        if sj > zero_tol && sj > 0.0 {
            u_cols.push(uc[j].iter().map(|v| v / sj).collect());
            s_out.push(sj);
        } else {
            deficient.push(u_cols.len());
            u_cols.push(Vec::new());
            s_out.push(0.0);
        }
        v_cols.push(std::mem::take(&mut vc[j]));
    }
    for slot in deficient {
        u_cols[slot] = complete_basis(&u_cols, m);
    }
    let mut u = Matrix::from_fn(m, n, |i, j| u_cols[j][i]);
    let mut v = Matrix::from_fn(n, n, |i, j| v_cols[j][i]);
    if transposed {
        std::mem::swap(&mut u, &mut v);
    }
    sign_normalize(&mut u, &mut v);
    Ok(SvdResult { u, s: s_out, v })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// A unit vector orthogonal to every non-empty column in `existing`.
fn complete_basis(existing: &[Vec<f64>], m: usize) -> Vec<f64> {
    for k in 0..m {
        let mut cand = vec![0.0; m];
        cand[k] = 1.0;
        for _ in 0..2 {
            for col in existing.iter().filter(|c| !c.is_empty()) {
                let d: f64 = col.iter().zip(&cand).map(|(a, b)| a * b).sum();
                for (x, c) in cand.iter_mut().zip(col) {
                    *x -= d * c;
                }
            }
        }
        let norm = cand.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.5 {
            return cand.into_iter().map(|v| v / norm).collect();
        }
    }
    unreachable!("fewer than m columns always leave room for completion")
}

fn sign_normalize(u: &mut Matrix, v: &mut Matrix) {
    for j in 0..v.cols {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for i in 0..v.rows {
            let x = v.get(i, j);
            if x.abs() > best {
                best = x.abs();
                sign = if x < 0.0 { -1.0 } else { 1.0 };
            }
        }
        if sign < 0.0 {
            for i in 0..v.rows {
                v.set(i, j, -v.get(i, j));
            }
            for i in 0..u.rows {
                u.set(i, j, -u.get(i, j));
            }
        }
    }
}

/// Orthonormal basis for the column space of `a` (modified Gram–Schmidt,
/// applied twice). Requires full column rank.
pub fn orthonormalize_columns(a: &Matrix) -> Result<Matrix> {
    let (m, n) = a.shape();
    if n > m {
        return Err(Error::shape("orthonormalize_columns", format!("{m}x{n} has more columns than rows")));
    }
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    for j in 0..n {
        for _ in 0..2 {
            for i in 0..j {
                let d: f64 = cols[i].iter().zip(&cols[j]).map(|(x, y)| x * y).sum();
                let (lo, hi) = cols.split_at_mut(j);
                for (x, y) in hi[0].iter_mut().zip(&lo[i]) {
                    *x -= d * y;
                }
            }
        }
        let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::InvalidArgument("orthonormalize_columns: rank-deficient input".into()));
        }
        for v in cols[j].iter_mut() {
            *v /= norm;
        }
    }
    Ok(Matrix::from_fn(m, n, |i, j| cols[j][i]))
}

/// Cosine of the angle between two vectors (0 when either is zero).
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
