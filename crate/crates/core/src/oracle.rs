//! Closed-form ground truth for the structural-matching loss, and the
//! representation-similarity diagnostics used to compare learned features.
//!
//! For `X = UΣVᵀ` and a target width `M < N`, the minimizer of
//! `‖YYᵀ − XXᵀ‖²_F` over `Y = XW` is `Y* = X·V_M`. Its Gram is the best
//! rank-`M` approximation `Σ_{i≤M} σᵢ² uᵢuᵢᵀ` and the residual loss is
//! `Σ_{i>M} σᵢ⁴`.

use crate::error::{Error, Result};
use crate::numerics::{frob_norm_sq, svd, Matrix};

/// Number of singular directions compared by default in [`svd_alignment`].
pub const ALIGNMENT_COMPONENTS: usize = 36;

#[derive(Clone, Debug)]
pub struct OracleResult {
    /// `B x M` optimal projection `X·V_M`.
    pub y_star: Matrix,
    /// `Σ_{i>M} σᵢ⁴`.
    pub min_loss: f64,
    /// `B x B` best rank-`M` approximation of `XXᵀ`.
    pub gram_rank_m: Matrix,
    /// Singular values of `X`, descending.
    pub singular_values: Vec<f64>,
}

pub fn principal_projection(x: &Matrix, m: usize) -> Result<OracleResult> {
    if m == 0 || m >= x.cols() {
        return Err(Error::InvalidArgument(format!("projection width must satisfy 1 <= M < N (M = {m}, N = {})", x.cols())));
    }
    let dec = svd(x)?;
    let r = dec.s.len();
    let keep = m.min(r);
    let mut v_m = Matrix::zeros(x.cols(), m);
    for i in 0..x.cols() {
        for j in 0..keep {
            v_m.set(i, j, dec.v.get(i, j));
        }
    }
    let y_star = x.matmul(&v_m)?;
    let min_loss = dec.s.iter().skip(m).map(|s| s.powi(4)).sum();

    let scaled = Matrix::from_fn(x.rows(), keep, |i, j| dec.u.get(i, j) * dec.s[j]);
    let gram_rank_m = scaled.matmul_t(&scaled)?;
    Ok(OracleResult { y_star, min_loss, gram_rank_m, singular_values: dec.s })
}

/// `Σ_{i>M} σᵢ⁴` without forming the projection.
pub fn min_sphere_loss(x: &Matrix, m: usize) -> Result<f64> {
    if m == 0 || m >= x.cols() {
        return Err(Error::InvalidArgument(format!("need 1 <= M < N, got M = {m}, N = {}", x.cols())));
    }
    Ok(svd(x)?.s.iter().skip(m).map(|s| s.powi(4)).sum())
}

fn center_columns(a: &Matrix) -> Matrix {
    let n = a.rows() as f64;
    let means: Vec<f64> = (0..a.cols()).map(|j| (0..a.rows()).map(|i| a.get(i, j)).sum::<f64>() / n).collect();
    Matrix::from_fn(a.rows(), a.cols(), |i, j| a.get(i, j) - means[j])
}

/// Linear centered kernel alignment of two representations of the same
/// samples (rows).
///
/// Equals `⟨HKH, HLH⟩ / (‖HKH‖·‖HLH‖)` with `K = AAᵀ`, `L = BBᵀ` and the
/// centering matrix `H`, evaluated in feature space.
pub fn cka(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.rows() != b.rows() {
        return Err(Error::shape("cka", format!("{} vs {} samples", a.rows(), b.rows())));
    }
    if a.rows() < 2 {
        return Err(Error::InvalidArgument("cka needs at least two samples".into()));
    }
    a.ensure_finite("cka")?;
    b.ensure_finite("cka")?;
    let ac = center_columns(a);
    let bc = center_columns(b);
    let cross = frob_norm_sq(&ac.t_matmul(&bc)?);
    let self_a = frob_norm_sq(&ac.t_matmul(&ac)?).sqrt();
    let self_b = frob_norm_sq(&bc.t_matmul(&bc)?).sqrt();
    if self_a == 0.0 || self_b == 0.0 {
        return Err(Error::UndefinedSimilarity("centered Gram is zero"));
    }
    Ok(cross / (self_a * self_b))
}

fn numerical_rank(s: &[f64], rows: usize, cols: usize) -> usize {
    let tol = s.first().copied().unwrap_or(0.0) * rows.max(cols) as f64 * f64::EPSILON * 16.0;
    s.iter().filter(|&&v| v > tol).count()
}

/// `k x k` matrix of `|cos|` between the leading right singular vectors of
/// `a` (rows of the result) and `b` (columns).
pub fn svd_alignment(a: &Matrix, b: &Matrix, k: usize) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::shape("svd_alignment", format!("{} vs {} columns", a.cols(), b.cols())));
    }
    let da = svd(a)?;
    let db = svd(b)?;
    let avail = numerical_rank(&da.s, a.rows(), a.cols()).min(numerical_rank(&db.s, b.rows(), b.cols()));
    if k == 0 || k > avail {
        return Err(Error::InvalidArgument(format!("requested {k} components, {avail} available")));
    }
    let va = da.v.leading_columns(k);
    let vb = db.v.leading_columns(k);
    Ok(va.t_matmul(&vb)?.map(f64::abs))
}

/// [`svd_alignment`] with `k` clamped to the available rank, at most
/// [`ALIGNMENT_COMPONENTS`].
pub fn svd_alignment_clamped(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let ra = numerical_rank(&svd(a)?.s, a.rows(), a.cols());
    let rb = numerical_rank(&svd(b)?.s, b.rows(), b.cols());
    svd_alignment(a, b, ALIGNMENT_COMPONENTS.min(ra).min(rb))
}
