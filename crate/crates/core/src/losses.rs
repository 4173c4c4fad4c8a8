//! Hebbian-equivalent losses and their analytic gradients.
//!
//! Two families live here. The `*_linear` gradients and the `*_raw` losses
//! work on unnormalized matrices and follow the linear analysis `Y = XW`
//! exactly; they are what the closed-form oracle is checked against. The
//! training path ([`sphere_loss`], [`orth_loss`], [`total_loss`],
//! [`structural_loss_grad`]) row-normalizes `X` and `Z` before forming
//! Gram matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{frob_norm_sq, gram, row_normalize, svd, Matrix, ROW_NORM_EPS};

/// Smallest admissible `σ_min/σ_max` of the input Gram in [`oja_equiv_loss`].
pub const GRAM_CONDITION_FLOOR: f64 = 1e-10;

/// Largest `ZᵀZ` the orthogonality term will materialize, in entries.
pub const ORTH_MAX_ENTRIES: usize = 1 << 26;

/// Loss values for one batch. `total = oja + sphere + lambda * orth`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub oja: f64,
    pub sphere: f64,
    pub orth: f64,
    pub total: f64,
    pub lambda: f64,
}

/// Whether Gram matrices are built on row-normalized or raw inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramMode {
    Normalized,
    Raw,
}

/// Which terms make up the block objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub oja: bool,
    pub sphere: bool,
    pub orth: bool,
    pub lambda: f64,
    pub gram: GramMode,
}

impl Default for LossTerms {
    fn default() -> Self {
        Self { oja: false, sphere: true, orth: true, lambda: 0.8, gram: GramMode::Normalized }
    }
}

impl LossTerms {
    pub fn validate(&self) -> Result<()> {
        if !(self.oja || self.sphere || self.orth) {
            return Err(Error::InvalidArgument("at least one loss term must be enabled".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// `−½‖Y‖²_F`.
pub fn hebb_loss(y: &Matrix) -> f64 {
    -0.5 * frob_norm_sq(y)
}

/// `+½‖Y‖²_F`.
pub fn anti_hebb_loss(y: &Matrix) -> f64 {
    0.5 * frob_norm_sq(y)
}

/// Gradient of [`hebb_loss`] with respect to `W` for `Y = XW`: `−XᵀY`.
pub fn hebb_grad_linear(x: &Matrix, w: &Matrix) -> Result<Matrix> {
    let y = x.matmul(w)?;
    Ok(x.t_matmul(&y)?.scale(-1.0))
}

fn same_batch(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.rows() != b.rows() {
        return Err(Error::shape(op, format!("batch sizes {} and {}", a.rows(), b.rows())));
    }
    Ok(())
}

/// Inverse of a symmetric positive semidefinite Gram through its SVD,
/// refusing matrices whose condition ratio falls below the floor.
fn gram_inverse(k: &Matrix) -> Result<Matrix> {
    let dec = svd(k)?;
    let smax = dec.s[0];
    let smin = *dec.s.last().unwrap();
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if !(ratio >= GRAM_CONDITION_FLOOR) {
        return Err(Error::SingularGram { ratio });
    }
    let n = dec.s.len();
    let vs = Matrix::from_fn(dec.v.rows(), n, |i, j| dec.v.get(i, j) / dec.s[j]);
    let inv = vs.matmul_t(&dec.u)?;
    // Symmetrize away rounding.
    Ok(Matrix::from_fn(inv.rows(), inv.cols(), |i, j| 0.5 * (inv.get(i, j) + inv.get(j, i))))
}

/// Equivalent loss of Oja's rule:
/// `¼·Tr((YYᵀ−XXᵀ)(XXᵀ)⁻¹(YYᵀ−XXᵀ))`.
pub fn oja_equiv_loss(y: &Matrix, x: &Matrix) -> Result<f64> {
    same_batch("oja_equiv_loss", y, x)?;
    let kx = gram(x);
    let inv = gram_inverse(&kx)?;
    let d = gram(y).sub(&kx)?;
    let dpd = d.matmul(&inv)?.matmul(&d)?;
    Ok(0.25 * dpd.trace())
}

/// `‖YYᵀ − XXᵀ‖²_F` on raw inputs.
pub fn sphere_loss_raw(y: &Matrix, x: &Matrix) -> Result<f64> {
    same_batch("sphere_loss_raw", y, x)?;
    Ok(frob_norm_sq(&gram(y).sub(&gram(x))?))
}

/// `‖ẐẐᵀ − X̂X̂ᵀ‖²_F` with row-normalized `Ẑ`, `X̂`.
pub fn sphere_loss(z: &Matrix, x: &Matrix) -> Result<f64> {
    same_batch("sphere_loss", z, x)?;
    sphere_loss_raw(&row_normalize(z, ROW_NORM_EPS), &row_normalize(x, ROW_NORM_EPS))
}

/// `4Xᵀ(YYᵀ−XXᵀ)Y` with `Y = XW`, raw `X`.
pub fn sphere_grad_linear(x: &Matrix, w: &Matrix) -> Result<Matrix> {
    let y = x.matmul(w)?;
    let d = gram(&y).sub(&gram(x))?;
    Ok(x.t_matmul(&d.matmul(&y)?)?.scale(4.0))
}

/// `‖YᵀY − I‖²_F` on raw `Y`.
pub fn orth_loss_raw(y: &Matrix) -> Result<f64> {
    check_orth_width(y.cols())?;
    Ok(frob_norm_sq(&y.t_matmul(y)?.sub_identity()?))
}

/// `‖ẐᵀẐ − I‖²_F` with row-normalized `Ẑ`.
pub fn orth_loss(z: &Matrix) -> Result<f64> {
    orth_loss_raw(&row_normalize(z, ROW_NORM_EPS))
}

/// `XᵀY(YᵀY − I)` with `Y = XW`.
///
/// This is the printed form, which is one quarter of the exact derivative
/// of `‖YᵀY − I‖²_F`; the direction is the same.
pub fn orth_grad_linear(x: &Matrix, w: &Matrix) -> Result<Matrix> {
    let y = x.matmul(w)?;
    let c = y.t_matmul(&y)?.sub_identity()?;
    x.t_matmul(&y.matmul(&c)?)
}

fn check_orth_width(m: usize) -> Result<()> {
    if m.saturating_mul(m) > ORTH_MAX_ENTRIES {
        return Err(Error::MemoryConstraint(format!(
            "orthogonality loss on {m}-wide features needs a {m}x{m} matrix; reduce dimension with the auxiliary block"
        )));
    }
    Ok(())
}

/// `sphere + λ·orth` on the normalized path.
pub fn total_loss(z: &Matrix, x: &Matrix, lambda: f64) -> Result<LossBundle> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    let sphere = sphere_loss(z, x)?;
    let orth = orth_loss(z)?;
    Ok(LossBundle { oja: 0.0, sphere, orth, total: sphere + lambda * orth, lambda })
}

/// Block objective and its gradient with respect to the (unnormalized)
/// projected output `Z`. `x` is the flattened block input.
pub fn structural_loss_grad(z: &Matrix, x: &Matrix, terms: &LossTerms) -> Result<(LossBundle, Matrix)> {
    terms.validate()?;
    same_batch("structural_loss_grad", z, x)?;
    let (zh, xh) = match terms.gram {
        GramMode::Normalized => (row_normalize(z, ROW_NORM_EPS), row_normalize(x, ROW_NORM_EPS)),
        GramMode::Raw => (z.clone(), x.clone()),
    };
    let kx = gram(&xh);
    let kz = gram(&zh);
    let mut bundle = LossBundle { lambda: terms.lambda, ..Default::default() };
    let mut g = Matrix::zeros(zh.rows(), zh.cols());

    if terms.sphere || terms.oja {
        let d = kz.sub(&kx)?;
        if terms.sphere {
            bundle.sphere = frob_norm_sq(&d);
            g.axpy(4.0, &d.matmul(&zh)?)?;
        }
        if terms.oja {
            let p = gram_inverse(&kx)?;
            let dp = d.matmul(&p)?;
            bundle.oja = 0.25 * dp.matmul(&d)?.trace();
            // d/dD ¼Tr(DPD) = ¼(DP + PD); chain through D = ẐẐᵀ − K.
            let sym = dp.add(&dp.transpose())?;
            g.axpy(0.5, &sym.matmul(&zh)?)?;
        }
    }
    if terms.orth {
        check_orth_width(zh.cols())?;
        let c = zh.t_matmul(&zh)?.sub_identity()?;
        bundle.orth = frob_norm_sq(&c);
        g.axpy(4.0 * terms.lambda, &zh.matmul(&c)?)?;
    }
    bundle.total = bundle.oja + bundle.sphere + terms.lambda * bundle.orth;
    if !bundle.total.is_finite() {
        return Err(Error::NonFinite("structural_loss_grad"));
    }

    let dz = match terms.gram {
        GramMode::Normalized => row_normalize_backward(z, &zh, &g),
        GramMode::Raw => g,
    };
    Ok((bundle, dz))
}

/// Pulls a gradient on `ẑ = z / max(‖z‖, eps)` back to `z`.
pub fn row_normalize_backward(z: &Matrix, zh: &Matrix, g: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(z.rows(), z.cols());
    for i in 0..z.rows() {
        let norm = z.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        let gi = g.row(i);
        let o = out.row_mut(i);
        if norm > ROW_NORM_EPS {
            let proj: f64 = zh.row(i).iter().zip(gi).map(|(a, b)| a * b).sum();
            for ((o, &gv), &zv) in o.iter_mut().zip(gi).zip(zh.row(i)) {
                *o = (gv - zv * proj) / norm;
            }
        } else {
            for (o, &gv) in o.iter_mut().zip(gi) {
                *o = gv / ROW_NORM_EPS;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hebb_examples() {
        assert_eq!(hebb_loss(&Matrix::zeros(2, 2)), 0.0);
        assert_eq!(hebb_loss(&Matrix::identity(2)), -1.0);
        assert_eq!(anti_hebb_loss(&Matrix::identity(2)), 1.0);
    }

    #[test]
    fn oja_zero_at_identity_output() {
        let x = Matrix::from_rows(&[[1.0, 0.5, 0.0], [0.0, 2.0, 1.0], [1.0, 0.0, 3.0]]);
        assert!(oja_equiv_loss(&x, &x).unwrap().abs() < 1e-12);
    }

    #[test]
    fn oja_rejects_duplicated_rows() {
        let x = Matrix::from_rows(&[[1.0, 2.0, 0.0], [1.0, 2.0, 0.0], [0.0, 1.0, 1.0]]);
        let y = Matrix::from_rows(&[[1.0], [0.0], [1.0]]);
        assert!(matches!(oja_equiv_loss(&y, &x), Err(Error::SingularGram { .. })));
    }

    #[test]
    fn sphere_examples() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [0.5, -1.0]]);
        assert!(sphere_loss(&x, &x).unwrap().abs() < 1e-15);
        let z = Matrix::zeros(2, 3);
        assert!((sphere_loss(&z, &Matrix::identity(2)).unwrap() - 2.0).abs() < 1e-15);
        assert!(sphere_loss(&Matrix::zeros(3, 1), &x).is_err());
    }

    #[test]
    fn orth_examples() {
        // Rows of unit norm with orthonormal columns: 2x2 rotation.
        let (c, s) = (0.6, 0.8);
        let q = Matrix::from_rows(&[[c, -s], [s, c]]);
        assert!(orth_loss(&q).unwrap() < 1e-15);
        assert!((orth_loss(&Matrix::zeros(4, 2)).unwrap() - 2.0).abs() < 1e-15);
        assert!((orth_loss_raw(&q.scale(2.0)).unwrap() - 18.0).abs() < 1e-12);
    }

    #[test]
    fn orth_grad_vanishes_at_orthonormal_and_zero() {
        let x = Matrix::identity(3);
        let w = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]);
        assert!(orth_grad_linear(&x, &w).unwrap().max_abs() < 1e-15);
        assert_eq!(orth_grad_linear(&x, &Matrix::zeros(3, 2)).unwrap(), Matrix::zeros(3, 2));
    }

    #[test]
    fn sphere_grad_vanishes_when_grams_match() {
        let x = Matrix::identity(3);
        let grad = sphere_grad_linear(&x, &Matrix::identity(3)).unwrap();
        assert!(grad.max_abs() < 1e-15);
        assert!(sphere_grad_linear(&x, &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn total_lambda_zero_is_sphere() {
        let x = Matrix::from_rows(&[[1.0, 2.0, 0.0], [0.5, -1.0, 1.0], [0.0, 0.3, 2.0]]);
        let z = Matrix::from_rows(&[[1.0, 0.0], [0.2, 1.0], [0.4, 0.1]]);
        let b = total_loss(&z, &x, 0.0).unwrap();
        assert_eq!(b.total, b.sphere);
        assert!(total_loss(&z, &x, -1.0).is_err());
    }

    #[test]
    fn terms_need_one_enabled() {
        let t = LossTerms { oja: false, sphere: false, orth: false, ..Default::default() };
        assert!(t.validate().is_err());
    }
}
