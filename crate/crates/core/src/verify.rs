//! Finite-difference checks of every analytic gradient in the crate.

use serde::Serialize;

use rand::Rng;

use crate::error::Result;
use crate::losses::{
    orth_grad_linear, orth_loss_raw, sphere_grad_linear, sphere_loss_raw, structural_loss_grad, GramMode, LossBundle, LossTerms,
};
use crate::network::{Activation, AuxSpec, FeatureMap, SphereBlock};
use crate::numerics::{cosine, Matrix};
use crate::sampling::{gaussian_matrix, seeded};

pub const LINEAR_STEP: f64 = 1e-5;
pub const LINEAR_TOLERANCE: f64 = 1e-5;
pub const BLOCK_STEP: f64 = 1e-4;
pub const BLOCK_TOLERANCE: f64 = 1e-4;
pub const DIRECTION_TOLERANCE: f64 = 1e-8;

/// Entries whose analytic and numeric magnitudes are both below this are
/// compared absolutely rather than relatively.
const ABS_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckRow {
    pub op: String,
    pub metric: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckRow {
    fn at_most(op: impl Into<String>, metric: &'static str, value: f64, tolerance: f64) -> Self {
        Self { op: op.into(), metric, value, tolerance, passed: value <= tolerance }
    }
}

/// Central differences of a scalar function of a matrix.
pub fn central_difference(w: &Matrix, h: f64, f: impl Fn(&Matrix) -> Result<f64>) -> Result<Matrix> {
    let mut g = Matrix::zeros(w.rows(), w.cols());
    let mut probe = w.clone();
    for k in 0..w.data().len() {
        let orig = w.data()[k];
        probe.data_mut()[k] = orig + h;
        let up = f(&probe)?;
        probe.data_mut()[k] = orig - h;
        let down = f(&probe)?;
        probe.data_mut()[k] = orig;
        g.data_mut()[k] = (up - down) / (2.0 * h);
    }
    Ok(g)
}

/// `‖a − b‖ / ‖b‖`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Largest entrywise `|a − n| / max(|a|, |n|)`, with tiny entries compared
/// absolutely.
pub fn max_entry_error(a: &[f64], n: &[f64]) -> f64 {
    a.iter()
        .zip(n)
        .map(|(&x, &y)| {
            let scale = x.abs().max(y.abs());
            if scale < ABS_FLOOR {
                (x - y).abs()
            } else {
                (x - y).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// `sphere_grad_linear` against differences of `‖XWWᵀXᵀ − XXᵀ‖²`.
pub fn check_sphere_linear(seed: u64) -> Result<GradCheckRow> {
    let mut r = seeded(seed);
    let x = gaussian_matrix(5, 4, &mut r);
    let w = gaussian_matrix(4, 2, &mut r);
    let fd = central_difference(&w, LINEAR_STEP, |w| sphere_loss_raw(&x.matmul(w)?, &x))?;
    let an = sphere_grad_linear(&x, &w)?;
    Ok(GradCheckRow::at_most("sphere_grad_linear", "rel_err", relative_error(an.data(), fd.data()), LINEAR_TOLERANCE))
}

/// `orth_grad_linear` against differences of `‖YᵀY − I‖²`: same direction,
/// one quarter of the magnitude.
pub fn check_orth_linear(seed: u64) -> Result<[GradCheckRow; 2]> {
    let mut r = seeded(seed);
    let x = gaussian_matrix(5, 4, &mut r);
    let w = gaussian_matrix(4, 2, &mut r);
    let fd = central_difference(&w, LINEAR_STEP, |w| orth_loss_raw(&x.matmul(w)?))?;
    let an = orth_grad_linear(&x, &w)?;
    let cos = cosine(an.data(), fd.data());
    let quarter: Vec<f64> = fd.data().iter().map(|v| v / 4.0).collect();
    Ok([
        GradCheckRow::at_most("orth_grad_linear", "1-cos", 1.0 - cos, DIRECTION_TOLERANCE),
        GradCheckRow::at_most("orth_grad_linear", "rel_err_vs_quarter", relative_error(an.data(), &quarter), LINEAR_TOLERANCE),
    ])
}

/// Objective of one block on one batch, no gradients.
pub fn block_loss(block: &SphereBlock, x: &FeatureMap, terms: &LossTerms) -> Result<LossBundle> {
    let out = block.forward(x)?;
    Ok(structural_loss_grad(&out.z, &x.flatten(), terms)?.0)
}

/// Per-parameter comparison of `SphereBlock::backward` with central
/// differences of the block objective.
pub fn check_block(block: &SphereBlock, x: &FeatureMap, terms: &LossTerms, h: f64) -> Result<Vec<(String, f64)>> {
    let (grads, _) = block.backward(x, terms)?;
    let mut probe = block.clone();
    let mut out = Vec::with_capacity(grads.values.len());
    for (t, (name, analytic)) in grads.names.iter().zip(&grads.values).enumerate() {
        let mut numeric = vec![0.0; analytic.len()];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let orig = probe.params_mut()[t][k];
            probe.params_mut()[t][k] = orig + h;
            let up = block_loss(&probe, x, terms)?.total;
            probe.params_mut()[t][k] = orig - h;
            let down = block_loss(&probe, x, terms)?.total;
            probe.params_mut()[t][k] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        out.push((name.clone(), max_entry_error(analytic, &numeric)));
    }
    Ok(out)
}

/// Small blocks covering each code path: convolutional with `φ` of depth
/// 0–2, skip connection, identity `φ`, and a dense perceptron; every loss
/// term enabled.
pub fn block_cases(seed: u64) -> Result<Vec<(String, SphereBlock, FeatureMap, LossTerms)>> {
    let mut r = seeded(seed);
    let all_terms = LossTerms { oja: false, sphere: true, orth: true, lambda: 0.8, gram: GramMode::Normalized };
    let mut cases = Vec::new();
    let img = |r: &mut crate::sampling::SeededRng, b: usize, c: usize, hw: usize| {
        FeatureMap::from_matrix(&gaussian_matrix(b, c * hw * hw, r), c, hw, hw)
    };

    // 2 -> 3 channels with the fully connected projection straight on the
    // pooled features; the pointwise-convolution variants use 4 output
    // channels so the halved width stays above one.
    for (out_ch, depth) in [(3, 0), (4, 1), (4, 2)] {
        let block = SphereBlock::conv(2, out_ch, Activation::Tanh, false, AuxSpec { enabled: true, depth, d_proj: 4 }, &mut r)?;
        let x = img(&mut r, 4, 2, 6)?;
        cases.push((format!("block conv tanh 2->{out_ch} phi_depth={depth}"), block, x, all_terms));
    }
    let block = SphereBlock::conv(2, 4, Activation::LeakyRelu(0.01), true, AuxSpec { enabled: true, depth: 1, d_proj: 4 }, &mut r)?;
    let x = img(&mut r, 4, 2, 6)?;
    cases.push(("block conv leaky_relu skip".into(), block, x, all_terms));

    let block = SphereBlock::conv(2, 3, Activation::Sigmoid, false, AuxSpec { enabled: false, depth: 0, d_proj: 0 }, &mut r)?;
    let x = img(&mut r, 4, 2, 4)?;
    cases.push(("block conv sigmoid no_phi".into(), block, x, all_terms));

    let block = SphereBlock::mlp(6, 5, 4, 3, Activation::Tanh, &mut r)?;
    let x = FeatureMap::from_matrix(&gaussian_matrix(4, 6, &mut r), 6, 1, 1)?;
    cases.push(("block mlp tanh depth=3".into(), block, x, all_terms));

    let block = SphereBlock::linear(6, 3, &mut r);
    let x = FeatureMap::from_matrix(&gaussian_matrix(4, 6, &mut r), 6, 1, 1)?;
    let oja = LossTerms { oja: true, sphere: false, orth: false, lambda: 0.0, gram: GramMode::Normalized };
    cases.push(("block linear oja".into(), block, x, oja));

    // Zero biases can leave a case sitting on a symmetric critical point
    // where every gradient vanishes; move off it.
    for (_, block, _, _) in cases.iter_mut() {
        let names: Vec<String> = block.params().into_iter().map(|(n, _)| n).collect();
        for (name, p) in names.iter().zip(block.params_mut()) {
            if name.ends_with("bias") {
                for v in p.iter_mut() {
                    *v = r.random_range(-0.5..0.5);
                }
            }
        }
    }
    Ok(cases)
}

/// The full table printed by the `gradcheck` command.
pub fn gradcheck_suite(seed: u64) -> Result<Vec<GradCheckRow>> {
    let mut rows = vec![check_sphere_linear(seed)?];
    rows.extend(check_orth_linear(seed.wrapping_add(1))?);
    for (label, block, x, terms) in block_cases(seed.wrapping_add(2))? {
        for (param, err) in check_block(&block, &x, &terms, BLOCK_STEP)? {
            rows.push(GradCheckRow::at_most(format!("{label} {param}"), "max_rel_err", err, BLOCK_TOLERANCE));
        }
    }
    Ok(rows)
}
