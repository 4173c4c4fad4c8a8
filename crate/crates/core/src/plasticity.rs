//! Classical full-batch Hebbian and Oja weight updates.

use crate::error::{Error, Result};
use crate::numerics::{frob_norm_sq, Matrix};

/// Weights whose Frobenius norm exceeds this count as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    Hebb,
    Oja,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuleState {
    pub w: Matrix,
    pub eta: f64,
    pub rule: Rule,
}

impl RuleState {
    pub fn new(w: Matrix, eta: f64, rule: Rule) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate must be > 0, got {eta}")));
        }
        w.ensure_finite("RuleState::new")?;
        Ok(Self { w, eta, rule })
    }

    /// Applies whichever rule the state carries.
    pub fn step(&self, x: &Matrix) -> Result<RuleState> {
        match self.rule {
            Rule::Hebb => hebbian_step(self, x),
            Rule::Oja => oja_step(self, x),
        }
    }
}

fn check_input(state: &RuleState, x: &Matrix, op: &'static str) -> Result<()> {
    if x.cols() != state.w.rows() {
        return Err(Error::shape(op, format!("input has {} features, W has {} rows", x.cols(), state.w.rows())));
    }
    x.ensure_finite(op)
}

fn finish(state: &RuleState, w: Matrix) -> Result<RuleState> {
    let norm = frob_norm_sq(&w).sqrt();
    if !w.is_finite() || !(norm <= DIVERGENCE_NORM) {
        return Err(Error::Divergence { norm });
    }
    Ok(RuleState { w, eta: state.eta, rule: state.rule })
}

/// `ΔW = η XᵀY`, `Y = XW`.
pub fn hebbian_delta(state: &RuleState, x: &Matrix) -> Result<Matrix> {
    check_input(state, x, "hebbian_step")?;
    let y = x.matmul(&state.w)?;
    Ok(x.t_matmul(&y)?.scale(state.eta))
}

/// `ΔW = η (XᵀY − W YᵀY)`, `Y = XW`.
pub fn oja_delta(state: &RuleState, x: &Matrix) -> Result<Matrix> {
    check_input(state, x, "oja_step")?;
    let y = x.matmul(&state.w)?;
    let hebb = x.t_matmul(&y)?;
    let decay = state.w.matmul(&y.t_matmul(&y)?)?;
    Ok(hebb.sub(&decay)?.scale(state.eta))
}

pub fn hebbian_step(state: &RuleState, x: &Matrix) -> Result<RuleState> {
    let delta = hebbian_delta(state, x)?;
    finish(state, state.w.add(&delta)?)
}

pub fn oja_step(state: &RuleState, x: &Matrix) -> Result<RuleState> {
    let delta = oja_delta(state, x)?;
    finish(state, state.w.add(&delta)?)
}
