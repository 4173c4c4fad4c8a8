//! Linear softmax probe on frozen features.

use serde::{Deserialize, Serialize};

use super::optim::{AdamW, OptimizerState};
use crate::data::batch_indices;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::sampling::derived;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub final_loss: f64,
}

/// Per-column mean and standard deviation of the training features.
pub fn standardizer(train: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = train.shape();
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(train.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for i in 0..n {
        for ((s, v), m) in var.iter_mut().zip(train.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.iter().map(|s| (s / n as f64).sqrt().max(1e-8)).collect();
    (mean, std)
}

pub fn standardize(x: &Matrix, mean: &[f64], std: &[f64]) -> Matrix {
    Matrix::from_fn(x.rows(), x.cols(), |i, j| (x.get(i, j) - mean[j]) / std[j])
}

fn logits(x: &Matrix, w: &Matrix, b: &[f64]) -> Result<Matrix> {
    let mut z = x.matmul(w)?;
    for i in 0..z.rows() {
        for (v, bj) in z.row_mut(i).iter_mut().zip(b) {
            *v += bj;
        }
    }
    Ok(z)
}

fn argmax(row: &[f64]) -> usize {
    row.iter().enumerate().fold(0, |best, (j, &v)| if v > row[best] { j } else { best })
}

fn accuracy(x: &Matrix, labels: &[usize], w: &Matrix, b: &[f64]) -> Result<f64> {
    if labels.is_empty() {
        return Ok(0.0);
    }
    let z = logits(x, w, b)?;
    let hits = (0..z.rows()).filter(|&i| argmax(z.row(i)) == labels[i]).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Mean cross-entropy and its gradient with respect to the logits.
fn softmax_xent(z: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let n = z.rows();
    let mut g = Matrix::zeros(n, z.cols());
    let mut loss = 0.0;
    for i in 0..n {
        let row = z.row(i);
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - mx).exp()).sum();
        loss += sum.ln() + mx - row[labels[i]];
        for (j, gv) in g.row_mut(i).iter_mut().enumerate() {
            *gv = ((row[j] - mx).exp() / sum - f64::from(u8::from(j == labels[i]))) / n as f64;
        }
    }
    (loss / n as f64, g)
}

/// Trains a softmax classifier on standardized features (statistics from the
/// training split) and reports accuracy on both splits.
pub fn linear_probe(
    train: &Matrix,
    train_labels: &[usize],
    test: &Matrix,
    test_labels: &[usize],
    num_classes: usize,
    opts: &ProbeOptions,
) -> Result<ProbeReport> {
    if train.rows() != train_labels.len() || test.rows() != test_labels.len() || train.cols() != test.cols() {
        return Err(Error::shape(
            "probe",
            format!("train {:?}/{} test {:?}/{}", train.shape(), train_labels.len(), test.shape(), test_labels.len()),
        ));
    }
    if train.rows() == 0 || num_classes < 2 {
        return Err(Error::InvalidArgument("probe needs samples and at least two classes".into()));
    }
    if let Some(&bad) = train_labels.iter().chain(test_labels).find(|&&l| l >= num_classes) {
        return Err(Error::InvalidArgument(format!("label {bad} outside {num_classes} classes")));
    }
    let (mean, std) = standardizer(train);
    let xtr = standardize(train, &mean, &std);
    let xte = standardize(test, &mean, &std);
    let d = train.cols();
    let mut w = Matrix::zeros(d, num_classes);
    let mut b = vec![0.0; num_classes];
    let hyper = AdamW { weight_decay: opts.weight_decay, ..AdamW::default() };
    let mut state = OptimizerState::new(&[d * num_classes, num_classes], hyper);
    let mut rng = derived(opts.seed, 7);
    let batch = opts.batch_size.min(train.rows()).max(1);
    let mut final_loss = f64::NAN;
    for _ in 0..opts.epochs {
        let mut sum = 0.0;
        let batches = batch_indices(train.rows(), batch, &mut rng, true, false);
        for idx in &batches {
            let xb = xtr.select_rows(idx);
            let yb: Vec<usize> = idx.iter().map(|&i| train_labels[i]).collect();
            let (loss, g) = softmax_xent(&logits(&xb, &w, &b)?, &yb);
            let gw = xb.t_matmul(&g)?;
            let gb: Vec<f64> = (0..num_classes).map(|j| (0..g.rows()).map(|i| g.get(i, j)).sum()).collect();
            state.step(vec![w.data_mut(), &mut b], &[gw.into_data(), gb], opts.lr)?;
            sum += loss;
        }
        final_loss = sum / batches.len() as f64;
    }
    Ok(ProbeReport {
        train_accuracy: accuracy(&xtr, train_labels, &w, &b)?,
        test_accuracy: accuracy(&xte, test_labels, &w, &b)?,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xent_gradient_rows_sum_to_zero() {
        let z = Matrix::from_rows(&[[1.0, 2.0, -1.0], [0.0, 0.0, 0.0]]);
        let (loss, g) = softmax_xent(&z, &[1, 2]);
        assert!(loss > 0.0);
        for i in 0..2 {
            assert!(g.row(i).iter().sum::<f64>().abs() < 1e-15);
        }
    }
}
