//! Cosine-similarity k-nearest-neighbour classifier.

use crate::error::{Error, Result};
use crate::numerics::{row_normalize, Matrix};

/// Classifies each test row by majority vote among its `k` most similar
/// training rows; ties go to the class of the single nearest neighbour.
pub fn knn_predict(train: &Matrix, train_labels: &[usize], test: &Matrix, k: usize) -> Result<Vec<usize>> {
    if train.rows() != train_labels.len() || train.cols() != test.cols() {
        return Err(Error::shape("knn", format!("train {:?} with {} labels, test {:?}", train.shape(), train_labels.len(), test.shape())));
    }
    if k == 0 || k > train.rows() {
        return Err(Error::InvalidArgument(format!("k = {k} with {} training samples", train.rows())));
    }
    let classes = train_labels.iter().max().map_or(0, |m| m + 1);
    let a = row_normalize(train, 1e-12);
    let b = row_normalize(test, 1e-12);
    let sim = b.matmul_t(&a)?;
    let mut out = Vec::with_capacity(test.rows());
    let mut order: Vec<usize> = (0..train.rows()).collect();
    for i in 0..test.rows() {
        let row = sim.row(i);
        order.sort_by(|&p, &q| row[q].total_cmp(&row[p]).then(p.cmp(&q)));
        let mut votes = vec![0usize; classes];
        for &j in &order[..k] {
            votes[train_labels[j]] += 1;
        }
        let top = *votes.iter().max().unwrap_or(&0);
        let nearest = train_labels[order[0]];
        let pick = if votes[nearest] == top { nearest } else { votes.iter().position(|&v| v == top).unwrap_or(nearest) };
        out.push(pick);
    }
    Ok(out)
}

pub fn knn_accuracy(train: &Matrix, train_labels: &[usize], test: &Matrix, test_labels: &[usize], k: usize) -> Result<f64> {
    if test.rows() != test_labels.len() {
        return Err(Error::shape("knn", "test labels"));
    }
    let pred = knn_predict(train, train_labels, test, k)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok(pred.iter().zip(test_labels).filter(|(p, l)| p == l).count() as f64 / pred.len() as f64)
}
