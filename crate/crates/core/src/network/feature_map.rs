use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Batch of `channels x height x width` maps, stored NCHW.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(batch: usize, channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if batch * channels * height * width != data.len() {
            return Err(Error::shape(
                "FeatureMap::new",
                format!("{batch}x{channels}x{height}x{width} needs {} values, got {}", batch * channels * height * width, data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("FeatureMap::new"));
        }
        Ok(Self { batch, channels, height, width, data })
    }

    pub(crate) fn from_vec_unchecked(batch: usize, channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(batch * channels * height * width, data.len());
        Self { batch, channels, height, width, data }
    }

    pub fn zeros(batch: usize, channels: usize, height: usize, width: usize) -> Self {
        Self { batch, channels, height, width, data: vec![0.0; batch * channels * height * width] }
    }

    /// Views each matrix row as a `channels x height x width` sample.
    pub fn from_matrix(m: &Matrix, channels: usize, height: usize, width: usize) -> Result<Self> {
        if channels * height * width != m.cols() {
            return Err(Error::shape(
                "FeatureMap::from_matrix",
                format!("{} columns cannot be viewed as {channels}x{height}x{width}", m.cols()),
            ));
        }
        Ok(Self::from_vec_unchecked(m.rows(), channels, height, width, m.data().to_vec()))
    }

    /// One row per sample.
    pub fn flatten(&self) -> Matrix {
        Matrix::from_vec_unchecked(self.batch, self.sample_len(), self.data.clone())
    }

    pub fn into_matrix(self) -> Matrix {
        let cols = self.sample_len();
        Matrix::from_vec_unchecked(self.batch, cols, self.data)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(batch, channels, height, width)`.
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.batch, self.channels, self.height, self.width)
    }

    pub fn sample_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.sample_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.sample_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn select(&self, idx: &[usize]) -> FeatureMap {
        let mut data = Vec::with_capacity(idx.len() * self.sample_len());
        for &i in idx {
            data.extend_from_slice(self.sample(i));
        }
        Self::from_vec_unchecked(idx.len(), self.channels, self.height, self.width, data)
    }

    /// Concatenates batches with identical per-sample shape.
    pub fn concat(parts: &[FeatureMap]) -> Result<FeatureMap> {
        let first = parts.first().ok_or_else(|| Error::InvalidArgument("concat of nothing".into()))?;
        let (_, c, h, w) = first.shape();
        let mut data = Vec::new();
        let mut batch = 0;
        for p in parts {
            if (p.channels, p.height, p.width) != (c, h, w) {
                return Err(Error::shape("FeatureMap::concat", "per-sample shapes differ"));
            }
            batch += p.batch;
            data.extend_from_slice(&p.data);
        }
        Ok(Self::from_vec_unchecked(batch, c, h, w, data))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_round_trip() {
        let fm = FeatureMap::new(2, 3, 2, 2, (0..24).map(f64::from).collect()).unwrap();
        let m = fm.flatten();
        assert_eq!(m.shape(), (2, 12));
        assert_eq!(FeatureMap::from_matrix(&m, 3, 2, 2).unwrap(), fm);
        assert!(FeatureMap::from_matrix(&m, 2, 2, 2).is_err());
    }

    #[test]
    fn select_and_concat() {
        let fm = FeatureMap::new(3, 1, 1, 2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let s = fm.select(&[2, 0]);
        assert_eq!(s.data(), &[4.0, 5.0, 0.0, 1.0]);
        let c = FeatureMap::concat(&[s, fm.select(&[1])]).unwrap();
        assert_eq!(c.batch(), 3);
        assert_eq!(c.sample(2), &[2.0, 3.0]);
    }
}
