//! Seeded generators with known structure: matrices with an exact singular
//! spectrum, Gaussian populations with prescribed principal variances, and
//! class-conditional images for exercising the full pipeline without
//! downloads.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::network::FeatureMap;
use crate::numerics::{orthonormalize_columns, Matrix};
use crate::sampling::{derived, gaussian_matrix, seeded};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub cols: usize,
    /// One value per column, descending and nonnegative.
    pub spectrum: Vec<f64>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidArgument("synthetic matrix needs positive dimensions".into()));
        }
        if self.spectrum.len() != self.cols {
            return Err(Error::InvalidArgument(format!("spectrum has {} values for {} columns", self.spectrum.len(), self.cols)));
        }
        if self.spectrum.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidArgument("spectrum must be finite and nonnegative".into()));
        }
        if self.spectrum.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidArgument("spectrum must be sorted descending".into()));
        }
        Ok(())
    }
}

/// `σᵢ = 1/i`, `i = 1..=n`.
pub fn harmonic_spectrum(n: usize) -> Vec<f64> {
    (1..=n).map(|i| 1.0 / i as f64).collect()
}

/// `X = U·diag(σ)·Vᵀ` with `U`, `V` orthonormalized Gaussians. When there
/// are fewer rows than nonzero singular values the spectrum is truncated to
/// the leading `rows` values.
pub fn synth_gaussian(spec: &SyntheticSpec) -> Result<Matrix> {
    spec.validate()?;
    let r = spec.rows.min(spec.cols);
    let nonzero = spec.spectrum.iter().filter(|&&s| s > 0.0).count();
    if nonzero > spec.rows {
        log::warn!("{} rows cannot carry {nonzero} nonzero singular values; keeping the leading {}", spec.rows, spec.rows);
    }
    let mut rng = seeded(spec.seed);
    let u = orthonormalize_columns(&gaussian_matrix(spec.rows, r, &mut rng))?;
    let v = orthonormalize_columns(&gaussian_matrix(spec.cols, r, &mut rng))?;
    let us = Matrix::from_fn(spec.rows, r, |i, j| u.get(i, j) * spec.spectrum[j]);
    us.matmul_t(&v)
}

/// Random `n x n` orthogonal basis.
pub fn random_basis<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Matrix> {
    orthonormalize_columns(&gaussian_matrix(n, n, rng))
}

/// `rows` zero-mean Gaussian samples whose standard deviation along the
/// `i`-th column of `basis` is `sigmas[i]`.
pub fn spectral_population<R: Rng + ?Sized>(rows: usize, sigmas: &[f64], basis: &Matrix, rng: &mut R) -> Result<Matrix> {
    if basis.cols() != sigmas.len() {
        return Err(Error::shape("spectral_population", format!("{} directions, {} deviations", basis.cols(), sigmas.len())));
    }
    let g = Matrix::from_fn(rows, sigmas.len(), |_, j| rng.sample::<f64, _>(StandardNormal) * sigmas[j]);
    g.matmul_t(basis)
}

/// Class-conditional images: each class owns a smooth random pattern per
/// channel; samples are circularly shifted, contrast-scaled copies with
/// additive Gaussian noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageSpec {
    pub classes: usize,
    pub per_class: usize,
    pub channels: usize,
    pub size: usize,
    pub noise: f64,
    pub max_shift: usize,
    pub seed: u64,
}

impl Default for ImageSpec {
    fn default() -> Self {
        Self { classes: 10, per_class: 50, channels: 3, size: 32, noise: 0.5, max_shift: 3, seed: 0 }
    }
}

const WAVES: usize = 4;

fn prototypes(spec: &ImageSpec) -> Vec<Vec<f64>> {
    let mut rng = derived(spec.seed, 0);
    let n = spec.size as f64;
    let plane = spec.size * spec.size;
    (0..spec.classes)
        .map(|_| {
            let mut img = vec![0.0; spec.channels * plane];
            for ch in 0..spec.channels {
                for _ in 0..WAVES {
                    let fy = rng.random_range(0..4) as f64;
                    let fx = rng.random_range(0..4) as f64;
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    let amp: f64 = rng.sample(StandardNormal);
                    for y in 0..spec.size {
                        for x in 0..spec.size {
                            let t = std::f64::consts::TAU * (fy * y as f64 + fx * x as f64) / n + phase;
                            img[ch * plane + y * spec.size + x] += amp * t.sin();
                        }
                    }
                }
            }
            img
        })
        .collect()
}

/// Prototypes depend only on `spec.seed`; the two splits draw independent
/// samples around the same prototypes. Samples are ordered class-major then
/// shuffled with the split's stream.
pub fn synthetic_images(spec: &ImageSpec, split: Split) -> Result<Dataset> {
    if spec.classes < 2 || spec.per_class == 0 || spec.channels == 0 || spec.size == 0 {
        return Err(Error::InvalidArgument("synthetic images need >= 2 classes and positive sizes".into()));
    }
    let protos = prototypes(spec);
    let stream = match split {
        Split::Train => 1,
        Split::Test => 2,
    };
    let mut rng = derived(spec.seed, stream);
    let (s, plane) = (spec.size, spec.size * spec.size);
    let n = spec.classes * spec.per_class;
    let mut data = Vec::with_capacity(n * spec.channels * plane);
    let mut labels = Vec::with_capacity(n);
    let shift = spec.max_shift as i64;
    for (class, proto) in protos.iter().enumerate() {
        for _ in 0..spec.per_class {
            let dy = rng.random_range(-shift..=shift);
            let dx = rng.random_range(-shift..=shift);
            let contrast = rng.random_range(0.7..1.3);
            for ch in 0..spec.channels {
                for y in 0..s {
                    for x in 0..s {
                        let sy = (y as i64 + dy).rem_euclid(s as i64) as usize;
                        let sx = (x as i64 + dx).rem_euclid(s as i64) as usize;
                        let noise: f64 = rng.sample(StandardNormal);
                        data.push(contrast * proto[ch * plane + sy * s + sx] + spec.noise * noise);
                    }
                }
            }
            labels.push(class);
        }
    }
    let images = FeatureMap::new(n, spec.channels, s, s, data)?;
    let ds = Dataset::new("synthetic", split, images, labels, spec.classes)?;
    let order = crate::sampling::permutation(n, &mut rng);
    Ok(ds.select(&order))
}

/// `classes` isotropic Gaussian clusters in `dim` dimensions whose centres
/// sit `separation` apart along distinct axes.
pub fn gaussian_blobs(per_class: usize, dim: usize, classes: usize, separation: f64, seed: u64) -> Result<(Matrix, Vec<usize>)> {
    if classes > dim {
        return Err(Error::InvalidArgument(format!("{classes} axis-aligned centres need at least {classes} dimensions")));
    }
    let mut rng = seeded(seed);
    let n = per_class * classes;
    let mut x = gaussian_matrix(n, dim, &mut rng);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    for (i, &l) in labels.iter().enumerate() {
        x.set(i, l, x.get(i, l) + separation);
    }
    Ok((x, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::svd;

    #[test]
    fn spectrum_recovered() {
        let spec = SyntheticSpec { rows: 16, cols: 3, spectrum: vec![3.0, 2.0, 1.0], seed: 4 };
        let s = svd(&synth_gaussian(&spec).unwrap()).unwrap().s;
        for (a, b) in s.iter().zip([3.0, 2.0, 1.0]) {
            assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn rank_one() {
        let spec = SyntheticSpec { rows: 6, cols: 4, spectrum: vec![1.0, 0.0, 0.0, 0.0], seed: 1 };
        let s = svd(&synth_gaussian(&spec).unwrap()).unwrap().s;
        assert!((s[0] - 1.0).abs() < 1e-12 && s[1] < 1e-12);
    }

    #[test]
    fn unsorted_spectrum_rejected() {
        let spec = SyntheticSpec { rows: 6, cols: 2, spectrum: vec![1.0, 2.0], seed: 1 };
        assert!(synth_gaussian(&spec).is_err());
    }

    #[test]
    fn images_are_balanced_and_seeded() {
        let spec = ImageSpec { classes: 3, per_class: 4, size: 8, ..ImageSpec::default() };
        let a = synthetic_images(&spec, Split::Train).unwrap();
        assert_eq!(a.class_counts(), vec![4, 4, 4]);
        assert_eq!(a, synthetic_images(&spec, Split::Train).unwrap());
        assert_ne!(a.images, synthetic_images(&spec, Split::Test).unwrap().images);
    }
}
