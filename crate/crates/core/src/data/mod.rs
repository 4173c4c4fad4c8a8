//! Datasets: CIFAR-10 and IDX decoders, seeded synthetic generators, and the
//! normalization, subsetting and batching applied before training.

pub mod cifar;
pub mod idx;
pub mod synthetic;
pub mod transform;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::FeatureMap;

pub use cifar::{decode_cifar10, encode_cifar10, load_cifar10, read_cifar10, CifarBatch};
pub use idx::{decode_idx, encode_idx, load_idx, IdxArray};
pub use synthetic::{
    gaussian_blobs, harmonic_spectrum, random_basis, spectral_population, synth_gaussian, synthetic_images, ImageSpec, SyntheticSpec,
};
pub use transform::{batch_indices, match_channels, resize_to, stratified_indices, subset, Normalizer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Labeled images. Sample order is part of the contract: every
/// transformation here is a pure function of its inputs and seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    pub images: FeatureMap,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, split: Split, images: FeatureMap, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.batch() != labels.len() {
            return Err(Error::shape("Dataset::new", format!("{} images, {} labels", images.batch(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!("label {bad} outside 0..{num_classes}")));
        }
        Ok(Self { name: name.into(), split, images, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Samples at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            split: self.split,
            images: self.images.select(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}
