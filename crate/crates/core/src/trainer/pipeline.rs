//! Dataset loading and preparation shared by every image experiment.

use std::path::{Path, PathBuf};

use crate::config::{DatasetId, TrainConfig};
use crate::data::{load_cifar10, load_idx, match_channels, resize_to, subset, synthetic_images, Dataset, ImageSpec, Normalizer, Split};
use crate::error::{Error, Result};

/// Train and test splits of one dataset after subsetting and normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct DataPair {
    pub train: Dataset,
    pub test: Dataset,
}

impl DataPair {
    pub fn channels(&self) -> usize {
        self.train.images.channels()
    }

    pub fn side(&self) -> usize {
        self.train.images.height()
    }

    /// Adapts both splits to `channels` and a square `side`.
    pub fn adapt(&self, channels: usize, side: usize) -> Result<DataPair> {
        let fix = |ds: &Dataset| -> Result<Dataset> {
            let images = resize_to(&match_channels(&ds.images, channels)?, side)?;
            Dataset::new(ds.name.clone(), ds.split, images, ds.labels.clone(), ds.num_classes)
        };
        Ok(DataPair { train: fix(&self.train)?, test: fix(&self.test)? })
    }
}

/// The data root: the configured directory if set, else `fallback`
/// (typically the `SPHERE_DATA_DIR` environment variable).
pub fn data_root(cfg: &TrainConfig, fallback: Option<PathBuf>) -> Option<PathBuf> {
    if cfg.data.dir.is_empty() {
        fallback
    } else {
        Some(PathBuf::from(&cfg.data.dir))
    }
}

fn require_root(root: Option<&Path>, what: &str) -> Result<PathBuf> {
    root.map(Path::to_path_buf)
        .ok_or_else(|| Error::DatasetMissing(format!("{what} needs a data directory: set data.dir or SPHERE_DATA_DIR")))
}

fn take(ds: Dataset, per_class: usize, seed: u64) -> Result<Dataset> {
    if per_class == 0 {
        Ok(ds)
    } else {
        subset(&ds, per_class, seed)
    }
}

/// Loads `id`, takes the configured per-class subsets (0 keeps everything)
/// and, if enabled, standardizes both splits with statistics of the
/// training split.
pub fn load_dataset(id: &DatasetId, cfg: &TrainConfig, root: Option<&Path>) -> Result<DataPair> {
    let (train, test) = match id {
        DatasetId::Synthetic(offset) => {
            let s = &cfg.synthetic;
            let spec = |per_class| ImageSpec {
                classes: s.classes,
                per_class,
                channels: s.channels,
                size: s.size,
                noise: s.noise,
                max_shift: s.max_shift,
                seed: *offset,
            };
            (synthetic_images(&spec(s.train_per_class), Split::Train)?, synthetic_images(&spec(s.test_per_class), Split::Test)?)
        }
        DatasetId::Cifar10 => {
            let dir = require_root(root, "cifar10")?;
            let train = take(load_cifar10(&dir, Split::Train)?, cfg.data.train_per_class, cfg.seed)?;
            let test = take(load_cifar10(&dir, Split::Test)?, cfg.data.test_per_class, cfg.seed.wrapping_add(1))?;
            (train, test)
        }
        DatasetId::Idx(sub) => {
            let dir = require_root(root, "idx data")?.join(sub);
            let train = load_idx(&dir, sub, Split::Train)?;
            let mut test = load_idx(&dir, sub, Split::Test)?;
            test.num_classes = test.num_classes.max(train.num_classes);
            let train = Dataset { num_classes: test.num_classes, ..train };
            let train = take(train, cfg.data.train_per_class, cfg.seed)?;
            let test = take(test, cfg.data.test_per_class, cfg.seed.wrapping_add(1))?;
            (train, test)
        }
    };
    let mut pair = DataPair { train, test };
    if cfg.data.normalize {
        let norm = Normalizer::fit(&pair.train.images)?;
        norm.apply(&mut pair.train.images)?;
        norm.apply(&mut pair.test.images)?;
    }
    Ok(pair)
}
