//! CIFAR-10 binary batches: 3073-byte records, one label byte followed by
//! 1024 red, 1024 green and 1024 blue pixel bytes.

use std::path::{Path, PathBuf};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::network::FeatureMap;

pub const RECORD_LEN: usize = 1 + IMAGE_LEN;
pub const IMAGE_LEN: usize = 3 * SIDE * SIDE;
pub const SIDE: usize = 32;
pub const CLASSES: usize = 10;

pub const TRAIN_FILES: [&str; 5] = ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"];
pub const TEST_FILES: [&str; 1] = ["test_batch.bin"];

/// Undecoded records: labels and CHW pixel bytes, record order preserved.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CifarBatch {
    pub labels: Vec<u8>,
    pub pixels: Vec<u8>,
}

impl CifarBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.pixels[i * IMAGE_LEN..(i + 1) * IMAGE_LEN]
    }

    pub fn select(&self, idx: &[usize]) -> CifarBatch {
        let mut out = CifarBatch { labels: Vec::with_capacity(idx.len()), pixels: Vec::with_capacity(idx.len() * IMAGE_LEN) };
        for &i in idx {
            out.labels.push(self.labels[i]);
            out.pixels.extend_from_slice(self.image(i));
        }
        out
    }

    pub fn append(&mut self, other: CifarBatch) {
        self.labels.extend(other.labels);
        self.pixels.extend(other.pixels);
    }

    /// Pixels scaled to `[0, 1]`.
    pub fn to_dataset(&self, name: &str, split: Split) -> Result<Dataset> {
        let data = self.pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
        let images = FeatureMap::new(self.len(), 3, SIDE, SIDE, data)?;
        Dataset::new(name, split, images, self.labels.iter().map(|&l| usize::from(l)).collect(), CLASSES)
    }
}

pub fn decode_cifar10(bytes: &[u8]) -> Result<CifarBatch> {
    let whole = bytes.len() / RECORD_LEN * RECORD_LEN;
    if whole != bytes.len() {
        return Err(Error::Format {
            offset: whole as u64,
            detail: format!("truncated record: {} trailing bytes, records are {RECORD_LEN} bytes", bytes.len() - whole),
        });
    }
    let n = bytes.len() / RECORD_LEN;
    let mut out = CifarBatch { labels: Vec::with_capacity(n), pixels: Vec::with_capacity(n * IMAGE_LEN) };
    for (i, rec) in bytes.chunks_exact(RECORD_LEN).enumerate() {
        if usize::from(rec[0]) >= CLASSES {
            return Err(Error::Format { offset: (i * RECORD_LEN) as u64, detail: format!("label {} out of range 0..=9", rec[0]) });
        }
        out.labels.push(rec[0]);
        out.pixels.extend_from_slice(&rec[1..]);
    }
    Ok(out)
}

pub fn encode_cifar10(batch: &CifarBatch) -> Vec<u8> {
    let mut out = Vec::with_capacity(batch.len() * RECORD_LEN);
    for i in 0..batch.len() {
        out.push(batch.labels[i]);
        out.extend_from_slice(batch.image(i));
    }
    out
}

pub fn split_files(split: Split) -> &'static [&'static str] {
    match split {
        Split::Train => &TRAIN_FILES,
        Split::Test => &TEST_FILES,
    }
}

/// `dir` itself, or its `cifar-10-batches-bin` child as unpacked from the
/// official archive.
pub fn resolve_dir(dir: &Path) -> Option<PathBuf> {
    [dir.to_path_buf(), dir.join("cifar-10-batches-bin"), dir.join("cifar10")]
        .into_iter()
        .find(|d| d.join(TEST_FILES[0]).is_file() || d.join(TRAIN_FILES[0]).is_file())
}

fn expected_layout(dir: &Path) -> String {
    format!("{}: expected {} and {} (directly or under cifar-10-batches-bin/)", dir.display(), TRAIN_FILES.join(", "), TEST_FILES[0])
}

/// Every record of the split's files, concatenated in file order.
pub fn read_cifar10(dir: &Path, split: Split) -> Result<CifarBatch> {
    let root = resolve_dir(dir).ok_or_else(|| Error::DatasetMissing(expected_layout(dir)))?;
    let mut all = CifarBatch::default();
    for name in split_files(split) {
        let path = root.join(name);
        if !path.is_file() {
            return Err(Error::DatasetMissing(expected_layout(dir)));
        }
        let bytes = std::fs::read(&path)?;
        let batch = decode_cifar10(&bytes).map_err(|e| match e {
            Error::Format { offset, detail } => Error::Format { offset, detail: format!("{}: {detail}", path.display()) },
            other => other,
        })?;
        all.append(batch);
    }
    Ok(all)
}

pub fn load_cifar10(dir: &Path, split: Split) -> Result<Dataset> {
    read_cifar10(dir, split)?.to_dataset("cifar10", split)
}
