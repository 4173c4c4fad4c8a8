//! IDX unsigned-byte arrays: a big-endian magic `0x000008NN` (NN = number of
//! dimensions), NN big-endian `u32` sizes, then the row-major payload.
//! Images use three dimensions (`0x00000803`) and labels one (`0x00000801`).

use std::path::Path;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::network::FeatureMap;

const UBYTE: u8 = 0x08;

/// Payloads larger than this are rejected before allocation.
pub const MAX_PAYLOAD: usize = 1 << 32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn decode_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::Format { offset: 0, detail: format!("{} bytes is shorter than the magic number", bytes.len()) });
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Format { offset: 0, detail: "magic number must start with two zero bytes".into() });
    }
    if bytes[2] != UBYTE {
        return Err(Error::Format { offset: 2, detail: format!("element type 0x{:02x} unsupported, expected unsigned byte", bytes[2]) });
    }
    let ndim = usize::from(bytes[3]);
    if ndim != 1 && ndim != 3 {
        return Err(Error::Format { offset: 3, detail: format!("{ndim} dimensions; expected 1 (labels) or 3 (images)") });
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::Format { offset: bytes.len() as u64, detail: "header truncated".into() });
    }
    let dims: Vec<usize> = bytes[4..header].chunks_exact(4).map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize).collect();
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&t| t <= MAX_PAYLOAD)
        .ok_or_else(|| Error::Format { offset: 4, detail: format!("dimensions {dims:?} overflow the payload limit") })?;
    let payload = &bytes[header..];
    if payload.len() != total {
        let offset = (header + total.min(payload.len())) as u64;
        return Err(Error::Format { offset, detail: format!("dimensions {dims:?} need {total} payload bytes, found {}", payload.len()) });
    }
    Ok(IdxArray { dims, data: payload.to_vec() })
}

pub fn encode_idx(a: &IdxArray) -> Vec<u8> {
    let mut out = vec![0, 0, UBYTE, a.dims.len() as u8];
    for &d in &a.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&a.data);
    out
}

/// Standard file names for a split: `(images, labels)`.
pub fn split_files(split: Split) -> (&'static str, &'static str) {
    match split {
        Split::Train => ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        Split::Test => ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    }
}

fn read(path: &Path, layout: &str) -> Result<IdxArray> {
    if !path.is_file() {
        return Err(Error::DatasetMissing(format!("{} not found; {layout}", path.display())));
    }
    decode_idx(&std::fs::read(path)?).map_err(|e| match e {
        Error::Format { offset, detail } => Error::Format { offset, detail: format!("{}: {detail}", path.display()) },
        other => other,
    })
}

/// Single-channel images from `dir`, pixels scaled to `[0, 1]`. The class
/// count is one past the largest label.
pub fn load_idx(dir: &Path, name: &str, split: Split) -> Result<Dataset> {
    let (img_name, lab_name) = split_files(split);
    let layout = format!("expected {img_name} and {lab_name} in {}", dir.display());
    let images = read(&dir.join(img_name), &layout)?;
    let labels = read(&dir.join(lab_name), &layout)?;
    if images.dims.len() != 3 || labels.dims.len() != 1 {
        return Err(Error::Format { offset: 3, detail: "expected 3-d images and 1-d labels".into() });
    }
    if images.dims[0] != labels.dims[0] {
        return Err(Error::Format { offset: 4, detail: format!("{} images but {} labels", images.dims[0], labels.dims[0]) });
    }
    let (n, h, w) = (images.dims[0], images.dims[1], images.dims[2]);
    let num_classes = labels.data.iter().copied().max().map_or(1, |m| usize::from(m) + 1);
    let fm = FeatureMap::new(n, 1, h, w, images.data.iter().map(|&p| f64::from(p) / 255.0).collect())?;
    Dataset::new(name, split, fm, labels.data.iter().map(|&l| usize::from(l)).collect(), num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let a = IdxArray { dims: vec![2, 2, 3], data: (0..12).collect() };
        assert_eq!(decode_idx(&encode_idx(&a)).unwrap(), a);
        let l = IdxArray { dims: vec![4], data: vec![1, 0, 3, 2] };
        let bytes = encode_idx(&l);
        assert_eq!(&bytes[..4], &[0, 0, 8, 1]);
        assert_eq!(decode_idx(&bytes).unwrap(), l);
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(decode_idx(&[0, 0, 8]).is_err());
        assert!(decode_idx(&[0, 1, 8, 1, 0, 0, 0, 0]).is_err());
        assert!(decode_idx(&[0, 0, 9, 1, 0, 0, 0, 0]).is_err());
        assert!(decode_idx(&[0, 0, 8, 2, 0, 0, 0, 0, 0, 0, 0, 0]).is_err());
        assert!(matches!(decode_idx(&[0, 0, 8, 1, 0, 0, 0, 2, 7]), Err(Error::Format { offset: 9, .. })));
        assert!(decode_idx(&[0, 0, 8, 3, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255]).is_err());
    }
}
