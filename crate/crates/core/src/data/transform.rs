//! Subsetting, per-channel standardization, batching and resizing.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use super::Dataset;
use crate::error::{Error, Result};
use crate::network::FeatureMap;
use crate::sampling::seeded;

/// Seeded stratified choice of `n_per_class` indices per class, returned in
/// ascending order so that a full-size subset is the identity.
pub fn stratified_indices(labels: &[usize], num_classes: usize, n_per_class: usize, seed: u64) -> Result<Vec<usize>> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::InvalidArgument(format!("label {l} outside 0..{num_classes}")));
        }
        by_class[l].push(i);
    }
    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(n_per_class * num_classes);
    for (class, idx) in by_class.iter_mut().enumerate() {
        if idx.len() < n_per_class {
            return Err(Error::InvalidArgument(format!("class {class} has {} samples, {n_per_class} requested", idx.len())));
        }
        idx.shuffle(&mut rng);
        out.extend_from_slice(&idx[..n_per_class]);
    }
    out.sort_unstable();
    Ok(out)
}

pub fn subset(ds: &Dataset, n_per_class: usize, seed: u64) -> Result<Dataset> {
    Ok(ds.select(&stratified_indices(&ds.labels, ds.num_classes, n_per_class, seed)?))
}

/// Per-channel mean and standard deviation, fitted on a training split and
/// reused unchanged for evaluation splits.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-12;

impl Normalizer {
    pub fn fit(images: &FeatureMap) -> Result<Self> {
        let (b, c, _, _) = images.shape();
        let plane = images.plane_len();
        if b == 0 || plane == 0 {
            return Err(Error::InvalidArgument("cannot fit normalization on an empty set".into()));
        }
        let count = (b * plane) as f64;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for i in 0..b {
            for (ch, p) in images.sample(i).chunks_exact(plane).enumerate() {
                mean[ch] += p.iter().sum::<f64>();
            }
        }
        for m in mean.iter_mut() {
            *m /= count;
        }
        for i in 0..b {
            for (ch, p) in images.sample(i).chunks_exact(plane).enumerate() {
                var[ch] += p.iter().map(|v| (v - mean[ch]) * (v - mean[ch])).sum::<f64>();
            }
        }
        let std = var.iter().map(|v| (v / count).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, images: &mut FeatureMap) -> Result<()> {
        if images.channels() != self.mean.len() {
            return Err(Error::shape("Normalizer::apply", format!("{} channels, fitted on {}", images.channels(), self.mean.len())));
        }
        let plane = images.plane_len();
        for i in 0..images.batch() {
            for (ch, p) in images.sample_mut(i).chunks_exact_mut(plane).enumerate() {
                for v in p {
                    *v = (*v - self.mean[ch]) / self.std[ch];
                }
            }
        }
        Ok(())
    }

    /// One `channel mean std` line per channel; values print in shortest
    /// round-trip form.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# channel mean std\n");
        for (c, (m, d)) in self.mean.iter().zip(&self.std).enumerate() {
            s.push_str(&format!("{c} {m} {d}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| Error::Config { line: ln + 1, column: 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(bad(format!("expected `channel mean std`, got {} fields", fields.len())));
            }
            let c: usize = fields[0].parse().map_err(|_| bad(format!("bad channel index `{}`", fields[0])))?;
            if c != mean.len() {
                return Err(bad(format!("channel {c} out of order")));
            }
            let m: f64 = fields[1].parse().map_err(|_| bad(format!("bad mean `{}`", fields[1])))?;
            let d: f64 = fields[2].parse().map_err(|_| bad(format!("bad std `{}`", fields[2])))?;
            if !m.is_finite() || !(d > 0.0) || !d.is_finite() {
                return Err(bad("mean must be finite and std positive".into()));
            }
            mean.push(m);
            std.push(d);
        }
        if mean.is_empty() {
            return Err(Error::Config { line: 1, column: 1, message: "no channels".into() });
        }
        Ok(Self { mean, std })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Index batches over `0..n`, order seeded by `rng`. With `drop_last` the
/// final short batch is dropped so every batch Gram has the same size.
pub fn batch_indices<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R, shuffle: bool, drop_last: bool) -> Vec<Vec<usize>> {
    let order = if shuffle { crate::sampling::permutation(n, rng) } else { (0..n).collect() };
    order.chunks(batch.max(1)).filter(|c| !drop_last || c.len() == batch).map(<[usize]>::to_vec).collect()
}

/// Square images of side `side`: identity, 2x2 average pooling when the
/// input is exactly twice as large, centre crop otherwise.
pub fn resize_to(images: &FeatureMap, side: usize) -> Result<FeatureMap> {
    let (b, c, h, w) = images.shape();
    if h != w {
        return Err(Error::shape("resize_to", format!("non-square {h}x{w} input")));
    }
    if h == side {
        return Ok(images.clone());
    }
    if h == 2 * side {
        return Ok(crate::network::layers::avg_pool2(images));
    }
    if h < side {
        return Err(Error::shape("resize_to", format!("cannot enlarge {h}x{h} to {side}x{side}")));
    }
    let off = (h - side) / 2;
    let mut out = Vec::with_capacity(b * c * side * side);
    for i in 0..b {
        let s = images.sample(i);
        for ch in 0..c {
            for y in off..off + side {
                let row = ch * h * w + y * w;
                out.extend_from_slice(&s[row + off..row + off + side]);
            }
        }
    }
    FeatureMap::new(b, c, side, side, out)
}

/// Replicates a single channel or averages down to one.
pub fn match_channels(images: &FeatureMap, channels: usize) -> Result<FeatureMap> {
    let (b, c, h, w) = images.shape();
    if c == channels {
        return Ok(images.clone());
    }
    let plane = h * w;
    let mut out = Vec::with_capacity(b * channels * plane);
    if c == 1 {
        for i in 0..b {
            for _ in 0..channels {
                out.extend_from_slice(images.sample(i));
            }
        }
    } else if channels == 1 {
        for i in 0..b {
            let s = images.sample(i);
            out.extend((0..plane).map(|p| (0..c).map(|ch| s[ch * plane + p]).sum::<f64>() / c as f64));
        }
    } else {
        return Err(Error::shape("match_channels", format!("cannot map {c} channels to {channels}")));
    }
    FeatureMap::new(b, channels, h, w, out)
}
