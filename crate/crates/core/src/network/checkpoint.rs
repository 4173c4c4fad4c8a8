//! Binary checkpoints of a [`Network`].
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `SPHRCKPT` |
//! | 4     | format version (1) |
//! | 4     | header length `h` |
//! | h     | UTF-8 JSON architecture |
//! | 8·n   | parameters as `f64`, blocks in order, tensors in `params()` order |
//! | 32    | SHA-256 of everything above |

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::activation::Activation;
use super::block::{AuxBlock, ConvAux, ConvMain, DenseMain, MainBlock, SphereBlock};
use super::layers::{Conv2d, Dense};
use super::Network;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SPHRCKPT";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;
/// Refuse architectures implying more parameters than this.
pub const MAX_PARAMS: usize = 1 << 31;
const MAX_HEADER: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MainLayout {
    Conv { in_ch: usize, out_ch: usize, ksize: usize, padding: usize, activation: String, pool: bool, skip: bool },
    Dense { sizes: Vec<usize>, biases: Vec<bool>, activation: String, activate_output: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuxLayout {
    Identity,
    /// `channels[0]` is the input width; each further entry is one
    /// pointwise convolution.
    Conv {
        channels: Vec<usize>,
        d_proj: usize,
        fc_bias: bool,
    },
    Dense {
        n_in: usize,
        n_out: usize,
        bias: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub main: MainLayout,
    pub aux: AuxLayout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    blocks: Vec<BlockLayout>,
}

impl BlockLayout {
    pub fn of(block: &SphereBlock) -> Self {
        let main = match &block.main {
            MainBlock::Conv(m) => MainLayout::Conv {
                in_ch: m.conv.in_ch,
                out_ch: m.conv.out_ch,
                ksize: m.conv.ksize,
                padding: m.conv.padding,
                activation: m.activation.to_string(),
                pool: m.pool,
                skip: m.skip,
            },
            MainBlock::Dense(m) => {
                let mut sizes = vec![m.layers.first().map_or(0, |l| l.n_in)];
                sizes.extend(m.layers.iter().map(|l| l.n_out));
                MainLayout::Dense {
                    sizes,
                    biases: m.layers.iter().map(|l| l.bias.is_some()).collect(),
                    activation: m.activation.to_string(),
                    activate_output: m.activate_output,
                }
            }
        };
        let aux = match &block.aux {
            AuxBlock::Identity => AuxLayout::Identity,
            AuxBlock::Conv(a) => {
                let mut channels = vec![a.convs.first().map_or(a.fc.n_in, |c| c.in_ch)];
                channels.extend(a.convs.iter().map(|c| c.out_ch));
                AuxLayout::Conv { channels, d_proj: a.fc.n_out, fc_bias: a.fc.bias.is_some() }
            }
            AuxBlock::Dense(d) => AuxLayout::Dense { n_in: d.n_in, n_out: d.n_out, bias: d.bias.is_some() },
        };
        Self { main, aux }
    }

    fn param_count(&self) -> Option<usize> {
        let mut n: usize = 0;
        let add = |n: &mut usize, a: usize, b: usize| -> Option<()> {
            *n = n.checked_add(a.checked_mul(b)?)?;
            Some(())
        };
        match &self.main {
            MainLayout::Conv { in_ch, out_ch, ksize, .. } => {
                add(&mut n, out_ch.checked_mul(*in_ch)?, ksize.checked_mul(*ksize)?)?;
                add(&mut n, *out_ch, 1)?;
            }
            MainLayout::Dense { sizes, biases, .. } => {
                for (w, &b) in sizes.windows(2).zip(biases) {
                    add(&mut n, w[0], w[1])?;
                    if b {
                        add(&mut n, w[1], 1)?;
                    }
                }
            }
        }
        match &self.aux {
            AuxLayout::Identity => {}
            AuxLayout::Conv { channels, d_proj, fc_bias } => {
                for w in channels.windows(2) {
                    add(&mut n, w[0], w[1])?;
                    add(&mut n, w[1], 1)?;
                }
                add(&mut n, *channels.last()?, *d_proj)?;
                if *fc_bias {
                    add(&mut n, *d_proj, 1)?;
                }
            }
            AuxLayout::Dense { n_in, n_out, bias } => {
                add(&mut n, *n_in, *n_out)?;
                if *bias {
                    add(&mut n, *n_out, 1)?;
                }
            }
        }
        Some(n)
    }

    /// Zero-initialized block with this architecture.
    pub fn build(&self) -> Result<SphereBlock> {
        let bad = |m: String| Error::InvalidArgument(format!("checkpoint layout: {m}"));
        let act = |s: &str| s.parse::<Activation>();
        let main = match &self.main {
            MainLayout::Conv { in_ch, out_ch, ksize, padding, activation, pool, skip } => {
                if *in_ch == 0 || *out_ch == 0 {
                    return Err(bad("zero channels".into()));
                }
                let conv =
                    Conv2d::from_parts(*in_ch, *out_ch, *ksize, *padding, vec![0.0; in_ch * out_ch * ksize * ksize], vec![0.0; *out_ch])?;
                MainBlock::Conv(ConvMain { conv, activation: act(activation)?, pool: *pool, skip: *skip })
            }
            MainLayout::Dense { sizes, biases, activation, activate_output } => {
                if sizes.len() < 2 || biases.len() + 1 != sizes.len() || sizes.contains(&0) {
                    return Err(bad(format!("dense sizes {sizes:?} with {} bias flags", biases.len())));
                }
                let layers = sizes
                    .windows(2)
                    .zip(biases)
                    .map(|(w, &b)| Dense { n_in: w[0], n_out: w[1], weight: vec![0.0; w[0] * w[1]], bias: b.then(|| vec![0.0; w[1]]) })
                    .collect();
                MainBlock::Dense(DenseMain { layers, activation: act(activation)?, activate_output: *activate_output })
            }
        };
        let aux = match &self.aux {
            AuxLayout::Identity => AuxBlock::Identity,
            AuxLayout::Conv { channels, d_proj, fc_bias } => {
                if channels.is_empty() || channels.contains(&0) || *d_proj == 0 {
                    return Err(bad(format!("aux channels {channels:?}, d_proj {d_proj}")));
                }
                let convs = channels
                    .windows(2)
                    .map(|w| Conv2d::from_parts(w[0], w[1], 1, 0, vec![0.0; w[0] * w[1]], vec![0.0; w[1]]))
                    .collect::<Result<Vec<_>>>()?;
                let last = *channels.last().unwrap_or(&0);
                let fc = Dense { n_in: last, n_out: *d_proj, weight: vec![0.0; last * d_proj], bias: fc_bias.then(|| vec![0.0; *d_proj]) };
                AuxBlock::Conv(ConvAux { convs, fc })
            }
            AuxLayout::Dense { n_in, n_out, bias } => AuxBlock::Dense(Dense {
                n_in: *n_in,
                n_out: *n_out,
                weight: vec![0.0; n_in * n_out],
                bias: bias.then(|| vec![0.0; *n_out]),
            }),
        };
        Ok(SphereBlock { main, aux })
    }
}

fn digest(bytes: &[u8]) -> [u8; DIGEST_LEN] {
    Sha256::digest(bytes).into()
}

pub fn encode_checkpoint(net: &Network) -> Vec<u8> {
    let header = Header { blocks: net.blocks.iter().map(BlockLayout::of).collect() };
    let json = serde_json::to_vec(&header).expect("layout serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for block in &net.blocks {
        for (_, p) in block.params() {
            for v in p {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let d = digest(&out);
    out.extend_from_slice(&d);
    out
}

fn format_err(offset: usize, detail: impl Into<String>) -> Error {
    Error::Format { offset: offset as u64, detail: detail.into() }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Network> {
    let fixed = MAGIC.len() + 8;
    if bytes.len() < fixed + DIGEST_LEN {
        return Err(format_err(bytes.len(), "file too short for a checkpoint"));
    }
    if &bytes[..8] != MAGIC {
        return Err(format_err(0, "bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(format_err(8, format!("unsupported version {version}")));
    }
    let body_end = bytes.len() - DIGEST_LEN;
    if digest(&bytes[..body_end]) != bytes[body_end..] {
        return Err(format_err(body_end, "checksum mismatch"));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    if hlen > MAX_HEADER || fixed + hlen > body_end {
        return Err(format_err(12, format!("header length {hlen} exceeds file")));
    }
    let header: Header = serde_json::from_slice(&bytes[fixed..fixed + hlen])
        .map_err(|e| format_err(fixed + e.column().saturating_sub(1), format!("header: {e}")))?;
    let mut total: usize = 0;
    for b in &header.blocks {
        total = b
            .param_count()
            .and_then(|n| total.checked_add(n))
            .filter(|&t| t <= MAX_PARAMS)
            .ok_or_else(|| format_err(fixed, "architecture too large"))?;
    }
    let payload = &bytes[fixed + hlen..body_end];
    if payload.len() != total * 8 {
        return Err(format_err(fixed + hlen, format!("expected {total} parameters, found {} bytes", payload.len())));
    }
    let mut values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut blocks = Vec::with_capacity(header.blocks.len());
    for layout in &header.blocks {
        let mut block = layout.build().map_err(|e| format_err(fixed, e.to_string()))?;
        for p in block.params_mut() {
            for slot in p.iter_mut() {
                *slot = values.next().expect("length checked");
                if !slot.is_finite() {
                    return Err(format_err(fixed + hlen, "non-finite parameter"));
                }
            }
        }
        blocks.push(block);
    }
    Ok(Network::new(blocks))
}

impl Network {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        Ok(std::fs::write(path, encode_checkpoint(self))?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        decode_checkpoint(&std::fs::read(path)?)
    }
}
