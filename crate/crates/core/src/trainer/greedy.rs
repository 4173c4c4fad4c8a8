//! Greedy block-wise training: each block is trained to completion on the
//! frozen outputs of the blocks before it.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::optim::{scheduled_lr, AdamW, OptimizerState};
use crate::config::{Schedule, TrainConfig};
use crate::data::batch_indices;
use crate::error::{Error, Result};
use crate::losses::{LossBundle, LossTerms};
use crate::network::{FeatureMap, Network, SphereBlock};
use crate::sampling::{derived, SeededRng};

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub block: usize,
    pub epoch: usize,
    pub sphere: f64,
    pub orth: f64,
    pub oja: f64,
    pub total: f64,
    pub lr: f64,
    /// Wall-clock time of the epoch; the only nondeterministic field.
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyOptions {
    pub terms: LossTerms,
    pub batch_size: usize,
    pub epochs_per_block: Vec<usize>,
    pub lr: f64,
    pub schedule: Schedule,
    pub adamw: AdamW,
    pub seed: u64,
}

/// Prefix outputs up to this many bytes are computed once per block rather
/// than per batch.
const CACHE_LIMIT_BYTES: usize = 256 << 20;

/// Largest `ZᵀZ` the orthogonality term may allocate.
pub const ORTH_LIMIT_BYTES: usize = 512 << 20;

/// Refuses configurations whose orthogonality term needs a `w × w` matrix
/// larger than [`ORTH_LIMIT_BYTES`], where `w` is the projection width.
pub fn check_orth_memory(block: usize, width: usize, terms: &LossTerms) -> Result<()> {
    let bytes = width.saturating_mul(width).saturating_mul(8);
    if terms.orth && bytes > ORTH_LIMIT_BYTES {
        return Err(Error::MemoryConstraint(format!(
            "block {block}: orthogonality term on a {width}-wide projection needs {} MiB (limit {} MiB); enable the phi projection",
            bytes >> 20,
            ORTH_LIMIT_BYTES >> 20
        )));
    }
    Ok(())
}

/// `total` epochs split as evenly as possible, earlier blocks taking the
/// remainder.
pub fn epochs_per_block(total: usize, blocks: usize) -> Vec<usize> {
    (0..blocks).map(|i| total / blocks + usize::from(i < total % blocks)).collect()
}

impl GreedyOptions {
    pub fn from_config(cfg: &TrainConfig, blocks: usize) -> Self {
        Self {
            terms: cfg.loss_terms(),
            batch_size: cfg.optim.batch_size,
            epochs_per_block: epochs_per_block(cfg.optim.epochs, blocks),
            lr: cfg.optim.lr,
            schedule: cfg.optim.schedule,
            adamw: AdamW { beta1: cfg.optim.beta1, beta2: cfg.optim.beta2, eps: cfg.optim.eps, weight_decay: cfg.optim.weight_decay },
            seed: cfg.seed,
        }
    }
}

/// Convolutional network per the config, seeded; the skip connection (if
/// enabled) sits on the last block.
pub fn build_network(cfg: &TrainConfig, in_channels: usize, rng: &mut SeededRng) -> Result<Network> {
    let act = cfg.activation().map_err(Error::InvalidArgument)?;
    let n = cfg.model.channels.len();
    let mut blocks = Vec::with_capacity(n);
    let mut ch = in_channels;
    for (i, &out) in cfg.model.channels.iter().enumerate() {
        let skip = cfg.model.skip_last && i + 1 == n;
        blocks.push(SphereBlock::conv(ch, out, act, skip, cfg.phi, rng)?);
        ch = out;
    }
    Ok(Network::new(blocks))
}

fn divergence(block: usize, step: usize, detail: impl Into<String>) -> Error {
    Error::TrainingDivergence { block, step, detail: detail.into() }
}

/// Trains block `index` of `net` in place; other blocks are read only.
pub fn train_block(
    net: &mut Network,
    index: usize,
    data: &FeatureMap,
    opts: &GreedyOptions,
    sink: &mut dyn FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    let epochs = opts.epochs_per_block.get(index).copied().unwrap_or(0);
    if epochs == 0 {
        return Ok(Vec::new());
    }
    let n = data.batch();
    if n < opts.batch_size {
        return Err(Error::InvalidArgument(format!("{n} samples cannot fill one batch of {}", opts.batch_size)));
    }
    let cached = if index > 0 && n * data.sample_len() * 8 <= CACHE_LIMIT_BYTES { Some(net.forward_prefix(data, index)?) } else { None };
    let probe_in = match &cached {
        Some(c) => c.select(&[0]),
        None => net.forward_prefix(&data.select(&[0]), index)?,
    };
    check_orth_memory(index, net.blocks[index].forward(&probe_in)?.z.cols(), &opts.terms)?;
    let (prefix, rest) = net.blocks.split_at_mut(index);
    let frozen = Network::new(prefix.to_vec());
    let block = &mut rest[0];

    let lens: Vec<usize> = block.params().iter().map(|(_, p)| p.len()).collect();
    let mut state = OptimizerState::new(&lens, opts.adamw);
    let mut rng = derived(opts.seed, 1000 + index as u64);
    let per_epoch = n / opts.batch_size;
    let total_steps = per_epoch * epochs;
    let mut step = 0;
    let mut log = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let started = Instant::now();
        let mut sum = LossBundle::default();
        let mut lr_sum = 0.0;
        let batches = batch_indices(n, opts.batch_size, &mut rng, true, true);
        for idx in &batches {
            let input = match &cached {
                Some(c) => c.select(idx),
                None => frozen.forward_prefix(&data.select(idx), index)?,
            };
            let (grads, bundle) = block.backward(&input, &opts.terms).map_err(|e| match e {
                Error::NonFinite(what) => divergence(index, step, format!("non-finite value in {what}")),
                other => other,
            })?;
            if !bundle.total.is_finite() || !grads.is_finite() {
                return Err(divergence(index, step, format!("loss {} with finite gradients: {}", bundle.total, grads.is_finite())));
            }
            let lr = scheduled_lr(opts.schedule, opts.lr, step, total_steps);
            state.step(block.params_mut(), &grads.values, lr).map_err(|e| divergence(index, step, e.to_string()))?;
            if block.params().iter().any(|(_, p)| p.iter().any(|v| !v.is_finite())) {
                return Err(divergence(index, step, "parameters became non-finite"));
            }
            sum.sphere += bundle.sphere;
            sum.orth += bundle.orth;
            sum.oja += bundle.oja;
            sum.total += bundle.total;
            lr_sum += lr;
            step += 1;
        }
        let k = batches.len() as f64;
        let rec = EpochRecord {
            block: index,
            epoch,
            sphere: sum.sphere / k,
            orth: sum.orth / k,
            oja: sum.oja / k,
            total: sum.total / k,
            lr: lr_sum / k,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        log::info!("block {index} epoch {epoch}: total {:.6} (sphere {:.6}, orth {:.6})", rec.total, rec.sphere, rec.orth);
        sink(&rec);
        log.push(rec);
    }
    Ok(log)
}

/// Trains every block in order.
pub fn train_greedy(
    net: &mut Network,
    data: &FeatureMap,
    opts: &GreedyOptions,
    sink: &mut dyn FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    let mut log = Vec::new();
    for i in 0..net.blocks.len() {
        log.extend(train_block(net, i, data, opts, sink)?);
    }
    Ok(log)
}
