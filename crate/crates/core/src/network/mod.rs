//! Forward and backward machinery for locally trained blocks.

pub mod activation;
pub mod block;
pub mod checkpoint;
pub mod feature_map;
pub mod layers;

use sha2::{Digest, Sha256};

pub use activation::Activation;
pub use block::{AuxBlock, AuxSpec, BlockGrads, BlockOutput, ConvAux, ConvMain, DenseMain, MainBlock, SphereBlock};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, BlockLayout};
pub use feature_map::FeatureMap;
pub use layers::{Conv2d, Dense};

use crate::error::Result;

/// A stack of blocks; block `i` consumes the main-path output of block `i-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub blocks: Vec<SphereBlock>,
}

impl Network {
    pub fn new(blocks: Vec<SphereBlock>) -> Self {
        Self { blocks }
    }

    /// Runs the main path through blocks `0..upto`.
    pub fn forward_prefix(&self, x: &FeatureMap, upto: usize) -> Result<FeatureMap> {
        let mut h = x.clone();
        for block in &self.blocks[..upto] {
            h = block.forward_main(&h)?;
        }
        Ok(h)
    }

    /// Final main-path features.
    pub fn features(&self, x: &FeatureMap) -> Result<FeatureMap> {
        self.forward_prefix(x, self.blocks.len())
    }

    /// Batched [`features`](Self::features), flattened to one row per sample.
    pub fn extract(&self, x: &FeatureMap, chunk: usize) -> Result<crate::numerics::Matrix> {
        let n = x.batch();
        let mut parts = Vec::new();
        let mut start = 0;
        while start < n {
            let end = (start + chunk.max(1)).min(n);
            let idx: Vec<usize> = (start..end).collect();
            parts.push(self.features(&x.select(&idx))?);
            start = end;
        }
        if parts.is_empty() {
            let probe = self.features(&x.select(&[]))?;
            return Ok(probe.flatten());
        }
        Ok(FeatureMap::concat(&parts)?.into_matrix())
    }

    /// SHA-256 over the bit patterns of one block's parameters.
    pub fn block_checksum(&self, i: usize) -> String {
        block_checksum(&self.blocks[i])
    }

    /// Per-block checksums.
    pub fn checksums(&self) -> Vec<String> {
        self.blocks.iter().map(block_checksum).collect()
    }
}

pub fn block_checksum(block: &SphereBlock) -> String {
    let mut h = Sha256::new();
    for (name, p) in block.params() {
        h.update(name.as_bytes());
        h.update((p.len() as u64).to_le_bytes());
        for v in p {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
