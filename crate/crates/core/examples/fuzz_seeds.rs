//! Regenerates the fuzz corpus seeds: `cargo run --example fuzz_seeds -- fuzz/corpus`.

use std::fs;
use std::path::{Path, PathBuf};

use sphere::config::TrainConfig;
use sphere::data::{encode_cifar10, encode_idx, CifarBatch, IdxArray, Normalizer};
use sphere::network::{encode_checkpoint, Activation, AuxSpec, Network, SphereBlock};
use sphere::sampling::seeded;

fn put(root: &Path, target: &str, name: &str, bytes: &[u8]) -> std::io::Result<()> {
    let dir = root.join(target);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(name), bytes)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("fuzz/corpus"));

    let pixels: Vec<u8> = (0..2 * 3072).map(|i| (i * 7 % 256) as u8).collect();
    let two = CifarBatch { labels: vec![3, 9], pixels };
    put(&root, "cifar10_decode", "two_records", &encode_cifar10(&two))?;
    put(&root, "cifar10_decode", "empty", &[])?;
    let mut truncated = encode_cifar10(&two);
    truncated.truncate(3073 + 100);
    put(&root, "cifar10_decode", "truncated", &truncated)?;

    let images = IdxArray { dims: vec![2, 3, 4], data: (0..24).collect() };
    put(&root, "idx_decode", "images", &encode_idx(&images))?;
    let labels = IdxArray { dims: vec![5], data: vec![0, 1, 2, 1, 0] };
    put(&root, "idx_decode", "labels", &encode_idx(&labels))?;

    put(&root, "config_parse", "defaults", TrainConfig::default().to_text().as_bytes())?;
    put(&root, "config_parse", "sparse", b"# comment\n[optim]\nlr = 2e-3\n[data]\ndataset = synthetic:3\n")?;
    put(&root, "config_parse", "tiny", include_bytes!("../../../configs/tiny.cfg"))?;

    let norm = Normalizer { mean: vec![0.49, 0.48, 0.45], std: vec![0.25, 0.24, 0.26] };
    put(&root, "normalizer_parse", "rgb", norm.to_text().as_bytes())?;

    let mut rng = seeded(0);
    let conv = Network::new(vec![
        SphereBlock::conv(1, 2, Activation::LeakyRelu(0.01), false, AuxSpec { enabled: true, depth: 1, d_proj: 3 }, &mut rng)?,
        SphereBlock::conv(2, 2, Activation::Tanh, true, AuxSpec { enabled: false, depth: 1, d_proj: 3 }, &mut rng)?,
    ]);
    put(&root, "checkpoint_decode", "conv", &encode_checkpoint(&conv))?;
    let dense = Network::new(vec![SphereBlock::mlp(3, 4, 2, 2, Activation::Sigmoid, &mut rng)?]);
    put(&root, "checkpoint_decode", "mlp", &encode_checkpoint(&dense))?;
    Ok(())
}
