//! End-to-end experiment drivers: each returns a serializable report.

use serde::{Deserialize, Serialize};

use super::greedy::{build_network, train_greedy, EpochRecord, GreedyOptions};
use super::knn::knn_accuracy;
use super::optim::{scheduled_lr, AdamW, OptimizerState};
use super::pipeline::DataPair;
use super::probe::{linear_probe, ProbeOptions, ProbeReport};
use crate::config::{parse_combo, Combo, LemmaConfig, LinearityConfig, OjaConfig, Schedule, TrainConfig};
use crate::data::{harmonic_spectrum, random_basis, spectral_population, synth_gaussian, SyntheticSpec};
use crate::error::{Error, Result};
use crate::losses::{sphere_loss_raw, GramMode, LossTerms};
use crate::network::{Activation, FeatureMap, Network, SphereBlock};
use crate::numerics::{frob_norm_sq, svd, Matrix};
use crate::oracle::{cka, min_sphere_loss, svd_alignment};
use crate::plasticity::{Rule, RuleState};
use crate::sampling::{derived, gaussian_matrix, permutation};

/// Rows per forward pass when extracting features.
const EXTRACT_CHUNK: usize = 256;

fn as_map(x: &Matrix) -> Result<FeatureMap> {
    FeatureMap::from_matrix(x, x.cols(), 1, 1)
}

fn raw_sphere_terms() -> LossTerms {
    LossTerms { oja: false, sphere: true, orth: false, lambda: 0.0, gram: GramMode::Raw }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub batch: usize,
    pub dim: usize,
    pub width: usize,
    pub steps: usize,
    pub achieved: f64,
    pub oracle: f64,
    pub ratio: f64,
}

/// Full-batch training of a linear map `Y = XW` on the raw Gram objective,
/// compared with the closed-form minimum.
pub fn run_lemma(cfg: &LemmaConfig, seed: u64) -> Result<LemmaReport> {
    if cfg.width == 0 || cfg.width >= cfg.dim.min(cfg.batch) {
        return Err(Error::InvalidArgument(format!("width {} must lie in 1..min(B, N) = 1..{}", cfg.width, cfg.dim.min(cfg.batch))));
    }
    let spec = SyntheticSpec { rows: cfg.batch, cols: cfg.dim, spectrum: harmonic_spectrum(cfg.dim), seed };
    let x = synth_gaussian(&spec)?;
    let oracle = min_sphere_loss(&x, cfg.width)?;
    let mut block = SphereBlock::linear(cfg.dim, cfg.width, &mut derived(seed, 1));
    let fm = as_map(&x)?;
    let terms = raw_sphere_terms();
    let lens: Vec<usize> = block.params().iter().map(|(_, p)| p.len()).collect();
    let mut state = OptimizerState::new(&lens, AdamW { weight_decay: 0.0, ..AdamW::default() });
    for t in 0..cfg.steps {
        let (g, _) = block.backward(&fm, &terms)?;
        let lr = scheduled_lr(Schedule::Cosine, cfg.lr, t, cfg.steps);
        state.step(block.params_mut(), &g.values, lr)?;
    }
    let w = Matrix::new(cfg.dim, cfg.width, block.params()[0].1.to_vec())?;
    let achieved = sphere_loss_raw(&x.matmul(&w)?, &x)?;
    Ok(LemmaReport { batch: cfg.batch, dim: cfg.dim, width: cfg.width, steps: cfg.steps, achieved, oracle, ratio: achieved / oracle })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OjaTracePoint {
    pub step: usize,
    pub cosine: f64,
    pub norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OjaReport {
    pub trace: Vec<OjaTracePoint>,
    pub final_cosine: f64,
    pub final_norm: f64,
    /// Step at which the plain Hebbian rule from the same start diverged.
    pub hebb_diverged_at: Option<usize>,
}

/// Single-unit Oja and Hebbian rules on data with a known spectrum.
pub fn run_oja_demo(cfg: &OjaConfig, seed: u64) -> Result<OjaReport> {
    let n = cfg.spectrum.len();
    let mut rng = derived(seed, 3);
    let basis = random_basis(n, &mut rng)?;
    let x = spectral_population(cfg.samples, &cfg.spectrum, &basis, &mut rng)?.scale(1.0 / (cfg.samples as f64).sqrt());
    let top = svd(&x)?.v.column(0);
    let w0 = gaussian_matrix(n, 1, &mut rng).scale(0.1);
    let measure = |w: &Matrix, step: usize| {
        let norm = frob_norm_sq(w).sqrt();
        let cosine = w.data().iter().zip(&top).map(|(a, b)| a * b).sum::<f64>().abs() / norm.max(f64::MIN_POSITIVE);
        OjaTracePoint { step, cosine, norm }
    };
    let every = (cfg.steps / 20).max(1);
    let mut state = RuleState::new(w0.clone(), cfg.eta, Rule::Oja)?;
    let mut trace = vec![measure(&state.w, 0)];
    for t in 1..=cfg.steps {
        state = state.step(&x)?;
        if t % every == 0 || t == cfg.steps {
            trace.push(measure(&state.w, t));
        }
    }
    let last = measure(&state.w, cfg.steps);
    let mut hebb = RuleState::new(w0, cfg.eta, Rule::Hebb)?;
    let mut hebb_diverged_at = None;
    for t in 1..=cfg.steps.max(100_000) {
        match hebb.step(&x) {
            Ok(next) => hebb = next,
            Err(Error::Divergence { .. }) => {
                hebb_diverged_at = Some(t);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(OjaReport { trace, final_cosine: last.cosine, final_norm: last.norm, hebb_diverged_at })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearityReport {
    /// Linear-kernel CKA between the two branches on held-out rows, before
    /// training and after each epoch.
    pub cka: Vec<f64>,
    /// `|cos|` between matched leading singular directions.
    pub alignment_diagonal: Vec<f64>,
    pub leading_diagonal_mean: f64,
    pub off_diagonal_mean: f64,
    pub linear_loss: f64,
    pub nonlinear_loss: f64,
}

/// Number of matched directions averaged into `leading_diagonal_mean`.
pub const LEADING_DIRECTIONS: usize = 20;

/// Trains a linear map and a nonlinear perceptron on the same batches of
/// the raw Gram objective and compares their outputs.
pub fn run_linearity_study(cfg: &LinearityConfig, seed: u64) -> Result<LinearityReport> {
    let act: Activation = cfg.activation.parse()?;
    let sigmas: Vec<f64> = (0..cfg.dim).map(|i| (-(i as f64) / cfg.spectrum_decay).exp()).collect();
    let mut rng = derived(seed, 4);
    let basis = random_basis(cfg.dim, &mut rng)?;
    let x = spectral_population(cfg.samples, &sigmas, &basis, &mut rng)?.scale(1.0 / (cfg.batch_size as f64).sqrt());
    let eval_idx: Vec<usize> = (0..cfg.eval_samples.min(cfg.samples)).collect();
    let x_eval = as_map(&x.select_rows(&eval_idx))?;
    let mut lin = SphereBlock::linear(cfg.dim, cfg.width, &mut derived(seed, 5));
    let mut mlp = SphereBlock::mlp(cfg.dim, cfg.hidden, cfg.width, 3, act, &mut derived(seed, 6))?;
    let terms = raw_sphere_terms();
    let hyper = AdamW { weight_decay: 0.0, ..AdamW::default() };
    let lens = |b: &SphereBlock| b.params().iter().map(|(_, p)| p.len()).collect::<Vec<_>>();
    let mut lin_state = OptimizerState::new(&lens(&lin), hyper);
    let mut mlp_state = OptimizerState::new(&lens(&mlp), hyper);
    let outputs =
        |lin: &SphereBlock, mlp: &SphereBlock| -> Result<(Matrix, Matrix)> { Ok((lin.forward(&x_eval)?.z, mlp.forward(&x_eval)?.z)) };
    let (y, z) = outputs(&lin, &mlp)?;
    let mut ckas = vec![cka(&y, &z)?];
    let mut shuffle = derived(seed, 7);
    for _ in 0..cfg.epochs {
        let perm = permutation(cfg.samples, &mut shuffle);
        for idx in perm.chunks(cfg.batch_size).filter(|c| c.len() == cfg.batch_size) {
            let xb = as_map(&x.select_rows(idx))?;
            let (g, _) = lin.backward(&xb, &terms)?;
            lin_state.step(lin.params_mut(), &g.values, cfg.lr)?;
            let (g, _) = mlp.backward(&xb, &terms)?;
            mlp_state.step(mlp.params_mut(), &g.values, cfg.lr)?;
        }
        let (y, z) = outputs(&lin, &mlp)?;
        ckas.push(cka(&y, &z)?);
    }
    let (y, z) = outputs(&lin, &mlp)?;
    let xe = x_eval.flatten();
    let align = svd_alignment(&y.transpose(), &z.transpose(), cfg.components)?;
    let k = align.rows();
    let diag: Vec<f64> = (0..k).map(|i| align.get(i, i)).collect();
    let lead = LEADING_DIRECTIONS.min(k);
    let off_sum: f64 = align.data().iter().sum::<f64>() - diag.iter().sum::<f64>();
    let off = if k > 1 { off_sum / (k * k - k) as f64 } else { 0.0 };
    Ok(LinearityReport {
        cka: ckas,
        leading_diagonal_mean: diag[..lead].iter().sum::<f64>() / lead as f64,
        alignment_diagonal: diag,
        off_diagonal_mean: off,
        linear_loss: sphere_loss_raw(&y, &xe)?,
        nonlinear_loss: sphere_loss_raw(&z, &xe)?,
    })
}

/// Probe and nearest-neighbour accuracy of one network on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub feature_dim: usize,
    pub probe: ProbeReport,
    pub knn_accuracy: f64,
}

pub fn probe_options(cfg: &TrainConfig) -> ProbeOptions {
    ProbeOptions {
        epochs: cfg.probe.epochs,
        lr: cfg.probe.lr,
        batch_size: cfg.probe.batch_size,
        weight_decay: cfg.probe.weight_decay,
        seed: cfg.seed,
    }
}

/// Evaluates frozen features; the network is only read.
pub fn evaluate(net: &Network, data: &DataPair, cfg: &TrainConfig) -> Result<EvalReport> {
    let train = net.extract(&data.train.images, EXTRACT_CHUNK)?;
    let test = net.extract(&data.test.images, EXTRACT_CHUNK)?;
    let classes = data.train.num_classes.max(data.test.num_classes);
    let probe = linear_probe(&train, &data.train.labels, &test, &data.test.labels, classes, &probe_options(cfg))?;
    let knn = knn_accuracy(&train, &data.train.labels, &test, &data.test.labels, cfg.knn_k)?;
    Ok(EvalReport { feature_dim: train.cols(), probe, knn_accuracy: knn })
}

/// Builds and greedily trains a network on `data.train`.
pub fn train_network(cfg: &TrainConfig, data: &DataPair, sink: &mut dyn FnMut(&EpochRecord)) -> Result<(Network, Vec<EpochRecord>)> {
    cfg.loss_terms().validate()?;
    let mut net = build_network(cfg, data.channels(), &mut derived(cfg.seed, 2))?;
    let opts = GreedyOptions::from_config(cfg, net.blocks.len());
    let log = train_greedy(&mut net, &data.train.images, &opts, sink)?;
    Ok((net, log))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub combo: String,
    pub seed: u64,
    /// `ok`, or `refused` when the configuration cannot run here.
    pub status: String,
    pub note: Option<String>,
    pub probe_test_accuracy: Option<f64>,
    pub knn_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub combo: String,
    pub runs: usize,
    pub probe_mean: Option<f64>,
    pub probe_std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub summary: Vec<AblationSummary>,
}

/// Configuration for one ablation entry: the loss terms and projection
/// switch come from the combo, everything else from `base`.
pub fn combo_config(base: &TrainConfig, combo: Combo, seed: u64) -> TrainConfig {
    let mut cfg = base.clone();
    cfg.seed = seed;
    cfg.loss.oja = combo.oja;
    cfg.loss.sphere = combo.sphere;
    cfg.loss.orth = combo.orth;
    cfg.phi.enabled = combo.phi;
    cfg
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64 } else { 0.0 };
    (Some(m), Some(var.sqrt()))
}

/// Every combo under every seed. Configurations refused for memory are
/// recorded rather than aborting the grid.
pub fn run_ablation(base: &TrainConfig, data: &DataPair, sink: &mut dyn FnMut(&str, u64, &EpochRecord)) -> Result<AblationReport> {
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for name in &base.ablation.combos {
        let combo = parse_combo(name).map_err(Error::InvalidArgument)?;
        let mut accs = Vec::new();
        for &seed in &base.ablation.seeds {
            let cfg = combo_config(base, combo, seed);
            let label = combo.label();
            let outcome = train_network(&cfg, data, &mut |r| sink(&label, seed, r));
            let row = match outcome {
                Ok((net, _)) => {
                    let eval = evaluate(&net, data, &cfg)?;
                    accs.push(eval.probe.test_accuracy);
                    AblationRow {
                        combo: label,
                        seed,
                        status: "ok".into(),
                        note: None,
                        probe_test_accuracy: Some(eval.probe.test_accuracy),
                        knn_accuracy: Some(eval.knn_accuracy),
                    }
                }
                Err(e @ Error::MemoryConstraint(_)) => AblationRow {
                    combo: label,
                    seed,
                    status: "refused".into(),
                    note: Some(e.to_string()),
                    probe_test_accuracy: None,
                    knn_accuracy: None,
                },
                Err(e) => return Err(e),
            };
            rows.push(row);
        }
        let (probe_mean, probe_std) = mean_std(&accs);
        summary.push(AblationSummary { combo: combo.label(), runs: accs.len(), probe_mean, probe_std });
    }
    Ok(AblationReport { rows, summary })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub source: String,
    pub target: String,
    /// Probe accuracy on the target with features learned on the target.
    pub in_domain_accuracy: f64,
    /// Probe accuracy on the target with features learned on the source.
    pub transfer_accuracy: f64,
    pub gap: f64,
}

/// Trains on `source` and on `target` with the same seed, then probes both
/// networks on `target`. The target is adapted to the source's channel
/// count and size.
pub fn run_transfer(
    cfg: &TrainConfig,
    source: &DataPair,
    target: &DataPair,
    sink: &mut dyn FnMut(&str, &EpochRecord),
) -> Result<TransferReport> {
    let target = target.adapt(source.channels(), source.side())?;
    let (src_net, _) = train_network(cfg, source, &mut |r| sink("source", r))?;
    let (tgt_net, _) = train_network(cfg, &target, &mut |r| sink("target", r))?;
    let transfer = evaluate(&src_net, &target, cfg)?.probe.test_accuracy;
    let in_domain = evaluate(&tgt_net, &target, cfg)?.probe.test_accuracy;
    Ok(TransferReport {
        source: cfg.transfer.source.to_string(),
        target: cfg.transfer.target.to_string(),
        in_domain_accuracy: in_domain,
        transfer_accuracy: transfer,
        gap: in_domain - transfer,
    })
}

/// Same architecture, untrained: the baseline every trained network should
/// beat.
pub fn random_feature_baseline(cfg: &TrainConfig, data: &DataPair) -> Result<EvalReport> {
    let net = build_network(cfg, data.channels(), &mut derived(cfg.seed, 2))?;
    evaluate(&net, data, cfg)
}
