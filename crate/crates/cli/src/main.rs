//! `sphere`: one entry point for every experiment.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sphere::config::TrainConfig;
use sphere::network::Network;
use sphere::trainer::experiments::{
    evaluate, random_feature_baseline, run_ablation, run_lemma, run_linearity_study, run_oja_demo, run_transfer, train_network,
};
use sphere::trainer::pipeline::{data_root, load_dataset, DataPair};
use sphere::trainer::{knn_accuracy, EpochRecord};
use sphere::verify::gradcheck_suite;

use output::{CliError, CliResult, RunDir};

/// Environment variable naming the dataset root when `data.dir` is unset.
const DATA_ENV: &str = "SPHERE_DATA_DIR";
const CHECKPOINT: &str = "network.ckpt";
const LEMMA_RATIO_LIMIT: f64 = 1.05;

#[derive(Parser)]
#[command(name = "sphere", version, about = "Block-wise Gram-matching Hebbian training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// Config file (`[section]` headers, `key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `runs/<subcommand>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// `section.key=value` overrides, applied after the file.
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a linear block to the closed-form Gram optimum and compare.
    VerifyLemma {
        #[command(flatten)]
        common: Common,
        /// Batch size.
        #[arg(long = "B")]
        batch: Option<usize>,
        /// Input dimension.
        #[arg(long = "N")]
        dim: Option<usize>,
        /// Output width.
        #[arg(long = "M")]
        width: Option<usize>,
    },
    /// Finite-difference check of every analytic gradient.
    Gradcheck(Common),
    /// Greedy block-wise training; writes a checkpoint.
    Train(Common),
    /// Linear probe on frozen features against a random-weight baseline.
    Probe(Common),
    /// Cosine k-nearest-neighbour accuracy on frozen features.
    Knn(Common),
    /// Loss-term and projection ablation grid over seeds.
    Ablate(Common),
    /// Train on a source dataset, probe on a target.
    Transfer(Common),
    /// Linear versus nonlinear branch similarity study.
    Linearity(Common),
    /// Oja and plain Hebbian rules on a known spectrum.
    OjaDemo(Common),
}

impl Cmd {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Cmd::VerifyLemma { common, .. } => ("verify-lemma", common),
            Cmd::Gradcheck(c) => ("gradcheck", c),
            Cmd::Train(c) => ("train", c),
            Cmd::Probe(c) => ("probe", c),
            Cmd::Knn(c) => ("knn", c),
            Cmd::Ablate(c) => ("ablate", c),
            Cmd::Transfer(c) => ("transfer", c),
            Cmd::Linearity(c) => ("linearity", c),
            Cmd::OjaDemo(c) => ("oja-demo", c),
        }
    }

    /// Flag-derived overrides, applied after the positional ones.
    fn flag_overrides(&self) -> Vec<String> {
        let (_, common) = self.parts();
        let mut out = common.overrides.clone();
        if let Some(s) = common.seed {
            out.push(format!("run.seed={s}"));
        }
        if let Cmd::VerifyLemma { batch, dim, width, .. } = self {
            for (key, v) in [("lemma.batch", batch), ("lemma.dim", dim), ("lemma.width", width)] {
                if let Some(v) = v {
                    out.push(format!("{key}={v}"));
                }
            }
        }
        out
    }
}

struct Ctx {
    cfg: TrainConfig,
    dir: RunDir,
    name: &'static str,
}

impl Ctx {
    fn root(&self) -> Option<PathBuf> {
        data_root(&self.cfg, std::env::var_os(DATA_ENV).map(PathBuf::from))
    }

    fn dataset(&self) -> CliResult<DataPair> {
        Ok(load_dataset(&self.cfg.data.dataset, &self.cfg, self.root().as_deref())?)
    }

    fn summary<T: serde::Serialize>(&self, result: &T) -> CliResult<()> {
        self.dir.write_summary(self.name, self.cfg.seed, result)
    }
}

fn log_epochs<'a>(dir: &'a mut RunDir, run: Option<&str>) -> impl FnMut(&EpochRecord) + 'a {
    let run = run.map(str::to_string);
    move |r| {
        if let Err(e) = dir.log_metric(run.as_deref(), r) {
            log::warn!("metrics log: {e}");
        }
    }
}

/// The checkpoint in the run directory if present, else a freshly trained
/// network that is then saved there.
fn trained(ctx: &mut Ctx, data: &DataPair) -> CliResult<Network> {
    let path = ctx.dir.path(CHECKPOINT);
    if path.exists() {
        log::info!("reusing {}", path.display());
        return Ok(Network::load(&path)?);
    }
    let cfg = ctx.cfg.clone();
    let (net, _) = train_network(&cfg, data, &mut log_epochs(&mut ctx.dir, None))?;
    net.save(&path)?;
    Ok(net)
}

fn run(cmd: &Cmd, ctx: &mut Ctx) -> CliResult<()> {
    match cmd {
        Cmd::VerifyLemma { .. } => {
            let r = run_lemma(&ctx.cfg.lemma, ctx.cfg.seed)?;
            println!("achieved {:.6e}  oracle {:.6e}  ratio {:.6}", r.achieved, r.oracle, r.ratio);
            let passed = r.ratio <= LEMMA_RATIO_LIMIT;
            ctx.summary(&json!({ "lemma": r, "ratio_limit": LEMMA_RATIO_LIMIT, "passed": passed }))?;
            if !passed {
                return Err(CliError::CheckFailed(format!("ratio {} exceeds {LEMMA_RATIO_LIMIT}", r.ratio)));
            }
        }
        Cmd::Gradcheck(_) => {
            let rows = gradcheck_suite(ctx.cfg.seed)?;
            println!("{:<60} {:<16} {:>12} {:>10}  ok", "op", "metric", "value", "tolerance");
            for r in &rows {
                println!("{:<60} {:<16} {:>12.3e} {:>10.1e}  {}", r.op, r.metric, r.value, r.tolerance, r.passed);
            }
            let failed: Vec<&str> = rows.iter().filter(|r| !r.passed).map(|r| r.op.as_str()).collect();
            ctx.summary(&json!({ "rows": rows, "passed": failed.is_empty() }))?;
            if !failed.is_empty() {
                return Err(CliError::CheckFailed(format!("gradients off for: {}", failed.join(", "))));
            }
        }
        Cmd::Train(_) => {
            let data = ctx.dataset()?;
            let cfg = ctx.cfg.clone();
            let (net, log) = train_network(&cfg, &data, &mut log_epochs(&mut ctx.dir, None))?;
            net.save(&ctx.dir.path(CHECKPOINT))?;
            let final_losses: Vec<_> = log
                .iter()
                .filter(|r| log.iter().all(|s| s.block != r.block || s.epoch <= r.epoch))
                .map(|r| json!({ "block": r.block, "epochs": r.epoch + 1, "sphere": r.sphere, "orth": r.orth, "oja": r.oja, "total": r.total }))
                .collect();
            ctx.summary(&json!({
                "dataset": cfg.data.dataset.to_string(),
                "train_samples": data.train.len(),
                "blocks": final_losses,
                "checksums": net.checksums(),
                "checkpoint": CHECKPOINT,
            }))?;
        }
        Cmd::Probe(_) => {
            let data = ctx.dataset()?;
            let net = trained(ctx, &data)?;
            let eval = evaluate(&net, &data, &ctx.cfg)?;
            let random = random_feature_baseline(&ctx.cfg, &data)?;
            println!("probe test accuracy {:.4}  (random features {:.4})", eval.probe.test_accuracy, random.probe.test_accuracy);
            ctx.summary(&json!({
                "dataset": ctx.cfg.data.dataset.to_string(),
                "trained": eval,
                "random_init": random,
                "margin": eval.probe.test_accuracy - random.probe.test_accuracy,
            }))?;
        }
        Cmd::Knn(_) => {
            let data = ctx.dataset()?;
            let net = trained(ctx, &data)?;
            let train = net.extract(&data.train.images, 256)?;
            let test = net.extract(&data.test.images, 256)?;
            let acc = knn_accuracy(&train, &data.train.labels, &test, &data.test.labels, ctx.cfg.knn_k)?;
            println!("knn (k={}) test accuracy {acc:.4}", ctx.cfg.knn_k);
            ctx.summary(&json!({
                "dataset": ctx.cfg.data.dataset.to_string(),
                "k": ctx.cfg.knn_k,
                "accuracy": acc,
            }))?;
        }
        Cmd::Ablate(_) => {
            let data = ctx.dataset()?;
            let cfg = ctx.cfg.clone();
            let dir = &mut ctx.dir;
            let report = run_ablation(&cfg, &data, &mut |combo, seed, r| {
                if let Err(e) = dir.log_metric(Some(&format!("{combo}/seed{seed}")), r) {
                    log::warn!("metrics log: {e}");
                }
            })?;
            for s in &report.summary {
                match (s.probe_mean, s.probe_std) {
                    (Some(m), Some(sd)) => println!("{:<20} {:.4} ± {:.4} ({} runs)", s.combo, m, sd, s.runs),
                    _ => println!("{:<20} refused", s.combo),
                }
            }
            ctx.summary(&report)?;
        }
        Cmd::Transfer(_) => {
            let root = ctx.root();
            let source = load_dataset(&ctx.cfg.transfer.source, &ctx.cfg, root.as_deref())?;
            let target = load_dataset(&ctx.cfg.transfer.target, &ctx.cfg, root.as_deref())?;
            let cfg = ctx.cfg.clone();
            let dir = &mut ctx.dir;
            let report = run_transfer(&cfg, &source, &target, &mut |phase, r| {
                if let Err(e) = dir.log_metric(Some(phase), r) {
                    log::warn!("metrics log: {e}");
                }
            })?;
            println!("in-domain {:.4}  transferred {:.4}  gap {:.4}", report.in_domain_accuracy, report.transfer_accuracy, report.gap);
            ctx.summary(&report)?;
        }
        Cmd::Linearity(_) => {
            let r = run_linearity_study(&ctx.cfg.linearity, ctx.cfg.seed)?;
            for (epoch, c) in r.cka.iter().enumerate() {
                ctx.dir.log_metric(None, &json!({ "epoch": epoch, "cka": c }))?;
            }
            println!(
                "final CKA {:.4}  leading diagonal {:.4}  off-diagonal {:.4}",
                r.cka.last().copied().unwrap_or(f64::NAN),
                r.leading_diagonal_mean,
                r.off_diagonal_mean
            );
            ctx.summary(&r)?;
        }
        Cmd::OjaDemo(_) => {
            let r = run_oja_demo(&ctx.cfg.oja, ctx.cfg.seed)?;
            for p in &r.trace {
                ctx.dir.log_metric(None, p)?;
            }
            println!("|cos| {:.6}  norm {:.6}  hebb diverged at {:?}", r.final_cosine, r.final_norm, r.hebb_diverged_at);
            ctx.summary(&r)?;
        }
    }
    Ok(())
}

fn setup(cmd: &Cmd, name: &'static str, out: &Path) -> CliResult<Ctx> {
    let (_, common) = cmd.parts();
    let overrides = cmd.flag_overrides();
    let cfg = TrainConfig::load(common.config.as_deref(), &overrides)?;
    let dir = RunDir::create(out)?;
    dir.write_manifest(name, cfg.seed, &cfg.to_text(), &overrides)?;
    Ok(Ctx { cfg, dir, name })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (name, common) = cli.command.parts();
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(name));
    let result = setup(&cli.command, name, &out).and_then(|mut ctx| run(&cli.command, &mut ctx));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = e.record(name);
            eprintln!("{record}");
            if let Err(w) = output::write_error(&out, &record) {
                log::warn!("{w}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
