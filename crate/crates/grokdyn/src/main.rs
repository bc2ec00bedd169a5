use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use grokdyn::config::default_toy_init;
use grokdyn::{resolve, run, ConfigPatch, Subcommand};
use grokdyn_core::net::{Activation, LossReduction};
use grokdyn_core::toy::ToyKind;

/// Reproduce grokking experiments: toy models, real-network training with the
/// zero-loss cosine probe, isolated first-layer dynamics and Fourier reports.
#[derive(Debug, Parser)]
#[command(name = "grokdyn", version)]
struct Cli {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// Flat JSON config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long = "dh")]
    d_h: Option<usize>,
    #[arg(long = "fs")]
    f_s: Option<f64>,
    /// Number of training pairs (overrides --fs).
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Update-averaging window of the cosine probe.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long = "seed", value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long)]
    snapshot_stride: Option<usize>,
    #[arg(long)]
    probe_stride: Option<usize>,
    /// relu, identity or leaky:<slope>
    #[arg(long, value_parser = parse_activation)]
    activation: Option<Activation>,
    #[arg(long, value_parser = parse_reduction)]
    reduction: Option<LossReduction>,
    /// linear2, linear3, two_layer_scalar, leaky1 or parabola
    #[arg(long, value_parser = parse_kind)]
    kind: Option<ToyKind>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    init: Option<Vec<f64>>,
    /// Embedding stack (`embeddings.json`) for the fourier subcommand.
    #[arg(long)]
    embedding: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    match s {
        "relu" => Ok(Activation::Relu),
        "identity" => Ok(Activation::Identity),
        _ => s
            .strip_prefix("leaky:")
            .and_then(|v| v.parse().ok())
            .map(|slope| Activation::LeakyRelu { slope })
            .ok_or_else(|| format!("unknown activation {s:?}")),
    }
}

fn parse_reduction(s: &str) -> Result<LossReduction, String> {
    match s {
        "sum" => Ok(LossReduction::Sum),
        "mean" => Ok(LossReduction::Mean),
        _ => Err(format!("unknown reduction {s:?} (sum or mean)")),
    }
}

fn parse_kind(s: &str) -> Result<ToyKind, String> {
    ToyKind::from_name(s).ok_or_else(|| format!("unknown toy kind {s:?}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let flags = ConfigPatch {
        subcommand: None,
        p: cli.p,
        d_h: cli.d_h,
        f_s: cli.f_s,
        n_train: cli.n_train,
        split_seed: cli.split_seed,
        lambda: cli.lambda,
        eta: cli.eta,
        beta: cli.beta,
        steps: cli.steps,
        window: cli.window,
        seeds: cli.seeds,
        log_every: cli.log_every,
        snapshot_stride: cli.snapshot_stride,
        probe_stride: cli.probe_stride,
        activation: cli.activation,
        reduction: cli.reduction,
        init: cli.init.or_else(|| cli.kind.map(default_toy_init)),
        toy_kind: cli.kind,
        embedding: cli.embedding,
        jobs: cli.jobs,
        out_dir: cli.out,
    };
    let result = resolve(cli.subcommand, cli.config.as_deref(), flags).and_then(|cfg| run(&cfg));
    match result {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
            println!("artifacts in {}", report.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("grokdyn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
