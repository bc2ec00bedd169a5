//! Subcommand dispatch. Every run writes `config.json` first, then one
//! directory per seed, then the aggregate SVG plots.

use std::path::{Path, PathBuf};

use grokdyn_core::data::Dataset;
use grokdyn_core::effective::{self, CheckInstance, SimConfig};
use grokdyn_core::fourier::dft_embedding;
use grokdyn_core::metrics::{MetricsLog, Summary};
use grokdyn_core::net::NetParams;
use grokdyn_core::probe::{ProbeContext, ProbeRecord, ProjectionConfig};
use grokdyn_core::toy::{run_toy, ToyKind, ToyModel, ToyRunConfig, ToyTrajectory};
use grokdyn_core::train::{train_with, StepSize, TrainConfig};
use grokdyn_core::{Error as CoreError, Matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{self, fourier_report, FourierReport};
use crate::config::{RunConfig, Subcommand};
use crate::error::{CliError, CliResult};
use crate::plot::{self, Axes, Series, PALETTE};

/// Relative error below which `gradcheck` succeeds.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Finite-difference step.
pub const FD_STEP: f64 = 1e-6;

/// Human-readable lines for the terminal.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub lines: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Fingerprint {
    version: &'static str,
    float: &'static str,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct SeedSummary<'a> {
    fingerprint: Fingerprint,
    summary: Option<Summary>,
    #[serde(flatten)]
    extra: &'a serde_json::Value,
    error: Option<String>,
}

fn fingerprint(seed: u64) -> Fingerprint {
    Fingerprint {
        version: env!("CARGO_PKG_VERSION"),
        float: "f64",
        seed,
    }
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

fn write_summary(dir: &Path, seed: u64, log: &MetricsLog, extra: serde_json::Value, error: Option<&CoreError>) -> CliResult<()> {
    artifacts::write_json(
        &dir.join("summary.json"),
        &SeedSummary {
            fingerprint: fingerprint(seed),
            summary: log.summary(),
            extra: &extra,
            error: error.map(|e| e.to_string()),
        },
    )
}

/// Runs `f` over the seeds on at most `jobs` threads; results keep seed
/// order.
fn per_seed<T, F>(cfg: &RunConfig, f: F) -> CliResult<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> CliResult<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    pool.install(|| cfg.seeds.par_iter().map(|&s| f(s)).collect::<Vec<_>>())
        .into_iter()
        .collect()
}

/// First numerical failure across seeds, raised after all artifacts exist.
fn first_failure(errors: impl IntoIterator<Item = Option<CoreError>>) -> CliResult<()> {
    match errors.into_iter().flatten().next() {
        Some(e) => Err(CliError::Numerical(e)),
        None => Ok(()),
    }
}

pub fn dataset(cfg: &RunConfig) -> CliResult<Dataset> {
    let data = Dataset::new(cfg.p)?;
    Ok(match cfg.n_train {
        Some(n) => data.split_count(n, cfg.split_seed)?,
        None => data.split(cfg.f_s, cfg.split_seed)?,
    })
}

pub fn run(cfg: &RunConfig) -> CliResult<RunReport> {
    cfg.validate()?;
    artifacts::create_dir(&cfg.out_dir)?;
    artifacts::write_json(&cfg.out_dir.join("config.json"), cfg)?;
    let mut report = RunReport {
        out_dir: cfg.out_dir.clone(),
        lines: Vec::new(),
    };
    match cfg.subcommand {
        Subcommand::SimIsolated => sim_isolated(cfg, &mut report)?,
        Subcommand::TrainReal | Subcommand::ProbeCosine => train_real(cfg, &mut report)?,
        Subcommand::Toy => toy(cfg, &mut report)?,
        Subcommand::Fourier => fourier(cfg, &mut report)?,
        Subcommand::Gradcheck => gradcheck(cfg, &mut report)?,
    }
    Ok(report)
}

fn curve(log: &MetricsLog, f: impl Fn(&grokdyn_core::metrics::MetricsRow) -> f64) -> Vec<(f64, f64)> {
    log.rows.iter().map(|r| (r.step as f64, f(r))).collect()
}

fn write_training_plots(out: &Path, logs: &[MetricsLog]) -> CliResult<()> {
    let acc = plot::seeds_chart(
        "Accuracy",
        "accuracy",
        Axes { log_x: true, log_y: false },
        &[
            ("train", logs.iter().map(|l| curve(l, |r| r.train_acc)).collect()),
            ("test", logs.iter().map(|l| curve(l, |r| r.test_acc)).collect()),
        ],
    );
    artifacts::write_text(&out.join("accuracy.svg"), &acc)?;
    let loss = plot::seeds_chart(
        "Loss",
        "loss",
        Axes { log_x: true, log_y: true },
        &[
            ("train", logs.iter().map(|l| curve(l, |r| r.train_loss)).collect()),
            ("test", logs.iter().map(|l| curve(l, |r| r.test_loss)).collect()),
        ],
    );
    artifacts::write_text(&out.join("loss.svg"), &loss)
}

fn write_fourier_plots(out: &Path, rep: &FourierReport) -> CliResult<()> {
    let bars: Vec<(String, f64)> = rep
        .frequencies
        .iter()
        .map(|f| (f.k.to_string(), f.power.sqrt()))
        .collect();
    artifacts::write_text(
        &out.join("fourier_norms.svg"),
        &plot::bar_chart("Fourier feature norms", "frequency k", "|F_k|", &bars),
    )?;
    let labels: Vec<String> = rep.frequencies.iter().map(|f| f.k.to_string()).collect();
    artifacts::write_text(
        &out.join("fourier_overlap.svg"),
        &plot::heatmap("Frequency overlap", &labels, &rep.overlap),
    )
}

struct SimSeed {
    log: MetricsLog,
    error: Option<CoreError>,
    line: String,
}

fn sim_isolated(cfg: &RunConfig, report: &mut RunReport) -> CliResult<()> {
    let data = dataset(cfg)?;
    artifacts::write_dataset(&cfg.out_dir.join("dataset.csv"), &data)?;
    let sim = SimConfig {
        d_h: cfg.d_h,
        eta: cfg.eta,
        steps: cfg.steps,
        activation: cfg.activation,
        log_every: cfg.log_every,
        snapshot_stride: cfg.snapshot_stride,
    };
    let results = per_seed(cfg, |seed| {
        let dir = seed_dir(&cfg.out_dir, seed);
        artifacts::create_dir(&dir)?;
        let (outcome, error) = match effective::simulate(&sim, &data, seed) {
            Ok(o) => (o, None),
            Err(f) => (f.partial, Some(f.error)),
        };
        artifacts::write_metrics(&dir.join("metrics.csv"), &outcome.log)?;
        artifacts::write_matrix_stack(&dir, "embeddings", &outcome.snapshots)?;
        if let (Some(first), Some(last)) = (outcome.snapshots.first(), outcome.snapshots.last()) {
            let init = fourier_report(&dft_embedding(&first.1, cfg.p)?, first.0);
            let fin = fourier_report(&dft_embedding(&last.1, cfg.p)?, last.0);
            artifacts::write_json(&dir.join("fourier_init.json"), &init)?;
            artifacts::write_json(&dir.join("fourier.json"), &fin)?;
            write_fourier_plots(&dir, &fin)?;
        }
        let extra = serde_json::json!({
            "max_interpolation_residual": outcome.max_interpolation_residual,
            "max_condition": outcome.max_condition,
        });
        write_summary(&dir, seed, &outcome.log, extra, error.as_ref())?;
        let s = outcome.log.summary();
        let line = format!(
            "seed {seed}: final test acc {:.4}, grokking step {}, max train residual {:.2e}{}",
            s.map_or(f64::NAN, |s| s.final_test_acc),
            s.and_then(|s| s.grokking_step).map_or("-".into(), |g| g.to_string()),
            outcome.max_interpolation_residual,
            error.as_ref().map_or(String::new(), |e| format!(" [{e}]"))
        );
        Ok(SimSeed {
            log: outcome.log,
            error,
            line,
        })
    })?;
    let logs: Vec<MetricsLog> = results.iter().map(|r| r.log.clone()).collect();
    write_training_plots(&cfg.out_dir, &logs)?;
    report.lines.extend(results.iter().map(|r| r.line.clone()));
    first_failure(results.into_iter().map(|r| r.error))
}

struct TrainSeed {
    log: MetricsLog,
    probes: Vec<ProbeRecord>,
    error: Option<CoreError>,
    line: String,
}

fn train_real(cfg: &RunConfig, report: &mut RunReport) -> CliResult<()> {
    let data = dataset(cfg)?;
    artifacts::write_dataset(&cfg.out_dir.join("dataset.csv"), &data)?;
    let probing = cfg.subcommand == Subcommand::ProbeCosine;
    let tc = TrainConfig {
        lambda: cfg.lambda,
        reduction: cfg.reduction,
        step: StepSize {
            eta: cfg.eta,
            momentum: cfg.beta,
        },
        steps: cfg.steps,
        log_every: cfg.log_every,
        snapshot_stride: 0,
        window: cfg.window,
    };
    let (x, y) = data.train_xy();
    let results = per_seed(cfg, |seed| {
        let dir = seed_dir(&cfg.out_dir, seed);
        artifacts::create_dir(&dir)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init = NetParams::init_uniform(cfg.p, cfg.d_h, cfg.p, cfg.activation, &mut rng);
        let layout = init.layout();
        let ctx = ProbeContext {
            x: &x,
            y: &y,
            activation: cfg.activation,
            layout: &layout,
            window: cfg.window,
            projection: ProjectionConfig {
                reduction: cfg.reduction,
                ..ProjectionConfig::default()
            },
        };
        let mut probes = Vec::new();
        let result = train_with(&tc, &data, init, |state| {
            if probing && state.step % cfg.probe_stride == 0 {
                probes.push(ctx.probe_state(state));
            }
            Ok(())
        });
        let (outcome, error) = match result {
            Ok(o) => (o, None),
            Err(f) => (f.partial, Some(f.error)),
        };
        artifacts::write_metrics(&dir.join("metrics.csv"), &outcome.log)?;
        artifacts::write_params(&dir, outcome.final_params.flatten().values.as_slice(), &layout)?;
        if probing {
            artifacts::write_probe(&dir, &probes)?;
        }
        write_summary(&dir, seed, &outcome.log, serde_json::json!({}), error.as_ref())?;
        let s = outcome.log.summary();
        let line = format!(
            "seed {seed}: memorized at {}, grokking step {}, final test acc {:.4}{}",
            s.and_then(|s| s.memorization_step).map_or("-".into(), |g| g.to_string()),
            s.and_then(|s| s.grokking_step).map_or("-".into(), |g| g.to_string()),
            s.map_or(f64::NAN, |s| s.final_test_acc),
            error.as_ref().map_or(String::new(), |e| format!(" [{e}]"))
        );
        Ok(TrainSeed {
            log: outcome.log,
            probes,
            error,
            line,
        })
    })?;
    let logs: Vec<MetricsLog> = results.iter().map(|r| r.log.clone()).collect();
    write_training_plots(&cfg.out_dir, &logs)?;
    if probing {
        let runs: Vec<Vec<(f64, f64)>> = results
            .iter()
            .map(|r| {
                r.probes
                    .iter()
                    .filter(|p| p.cos_sim.is_finite())
                    .map(|p| (p.step as f64, p.cos_sim))
                    .collect()
            })
            .collect();
        let svg = plot::seeds_chart(
            "Cosine similarity with the norm-minimizing direction",
            "cosine similarity",
            Axes { log_x: true, log_y: false },
            &[("cos", runs)],
        );
        artifacts::write_text(&cfg.out_dir.join("cosine.svg"), &svg)?;
    }
    report.lines.extend(results.iter().map(|r| r.line.clone()));
    first_failure(results.into_iter().map(|r| r.error))
}

/// Points of the zero-loss set of a two-parameter toy with its default data,
/// for the phase-plane plot.
fn zero_set(kind: ToyKind, lo: f64, hi: f64) -> Vec<Vec<(f64, f64)>> {
    let grid = |f: &dyn Fn(f64) -> Option<f64>, a: f64, b: f64| -> Vec<(f64, f64)> {
        (0..=200)
            .filter_map(|i| {
                let x = a + (b - a) * i as f64 / 200.0;
                f(x).filter(|y| (lo..=hi).contains(y)).map(|y| (x, y))
            })
            .collect()
    };
    match kind {
        ToyKind::Linear2 | ToyKind::Leaky1 => vec![grid(&|x| Some(2.0 - x), lo, hi)],
        ToyKind::TwoLayerScalar => vec![grid(&|x| Some(1.0 / x), 1e-3, hi), grid(&|x| Some(1.0 / x), lo, -1e-3)],
        ToyKind::Parabola => vec![grid(&|x| Some(x * x), lo, hi)],
        ToyKind::Linear3 => Vec::new(),
    }
}

fn toy(cfg: &RunConfig, report: &mut RunReport) -> CliResult<()> {
    let model = ToyModel::new(cfg.toy_kind, cfg.lambda);
    let rc = ToyRunConfig {
        eta: cfg.eta,
        steps: cfg.steps,
        test_seed: cfg.seeds[0],
    };
    let traj = run_toy(&model, &cfg.init, &rc)?;
    artifacts::write_toy(&cfg.out_dir.join("toy.csv"), &traj, cfg.toy_kind.dim())?;
    write_toy_plots(&cfg.out_dir, cfg.toy_kind, &traj)?;
    if let Some(last) = traj.last() {
        report.lines.push(format!(
            "{} lambda={}: theta_T = {:?}, train loss {:.3e}",
            cfg.toy_kind.name(),
            cfg.lambda,
            last.theta,
            last.train_loss
        ));
    }
    Ok(())
}

fn write_toy_plots(out: &Path, kind: ToyKind, traj: &ToyTrajectory) -> CliResult<()> {
    let path: Vec<(f64, f64)> = traj.points.iter().map(|p| (p.theta[0], p.theta[1])).collect();
    let (lo, hi) = path
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .fold((-0.5f64, 1.5f64), |(l, h), v| (l.min(v), h.max(v)));
    let mut series: Vec<Series> = zero_set(kind, lo - 0.25, hi + 0.25)
        .into_iter()
        .enumerate()
        .map(|(i, pts)| {
            let mut s = Series::new(if i == 0 { "zero-loss set" } else { "" }, pts, "#999999");
            s.width = 1.0;
            s
        })
        .collect();
    series.push(Series::new("trajectory", path, PALETTE[1]));
    let phase = plot::line_chart(
        &format!("{} phase plane", kind.name()),
        "w1",
        "w2",
        Axes::default(),
        &series,
    );
    artifacts::write_text(&out.join("toy.svg"), &phase)?;
    let mut curves = vec![Series::new(
        "train",
        traj.points.iter().map(|p| (p.step as f64, p.train_loss)).collect(),
        PALETTE[0],
    )];
    if kind.is_addition() {
        curves.push(Series::new(
            "test",
            traj.points
                .iter()
                .filter_map(|p| Some((p.step as f64, p.test_loss?)))
                .collect(),
            PALETTE[1],
        ));
    }
    let loss = plot::line_chart("Loss", "step", "loss", Axes { log_x: true, log_y: true }, &curves);
    artifacts::write_text(&out.join("loss.svg"), &loss)
}

fn fourier(cfg: &RunConfig, report: &mut RunReport) -> CliResult<()> {
    let path = cfg.embedding.as_ref().expect("validated");
    let stack = artifacts::read_matrix_stack(path)?;
    let (step, e): &(usize, Matrix) = stack
        .last()
        .ok_or_else(|| CliError::io(path, std::io::Error::other("no embeddings in file")))?;
    let rep = fourier_report(&dft_embedding(e, e.nrows())?, *step);
    artifacts::write_json(&cfg.out_dir.join("fourier.json"), &rep)?;
    write_fourier_plots(&cfg.out_dir, &rep)?;
    for &k in rep.ranked.iter().take(5) {
        let f = &rep.frequencies[k - 1];
        report.lines.push(format!(
            "k={k}: |F_k|={:.4} aspect={:.3} ortho={:.3}",
            f.power.sqrt(),
            f.aspect,
            f.ortho
        ));
    }
    report
        .lines
        .push(format!("mean cross-frequency overlap {:.4}", rep.mean_off_diagonal));
    Ok(())
}

#[derive(Debug, Serialize)]
struct GradcheckRow {
    seed: u64,
    max_relative_error: f64,
}

fn gradcheck(cfg: &RunConfig, report: &mut RunReport) -> CliResult<()> {
    let rows = per_seed(cfg, |seed| {
        let CheckInstance { e, x, y } = effective::check_instance(cfg.p, cfg.d_h, cfg.activation, seed)?;
        let err = effective::gradcheck(&e, &x, &y, cfg.lambda, cfg.activation, FD_STEP)?;
        Ok(GradcheckRow {
            seed,
            max_relative_error: err,
        })
    })?;
    artifacts::write_json(&cfg.out_dir.join("gradcheck.json"), &rows)?;
    let worst = rows.iter().map(|r| r.max_relative_error).fold(0.0, f64::max);
    for r in &rows {
        report
            .lines
            .push(format!("seed {}: max relative error {:.3e}", r.seed, r.max_relative_error));
    }
    report.lines.push(format!("max relative error {worst:.3e}"));
    if !(worst < GRADCHECK_TOLERANCE) {
        return Err(CliError::CheckFailed(format!(
            "max relative error {worst:.3e} >= {GRADCHECK_TOLERANCE:e}"
        )));
    }
    Ok(())
}
