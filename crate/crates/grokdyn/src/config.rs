//! Run configuration: per-subcommand defaults, overlaid by an optional flat
//! JSON file, overlaid by command-line flags.

use std::path::{Path, PathBuf};

use grokdyn_core::net::{Activation, LossReduction};
use grokdyn_core::toy::{ToyKind, TOY_ETA_THRESHOLD};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const OUT_ENV: &str = "GROKDYN_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Toy,
    TrainReal,
    ProbeCosine,
    SimIsolated,
    Fourier,
    Gradcheck,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Toy => "toy",
            Subcommand::TrainReal => "train-real",
            Subcommand::ProbeCosine => "probe-cosine",
            Subcommand::SimIsolated => "sim-isolated",
            Subcommand::Fourier => "fourier",
            Subcommand::Gradcheck => "gradcheck",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub p: usize,
    pub d_h: usize,
    /// Train fraction; ignored when `n_train` is set.
    pub f_s: f64,
    pub n_train: Option<usize>,
    pub split_seed: u64,
    pub lambda: f64,
    pub eta: f64,
    pub beta: f64,
    pub steps: usize,
    /// Update-averaging window `c` of the cosine probe.
    pub window: usize,
    pub seeds: Vec<u64>,
    pub log_every: usize,
    pub snapshot_stride: usize,
    pub probe_stride: usize,
    pub activation: Activation,
    pub reduction: LossReduction,
    pub toy_kind: ToyKind,
    pub init: Vec<f64>,
    /// Embedding file analyzed by `fourier`.
    pub embedding: Option<PathBuf>,
    pub jobs: usize,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn defaults(sub: Subcommand) -> Self {
        let base = RunConfig {
            subcommand: sub,
            p: 37,
            d_h: 512,
            f_s: 0.7,
            n_train: None,
            split_seed: 0,
            lambda: 0.0,
            eta: 1e-3,
            beta: 0.0,
            steps: 5000,
            window: 10,
            seeds: vec![0],
            log_every: 1,
            snapshot_stride: 0,
            probe_stride: 10,
            activation: Activation::Relu,
            reduction: LossReduction::Sum,
            toy_kind: ToyKind::Linear2,
            init: Vec::new(),
            embedding: None,
            jobs: 1,
            out_dir: default_out_dir(sub),
        };
        match sub {
            Subcommand::SimIsolated => RunConfig {
                seeds: (0..5).collect(),
                snapshot_stride: 500,
                ..base
            },
            Subcommand::TrainReal | Subcommand::ProbeCosine => RunConfig {
                p: 11,
                d_h: 128,
                n_train: Some(59),
                lambda: 1e-4,
                eta: 1.0,
                steps: 20_000,
                log_every: 10,
                reduction: LossReduction::Mean,
                seeds: if sub == Subcommand::ProbeCosine {
                    (0..5).collect()
                } else {
                    vec![0]
                },
                ..base
            },
            Subcommand::Toy => RunConfig {
                lambda: 0.1,
                eta: 0.01,
                init: vec![-1.0, 1.0],
                ..base
            },
            Subcommand::Gradcheck => RunConfig {
                p: 7,
                d_h: 32,
                lambda: 0.01,
                ..base
            },
            Subcommand::Fourier => base,
        }
    }

    /// Training rows implied by `n_train` or `f_s`.
    pub fn train_rows(&self) -> usize {
        let total = self.p * (self.p + 1) / 2;
        self.n_train
            .unwrap_or_else(|| (self.f_s * total as f64).floor() as usize)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Validation(msg));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.jobs == 0 {
            return bad("--jobs must be >= 1".into());
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be positive and finite, got {}", self.eta));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return bad(format!("beta must lie in [0, 1), got {}", self.beta));
        }
        if self.log_every == 0 {
            return bad("log_every must be >= 1".into());
        }
        if let Activation::LeakyRelu { slope } = self.activation {
            if !slope.is_finite() {
                return bad("leaky slope must be finite".into());
            }
        }
        let needs_data = matches!(
            self.subcommand,
            Subcommand::TrainReal | Subcommand::ProbeCosine | Subcommand::SimIsolated | Subcommand::Gradcheck
        );
        if needs_data {
            if self.p < 2 {
                return bad(format!("p must be >= 2, got {}", self.p));
            }
            if self.d_h == 0 {
                return bad("d_h must be >= 1".into());
            }
            if self.n_train.is_none() && !(self.f_s > 0.0 && self.f_s < 1.0) {
                return bad(format!("f_s must lie in (0, 1), got {}", self.f_s));
            }
            let total = self.p * (self.p + 1) / 2;
            let rows = self.train_rows();
            if rows == 0 || rows >= total {
                return bad(format!("training rows {rows} must lie in 1..{total}"));
            }
        }
        match self.subcommand {
            Subcommand::SimIsolated => {
                if self.p % 2 == 0 {
                    return bad("sim-isolated needs odd p for the Fourier report".into());
                }
                if self.d_h <= self.train_rows() {
                    return bad(format!(
                        "isolated dynamics need d_h > training rows ({} <= {})",
                        self.d_h,
                        self.train_rows()
                    ));
                }
            }
            Subcommand::ProbeCosine => {
                if self.probe_stride == 0 || self.window == 0 {
                    return bad("probe_stride and window must be >= 1".into());
                }
            }
            Subcommand::Toy => {
                if self.eta >= TOY_ETA_THRESHOLD {
                    return bad(format!("toy eta must be < {TOY_ETA_THRESHOLD}, got {}", self.eta));
                }
                if self.init.len() != self.toy_kind.dim() {
                    return bad(format!(
                        "{} takes {} initial parameters, got {}",
                        self.toy_kind.name(),
                        self.toy_kind.dim(),
                        self.init.len()
                    ));
                }
            }
            Subcommand::Fourier => {
                if self.embedding.is_none() {
                    return bad("fourier needs --embedding FILE".into());
                }
            }
            Subcommand::Gradcheck => {
                if !(self.lambda > 0.0) {
                    return bad("gradcheck needs lambda > 0".into());
                }
            }
            Subcommand::TrainReal => {}
        }
        Ok(())
    }
}

/// `$GROKDYN_OUT/<subcommand>` when the variable is set, else
/// `runs/<subcommand>`.
pub fn default_out_dir(sub: Subcommand) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(sub.name()),
        _ => PathBuf::from("runs").join(sub.name()),
    }
}

/// Partial configuration; every field present overrides the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    pub subcommand: Option<Subcommand>,
    pub p: Option<usize>,
    pub d_h: Option<usize>,
    pub f_s: Option<f64>,
    pub n_train: Option<usize>,
    pub split_seed: Option<u64>,
    pub lambda: Option<f64>,
    pub eta: Option<f64>,
    pub beta: Option<f64>,
    pub steps: Option<usize>,
    pub window: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub log_every: Option<usize>,
    pub snapshot_stride: Option<usize>,
    pub probe_stride: Option<usize>,
    pub activation: Option<Activation>,
    pub reduction: Option<LossReduction>,
    pub toy_kind: Option<ToyKind>,
    pub init: Option<Vec<f64>>,
    pub embedding: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

macro_rules! overlay {
    ($cfg:ident, $patch:ident; $($field:ident),*) => {
        $( if let Some(v) = $patch.$field { $cfg.$field = v; } )*
    };
}

impl ConfigPatch {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    /// Applies the patch. A toy kind change without an explicit `init`
    /// resets the initial point to that kind's default.
    pub fn apply(self, mut cfg: RunConfig) -> RunConfig {
        if self.n_train.is_some() {
            cfg.n_train = self.n_train;
        } else if self.f_s.is_some() {
            cfg.n_train = None;
        }
        if self.embedding.is_some() {
            cfg.embedding = self.embedding;
        }
        if let Some(kind) = self.toy_kind {
            if self.init.is_none() && kind != cfg.toy_kind {
                cfg.init = default_toy_init(kind);
            }
        }
        overlay!(cfg, self; subcommand, p, d_h, f_s, split_seed, lambda, eta, beta, steps, window,
            seeds, log_every, snapshot_stride, probe_stride, activation, reduction, toy_kind, init,
            jobs, out_dir);
        cfg
    }
}

impl From<&RunConfig> for ConfigPatch {
    fn from(c: &RunConfig) -> Self {
        let c = c.clone();
        ConfigPatch {
            subcommand: Some(c.subcommand),
            p: Some(c.p),
            d_h: Some(c.d_h),
            f_s: Some(c.f_s),
            n_train: c.n_train,
            split_seed: Some(c.split_seed),
            lambda: Some(c.lambda),
            eta: Some(c.eta),
            beta: Some(c.beta),
            steps: Some(c.steps),
            window: Some(c.window),
            seeds: Some(c.seeds),
            log_every: Some(c.log_every),
            snapshot_stride: Some(c.snapshot_stride),
            probe_stride: Some(c.probe_stride),
            activation: Some(c.activation),
            reduction: Some(c.reduction),
            toy_kind: Some(c.toy_kind),
            init: Some(c.init),
            embedding: c.embedding,
            jobs: Some(c.jobs),
            out_dir: Some(c.out_dir),
        }
    }
}

pub fn default_toy_init(kind: ToyKind) -> Vec<f64> {
    match kind {
        ToyKind::Linear2 => vec![-1.0, 1.0],
        ToyKind::Linear3 => vec![-1.0, 1.0, 0.5],
        ToyKind::TwoLayerScalar => vec![1.5, -0.5],
        ToyKind::Leaky1 => vec![-1.0, -1.0],
        ToyKind::Parabola => vec![1.0, 0.2],
    }
}

/// Defaults for `sub`, then `file`, then `flags`; validated.
pub fn resolve(sub: Subcommand, file: Option<&Path>, flags: ConfigPatch) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::defaults(sub);
    if let Some(path) = file {
        let patch = ConfigPatch::from_file(path)?;
        if patch.subcommand.is_some_and(|s| s != sub) {
            return Err(CliError::Validation(format!(
                "{} is a config for another subcommand",
                path.display()
            )));
        }
        cfg = patch.apply(cfg);
    }
    cfg = flags.apply(cfg);
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for sub in [
            Subcommand::Toy,
            Subcommand::TrainReal,
            Subcommand::ProbeCosine,
            Subcommand::SimIsolated,
            Subcommand::Gradcheck,
        ] {
            RunConfig::defaults(sub).validate().unwrap();
        }
        assert!(RunConfig::defaults(Subcommand::Fourier).validate().is_err());
    }

    #[test]
    fn sim_defaults_are_overparameterized() {
        let c = RunConfig::defaults(Subcommand::SimIsolated);
        assert_eq!(c.train_rows(), 492);
        assert_eq!(c.seeds.len(), 5);
    }

    #[test]
    fn flags_override_patch() {
        let file = ConfigPatch {
            eta: Some(0.02),
            steps: Some(10),
            ..ConfigPatch::default()
        };
        let flags = ConfigPatch {
            eta: Some(0.03),
            ..ConfigPatch::default()
        };
        let cfg = flags.apply(file.apply(RunConfig::defaults(Subcommand::Toy)));
        assert_eq!((cfg.eta, cfg.steps), (0.03, 10));
    }

    #[test]
    fn echo_round_trip() {
        let cfg = RunConfig::defaults(Subcommand::ProbeCosine);
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let patch: ConfigPatch = serde_json::from_str(&json).unwrap();
        assert_eq!(patch.apply(RunConfig::defaults(Subcommand::Toy)), cfg);
    }

    #[test]
    fn fraction_flag_clears_count() {
        let flags = ConfigPatch {
            f_s: Some(0.5),
            ..ConfigPatch::default()
        };
        let cfg = flags.apply(RunConfig::defaults(Subcommand::TrainReal));
        assert_eq!(cfg.n_train, None);
        assert_eq!(cfg.train_rows(), 33);
    }

    #[test]
    fn toy_kind_switch_resets_init() {
        let flags = ConfigPatch {
            toy_kind: Some(ToyKind::Linear3),
            ..ConfigPatch::default()
        };
        let cfg = flags.apply(RunConfig::defaults(Subcommand::Toy));
        cfg.validate().unwrap();
        assert_eq!(cfg.init.len(), 3);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = RunConfig::defaults(Subcommand::SimIsolated);
        c.d_h = 100;
        assert!(c.validate().is_err());
        let mut c = RunConfig::defaults(Subcommand::Toy);
        c.eta = 0.1;
        assert!(c.validate().is_err());
        let mut c = RunConfig::defaults(Subcommand::TrainReal);
        c.beta = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<ConfigPatch>(r#"{"lr": 1}"#).is_err());
    }
}
