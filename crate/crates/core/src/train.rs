//! Full-batch gradient descent (optionally with heavy-ball momentum) as an
//! explicit-Euler discretization of the gradient flow on `L_lambda`.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::metrics::{MetricsLog, MetricsRow};
use crate::net::{self, Activation, FlatVector, Layout, LossReduction, LossValue, NetParams};
use crate::{Error, Matrix, Result, Vector};

/// A differentiable training objective over a flat parameter vector.
pub trait Objective {
    fn dim(&self) -> usize;
    /// Data loss and regularized objective at `theta`.
    fn loss(&self, theta: &Vector) -> Result<LossValue>;
    /// `grad L_lambda(theta)`.
    fn gradient(&self, theta: &Vector) -> Result<Vector>;
}

/// `L_lambda` of a two-layer network on fixed data. With
/// [`LossReduction::Mean`] the data term is divided by `k * d_out` while the
/// weight-decay term is left unscaled.
#[derive(Debug, Clone, Copy)]
pub struct NetObjective<'a> {
    pub x: &'a Matrix,
    pub y: &'a Matrix,
    pub lambda: f64,
    pub activation: Activation,
    pub layout: &'a Layout,
    pub reduction: LossReduction,
}

impl NetObjective<'_> {
    fn params(&self, theta: &Vector) -> Result<NetParams> {
        NetParams::from_flat(
            &FlatVector {
                values: theta.clone(),
                layout: self.layout.clone(),
            },
            self.activation,
        )
    }
}

impl Objective for NetObjective<'_> {
    fn dim(&self) -> usize {
        self.layout.len()
    }

    fn loss(&self, theta: &Vector) -> Result<LossValue> {
        let params = self.params(theta)?;
        let scale = self.reduction.scale(self.y.nrows(), self.y.ncols());
        let data = scale * net::loss(&params, self.x, self.y, 0.0)?.data;
        Ok(LossValue {
            data,
            total: data + self.lambda * params.norm_sq(),
        })
    }

    fn gradient(&self, theta: &Vector) -> Result<Vector> {
        let params = self.params(theta)?;
        let scale = self.reduction.scale(self.y.nrows(), self.y.ncols());
        if scale == 1.0 {
            return Ok(net::grad_loss(&params, self.x, self.y, self.lambda)?.values);
        }
        let mut grad = net::grad_loss(&params, self.x, self.y, 0.0)?.values;
        grad *= scale;
        grad.axpy(2.0 * self.lambda, theta, 1.0);
        Ok(grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSize {
    /// Learning rate `eta > 0`.
    pub eta: f64,
    /// Momentum `0 <= beta < 1`.
    pub momentum: f64,
}

impl StepSize {
    pub fn plain(eta: f64) -> Self {
        Self { eta, momentum: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "eta",
                reason: "learning rate must be positive and finite",
            });
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: "momentum must lie in [0, 1)",
            });
        }
        Ok(())
    }
}

/// Parameters, velocity and a ring buffer of the last `window + 1` snapshots.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub step: usize,
    pub params: FlatVector,
    pub velocity: Vector,
    history: VecDeque<(usize, Vector)>,
    history_cap: usize,
}

impl TrainState {
    /// Starts at step 0 and records the initial snapshot. `window` is the
    /// update-averaging window `c`; the buffer keeps `c + 1` snapshots.
    pub fn new(params: FlatVector, window: usize) -> Self {
        let n = params.values.len();
        let mut history = VecDeque::with_capacity(window + 1);
        history.push_back((0, params.values.clone()));
        Self {
            step: 0,
            velocity: Vector::zeros(n),
            params,
            history,
            history_cap: window + 1,
        }
    }

    /// Snapshots currently held, oldest first.
    pub fn history(&self) -> impl Iterator<Item = (usize, &Vector)> {
        self.history.iter().map(|(s, v)| (*s, v))
    }

    pub fn snapshot(&self, step: usize) -> Option<&Vector> {
        self.history.iter().find(|(s, _)| *s == step).map(|(_, v)| v)
    }

    /// One step: `v <- beta v + grad`, `theta <- theta - eta v`.
    pub fn gd_step<O: Objective + ?Sized>(&mut self, objective: &O, step: StepSize) -> Result<()> {
        let grad = objective.gradient(&self.params.values)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { step: self.step });
        }
        if step.momentum != 0.0 {
            self.velocity *= step.momentum;
            self.velocity += &grad;
        } else {
            self.velocity = grad;
        }
        self.params.values.axpy(-step.eta, &self.velocity, 1.0);
        if self.params.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: self.step });
        }
        self.step += 1;
        if self.history.len() == self.history_cap {
            self.history.pop_front();
        }
        self.history.push_back((self.step, self.params.values.clone()));
        Ok(())
    }
}

/// Fraction of rows whose argmax (ties: lowest index) matches the target's.
/// An empty batch scores 0.
pub fn accuracy(pred: &Matrix, y: &Matrix) -> f64 {
    debug_assert_eq!(pred.shape(), y.shape());
    let k = pred.nrows();
    if k == 0 {
        return 0.0;
    }
    let hits = (0..k)
        .filter(|&i| argmax(pred.row(i).iter()) == argmax(y.row(i).iter()))
        .count();
    hits as f64 / k as f64
}

fn argmax<'a>(values: impl Iterator<Item = &'a f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &v) in values.enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

pub fn accuracy_of(params: &NetParams, x: &Matrix, y: &Matrix) -> Result<f64> {
    Ok(accuracy(&net::forward(params, x)?.output, y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub reduction: LossReduction,
    pub step: StepSize,
    /// Number of gradient steps `T`.
    pub steps: usize,
    /// Log a metrics row every `log_every` steps (and at the last step).
    pub log_every: usize,
    /// Keep a full parameter snapshot every `snapshot_stride` steps; 0 keeps none.
    pub snapshot_stride: usize,
    /// Update-averaging window `c` carried by the state's history.
    pub window: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.step.validate()?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: "weight decay must be finite and >= 0",
            });
        }
        if self.log_every == 0 {
            return Err(Error::InvalidParameter {
                name: "log_every",
                reason: "must be >= 1",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: MetricsLog,
    pub snapshots: Vec<(usize, FlatVector)>,
    pub final_params: NetParams,
}

/// A failed run: the error plus everything recorded before it.
#[derive(Debug, Clone)]
pub struct TrainFailure {
    pub error: Error,
    pub partial: TrainOutcome,
}

fn metrics_row(
    step: usize,
    params: &NetParams,
    reduction: LossReduction,
    train: (&Matrix, &Matrix),
    test: (&Matrix, &Matrix),
) -> Result<MetricsRow> {
    let out_train = net::forward(params, train.0)?.output;
    let out_test = net::forward(params, test.0)?.output;
    let scaled = |out: &Matrix, y: &Matrix| {
        reduction.scale(y.nrows(), y.ncols()) * crate::linalg::frobenius_sq(&(out - y))
    };
    Ok(MetricsRow {
        step,
        train_loss: scaled(&out_train, train.1),
        test_loss: scaled(&out_test, test.1),
        train_acc: accuracy(&out_train, train.1),
        test_acc: accuracy(&out_test, test.1),
        theta_norm: crate::math::sqrt(params.norm_sq()),
    })
}

/// Trains for `config.steps` steps on the dataset's training split.
pub fn train(
    config: &TrainConfig,
    data: &Dataset,
    init: NetParams,
) -> core::result::Result<TrainOutcome, TrainFailure> {
    train_with(config, data, init, |_| Ok(()))
}

/// [`train`] with an observer called after every step (and once at step 0).
/// Observer errors abort the run like numerical failures.
pub fn train_with<F>(
    config: &TrainConfig,
    data: &Dataset,
    init: NetParams,
    mut observe: F,
) -> core::result::Result<TrainOutcome, TrainFailure>
where
    F: FnMut(&TrainState) -> Result<()>,
{
    let activation = init.activation;
    let mut outcome = TrainOutcome {
        log: MetricsLog::default(),
        snapshots: Vec::new(),
        final_params: init.clone(),
    };
    if let Err(error) = config.validate() {
        return Err(TrainFailure {
            error,
            partial: outcome,
        });
    }
    let (x_train, y_train) = data.train_xy();
    let (x_test, y_test) = data.test_xy();
    let layout = init.layout();
    let objective = NetObjective {
        x: &x_train,
        y: &y_train,
        lambda: config.lambda,
        activation,
        layout: &layout,
        reduction: config.reduction,
    };
    let mut state = TrainState::new(init.flatten(), config.window);

    let mut run = |state: &mut TrainState, outcome: &mut TrainOutcome| -> Result<()> {
        loop {
            let step = state.step;
            let params = NetParams::from_flat(&state.params, activation)?;
            if step % config.log_every == 0 || step == config.steps {
                outcome.log.push(metrics_row(
                    step,
                    &params,
                    config.reduction,
                    (&x_train, &y_train),
                    (&x_test, &y_test),
                )?);
            }
            if config.snapshot_stride > 0
                && (step % config.snapshot_stride == 0 || step == config.steps)
            {
                outcome.snapshots.push((step, state.params.clone()));
            }
            outcome.final_params = params;
            observe(state)?;
            if step == config.steps {
                return Ok(());
            }
            state.gd_step(&objective, config.step)?;
        }
    };
    match run(&mut state, &mut outcome) {
        Ok(()) => Ok(outcome),
        Err(error) => Err(TrainFailure {
            error,
            partial: outcome,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `y = w1 x1 + w2 x2` on one sample, `L = sum (y_hat - y)^2 + lambda ||w||^2`.
    struct Linear {
        x: [f64; 2],
        y: f64,
        lambda: f64,
    }

    impl Objective for Linear {
        fn dim(&self) -> usize {
            2
        }
        fn loss(&self, t: &Vector) -> Result<LossValue> {
            let r = t[0] * self.x[0] + t[1] * self.x[1] - self.y;
            Ok(LossValue {
                data: r * r,
                total: r * r + self.lambda * t.norm_squared(),
            })
        }
        fn gradient(&self, t: &Vector) -> Result<Vector> {
            let r = t[0] * self.x[0] + t[1] * self.x[1] - self.y;
            Ok(Vector::from_vec(alloc::vec![
                2.0 * r * self.x[0] + 2.0 * self.lambda * t[0],
                2.0 * r * self.x[1] + 2.0 * self.lambda * t[1],
            ]))
        }
    }

    fn flat(v: &[f64]) -> FlatVector {
        FlatVector {
            values: Vector::from_row_slice(v),
            layout: Layout::from_shapes(&[("w", 1, v.len())]),
        }
    }

    #[test]
    fn hand_evaluated_toy_step() {
        let obj = Linear {
            x: [1.0, 1.0],
            y: 2.0,
            lambda: 0.01,
        };
        let mut s = TrainState::new(flat(&[-1.0, 1.0]), 10);
        s.gd_step(&obj, StepSize::plain(0.01)).unwrap();
        assert!((s.params.values[0] + 0.9598).abs() < 1e-12);
        assert!((s.params.values[1] - 1.0398).abs() < 1e-12);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn exact_fit_is_stationary() {
        let obj = Linear {
            x: [1.0, 1.0],
            y: 2.0,
            lambda: 0.0,
        };
        let mut s = TrainState::new(flat(&[0.5, 1.5]), 10);
        s.gd_step(&obj, StepSize::plain(0.1)).unwrap();
        assert_eq!(s.params.values.as_slice(), &[0.5, 1.5]);
    }

    #[test]
    fn momentum_decay_step() {
        let obj = Linear {
            x: [1.0, 1.0],
            y: 2.0,
            lambda: 0.0,
        };
        let mut s = TrainState::new(flat(&[0.5, 1.5]), 10);
        s.velocity = Vector::from_row_slice(&[1.0, -2.0]);
        s.gd_step(&obj, StepSize { eta: 0.1, momentum: 0.9 }).unwrap();
        assert!((s.params.values[0] - (0.5 - 0.1 * 0.9)).abs() < 1e-15);
        assert!((s.params.values[1] - (1.5 + 0.1 * 0.9 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn divergence_reports_step() {
        let obj = Linear {
            x: [1.0, 1.0],
            y: 2.0,
            lambda: 0.0,
        };
        let mut s = TrainState::new(flat(&[0.0, 0.0]), 2);
        let err = (0..10_000)
            .map(|_| s.gd_step(&obj, StepSize::plain(10.0)))
            .find_map(|r| r.err())
            .unwrap();
        assert!(matches!(err, Error::Divergence { step } if step > 0));
    }

    #[test]
    fn history_is_bounded_and_ordered() {
        let obj = Linear {
            x: [1.0, 1.0],
            y: 2.0,
            lambda: 0.0,
        };
        let mut s = TrainState::new(flat(&[0.0, 0.0]), 3);
        for _ in 0..10 {
            s.gd_step(&obj, StepSize::plain(0.01)).unwrap();
        }
        let steps: Vec<usize> = s.history().map(|(k, _)| k).collect();
        assert_eq!(steps, [7, 8, 9, 10]);
    }

    #[test]
    fn accuracy_conventions() {
        let y = Matrix::from_row_slice(2, 3, &[1., 0., 0., 0., 0., 1.]);
        assert_eq!(accuracy(&y, &y), 1.0);
        let tie = Matrix::from_row_slice(2, 3, &[0.5, 0.5, 0., 0., 0., 0.]);
        // ties resolve to index 0
        assert_eq!(accuracy(&tie, &y), 0.5);
        assert_eq!(accuracy(&Matrix::zeros(0, 3), &Matrix::zeros(0, 3)), 0.0);
    }

    #[test]
    fn invalid_step_sizes() {
        assert!(StepSize::plain(0.0).validate().is_err());
        assert!(StepSize { eta: 0.1, momentum: 1.0 }.validate().is_err());
    }
}
