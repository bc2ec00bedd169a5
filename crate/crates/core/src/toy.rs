//! Two- and three-parameter models whose zero-loss sets can be drawn: the
//! addition toys, a scalar two-layer linear net, a single leaky-ReLU unit and
//! the parabola landscape `L(x, y) = (y - x^2)^2`.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::net::{Activation, FlatVector, Layout, LossValue};
use crate::train::{Objective, StepSize, TrainState};
use crate::{Error, Result, Vector};

/// Slope of the leaky ReLU on negative inputs.
pub const LEAKY_SLOPE: f64 = 0.1;
/// Step sizes at or above this are rejected for toy runs (monotone descent
/// is only checked below it).
pub const TOY_ETA_THRESHOLD: f64 = 0.05;
pub const TEST_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ToyKind {
    /// `y = w1 x1 + w2 x2`
    Linear2,
    /// `y = w1 x1 + w2 x2 + w3 x3`
    Linear3,
    /// `y = w2 w1 x`
    TwoLayerScalar,
    /// `y = leaky_relu(w1 x1 + w2 x2)`
    Leaky1,
    /// `L = (w2 - w1^2)^2`, no data.
    Parabola,
}

impl ToyKind {
    pub const ALL: [ToyKind; 5] = [
        ToyKind::Linear2,
        ToyKind::Linear3,
        ToyKind::TwoLayerScalar,
        ToyKind::Leaky1,
        ToyKind::Parabola,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ToyKind::Linear2 => "linear2",
            ToyKind::Linear3 => "linear3",
            ToyKind::TwoLayerScalar => "two_layer_scalar",
            ToyKind::Leaky1 => "leaky1",
            ToyKind::Parabola => "parabola",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Number of parameters.
    pub fn dim(self) -> usize {
        match self {
            ToyKind::Linear3 => 3,
            _ => 2,
        }
    }

    /// Length of one input.
    pub fn input_dim(self) -> usize {
        match self {
            ToyKind::Linear2 | ToyKind::Leaky1 => 2,
            ToyKind::Linear3 => 3,
            ToyKind::TwoLayerScalar => 1,
            ToyKind::Parabola => 0,
        }
    }

    /// Kinds whose target is the sum of the inputs.
    pub fn is_addition(self) -> bool {
        matches!(self, ToyKind::Linear2 | ToyKind::Linear3 | ToyKind::Leaky1)
    }

    fn default_samples(self) -> Vec<ToySample> {
        match self {
            ToyKind::Linear2 | ToyKind::Leaky1 => vec![ToySample::new(vec![1.0, 1.0], 2.0)],
            ToyKind::Linear3 => vec![ToySample::new(vec![1.0, 1.0, 1.0], 3.0)],
            ToyKind::TwoLayerScalar => vec![ToySample::new(vec![1.0], 1.0)],
            ToyKind::Parabola => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl ToySample {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub kind: ToyKind,
    pub samples: Vec<ToySample>,
    pub lambda: f64,
}

impl ToyModel {
    /// Model with the kind's default training set: `(1,1) -> 2` for the
    /// two-input kinds, `(1,1,1) -> 3`, and `1 -> 1` for the scalar net.
    pub fn new(kind: ToyKind, lambda: f64) -> Self {
        Self {
            kind,
            samples: kind.default_samples(),
            lambda,
        }
    }

    pub fn with_samples(kind: ToyKind, samples: Vec<ToySample>, lambda: f64) -> Result<Self> {
        let n = kind.input_dim();
        if let Some(s) = samples.iter().find(|s| s.x.len() != n) {
            return Err(Error::Dimension {
                context: "toy sample",
                expected: (1, n),
                got: (1, s.x.len()),
            });
        }
        Ok(Self {
            kind,
            samples,
            lambda,
        })
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.kind.dim() {
            return Err(Error::Dimension {
                context: "toy parameters",
                expected: (self.kind.dim(), 1),
                got: (theta.len(), 1),
            });
        }
        Ok(())
    }

    /// Prediction and its gradient with respect to the parameters.
    fn predict_grad(&self, theta: &[f64], x: &[f64]) -> (f64, [f64; 3]) {
        let dot = |t: &[f64]| t.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let mut g = [0.0; 3];
        match self.kind {
            ToyKind::Linear2 | ToyKind::Linear3 => {
                g[..x.len()].copy_from_slice(x);
                (dot(theta), g)
            }
            ToyKind::TwoLayerScalar => {
                g[0] = theta[1] * x[0];
                g[1] = theta[0] * x[0];
                (theta[1] * theta[0] * x[0], g)
            }
            ToyKind::Leaky1 => {
                let act = Activation::LeakyRelu { slope: LEAKY_SLOPE };
                let z = dot(theta);
                let d = act.derivative(z);
                g[0] = d * x[0];
                g[1] = d * x[1];
                (act.apply(z), g)
            }
            ToyKind::Parabola => (0.0, g),
        }
    }

    pub fn predict(&self, theta: &[f64], x: &[f64]) -> f64 {
        self.predict_grad(theta, x).0
    }

    /// Closed-form loss (summed squared error, or the parabola landscape)
    /// and gradient of `L_lambda`.
    pub fn loss_grad(&self, theta: &[f64]) -> Result<(LossValue, Vec<f64>)> {
        self.check(theta)?;
        let d = theta.len();
        let mut grad = vec![0.0; d];
        let data = if self.kind == ToyKind::Parabola {
            let r = theta[1] - theta[0] * theta[0];
            grad[0] = -4.0 * theta[0] * r;
            grad[1] = 2.0 * r;
            r * r
        } else {
            let mut total = 0.0;
            for s in &self.samples {
                let (pred, g) = self.predict_grad(theta, &s.x);
                let r = pred - s.y;
                total += r * r;
                for (acc, gi) in grad.iter_mut().zip(g) {
                    *acc += 2.0 * r * gi;
                }
            }
            total
        };
        let norm_sq: f64 = theta.iter().map(|v| v * v).sum();
        for (g, t) in grad.iter_mut().zip(theta) {
            *g += 2.0 * self.lambda * t;
        }
        Ok((
            LossValue {
                data,
                total: data + self.lambda * norm_sq,
            },
            grad,
        ))
    }

    /// Mean squared error of the addition task on `inputs`; `None` for kinds
    /// that do not model addition.
    pub fn addition_mse(&self, theta: &[f64], inputs: &[Vec<f64>]) -> Option<f64> {
        if !self.kind.is_addition() || inputs.is_empty() {
            return None;
        }
        let sse: f64 = inputs
            .iter()
            .map(|x| {
                let r = self.predict(theta, x) - x.iter().sum::<f64>();
                r * r
            })
            .sum();
        Some(sse / inputs.len() as f64)
    }

    fn layout(&self) -> Layout {
        Layout::from_shapes(&[("w", 1, self.kind.dim())])
    }
}

impl Objective for ToyModel {
    fn dim(&self) -> usize {
        self.kind.dim()
    }

    fn loss(&self, theta: &Vector) -> Result<LossValue> {
        Ok(self.loss_grad(theta.as_slice())?.0)
    }

    fn gradient(&self, theta: &Vector) -> Result<Vector> {
        Ok(Vector::from_vec(self.loss_grad(theta.as_slice())?.1))
    }
}

/// `count` inputs with standard normal entries.
pub fn gaussian_inputs(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyRunConfig {
    pub eta: f64,
    pub steps: usize,
    pub test_seed: u64,
}

impl Default for ToyRunConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            steps: 5000,
            test_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyPoint {
    pub step: usize,
    pub theta: Vec<f64>,
    /// Data loss `L`.
    pub train_loss: f64,
    /// `L_lambda`.
    pub objective: f64,
    pub test_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ToyTrajectory {
    pub points: Vec<ToyPoint>,
}

impl ToyTrajectory {
    pub fn last(&self) -> Option<&ToyPoint> {
        self.points.last()
    }

    /// First step with data loss below `threshold`.
    pub fn first_below(&self, threshold: f64) -> Option<usize> {
        self.points.iter().find(|p| p.train_loss < threshold).map(|p| p.step)
    }

    /// First step from which the parameters stay within `radius` of `target`.
    pub fn settles_at(&self, target: &[f64], radius: f64) -> Option<usize> {
        let far = |p: &ToyPoint| distance(&p.theta, target) >= radius;
        match self.points.iter().rposition(far) {
            None => self.points.first().map(|p| p.step),
            Some(i) => self.points.get(i + 1).map(|p| p.step),
        }
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    crate::math::sqrt(a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum())
}

/// Plain gradient descent on `L_lambda` from `init`, recording every step.
pub fn run_toy(model: &ToyModel, init: &[f64], config: &ToyRunConfig) -> Result<ToyTrajectory> {
    model.check(init)?;
    let step = StepSize::plain(config.eta);
    step.validate()?;
    if config.eta >= TOY_ETA_THRESHOLD {
        return Err(Error::InvalidParameter {
            name: "eta",
            reason: "toy step size must stay below the monotone-descent threshold 0.05",
        });
    }
    let test = gaussian_inputs(model.kind.input_dim(), TEST_SAMPLES, config.test_seed);
    let mut state = TrainState::new(
        FlatVector {
            values: Vector::from_column_slice(init),
            layout: model.layout(),
        },
        0,
    );
    let mut traj = ToyTrajectory {
        points: Vec::with_capacity(config.steps + 1),
    };
    loop {
        let theta = state.params.values.as_slice();
        let value = model.loss(&state.params.values)?;
        traj.points.push(ToyPoint {
            step: state.step,
            theta: theta.to_vec(),
            train_loss: value.data,
            objective: value.total,
            test_loss: model.addition_mse(theta, &test),
        });
        if state.step == config.steps {
            return Ok(traj);
        }
        state.gd_step(model, step)?;
    }
}
