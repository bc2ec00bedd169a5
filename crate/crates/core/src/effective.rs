//! Isolated dynamics of the first layer of a two-layer network.
//!
//! The readout is assumed optimal for the current embedding `E`: the ridge
//! solution `(H^T H + lambda I)^{-1} H^T Y` for `lambda > 0`, or in the
//! overparameterized zero-loss limit the pseudoinverse solution
//! `H^+ Y = H^T (H H^T)^{-1} Y` with `H = sigma(X E)`. Substituting it gives
//! the cost
//!
//! ```text
//! R(E) = lambda ||E||_F^2 + lambda Tr(Y^T (H H^T)^{-1} Y)
//! ```
//!
//! whose descent direction (with the `2 lambda` factor absorbed into the
//! step size) is
//!
//! ```text
//! dE = X^T ((A Y Y^T A H) ⊙ sigma'(X E)) - E,    A = (H H^T)^{-1}.
//! ```

use alloc::vec::Vec;

use nalgebra::linalg::Cholesky;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::linalg::{frobenius_sq, SpdFactor, MAX_CONDITION};
use crate::math::sqrt;
use crate::metrics::{MetricsLog, MetricsRow};
use crate::net::{self, Activation, NetParams};
use crate::train::accuracy;
use crate::{Error, Matrix, Result};

fn check_rows(h: &Matrix, y: &Matrix, context: &'static str) -> Result<()> {
    if h.nrows() != y.nrows() {
        return Err(Error::Dimension {
            context,
            expected: (h.nrows(), y.ncols()),
            got: y.shape(),
        });
    }
    Ok(())
}

/// Ridge-optimal readout `argmin_W ||H W - Y||^2 + lambda ||W||^2`.
///
/// Solved in whichever of the two equivalent forms has the smaller system:
/// `(H^T H + lambda I)^{-1} H^T Y` or `H^T (H H^T + lambda I)^{-1} Y`.
pub fn ridge_solve(h: &Matrix, y: &Matrix, lambda: f64) -> Result<Matrix> {
    check_rows(h, y, "ridge_solve")?;
    if !(lambda > 0.0) {
        return Err(Error::UsePinv(lambda));
    }
    let (n, d_h) = h.shape();
    let singular = || Error::RankDeficient {
        condition: f64::INFINITY,
    };
    if n <= d_h {
        let mut g = h * h.transpose();
        for i in 0..n {
            g[(i, i)] += lambda;
        }
        let chol = Cholesky::new(g).ok_or_else(singular)?;
        Ok(h.transpose() * chol.solve(y))
    } else {
        let mut g = h.transpose() * h;
        for i in 0..d_h {
            g[(i, i)] += lambda;
        }
        let chol = Cholesky::new(g).ok_or_else(singular)?;
        Ok(chol.solve(&(h.transpose() * y)))
    }
}

/// Minimum-norm interpolating readout `H^T (H H^T)^{-1} Y` for `H` with
/// linearly independent rows (`n <= d_h`). Fails when `cond(H H^T)`
/// exceeds [`MAX_CONDITION`].
pub fn pinv_solve(h: &Matrix, y: &Matrix) -> Result<Matrix> {
    check_rows(h, y, "pinv_solve")?;
    let factor = gram_factor(h)?;
    Ok(h.transpose() * factor.solve(y))
}

fn gram_factor(h: &Matrix) -> Result<SpdFactor> {
    if h.nrows() > h.ncols() {
        return Err(Error::InvalidParameter {
            name: "H",
            reason: "pseudoinverse readout needs at least as many hidden units as rows",
        });
    }
    SpdFactor::new(h * h.transpose(), MAX_CONDITION)
}

/// Quantities shared by the cost, its gradient and one simulation step.
#[derive(Debug, Clone)]
pub struct Isolated {
    /// `X E`
    pub pre: Matrix,
    /// `H = sigma(X E)`
    pub hidden: Matrix,
    /// Cholesky factor of `H H^T`, standing in for `A = (H H^T)^{-1}`.
    pub factor: SpdFactor,
    /// `A Y`
    pub ay: Matrix,
}

impl Isolated {
    pub fn new(e: &Matrix, x: &Matrix, y: &Matrix, activation: Activation) -> Result<Self> {
        if x.ncols() != e.nrows() {
            return Err(Error::Dimension {
                context: "isolated dynamics input",
                expected: (x.nrows(), e.nrows()),
                got: x.shape(),
            });
        }
        let pre = x * e;
        let hidden = activation.apply_matrix(&pre);
        check_rows(&hidden, y, "isolated dynamics target")?;
        let factor = gram_factor(&hidden)?;
        let ay = factor.solve(y);
        Ok(Self {
            pre,
            hidden,
            factor,
            ay,
        })
    }

    /// Implied readout `W = H^T A Y`.
    pub fn readout(&self) -> Matrix {
        self.hidden.transpose() * &self.ay
    }

    /// `Tr(Y^T A Y)`, equal to `||H^+ Y||_F^2`.
    pub fn trace_term(&self, y: &Matrix) -> f64 {
        y.dot(&self.ay)
    }

    /// `X^T ((A Y Y^T A H) ⊙ sigma'(X E)) - E`
    pub fn descent_direction(&self, e: &Matrix, x: &Matrix, activation: Activation) -> Matrix {
        // A Y Y^T A H = (A Y) ((A Y)^T H)
        let inner = self.ay.transpose() * &self.hidden;
        let mut m = &self.ay * inner;
        m.zip_apply(&self.pre, |v, z| *v *= activation.derivative(z));
        x.transpose() * m - e
    }
}

/// Zero-loss isolated cost `R(E) = lambda ||E||^2 + lambda Tr(Y^T (H H^T)^{-1} Y)`.
pub fn cost_r(e: &Matrix, x: &Matrix, y: &Matrix, lambda: f64, activation: Activation) -> Result<f64> {
    let iso = Isolated::new(e, x, y, activation)?;
    Ok(lambda * (frobenius_sq(e) + iso.trace_term(y)))
}

/// Descent direction `dE = -grad R / (2 lambda)`.
pub fn grad_r(e: &Matrix, x: &Matrix, y: &Matrix, activation: Activation) -> Result<Matrix> {
    Ok(Isolated::new(e, x, y, activation)?.descent_direction(e, x, activation))
}

/// `min_W L_lambda(E, W)` evaluated through [`ridge_solve`].
pub fn ridge_cost(e: &Matrix, x: &Matrix, y: &Matrix, lambda: f64, activation: Activation) -> Result<f64> {
    let h = activation.apply_matrix(&(x * e));
    let w = ridge_solve(&h, y, lambda)?;
    Ok(frobenius_sq(&(&h * &w - y)) + lambda * (frobenius_sq(e) + frobenius_sq(&w)))
}

/// Elementwise relative error `|a - b| / max(|a|, |b|, floor)` maximized
/// over entries, with `floor = 1e-3 * max(max|a|, max|b|)` so that entries
/// that are negligible against the whole gradient do not dominate.
pub fn max_relative_error(a: &Matrix, b: &Matrix) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    let scale = a.amax().max(b.amax());
    if scale == 0.0 {
        return 0.0;
    }
    let floor = 1e-3 * scale;
    a.iter()
        .zip(b.iter())
        .map(|(&u, &v)| (u - v).abs() / u.abs().max(v.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Central finite-difference gradient of `f` with respect to every entry of
/// `e`.
pub fn finite_difference<F>(e: &Matrix, step: f64, mut f: F) -> Result<Matrix>
where
    F: FnMut(&Matrix) -> Result<f64>,
{
    let mut grad = Matrix::zeros(e.nrows(), e.ncols());
    let mut probe = e.clone();
    for idx in 0..e.len() {
        let orig = probe[idx];
        probe[idx] = orig + step;
        let plus = f(&probe)?;
        probe[idx] = orig - step;
        let minus = f(&probe)?;
        probe[idx] = orig;
        grad[idx] = (plus - minus) / (2.0 * step);
    }
    Ok(grad)
}

/// Compares `2 lambda (-dE)` against central differences of [`cost_r`] and
/// returns the [`max_relative_error`].
pub fn gradcheck(
    e: &Matrix,
    x: &Matrix,
    y: &Matrix,
    lambda: f64,
    activation: Activation,
    step: f64,
) -> Result<f64> {
    let analytic = grad_r(e, x, y, activation)? * (-2.0 * lambda);
    let numeric = finite_difference(e, step, |m| cost_r(m, x, y, lambda, activation))?;
    Ok(max_relative_error(&analytic, &numeric))
}

/// Envelope-identity check: the finite-difference gradient of
/// `min_W L_lambda(E, W)` against the partial derivative `dL_lambda/dE`
/// taken at the ridge minimizer. Returns the [`max_relative_error`].
pub fn theorem4_check(
    e: &Matrix,
    x: &Matrix,
    y: &Matrix,
    lambda: f64,
    activation: Activation,
    step: f64,
) -> Result<f64> {
    let h = activation.apply_matrix(&(x * e));
    let w = ridge_solve(&h, y, lambda)?;
    let params = NetParams::new(e.clone(), w, activation)?;
    let (partial, _) = net::layer_gradients(&params, x, y, lambda)?;
    let numeric = finite_difference(e, step, |m| ridge_cost(m, x, y, lambda, activation))?;
    Ok(max_relative_error(&partial, &numeric))
}

/// Smallest `|(X E)_ij|`: distance of the instance from the activation kink.
pub fn kink_margin(e: &Matrix, x: &Matrix) -> f64 {
    (x * e).iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

/// Pre-activations closer than this to zero are treated as touching the kink
/// when building derivative-check instances.
pub const KINK_MARGIN: f64 = 1e-4;

/// Train fraction used for derivative-check instances.
const CHECK_FRACTION: f64 = 0.7;

/// A small `(E, X, Y)` triple for derivative checks.
#[derive(Debug, Clone)]
pub struct CheckInstance {
    pub e: Matrix,
    pub x: Matrix,
    pub y: Matrix,
}

/// Builds a derivative-check instance over `Z_p`.
///
/// With the identity activation `H = X E` has rank at most `p`, so only the
/// `p` diagonal pairs `(i, i)` are used (their inputs `2 e_i` are
/// independent). Otherwise the training rows of a 0.7 split are used and `E`
/// is redrawn until every pre-activation clears [`KINK_MARGIN`].
pub fn check_instance(p: usize, d_h: usize, activation: Activation, seed: u64) -> Result<CheckInstance> {
    let data = Dataset::new(p)?;
    let (x, y) = if activation == Activation::Identity {
        let rows: Vec<usize> = (0..p).filter_map(|i| data.row_index(i, i)).collect();
        (data.x().select_rows(&rows), data.y().select_rows(&rows))
    } else {
        data.split(CHECK_FRACTION, seed)?.train_xy()
    };
    for attempt in 0..1000u64 {
        let e = init_embedding(p, d_h, seed.wrapping_mul(1000).wrapping_add(attempt));
        if activation == Activation::Identity || kink_margin(&e, &x) > KINK_MARGIN {
            return Ok(CheckInstance { e, x, y });
        }
    }
    Err(Error::InvalidParameter {
        name: "seed",
        reason: "no kink-free embedding found",
    })
}

/// `E ~ N(0, std^2)` entrywise with `std = p^{-1/2}`, drawn row-major.
pub fn init_embedding(p: usize, d_h: usize, seed: u64) -> Matrix {
    let std = 1.0 / sqrt(p as f64);
    let normal = Normal::new(0.0, std).expect("finite positive std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = Matrix::zeros(p, d_h);
    for r in 0..p {
        for c in 0..d_h {
            e[(r, c)] = normal.sample(&mut rng);
        }
    }
    e
}

/// Embedding, step counter and per-step cache of the simulation.
#[derive(Debug, Clone)]
pub struct EffectiveState {
    pub e: Matrix,
    pub step: usize,
    pub eta: f64,
    /// Cache for the current `E` (hidden activations and the factor of `H H^T`).
    pub cache: Isolated,
}

impl EffectiveState {
    pub fn new(e: Matrix, eta: f64, x: &Matrix, y: &Matrix, activation: Activation) -> Result<Self> {
        let cache = Isolated::new(&e, x, y, activation)?;
        Ok(Self {
            e,
            step: 0,
            eta,
            cache,
        })
    }

    /// `E <- E + eta dE`, then refreshes the cache.
    pub fn advance(&mut self, x: &Matrix, y: &Matrix, activation: Activation) -> Result<()> {
        let delta = self.cache.descent_direction(&self.e, x, activation);
        self.e += delta * self.eta;
        if self.e.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: self.step + 1,
            });
        }
        self.cache = Isolated::new(&self.e, x, y, activation)?;
        self.step += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub d_h: usize,
    pub eta: f64,
    pub steps: usize,
    pub activation: Activation,
    pub log_every: usize,
    /// Keep `E` every `snapshot_stride` steps (and at the end); 0 keeps only
    /// the initial and final embeddings.
    pub snapshot_stride: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "eta",
                reason: "step size must be positive and finite",
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

#[derive(Debug, Clone, Default)]
pub struct SimOutcome {
    pub log: MetricsLog,
    pub snapshots: Vec<(usize, Matrix)>,
    /// Largest `||H W - Y||_F / ||Y||_F` on the training rows over logged
    /// steps.
    pub max_interpolation_residual: f64,
    /// Largest condition-number estimate of `H H^T` seen.
    pub max_condition: f64,
}

#[derive(Debug, Clone)]
pub struct SimFailure {
    pub error: Error,
    /// Step at which the run stopped.
    pub step: usize,
    pub partial: SimOutcome,
}

/// Simulates `E <- E + eta dE` for `config.steps` steps from
/// `E ~ N(0, p^{-1/2})` drawn with `seed`, logging the implied network.
pub fn simulate(
    config: &SimConfig,
    data: &Dataset,
    seed: u64,
) -> core::result::Result<SimOutcome, SimFailure> {
    let mut outcome = SimOutcome::default();
    let fail = |error, step, partial| SimFailure {
        error,
        step,
        partial,
    };
    if let Err(e) = config.validate() {
        return Err(fail(e, 0, outcome));
    }
    let (x, y) = data.train_xy();
    let (x_test, y_test) = data.test_xy();
    if config.d_h <= x.nrows() {
        return Err(fail(
            Error::InvalidParameter {
                name: "d_h",
                reason: "isolated dynamics need more hidden units than training rows",
            },
            0,
            outcome,
        ));
    }
    let act = config.activation;
    let e0 = init_embedding(data.p(), config.d_h, seed);
    let mut state = match EffectiveState::new(e0, config.eta, &x, &y, act) {
        Ok(s) => s,
        Err(e) => return Err(fail(e, 0, outcome)),
    };
    let y_norm = y.norm();
    loop {
        let step = state.step;
        let cache = &state.cache;
        outcome.max_condition = outcome.max_condition.max(cache.factor.condition());
        if step % config.log_every == 0 || step == config.steps {
            let w = cache.readout();
            let train_out = &cache.hidden * &w;
            let test_out = act.apply_matrix(&(&x_test * &state.e)) * &w;
            let train_loss = frobenius_sq(&(&train_out - &y));
            let residual = sqrt(train_loss) / y_norm;
            outcome.max_interpolation_residual = outcome.max_interpolation_residual.max(residual);
            outcome.log.push(MetricsRow {
                step,
                train_loss,
                test_loss: frobenius_sq(&(&test_out - &y_test)),
                train_acc: accuracy(&train_out, &y),
                test_acc: accuracy(&test_out, &y_test),
                theta_norm: sqrt(frobenius_sq(&state.e) + frobenius_sq(&w)),
            });
        }
        let snap = if config.snapshot_stride == 0 {
            step == 0
        } else {
            step % config.snapshot_stride == 0
        };
        if snap || step == config.steps {
            outcome.snapshots.push((step, state.e.clone()));
        }
        if step == config.steps {
            return Ok(outcome);
        }
        if let Err(e) = state.advance(&x, &y, act) {
            return Err(fail(e, step + 1, outcome));
        }
    }
}
