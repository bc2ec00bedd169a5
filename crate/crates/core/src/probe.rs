//! Zero-loss manifold probes.
//!
//! For a parameter vector `theta_n` on a training trajectory the probe
//! estimates its projection `theta'` onto the zero-loss set with a short run
//! of momentum gradient descent (no weight decay), takes the output Jacobian
//! `J` at `theta'` and forms the norm-minimizing tangent direction
//! `g = (I - J^+ J)(-theta_n)`. Its cosine with the averaged update
//! `theta_n - theta_{max(0, n - c)}` measures how closely training follows
//! constrained norm minimization.
//!
//! The parabola probe checks the gradient-orthogonality scaling on the
//! landscape `L(x, y) = (y - x^2)^2`, where projections are exact.

use alloc::vec::Vec;

use crate::linalg::{self, SpdFactor};
use crate::math::{cbrt, cos, ln, sqrt};
use crate::net::{self, Activation, FlatVector, Layout, LossReduction, NetParams};
use crate::train::{NetObjective, Objective, StepSize, TrainState};
use crate::{Error, Matrix, Result, Vector};

pub use crate::linalg::pseudo_inverse;

/// Loss below which the projection estimate is accepted as on the zero-loss
/// set.
pub const PROJECTION_TOLERANCE: f64 = 1e-6;

/// Condition cap for the Gram-matrix route of [`RowSpaceProjector`]; above it
/// the SVD pseudoinverse is used.
const GRAM_MAX_CONDITION: f64 = 1e10;

/// Gradient descent used to estimate the projection onto the zero-loss set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    pub steps: usize,
    pub step: StepSize,
    pub reduction: LossReduction,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            step: StepSize {
                eta: 1.0,
                momentum: 0.9,
            },
            reduction: LossReduction::Sum,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub params: NetParams,
    /// Data loss `L(theta')` under the configured reduction.
    pub loss: f64,
}

/// Runs `config.steps` of momentum GD on the unregularized loss from
/// `params` and returns the endpoint.
pub fn estimate_projection(
    params: &NetParams,
    x: &Matrix,
    y: &Matrix,
    config: &ProjectionConfig,
) -> Result<Projection> {
    config.step.validate()?;
    let layout = params.layout();
    let objective = NetObjective {
        x,
        y,
        lambda: 0.0,
        activation: params.activation,
        layout: &layout,
        reduction: config.reduction,
    };
    let start = objective.loss(&params.flatten().values)?.data;
    if !start.is_finite() {
        return Err(Error::Divergence { step: 0 });
    }
    let mut state = TrainState::new(params.flatten(), 0);
    for _ in 0..config.steps {
        state.gd_step(&objective, config.step)?;
    }
    let loss = objective.loss(&state.params.values)?.data;
    if !loss.is_finite() {
        return Err(Error::Divergence { step: config.steps });
    }
    Ok(Projection {
        params: NetParams::from_flat(&state.params, params.activation)?,
        loss,
    })
}

/// Orthogonal projector onto the row space of `J`, `v -> J^+ J v`.
///
/// Uses `J^T (J J^T)^{-1} J` through a guarded Cholesky factor when the Gram
/// matrix is well conditioned and falls back to the SVD pseudoinverse
/// otherwise.
#[derive(Debug, Clone)]
pub struct RowSpaceProjector {
    jac: Matrix,
    route: Route,
}

#[derive(Debug, Clone)]
enum Route {
    Gram(SpdFactor),
    Pinv(Matrix),
}

impl RowSpaceProjector {
    pub fn new(jac: Matrix) -> Result<Self> {
        let gram = &jac * jac.transpose();
        Self::with_gram(jac, gram)
    }

    /// Same as [`new`](Self::new) with a precomputed `J J^T`.
    pub fn with_gram(jac: Matrix, gram: Matrix) -> Result<Self> {
        let route = match SpdFactor::new(gram, GRAM_MAX_CONDITION) {
            Ok(f) => Route::Gram(f),
            Err(Error::RankDeficient { .. }) => {
                Route::Pinv(pseudo_inverse(&jac, linalg::DEFAULT_RCOND)?)
            }
            Err(e) => return Err(e),
        };
        Ok(Self { jac, route })
    }

    pub fn uses_pseudo_inverse(&self) -> bool {
        matches!(self.route, Route::Pinv(_))
    }

    /// `J^+ J v`
    pub fn project(&self, v: &Vector) -> Vector {
        let jv = &self.jac * v;
        match &self.route {
            Route::Gram(f) => self.jac.tr_mul(&f.solve_vec(&jv)),
            Route::Pinv(p) => p * jv,
        }
    }

    /// `(I - J^+ J) v`
    pub fn project_null(&self, v: &Vector) -> Vector {
        v - self.project(v)
    }

    pub fn jacobian(&self) -> &Matrix {
        &self.jac
    }
}

/// `(I - J^+ J)(-theta)`: the projection of `-theta` onto the null space of
/// `J`, i.e. the steepest norm-decreasing direction tangent to the level set.
pub fn norm_min_direction(theta: &Vector, jac: &Matrix) -> Result<Vector> {
    if jac.ncols() != theta.len() {
        return Err(Error::Dimension {
            context: "norm_min_direction",
            expected: (jac.nrows(), theta.len()),
            got: jac.shape(),
        });
    }
    Ok(RowSpaceProjector::new(jac.clone())?.project_null(&-theta))
}

/// `theta_n - theta_{max(0, n - c)}` from the snapshots held by `state`.
pub fn update_direction(state: &TrainState, window: usize) -> Result<Vector> {
    let n = state.step;
    let current = state.snapshot(n).ok_or(Error::InsufficientHistory)?;
    let earlier = state
        .snapshot(n.saturating_sub(window))
        .ok_or(Error::InsufficientHistory)?;
    Ok(current - earlier)
}

/// Same as [`update_direction`] over an explicit `(step, theta)` list.
pub fn update_direction_from(
    snapshots: &[(usize, Vector)],
    n: usize,
    window: usize,
) -> Result<Vector> {
    let find = |s: usize| {
        snapshots
            .iter()
            .find(|(k, _)| *k == s)
            .map(|(_, v)| v)
            .ok_or(Error::InsufficientHistory)
    };
    Ok(find(n)? - find(n.saturating_sub(window))?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProbeStatus {
    Ok,
    /// Projection loss stayed at or above [`PROJECTION_TOLERANCE`]; the
    /// record is kept but should not be read as lying on the zero-loss set.
    ProjectionAboveTolerance,
    /// The probe could not be computed at this step.
    Failed(Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub step: usize,
    pub cos_sim: f64,
    pub proj_loss: f64,
    pub update_norm: f64,
    pub gtilde_norm: f64,
    pub status: ProbeStatus,
}

impl ProbeRecord {
    pub fn is_valid(&self) -> bool {
        !matches!(self.status, ProbeStatus::Failed(_))
    }
}

/// Inputs shared by every probe of one run.
#[derive(Debug, Clone, Copy)]
pub struct ProbeContext<'a> {
    pub x: &'a Matrix,
    pub y: &'a Matrix,
    pub activation: Activation,
    pub layout: &'a Layout,
    pub window: usize,
    pub projection: ProjectionConfig,
}

impl ProbeContext<'_> {
    /// Probe at step `n` given `theta_n` and `theta_{max(0, n - c)}`.
    pub fn probe(&self, step: usize, theta: &Vector, earlier: &Vector) -> ProbeRecord {
        let update = theta - earlier;
        match self.try_probe(theta) {
            Ok((gtilde, proj_loss)) => ProbeRecord {
                step,
                cos_sim: linalg::cosine(update.as_slice(), gtilde.as_slice()),
                proj_loss,
                update_norm: update.norm(),
                gtilde_norm: gtilde.norm(),
                status: if proj_loss < PROJECTION_TOLERANCE {
                    ProbeStatus::Ok
                } else {
                    ProbeStatus::ProjectionAboveTolerance
                },
            },
            Err(e) => ProbeRecord {
                step,
                cos_sim: f64::NAN,
                proj_loss: f64::NAN,
                update_norm: update.norm(),
                gtilde_norm: f64::NAN,
                status: ProbeStatus::Failed(e),
            },
        }
    }

    fn try_probe(&self, theta: &Vector) -> Result<(Vector, f64)> {
        let params = NetParams::from_flat(
            &FlatVector {
                values: theta.clone(),
                layout: self.layout.clone(),
            },
            self.activation,
        )?;
        let proj = estimate_projection(&params, self.x, self.y, &self.projection)?;
        let jac = net::jacobian(&proj.params, self.x)?;
        let gram = net::jacobian_gram(&proj.params, self.x)?;
        let projector = RowSpaceProjector::with_gram(jac, gram)?;
        Ok((projector.project_null(&-theta), proj.loss))
    }

    /// Probe the current step of a live training state.
    pub fn probe_state(&self, state: &TrainState) -> ProbeRecord {
        let n = state.step;
        match (state.snapshot(n), state.snapshot(n.saturating_sub(self.window))) {
            (Some(cur), Some(prev)) => self.probe(n, cur, prev),
            _ => ProbeRecord {
                step: n,
                cos_sim: f64::NAN,
                proj_loss: f64::NAN,
                update_norm: f64::NAN,
                gtilde_norm: f64::NAN,
                status: ProbeStatus::Failed(Error::InsufficientHistory),
            },
        }
    }
}

/// Probes a stored trajectory at every step divisible by `stride` for which
/// both `theta_n` and `theta_{max(0, n - c)}` are present.
pub fn cosine_series(
    snapshots: &[(usize, Vector)],
    ctx: &ProbeContext<'_>,
    stride: usize,
) -> Vec<ProbeRecord> {
    let stride = stride.max(1);
    snapshots
        .iter()
        .filter(|(n, _)| n % stride == 0)
        .map(|(n, theta)| match update_direction_from(snapshots, *n, ctx.window) {
            Ok(update) => ctx.probe(*n, theta, &(theta - update)),
            Err(e) => ProbeRecord {
                step: *n,
                cos_sim: f64::NAN,
                proj_loss: f64::NAN,
                update_norm: f64::NAN,
                gtilde_norm: f64::NAN,
                status: ProbeStatus::Failed(e),
            },
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Parabola landscape L(x, y) = (y - x^2)^2

pub fn parabola_loss(p: [f64; 2]) -> f64 {
    let r = p[1] - p[0] * p[0];
    r * r
}

pub fn parabola_gradient(p: [f64; 2]) -> [f64; 2] {
    let r = p[1] - p[0] * p[0];
    [-4.0 * p[0] * r, 2.0 * r]
}

/// Closest point on `y = x^2` to `p`, from the real roots of
/// `2 t^3 + (1 - 2 y0) t - x0 = 0`.
pub fn parabola_projection(p: [f64; 2]) -> [f64; 2] {
    let (x0, y0) = (p[0], p[1]);
    // depressed cubic t^3 + a t + b = 0
    let a = (1.0 - 2.0 * y0) / 2.0;
    let b = -x0 / 2.0;
    let mut roots: Vec<f64> = Vec::with_capacity(3);
    let disc = (b / 2.0) * (b / 2.0) + (a / 3.0) * (a / 3.0) * (a / 3.0);
    if disc > 0.0 {
        let s = sqrt(disc);
        roots.push(cbrt(-b / 2.0 + s) + cbrt(-b / 2.0 - s));
    } else if a == 0.0 {
        roots.push(0.0);
    } else {
        let r = 2.0 * sqrt(-a / 3.0);
        let arg = ((3.0 * b) / (a * r)).clamp(-1.0, 1.0);
        let phi = libm::acos(arg) / 3.0;
        for k in 0..3 {
            roots.push(r * cos(phi - 2.0 * core::f64::consts::PI * k as f64 / 3.0));
        }
    }
    let dist2 = |t: f64| (t - x0) * (t - x0) + (t * t - y0) * (t * t - y0);
    let mut best = roots[0];
    for &t in &roots[1..] {
        if dist2(t) < dist2(best) {
            best = t;
        }
    }
    // Newton polish on the stationarity condition
    for _ in 0..3 {
        let f = 2.0 * best * best * best + 2.0 * a * best + 2.0 * b;
        let df = 6.0 * best * best + 2.0 * a;
        if df == 0.0 {
            break;
        }
        let next = best - f / df;
        if dist2(next) <= dist2(best) {
            best = next;
        }
    }
    [best, best * best]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthoRow {
    pub dist: f64,
    pub abs_cos: f64,
}

/// `|cos(v, grad L)|` for the unit tangent `v` at the exact projection of
/// `p`, and the distance to that projection. Points on the parabola give
/// `dist = 0`, `abs_cos = 0`.
pub fn orthogonality_probe(p: [f64; 2]) -> OrthoRow {
    let q = parabola_projection(p);
    let dist = sqrt((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]));
    if parabola_loss(p) == 0.0 || dist == 0.0 {
        return OrthoRow {
            dist: 0.0,
            abs_cos: 0.0,
        };
    }
    let tangent = [1.0, 2.0 * q[0]];
    let grad = parabola_gradient(p);
    OrthoRow {
        dist,
        abs_cos: linalg::cosine(&tangent, &grad).abs(),
    }
}

/// Probes the points `(t, t^2) + side * d * n` along the unit normal `n` at
/// `(t, t^2)` for each distance `d`.
pub fn orthogonality_ladder(t: f64, side: f64, distances: &[f64]) -> Vec<OrthoRow> {
    let norm = sqrt(1.0 + 4.0 * t * t);
    let normal = [-2.0 * t / norm, 1.0 / norm];
    distances
        .iter()
        .map(|&d| {
            orthogonality_probe([t + side * d * normal[0], t * t + side * d * normal[1]])
        })
        .collect()
}

/// Least-squares slope of `ln |cos|` against `ln dist` over rows with both
/// positive.
pub fn loglog_slope(rows: &[OrthoRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.dist > 0.0 && r.abs_cos > 0.0)
        .map(|r| (ln(r.dist), ln(r.abs_cos)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DEFAULT_RCOND;

    #[test]
    fn toy_null_space_direction() {
        // y = w1 + w2, theta = (0, 2): projection of (0, -2) onto span{(1, -1)}
        let j = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let g = norm_min_direction(&Vector::from_row_slice(&[0.0, 2.0]), &j).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-14 && (g[1] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn full_column_rank_gives_zero_direction() {
        let j = Matrix::identity(3, 3);
        let g = norm_min_direction(&Vector::from_row_slice(&[1.0, -2.0, 3.0]), &j).unwrap();
        assert!(g.norm() < 1e-14);
    }

    #[test]
    fn rank_deficient_jacobian_uses_pinv() {
        let j = Matrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0]);
        let p = RowSpaceProjector::new(j.clone()).unwrap();
        assert!(p.uses_pseudo_inverse());
        let g = p.project_null(&Vector::from_row_slice(&[0.0, -2.0, -1.0]));
        assert!((&j * &g).norm() < 1e-12);
        let pinv = pseudo_inverse(&j, DEFAULT_RCOND).unwrap();
        let expected = Vector::from_row_slice(&[0.0, -2.0, -1.0]);
        let expected = &expected - &pinv * (&j * &expected);
        assert!((g - expected).norm() < 1e-12);
    }

    #[test]
    fn parabola_examples() {
        assert_eq!(parabola_loss([0.0, 1.0]), 1.0);
        assert_eq!(parabola_gradient([0.0, 1.0]), [0.0, 2.0]);
        for d in [1e-1, 1e-2, 1e-3, 0.4] {
            let r = orthogonality_probe([0.0, d]);
            assert_eq!(r.abs_cos, 0.0);
            assert!((r.dist - d).abs() < 1e-15);
        }
        let on = orthogonality_probe([1.5, 2.25]);
        assert_eq!(on, OrthoRow { dist: 0.0, abs_cos: 0.0 });
    }

    #[test]
    fn parabola_projection_is_nearest() {
        // brute-force search over a fine grid of the curve
        for &p in &[[0.3, 1.2], [-1.0, 0.0], [2.0, 3.0], [0.1, -0.5], [0.0, 2.0]] {
            let q = parabola_projection(p);
            let d = |t: f64| (t - p[0]).powi(2) + (t * t - p[1]).powi(2);
            let best = (-400_000..=400_000)
                .map(|i| i as f64 * 1e-5)
                .map(d)
                .fold(f64::INFINITY, f64::min);
            assert!(d(q[0]) <= best + 1e-12, "{p:?} -> {q:?}");
        }
    }

    #[test]
    fn distance_halving_halves_cosine() {
        let rows = orthogonality_ladder(0.7, 1.0, &[2e-2, 1e-2]);
        let ratio = rows[0].abs_cos / rows[1].abs_cos;
        assert!((1.6..=2.4).contains(&ratio), "{ratio}");
    }

    #[test]
    fn zero_update_gives_zero_cosine() {
        assert_eq!(linalg::cosine(&[0.0; 3], &[1.0, 2.0, 3.0]), 0.0);
    }
}
