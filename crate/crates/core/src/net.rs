//! Two-layer bias-free network `Y_hat = sigma(X W1) W2` with summed squared
//! error and weight decay, its backprop gradient and the per-sample output
//! Jacobian.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::linalg::frobenius_sq;
use crate::math::sqrt;
use crate::{Error, Matrix, Result, Vector};

/// Elementwise hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Identity => x,
        }
    }

    /// Derivative with the subgradient at 0 taken from the left branch
    /// (0 for ReLU, `slope` for leaky ReLU).
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn apply_matrix(self, m: &Matrix) -> Matrix {
        m.map(|v| self.apply(v))
    }

    pub fn derivative_matrix(self, m: &Matrix) -> Matrix {
        m.map(|v| self.derivative(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayoutEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

/// Ordered description of how named matrices are packed (row-major) into a
/// flat parameter vector.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Layout {
    pub entries: Vec<LayoutEntry>,
}

impl Layout {
    pub fn from_shapes(shapes: &[(&str, usize, usize)]) -> Self {
        let mut offset = 0;
        let entries = shapes
            .iter()
            .map(|&(name, rows, cols)| {
                let e = LayoutEntry {
                    name: name.into(),
                    rows,
                    cols,
                    offset,
                };
                offset += rows * cols;
                e
            })
            .collect();
        Self { entries }
    }

    /// Total number of scalars.
    pub fn len(&self) -> usize {
        self.entries.iter().map(|e| e.rows * e.cols).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entry(&self, name: &str) -> Option<&LayoutEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Flattened parameter vector `theta` with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatVector {
    pub values: Vector,
    pub layout: Layout,
}

impl FlatVector {
    pub fn zeros_like(&self) -> Self {
        Self {
            values: Vector::zeros(self.values.len()),
            layout: self.layout.clone(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.norm()
    }

    /// Copies the block named `name` out as a matrix.
    pub fn block(&self, name: &str) -> Option<Matrix> {
        let e = self.layout.entry(name)?;
        let data = &self.values.as_slice()[e.offset..e.offset + e.rows * e.cols];
        Some(Matrix::from_row_slice(e.rows, e.cols, data))
    }
}

/// Weights of the two-layer network: `w1` is `d_in x d_h` (the embedding),
/// `w2` is `d_h x d_out` (the readout).
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub w1: Matrix,
    pub w2: Matrix,
    pub activation: Activation,
}

impl NetParams {
    pub fn new(w1: Matrix, w2: Matrix, activation: Activation) -> Result<Self> {
        if w1.ncols() != w2.nrows() {
            return Err(Error::Dimension {
                context: "hidden width",
                expected: (w1.ncols(), w2.ncols()),
                got: w2.shape(),
            });
        }
        Ok(Self { w1, w2, activation })
    }

    pub fn zeros(d_in: usize, d_h: usize, d_out: usize, activation: Activation) -> Self {
        Self {
            w1: Matrix::zeros(d_in, d_h),
            w2: Matrix::zeros(d_h, d_out),
            activation,
        }
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` per layer, the default
    /// initialization of a bias-free linear layer in common frameworks.
    pub fn init_uniform<R: Rng + ?Sized>(
        d_in: usize,
        d_h: usize,
        d_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let b1 = 1.0 / sqrt(d_in as f64);
        let b2 = 1.0 / sqrt(d_h as f64);
        // Draw row-major so the stream order matches the flat layout.
        let mut w1 = Matrix::zeros(d_in, d_h);
        for r in 0..d_in {
            for c in 0..d_h {
                w1[(r, c)] = rng.random_range(-b1..b1);
            }
        }
        let mut w2 = Matrix::zeros(d_h, d_out);
        for r in 0..d_h {
            for c in 0..d_out {
                w2[(r, c)] = rng.random_range(-b2..b2);
            }
        }
        Self { w1, w2, activation }
    }

    pub fn d_in(&self) -> usize {
        self.w1.nrows()
    }

    pub fn d_hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.w2.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.w2.len()
    }

    pub fn layout(&self) -> Layout {
        Layout::from_shapes(&[
            ("W1", self.w1.nrows(), self.w1.ncols()),
            ("W2", self.w2.nrows(), self.w2.ncols()),
        ])
    }

    /// `||W1||_F^2 + ||W2||_F^2`
    pub fn norm_sq(&self) -> f64 {
        frobenius_sq(&self.w1) + frobenius_sq(&self.w2)
    }

    pub fn flatten(&self) -> FlatVector {
        let mut values = Vec::with_capacity(self.num_params());
        for m in [&self.w1, &self.w2] {
            for r in 0..m.nrows() {
                values.extend(m.row(r).iter());
            }
        }
        FlatVector {
            values: Vector::from_vec(values),
            layout: self.layout(),
        }
    }

    pub fn from_flat(flat: &FlatVector, activation: Activation) -> Result<Self> {
        if flat.values.len() != flat.layout.len() {
            return Err(Error::Dimension {
                context: "flat vector length",
                expected: (flat.layout.len(), 1),
                got: (flat.values.len(), 1),
            });
        }
        let w1 = flat.block("W1").ok_or(Error::InvalidParameter {
            name: "layout",
            reason: "missing W1 block",
        })?;
        let w2 = flat.block("W2").ok_or(Error::InvalidParameter {
            name: "layout",
            reason: "missing W2 block",
        })?;
        Self::new(w1, w2, activation)
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Pre-activations `X W1`.
    pub pre: Matrix,
    /// Hidden activations `H = sigma(X W1)`.
    pub hidden: Matrix,
    /// Network outputs `H W2`.
    pub output: Matrix,
}

fn check_input(params: &NetParams, x: &Matrix) -> Result<()> {
    if x.ncols() != params.d_in() {
        return Err(Error::Dimension {
            context: "input width",
            expected: (x.nrows(), params.d_in()),
            got: x.shape(),
        });
    }
    Ok(())
}

fn check_target(params: &NetParams, x: &Matrix, y: &Matrix) -> Result<()> {
    if y.shape() != (x.nrows(), params.d_out()) {
        return Err(Error::Dimension {
            context: "target shape",
            expected: (x.nrows(), params.d_out()),
            got: y.shape(),
        });
    }
    Ok(())
}

pub fn forward(params: &NetParams, x: &Matrix) -> Result<Forward> {
    check_input(params, x)?;
    let pre = x * &params.w1;
    let hidden = params.activation.apply_matrix(&pre);
    let output = &hidden * &params.w2;
    Ok(Forward {
        pre,
        hidden,
        output,
    })
}

/// How the squared errors of a batch are combined into the data loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LossReduction {
    /// `L = sum_i ||f(theta, x_i) - y_i||^2`
    #[default]
    Sum,
    /// The sum divided by the number of scalar outputs `k * d_out`.
    Mean,
}

impl LossReduction {
    /// Factor applied to the summed squared error of `rows x outputs` targets.
    pub fn scale(self, rows: usize, outputs: usize) -> f64 {
        match self {
            LossReduction::Sum => 1.0,
            LossReduction::Mean => {
                let n = rows * outputs;
                if n == 0 {
                    1.0
                } else {
                    1.0 / n as f64
                }
            }
        }
    }
}

/// Data loss and regularized objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    /// `L = sum_i ||f(theta, x_i) - y_i||^2`
    pub data: f64,
    /// `L_lambda = L + lambda ||theta||^2`
    pub total: f64,
}

pub fn loss(params: &NetParams, x: &Matrix, y: &Matrix, lambda: f64) -> Result<LossValue> {
    check_target(params, x, y)?;
    let fwd = forward(params, x)?;
    let data = frobenius_sq(&(fwd.output - y));
    Ok(LossValue {
        data,
        total: data + lambda * params.norm_sq(),
    })
}

/// Gradient of `L_lambda` split by layer: `(dW1, dW2)`.
pub fn layer_gradients(
    params: &NetParams,
    x: &Matrix,
    y: &Matrix,
    lambda: f64,
) -> Result<(Matrix, Matrix)> {
    check_target(params, x, y)?;
    let fwd = forward(params, x)?;
    let residual = fwd.output - y;
    let mut g2 = (fwd.hidden.transpose() * &residual) * 2.0;
    let mut dz = (&residual * params.w2.transpose()) * 2.0;
    dz.zip_apply(&fwd.pre, |g, z| *g *= params.activation.derivative(z));
    let mut g1 = x.transpose() * &dz;
    if lambda != 0.0 {
        g1 += &params.w1 * (2.0 * lambda);
        g2 += &params.w2 * (2.0 * lambda);
    }
    Ok((g1, g2))
}

/// `grad_theta L_lambda` in the flat layout of [`NetParams::flatten`].
pub fn grad_loss(params: &NetParams, x: &Matrix, y: &Matrix, lambda: f64) -> Result<FlatVector> {
    let (w1, w2) = layer_gradients(params, x, y, lambda)?;
    Ok(NetParams {
        w1,
        w2,
        activation: params.activation,
    }
    .flatten())
}

/// Jacobian of the concatenated outputs `F(theta)` (length `k * d_out`,
/// sample-major) with respect to the flat parameters.
pub fn jacobian(params: &NetParams, x: &Matrix) -> Result<Matrix> {
    check_input(params, x)?;
    let fwd = forward(params, x)?;
    let (k, d_in) = x.shape();
    let d_h = params.d_hidden();
    let d_out = params.d_out();
    let off2 = d_in * d_h;
    let mut jac = Matrix::zeros(k * d_out, params.num_params());
    let mut slope = Vec::with_capacity(d_h);
    for i in 0..k {
        slope.clear();
        slope.extend((0..d_h).map(|j| params.activation.derivative(fwd.pre[(i, j)])));
        for o in 0..d_out {
            let row = i * d_out + o;
            for r in 0..d_in {
                let xr = x[(i, r)];
                if xr == 0.0 {
                    continue;
                }
                for j in 0..d_h {
                    jac[(row, r * d_h + j)] = xr * slope[j] * params.w2[(j, o)];
                }
            }
            for j in 0..d_h {
                jac[(row, off2 + j * d_out + o)] = fwd.hidden[(i, j)];
            }
        }
    }
    Ok(jac)
}

/// `J J^T` for the output Jacobian of [`jacobian`], assembled from the
/// layer structure instead of the full `(k m) x d` product:
/// `G[(i,o),(i',o')] = <x_i, x_i'> sum_j s_ij s_i'j W2[j,o] W2[j,o'] + [o = o'] <h_i, h_i'>`
/// with `s = sigma'(X W1)`.
pub fn jacobian_gram(params: &NetParams, x: &Matrix) -> Result<Matrix> {
    check_input(params, x)?;
    let fwd = forward(params, x)?;
    let k = x.nrows();
    let d_h = params.d_hidden();
    let m = params.d_out();
    let hh = &fwd.hidden * fwd.hidden.transpose();
    let xx = x * x.transpose();
    let mut q = Matrix::zeros(d_h, k * m);
    for i in 0..k {
        for o in 0..m {
            let mut col = q.column_mut(i * m + o);
            for j in 0..d_h {
                col[j] = params.activation.derivative(fwd.pre[(i, j)]) * params.w2[(j, o)];
            }
        }
    }
    let mut gram = q.transpose() * &q;
    for c in 0..k * m {
        let (ic, oc) = (c / m, c % m);
        for r in 0..k * m {
            let (ir, or) = (r / m, r % m);
            let v = &mut gram[(r, c)];
            *v *= xx[(ir, ic)];
            if or == oc {
                *v += hh[(ir, ic)];
            }
        }
    }
    Ok(gram)
}

/// Concatenated outputs `F(theta)` in the row order of [`jacobian`].
pub fn flat_outputs(output: &Matrix) -> Vector {
    let (k, m) = output.shape();
    Vector::from_fn(k * m, |idx, _| output[(idx / m, idx % m)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eye2(act: Activation) -> NetParams {
        NetParams::new(Matrix::identity(2, 2), Matrix::identity(2, 2), act).unwrap()
    }

    #[test]
    fn forward_examples() {
        let x = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert_eq!(forward(&eye2(Activation::Relu), &x).unwrap().output, x);
        let x = Matrix::from_row_slice(1, 2, &[-1.0, 1.0]);
        let out = forward(&eye2(Activation::Relu), &x).unwrap().output;
        assert_eq!(out.as_slice(), [0.0, 1.0]);
        let x = Matrix::from_row_slice(1, 2, &[-1.0, 0.0]);
        let out = forward(&eye2(Activation::LeakyRelu { slope: 0.1 }), &x)
            .unwrap()
            .output;
        assert!((out[(0, 0)] + 0.1).abs() < 1e-15);
        assert_eq!(out[(0, 1)], 0.0);
    }

    #[test]
    fn forward_shape_mismatch() {
        let x = Matrix::zeros(1, 3);
        assert!(matches!(
            forward(&eye2(Activation::Relu), &x),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn loss_examples() {
        let x = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let p = eye2(Activation::Identity);
        assert_eq!(loss(&p, &x, &x, 0.0).unwrap(), LossValue { data: 0.0, total: 0.0 });

        let z = NetParams::zeros(2, 3, 2, Activation::Relu);
        let y = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let x3 = Matrix::zeros(3, 2);
        assert_eq!(loss(&z, &x3, &y, 0.0).unwrap().data, 3.0);

        // ||W1||^2 + ||W2||^2 = 4 with an exact fit
        let l = loss(&p, &x, &x, 0.1).unwrap();
        assert_eq!(l.data, 0.0);
        assert!((l.total - 0.4).abs() < 1e-15);
    }

    #[test]
    fn gradient_zero_at_exact_fit() {
        let x = Matrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]);
        let p = eye2(Activation::Identity);
        let g = grad_loss(&p, &x, &x, 0.0).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pure_weight_decay_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = NetParams::init_uniform(3, 4, 2, Activation::Relu, &mut rng);
        let x = Matrix::zeros(0, 3);
        let y = Matrix::zeros(0, 2);
        let g = grad_loss(&p, &x, &y, 0.3).unwrap();
        let expected = p.flatten().values * 0.6;
        assert!((g.values - expected).norm() < 1e-15);
    }

    #[test]
    fn flatten_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = NetParams::init_uniform(5, 7, 3, Activation::Relu, &mut rng);
        let flat = p.flatten();
        assert_eq!(flat.values.len(), 5 * 7 + 7 * 3);
        assert_eq!(flat.layout.entry("W2").unwrap().offset, 35);
        let back = NetParams::from_flat(&flat, Activation::Relu).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.flatten(), flat);
    }

    #[test]
    fn structured_gram_matches_explicit_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = NetParams::init_uniform(5, 9, 5, Activation::Relu, &mut rng);
        let d = crate::data::Dataset::new(5).unwrap();
        let j = jacobian(&p, d.x()).unwrap();
        let g = jacobian_gram(&p, d.x()).unwrap();
        let expected = &j * j.transpose();
        assert!((g - &expected).norm() / expected.norm() < 1e-13);
    }

    #[test]
    fn linear_model_jacobian_is_input() {
        // y = w1 x1 + w2 x2 as a 2 -> 1 -> 1 identity network with W2 = [1]
        let p = NetParams::new(
            Matrix::from_row_slice(2, 1, &[0.3, -0.7]),
            Matrix::from_row_slice(1, 1, &[1.0]),
            Activation::Identity,
        )
        .unwrap();
        let x = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let j = jacobian(&p, &x).unwrap();
        assert_eq!(&j.as_slice()[..2], &[1.0, 1.0]);
    }
}
