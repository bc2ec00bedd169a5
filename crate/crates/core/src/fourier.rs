//! Discrete Fourier analysis of an embedding matrix over `Z_p`.
//!
//! `F_k = (1/p) sum_j exp(-i 2 pi j k / p) E_j` for `k = 1..=(p-1)/2`; the
//! frequencies `p - k` are complex conjugates and carry no extra information
//! for real `E`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::linalg::cosine;
use crate::math::{cos, sin, sqrt};
use crate::{Error, Matrix, Result, Vector};

/// Real and imaginary parts of one frequency, each of length `d_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frequency {
    pub k: usize,
    pub re: Vector,
    pub im: Vector,
}

impl Frequency {
    /// `||F_k||^2 = ||Re F_k||^2 + ||Im F_k||^2`
    pub fn power(&self) -> f64 {
        self.re.norm_squared() + self.im.norm_squared()
    }

    fn stacked_abs(&self) -> Vector {
        Vector::from_iterator(
            2 * self.re.len(),
            self.re.iter().chain(self.im.iter()).map(|v| v.abs()),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierFeatures {
    pub p: usize,
    /// Row mean of `E` (the `k = 0` term).
    pub mean: Vector,
    /// Frequencies `1..=(p-1)/2` in order.
    pub features: Vec<Frequency>,
}

/// `(cos, sin)` of `2 pi t / p` for `t = 0..p`, so that phases `j k` can be
/// reduced mod `p` before lookup.
fn twiddles(p: usize) -> (Vec<f64>, Vec<f64>) {
    (0..p)
        .map(|t| {
            let a = 2.0 * PI * t as f64 / p as f64;
            (cos(a), sin(a))
        })
        .unzip()
}

/// DFT of the rows of `e` (one row per residue).
pub fn dft_embedding(e: &Matrix, p: usize) -> Result<FourierFeatures> {
    if p < 3 || p % 2 == 0 {
        return Err(Error::UnsupportedModulus(p));
    }
    if e.nrows() != p {
        return Err(Error::Dimension {
            context: "embedding rows",
            expected: (p, e.ncols()),
            got: e.shape(),
        });
    }
    let (c, s) = twiddles(p);
    let scale = 1.0 / p as f64;
    let d = e.ncols();
    let mean = e.row_mean().transpose();
    let features = (1..=(p - 1) / 2)
        .map(|k| {
            let mut re = Vector::zeros(d);
            let mut im = Vector::zeros(d);
            for j in 0..p {
                let t = (j * k) % p;
                let row = e.row(j);
                re.axpy(scale * c[t], &row.transpose(), 1.0);
                im.axpy(-scale * s[t], &row.transpose(), 1.0);
            }
            Frequency { k, re, im }
        })
        .collect();
    Ok(FourierFeatures { p, mean, features })
}

impl FourierFeatures {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Inverse transform: `E_j = mean + 2 sum_k (Re F_k cos(2 pi j k / p) - Im F_k sin(2 pi j k / p))`.
    pub fn reconstruct(&self) -> Matrix {
        let p = self.p;
        let (c, s) = twiddles(p);
        let mut e = Matrix::zeros(p, self.mean.len());
        for j in 0..p {
            let mut row = self.mean.clone();
            for f in &self.features {
                let t = (j * f.k) % p;
                row.axpy(2.0 * c[t], &f.re, 1.0);
                row.axpy(-2.0 * s[t], &f.im, 1.0);
            }
            e.set_row(j, &row.transpose());
        }
        e
    }

    /// Frequencies sorted by descending power (ties by ascending `k`).
    pub fn ranked_by_power(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = self.features.iter().map(|f| (f.k, f.power())).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CircleMetrics {
    pub k: usize,
    pub norm_re: f64,
    pub norm_im: f64,
    /// `norm_re / norm_im`; 1 when both vanish.
    pub aspect: f64,
    /// `|<Re, Im>| / (norm_re norm_im)`; 0 when either vanishes.
    pub ortho: f64,
}

pub fn circle_metrics(ff: &FourierFeatures) -> Vec<CircleMetrics> {
    ff.features
        .iter()
        .map(|f| {
            let norm_re = f.re.norm();
            let norm_im = f.im.norm();
            let aspect = match (norm_re == 0.0, norm_im == 0.0) {
                (true, true) => 1.0,
                (false, true) => f64::INFINITY,
                _ => norm_re / norm_im,
            };
            CircleMetrics {
                k: f.k,
                norm_re,
                norm_im,
                aspect,
                ortho: cosine(f.re.as_slice(), f.im.as_slice()).abs(),
            }
        })
        .collect()
}

fn similarity(vs: &[Vector]) -> Matrix {
    let n = vs.len();
    Matrix::from_fn(n, n, |a, b| cosine(vs[a].as_slice(), vs[b].as_slice()))
}

/// Cosine similarity between `|[Re F_k; Im F_k]|` and `|[Re F_l; Im F_l]|`.
pub fn frequency_overlap(ff: &FourierFeatures) -> Matrix {
    let v: Vec<Vector> = ff.features.iter().map(Frequency::stacked_abs).collect();
    similarity(&v)
}

/// Overlap computed on `|Re F_k|` and `|Im F_k|` separately.
#[derive(Debug, Clone, PartialEq)]
pub struct PartOverlap {
    pub re: Matrix,
    pub im: Matrix,
    /// Entry `k`: similarity of `|Re F_k|` with `|Im F_k|`.
    pub re_im: Vec<f64>,
}

pub fn part_overlap(ff: &FourierFeatures) -> PartOverlap {
    let abs = |v: &Vector| v.map(f64::abs);
    let re: Vec<Vector> = ff.features.iter().map(|f| abs(&f.re)).collect();
    let im: Vec<Vector> = ff.features.iter().map(|f| abs(&f.im)).collect();
    PartOverlap {
        re_im: re.iter().zip(&im).map(|(a, b)| cosine(a.as_slice(), b.as_slice())).collect(),
        re: similarity(&re),
        im: similarity(&im),
    }
}

/// Mean of the off-diagonal entries of a square matrix.
pub fn mean_off_diagonal(m: &Matrix) -> f64 {
    let n = m.nrows();
    if n < 2 {
        return 0.0;
    }
    let total: f64 = m.iter().sum::<f64>() - m.diagonal().sum();
    total / (n * (n - 1)) as f64
}

/// `||E - 1 mean||_F` and `sqrt(2 p sum_k ||F_k||^2)`; equal for odd `p`.
pub fn parseval_pair(e: &Matrix, ff: &FourierFeatures) -> (f64, f64) {
    let mut centered = e.clone();
    for mut row in centered.row_iter_mut() {
        row -= ff.mean.transpose();
    }
    let spectral: f64 = ff.features.iter().map(Frequency::power).sum();
    (centered.norm(), sqrt(2.0 * ff.p as f64 * spectral))
}
