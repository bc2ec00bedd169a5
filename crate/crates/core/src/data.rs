//! Modular-addition dataset: every unordered pair `a <= b` of residues mod `p`
//! with target `(a + b) mod p`, encoded as one-hot sums.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Matrix, Result};

/// Name of the PRNG used for splits, recorded alongside run metadata.
pub const SPLIT_RNG: &str = "ChaCha8Rng::seed_from_u64";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub c: usize,
}

/// Disjoint train/test row indices (0-based, each list sorted ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    p: usize,
    pairs: Vec<Pair>,
    x: Matrix,
    y: Matrix,
    split: Option<Split>,
}

impl Dataset {
    /// Enumerates all pairs `0 <= a <= b < p` in lexicographic order.
    pub fn new(p: usize) -> Result<Self> {
        if p < 3 {
            return Err(Error::InvalidModulus(p));
        }
        let k = p * (p + 1) / 2;
        let mut pairs = Vec::with_capacity(k);
        for a in 0..p {
            for b in a..p {
                pairs.push(Pair { a, b, c: (a + b) % p });
            }
        }
        let mut x = Matrix::zeros(k, p);
        let mut y = Matrix::zeros(k, p);
        for (i, pair) in pairs.iter().enumerate() {
            x[(i, pair.a)] += 1.0;
            x[(i, pair.b)] += 1.0;
            y[(i, pair.c)] = 1.0;
        }
        Ok(Self {
            p,
            pairs,
            x,
            y,
            split: None,
        })
    }

    /// Random split with `floor(f_s * k)` training rows.
    pub fn split(self, train_fraction: f64, seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidFraction(train_fraction));
        }
        let n_train = (train_fraction * self.len() as f64) as usize;
        self.split_count(n_train, seed)
    }

    /// Random split with exactly `n_train` training rows.
    pub fn split_count(mut self, n_train: usize, seed: u64) -> Result<Self> {
        let k = self.len();
        if n_train == 0 || n_train >= k {
            return Err(Error::InvalidSplit(
                "train and test sets must both be non-empty",
            ));
        }
        let mut perm: Vec<usize> = (0..k).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        perm.shuffle(&mut rng);
        let mut train = perm[..n_train].to_vec();
        let mut test = perm[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        self.split = Some(Split { train, test, seed });
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of pairs, `p (p + 1) / 2`.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &Matrix {
        &self.y
    }

    pub fn split_info(&self) -> Option<&Split> {
        self.split.as_ref()
    }

    /// Row index of the pair `(a, b)` (order-insensitive).
    pub fn row_index(&self, a: usize, b: usize) -> Option<usize> {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        if b >= self.p {
            return None;
        }
        // rows before block `a`: sum_{i<a} (p - i) = a p - a (a - 1) / 2
        Some(a * self.p - a * a.saturating_sub(1) / 2 + (b - a))
    }

    /// `(X_train, Y_train)`; the full dataset when unsplit.
    pub fn train_xy(&self) -> (Matrix, Matrix) {
        match &self.split {
            Some(s) => (self.x.select_rows(&s.train), self.y.select_rows(&s.train)),
            None => (self.x.clone(), self.y.clone()),
        }
    }

    /// `(X_test, Y_test)`; empty matrices when unsplit.
    pub fn test_xy(&self) -> (Matrix, Matrix) {
        match &self.split {
            Some(s) => (self.x.select_rows(&s.test), self.y.select_rows(&s.test)),
            None => (Matrix::zeros(0, self.p), Matrix::zeros(0, self.p)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p5_has_fifteen_rows() {
        let d = Dataset::new(5).unwrap();
        assert_eq!(d.len(), 15);
        assert_eq!(d.x().shape(), (15, 5));
    }

    #[test]
    fn one_hot_rows() {
        let d = Dataset::new(5).unwrap();
        let i = d.row_index(1, 2).unwrap();
        assert_eq!(d.x().row(i).iter().cloned().collect::<Vec<_>>(), [0., 1., 1., 0., 0.]);
        assert_eq!(d.y().row(i).iter().cloned().collect::<Vec<_>>(), [0., 0., 0., 1., 0.]);
        let i = d.row_index(4, 4).unwrap();
        assert_eq!(d.pairs()[i].c, 3);
        assert_eq!(d.x().row(i).iter().cloned().collect::<Vec<_>>(), [0., 0., 0., 0., 2.]);
        assert_eq!(d.y().row(i).iter().cloned().collect::<Vec<_>>(), [0., 0., 0., 1., 0.]);
    }

    #[test]
    fn row_index_round_trips() {
        for p in [3, 5, 11, 37] {
            let d = Dataset::new(p).unwrap();
            for (i, pair) in d.pairs().iter().enumerate() {
                assert_eq!(d.row_index(pair.a, pair.b), Some(i));
                assert_eq!(d.row_index(pair.b, pair.a), Some(i));
            }
            assert_eq!(d.row_index(0, p), None);
        }
    }

    #[test]
    fn row_sums() {
        let d = Dataset::new(7).unwrap();
        for i in 0..d.len() {
            assert_eq!(d.x().row(i).sum(), 2.0);
            assert_eq!(d.y().row(i).sum(), 1.0);
            let pair = d.pairs()[i];
            assert_eq!(d.y()[(i, (pair.a + pair.b) % 7)], 1.0);
        }
    }

    #[test]
    fn invalid_modulus() {
        assert_eq!(Dataset::new(2).unwrap_err(), Error::InvalidModulus(2));
    }

    #[test]
    fn split_sizes() {
        let d = Dataset::new(5).unwrap().split(0.7, 1).unwrap();
        let s = d.split_info().unwrap();
        assert_eq!((s.train.len(), s.test.len()), (10, 5));
        let d = Dataset::new(37).unwrap().split(0.7, 1).unwrap();
        assert_eq!(d.split_info().unwrap().train.len(), 492);
    }

    #[test]
    fn split_is_partition_and_deterministic() {
        let a = Dataset::new(11).unwrap().split(0.5, 9).unwrap();
        let b = Dataset::new(11).unwrap().split(0.5, 9).unwrap();
        assert_eq!(a.split_info(), b.split_info());
        let s = a.split_info().unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).cloned().collect();
        all.sort_unstable();
        assert_eq!(all, (0..a.len()).collect::<Vec<_>>());
    }

    #[test]
    fn different_seeds_differ() {
        let base = Dataset::new(5).unwrap().split(0.7, 0).unwrap();
        let differs = (1..=5).any(|seed| {
            Dataset::new(5).unwrap().split(0.7, seed).unwrap().split_info().unwrap().train
                != base.split_info().unwrap().train
        });
        assert!(differs);
    }

    #[test]
    fn invalid_fraction() {
        for f in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                Dataset::new(5).unwrap().split(f, 0),
                Err(Error::InvalidFraction(_))
            ));
        }
    }
}
