use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid modulus {0}: need p >= 3")]
    InvalidModulus(usize),
    #[error("unsupported modulus {0}: Fourier analysis needs an odd p >= 3")]
    UnsupportedModulus(usize),
    #[error("invalid train fraction {0}: must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("invalid split: {0}")]
    InvalidSplit(&'static str),
    #[error("dimension mismatch in {context}: expected {expected:?}, got {got:?}")]
    Dimension {
        context: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    #[error("non-finite values encountered at step {step}")]
    Divergence { step: usize },
    #[error("rank-deficient Gram matrix (condition number estimate {condition:.3e})")]
    RankDeficient { condition: f64 },
    #[error("ridge solve needs lambda > 0 (got {0}); use the pseudoinverse solve instead")]
    UsePinv(f64),
    #[error("singular value decomposition did not converge")]
    SvdNonConvergence,
    #[error("parameter history is empty")]
    InsufficientHistory,
}
