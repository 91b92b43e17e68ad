use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not invertible (det = {det:e})")]
    InvalidElement { det: f64 },

    #[error("element is not hyperbolic: |tr|/sqrt|det| = {trace_ratio}")]
    NotHyperbolic { trace_ratio: f64 },

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("pole of the Gamma function at {location}")]
    Pole { location: Complex64 },

    #[error("unsupported parameter range: {0}")]
    UnsupportedRange(String),

    #[error(
        "quadrature did not converge after {evaluations} evaluations \
         (best estimate {best}, error estimate {error_estimate:e})"
    )]
    Convergence {
        best: Complex64,
        error_estimate: f64,
        evaluations: usize,
    },

    #[error("phase analysis found {count} critical points (limit 64)")]
    Resolution { count: usize },

    #[error("unsupported representation: {0}")]
    Unsupported(String),

    #[error("radius element lies in K: the circle is degenerate")]
    DegenerateCircle,

    #[error("Fourier-Bessel evaluation at height {y} is below the accuracy floor {floor}")]
    AccuracyLoss { y: f64, floor: f64 },

    #[error("no cusp form of the requested parity in [{lo}, {hi}]")]
    NoEigenvalue { lo: f64, hi: f64 },

    #[error("collocation system is ill-conditioned (condition estimate {condition:e})")]
    Conditioning { condition: f64 },

    #[error("eigenvalue moved from {r} to {r_check} when the truncation was increased")]
    Unstable { r: f64, r_check: f64 },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("structural inconsistency at n = {n}: |p_n| = {magnitude:e} should vanish")]
    StructuralInconsistency { n: i64, magnitude: f64 },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
