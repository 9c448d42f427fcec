//! Error types shared by every module of the crate.

use thiserror::Error;

/// A single violated axiom found while validating a raw space.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("rho is not square: row {row} has length {len}, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("mu length {mu_len} does not match the number of points {n}")]
    MuLength { mu_len: usize, n: usize },
    #[error("points length {labels_len} does not match the number of points {n}")]
    LabelsLength { labels_len: usize, n: usize },
    #[error("at least 2 points are required, found {n}")]
    TooFewPoints { n: usize },
    #[error("rho[{i}][{j}] is not finite")]
    NonFinite { i: usize, j: usize },
    #[error("rho[{i}][{j}] = {value} is negative")]
    NegativeDistance { i: usize, j: usize, value: f64 },
    #[error("nondegeneracy violated: rho[{i}][{j}] = 0 with {i} != {j}")]
    ZeroOffDiagonal { i: usize, j: usize },
    #[error("nondegeneracy violated: rho[{i}][{i}] = {value} is not 0")]
    NonzeroDiagonal { i: usize, value: f64 },
    #[error("mu[{i}] = {value} is not a positive finite mass")]
    NonpositiveMass { i: usize, value: f64 },
}

/// The full list of violated axioms, in scan order.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid space: {}", .violations.first().map(|v| v.to_string()).unwrap_or_default())]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("metrization mismatch at ({i},{j}): {bound} bound violated, ratio {ratio}")]
    MetrizationMismatch {
        i: usize,
        j: usize,
        bound: &'static str,
        ratio: f64,
    },
    #[error("exponent alpha = {alpha} is outside (0, alpha0 = {alpha0}]")]
    AlphaOutOfRange { alpha: f64, alpha0: f64 },
    #[error("minimization refused for p = {p}, q = {q}: requires p >= 1 and q >= 1")]
    NonconvexRegime { p: f64, q: f64 },
    #[error("s*p = {sp} is not below Q = {q_exp}")]
    CriticalOrSupercritical { sp: f64, q_exp: f64 },
    #[error("gradient shape does not match the seminorm kind")]
    GradientShape,
    #[error("function has length {got}, expected {expected}")]
    FunctionLength { got: usize, expected: usize },
    #[error("bump radii must satisfy 0 <= r < R, got r = {r}, R = {big_r}")]
    BadRadii { r: f64, big_r: f64 },
    #[error("s = alpha = {alpha} is only admissible with q = inf")]
    CriticalSmoothness { alpha: f64 },
    #[error("smoothness s = {s} exceeds the admissible exponent {bound}")]
    SmoothnessTooLarge { s: f64, bound: f64 },
    #[error("half-mass precondition failed: r = {r} > c0 * phi = {bound}")]
    HalfMassPreconditionFailed { r: f64, bound: f64 },
    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),
    #[error("ball is empty")]
    EmptyBall,
    #[error("gradient norm on the ball is zero")]
    ZeroSeminorm,
    #[error("exponents must satisfy 0 < p < t and theta > 0 (p = {p}, t = {t}, theta = {theta})")]
    BadExponents { p: f64, t: f64, theta: f64 },
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("space is not uniformly perfect (critical ratio {critical_ratio})")]
    NotPerfect { critical_ratio: f64 },
    #[error("measured embedding constant is unbounded")]
    UnboundedConstant,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
