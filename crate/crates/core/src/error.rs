use thiserror::Error;

/// Which end of a bump support an endpoint condition refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum Endpoint {
    Left,
    Right,
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Left => write!(f, "a"),
            Endpoint::Right => write!(f, "b"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("profile must be strictly positive (min = {min:e})")]
    NonPositiveProfile { min: f64 },
    #[error("profile is not 2-periodic: derivative {derivative} differs by {mismatch:e} at x = +-1")]
    NotPeriodic { derivative: usize, mismatch: f64 },
    #[error("bump derivative {derivative} does not vanish at endpoint {endpoint} (value {value:e})")]
    EndpointConditionViolated {
        derivative: usize,
        endpoint: Endpoint,
        value: f64,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid {nx}x{ny} too small (need at least 8 in each direction)")]
    GridTooSmall { nx: usize, ny: usize },
    #[error("grid mismatch: expected {expected} samples, got {got}")]
    GridMismatch { expected: usize, got: usize },
    #[error("linear solver diverged after {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },
    #[error("step count {0} too small (need at least 4)")]
    StepCountTooSmall(usize),
    #[error("no hitting event before t = {horizon} for s = {s}, x = {x}")]
    NoHitDetected { s: f64, x: f64, horizon: f64 },
    #[error("quantity undefined where the bump vanishes (x = {x})")]
    UndefinedAtZero { x: f64 },
    #[error("x = {x} is not a zero of the bump (phi = {value:e})")]
    NotAZero { x: f64, value: f64 },
    #[error("cutoff infeasible: {0}")]
    CutoffInfeasible(String),
    #[error("flow map not injective: |D Phi - I| = {norm} >= 1 at (x, y) = ({x}, {y})")]
    NotInjective { norm: f64, x: f64, y: f64 },
    #[error("base state not critical: residual {residual:e} exceeds {threshold:e}")]
    NotCritical { residual: f64, threshold: f64 },
    #[error("Q vanishes on the free boundary (min Q^2 = {min_q2:e})")]
    QminViolated { min_q2: f64 },
    #[error("tube width {eps} must be below min w = {min_w}")]
    EpsilonTooLarge { eps: f64, min_w: f64 },
    #[error("smallest eigenvalue {eigenvalue:e} is not positive")]
    NotCoercive { eigenvalue: f64 },
    #[error("need at least {needed} s-samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
