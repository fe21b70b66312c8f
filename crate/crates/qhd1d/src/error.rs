//! Error type shared by every solver layer.

use thiserror::Error;

/// Errors surfaced by grid operators, solvers and the report writers.
#[derive(Debug, Error)]
pub enum QhdError {
    /// A field carries a non-positive particle density where positivity is required.
    #[error("non-positive density: min {min:.6e} at node {node}")]
    NonPositiveDensity { min: f64, node: usize },

    /// The shifted density p + rho lost positivity during an iteration.
    #[error("degenerate density p + rho <= 0: min {min:.6e} at node {node}")]
    DegenerateDensity { min: f64, node: usize },

    /// Grid has too few nodes for the requested stencil or norm order.
    #[error("grid too coarse: {needed} nodes needed for {what}, only {have}")]
    GridTooCoarse {
        needed: usize,
        have: usize,
        what: &'static str,
    },

    /// Direct band elimination hit a zero pivot.
    #[error("singular linear system: zero pivot at column {col}")]
    SingularSystem { col: usize },

    /// Fixed-point iteration grew for several consecutive steps.
    #[error("fixed-point iteration diverged after {iterations} iterations (update norm {norm:.6e})")]
    DivergedIteration { iterations: usize, norm: f64 },

    /// Fixed-point iteration ran out of its iteration budget.
    #[error("fixed-point iteration exceeded {max_iter} iterations (update norm {norm:.6e})")]
    MaxIterExceeded { max_iter: usize, norm: f64 },

    /// The homotopy path could not be continued even with the smallest step.
    #[error("continuation stalled at theta = {theta:.6} (step floor {floor:.6})")]
    ContinuationStalled { theta: f64, floor: f64 },

    /// Density n* + n-tilde collapsed during time integration.
    #[error("density collapse at t = {t:.6e}: min {min:.6e} at node {node}")]
    DensityCollapse { t: f64, min: f64, node: usize },

    /// The implicit step's banded solve failed.
    #[error("linear solve failure during time step at t = {t:.6e}: {reason}")]
    LinearSolveFailure { t: f64, reason: String },

    /// Bound ratio requested for a profile with delta0 = 0.
    #[error("delta0 = 0: bound ratio undefined (assert the numerator is ~0 instead)")]
    ZeroDelta0,

    /// Upsilon_2 requested while beta1 = 0 (or epsilon = 0) leaves its weight undefined.
    #[error("upsilon_2 weight undefined: beta1 = {beta1:.6e}, epsilon = {epsilon:.6e}")]
    ZeroBeta1 { beta1: f64, epsilon: f64 },

    /// Too few trajectory samples in the requested fit window.
    #[error("insufficient samples for decay fit: {have} in tail, {needed} needed")]
    InsufficientSamples { have: usize, needed: usize },

    /// A norm in the fit window fell to (or below) the positivity floor.
    #[error("non-positive norm in decay-fit window at sample {sample}: {value:.6e}")]
    NonPositiveNorm { sample: usize, value: f64 },

    /// Configuration rejected before any solver state was allocated.
    #[error("config error: {0}")]
    Config(String),

    /// Report emission failed.
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QhdError>;

impl QhdError {
    /// Process exit code for the CLI: 2 validation, 3 numerical failure, 1 io.
    pub fn exit_code(&self) -> i32 {
        match self {
            QhdError::Config(_) | QhdError::GridTooCoarse { .. } => 2,
            QhdError::Io(_) => 1,
            _ => 3,
        }
    }

    /// Short machine-readable tag for the single-line diagnostic stream.
    pub fn code(&self) -> &'static str {
        match self {
            QhdError::NonPositiveDensity { .. } => "NonPositiveDensity",
            QhdError::DegenerateDensity { .. } => "DegenerateDensity",
            QhdError::GridTooCoarse { .. } => "GridTooCoarse",
            QhdError::SingularSystem { .. } => "SingularSystem",
            QhdError::DivergedIteration { .. } => "DivergedIteration",
            QhdError::MaxIterExceeded { .. } => "MaxIterExceeded",
            QhdError::ContinuationStalled { .. } => "ContinuationStalled",
            QhdError::DensityCollapse { .. } => "DensityCollapse",
            QhdError::LinearSolveFailure { .. } => "LinearSolveFailure",
            QhdError::ZeroDelta0 => "ZeroDelta0",
            QhdError::ZeroBeta1 { .. } => "ZeroBeta1",
            QhdError::InsufficientSamples { .. } => "InsufficientSamples",
            QhdError::NonPositiveNorm { .. } => "NonPositiveNorm",
            QhdError::Config(_) => "ConfigError",
            QhdError::Io(_) => "IoFailure",
        }
    }
}
