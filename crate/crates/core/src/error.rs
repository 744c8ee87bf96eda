//! Crate-wide error type.

use crate::network::Violation;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    /// The network document could not be assembled into a consistent graph.
    #[error("network construction: {0}")]
    NetworkBuild(String),

    /// Validation found violations; operations requiring a valid network refuse to run.
    #[error("invalid network: {}", format_violations(.0))]
    InvalidNetwork(Vec<Violation>),

    /// Colebrook-White was asked for a friction factor outside the turbulent regime.
    #[error("Reynolds number {reynolds:.1} is below the turbulent threshold 4000")]
    NotTurbulent { reynolds: f64 },

    /// The friction-factor fixed point failed to settle.
    #[error("Colebrook-White iteration did not converge (Re = {reynolds:.3e}, eps/d = {relative_roughness:.3e})")]
    FrictionNoConvergence {
        reynolds: f64,
        relative_roughness: f64,
    },

    /// Head loss of exactly zero makes the logarithm argument and the flow
    /// derivatives singular.
    #[error("head loss is zero; flow and its derivatives are singular there")]
    ZeroHeadLoss,

    /// Forward solves need a roughness value on every pipe.
    #[error("pipe '{pipe}' has no roughness value")]
    MissingRoughness { pipe: String },

    /// Hydraulic evaluation of a single pipe failed; names the culprit.
    #[error("hydraulic evaluation failed for pipe '{pipe}': {detail}")]
    PipeEvaluation { pipe: String, detail: String },

    /// The steady-state Newton iteration ran out of iterations.
    #[error("steady-state solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    SolverDiverged { iterations: usize, residual: f64 },

    /// A failure while processing one loading condition, with its 1-based
    /// index.
    #[error("load set {set}: {source}")]
    LoadSet {
        set: usize,
        #[source]
        source: Box<Error>,
    },

    /// A vector or matrix argument has the wrong size.
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// The (scaled) Jacobian lost full column rank.
    #[error("Jacobian is numerically rank deficient (condition {condition:.3e}); weakest columns {directions:?}")]
    DegenerateJacobian {
        condition: f64,
        directions: Vec<usize>,
    },

    /// The line-search merit became NaN or infinite.
    #[error("merit function is not finite at iteration {iteration}")]
    NonFiniteMerit { iteration: usize },

    /// `min_measurement_sets` with no sensors.
    #[error("at least one pressure sensor is required")]
    NoSensors,

    /// Fewer measurement sets than the break-even count requires.
    #[error("{have} measurement set(s) provided but at least {need} are required (n_m >= ceil(n_pipes / n_sensors))")]
    InsufficientMeasurementSets { have: usize, need: usize },

    /// An id in an input document does not resolve.
    #[error("unknown {kind} id '{id}'")]
    UnknownId { kind: &'static str, id: String },

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
