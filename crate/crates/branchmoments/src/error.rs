//! Crate error type.

use thiserror::Error;

/// Errors surfaced by model construction, simulation, fitting and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Structural problems with a model topology (all collected at once).
    #[error("invalid topology: {}", .0.join("; "))]
    Topology(Vec<String>),

    /// Parameter vector violates a documented invariant.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Hypergeometric sample size exceeds the available population.
    #[error("sample size {sample} exceeds population {population} for {context}")]
    SampleExceedsPopulation {
        sample: u64,
        population: u64,
        context: String,
    },

    /// A lineage exceeded the event budget before reaching the horizon
    /// (supercritical blow-up guard).
    #[error(
        "lineage {lineage} exceeded {max_events} events at t={t:.4} (population {population}); \
         process is likely supercritical at these rates"
    )]
    EventBudgetExceeded {
        lineage: u64,
        max_events: u64,
        t: f64,
        population: u64,
    },

    /// Numerical ODE integration failed (step size underflow).
    #[error("ODE integrator step underflow at t={t}")]
    OdeStepUnderflow { t: f64 },

    /// Data set is unusable for the requested operation.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// Fitting configuration or state error.
    #[error("fit error: {0}")]
    Fit(String),

    /// Cross-validation configuration error.
    #[error("cross-validation error: {0}")]
    CrossValidation(String),

    /// File format violation, with file and line context where available.
    #[error("parse error in {file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
