//! Error types shared across the crate.

use thiserror::Error;

use crate::task::Tick;

/// Errors from task-set arithmetic and policy configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("task set is empty")]
    EmptyTaskSet,
    #[error("tick arithmetic overflow while computing {0}")]
    Overflow(&'static str),
    #[error("quantum too coarse for server size (q={quantum}, u={share}): budget would be zero")]
    QuantumTooCoarse { quantum: Tick, share: f64 },
    #[error("task count must be at least 1")]
    ZeroTasks,
    #[error("metrics undefined for zero scheduled instances")]
    NoInstances,
    #[error("RM region utilization {utilization:.6} exceeds Liu-Layland bound {bound:.6} for n={n}")]
    RmBoundExceeded { utilization: f64, bound: f64, n: usize },
}

/// Scenario ingestion failures.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    /// Semantic validation collects every violation before reporting.
    #[error("scenario invalid:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ScenarioError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        ScenarioError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Task-set generator failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("task count must be at least 1")]
    ZeroTasks,
    #[error("target utilization must be positive")]
    NonPositiveUtilization,
    #[error("period range is empty")]
    EmptyPeriodRange,
    #[error(
        "target utilization {target} unreachable with n={n} and periods in [{lo}, {hi}]: \
         integer wcet >= 1 forces at least {min:.4}"
    )]
    Unreachable {
        target: f64,
        n: usize,
        lo: Tick,
        hi: Tick,
        min: f64,
    },
    #[error("could not hit target utilization {target} within tolerance after {attempts} attempts")]
    Exhausted { target: f64, attempts: usize },
}

/// Engine-level misuse (scenario validation catches everything reachable from files).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("processor {0} does not exist")]
    NoSuchProcessor(u32),
    #[error("processor {0} already has a fault scheduled")]
    DoubleFault(u32),
}
