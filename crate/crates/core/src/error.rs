use std::path::PathBuf;

use thiserror::Error;

/// Constraint family named in infeasibility reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintFamily {
    /// Per-UE SINR requirement.
    Qos,
    /// Per-AP transmit power budget.
    PowerBudget,
}

impl std::fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstraintFamily::Qos => f.write_str("QoS (SINR threshold)"),
            ConstraintFamily::PowerBudget => f.write_str("per-AP power budget"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no nontrivial nullspace: {rows} stacked UE-channel rows vs {cols} transmit dimensions")]
    InfeasiblePrecoder { rows: usize, cols: usize },

    #[error("infeasible constraint: {0}")]
    InfeasibleConstraint(String),

    #[error("power allocation infeasible: {family} constraints cannot be met")]
    Infeasible { family: ConstraintFamily },

    #[error("problem is unbounded")]
    Unbounded,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("inner solver failed at CCP iteration {iteration}: {source}")]
    InnerSolve {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("calibration needs at least {needed} trials for p_fa = {p_fa} (got {trials}); smallest resolvable p_fa is {min_p_fa}")]
    Calibration {
        p_fa: f64,
        trials: usize,
        needed: usize,
        min_p_fa: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
