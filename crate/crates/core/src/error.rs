use thiserror::Error;

use crate::lp::LpError;
use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("probability {0} is outside (0, 1)")]
    InvalidProbability(f64),

    #[error("confidence level {0} is outside (0.5, 1)")]
    InvalidAlpha(f64),

    #[error("invalid instance:\n{0}")]
    Invalid(ValidationReport),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    /// Demand could not be placed even after trying every machine.
    #[error("capacity exhausted: {remaining} container(s) of service {service} left unplaced")]
    CapacityExhausted { service: usize, remaining: u64 },

    #[error("service {service} does not fit on an empty machine")]
    ServiceTooLarge { service: usize },

    #[error("nonempty machine {machine} is not covered by any pattern")]
    UncoveredMachine { machine: usize },

    #[error("no feasible pattern assignment within {machines} machines")]
    Infeasible { machines: usize },

    #[error("search budget exhausted after {nodes} nodes without a feasible assignment")]
    BudgetExhausted { nodes: u64 },

    #[error("pattern {pattern} does not cover machine {machine}")]
    NegativeAllocation { machine: usize, pattern: usize },

    #[error("service count {0} is outside 1..=17")]
    ServiceCount(usize),

    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error(transparent)]
    Lp(#[from] LpError),
}

impl Error {
    /// True for errors that mean "no placement was found", as opposed to
    /// malformed input.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::CapacityExhausted { .. }
                | Error::Infeasible { .. }
                | Error::ServiceTooLarge { .. }
                | Error::BudgetExhausted { .. }
        )
    }
}
