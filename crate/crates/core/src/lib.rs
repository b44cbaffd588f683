//! Batch stochastic bin packing on empty and nonempty machines.
//!
//! Containers of `K` services have Gaussian CPU usage. A machine is feasible
//! when its Used Capacity at Confidence (UCaC), `Σμ + Φ⁻¹(α)·√(Σσ²)`, stays
//! within the machine capacity. The crate provides:
//!
//! * [`model`]: instances, layouts, placements and their JSON encoding.
//! * [`gauss`]: normal quantile/CDF and all UCaC arithmetic.
//! * [`heuristics`]: BF-UCaC, BF-nσ and the bi-level offline heuristic.
//! * [`lp`]: a dense bounded revised simplex.
//! * [`colgen`]: pattern generation by column generation and exact pricing.
//! * [`csp`]: the generalized cutting-stock model solved by branch-and-bound.
//! * [`sim`]: synthetic scenarios, Monte Carlo violations, multi-day runs.

pub mod colgen;
pub mod csp;
mod error;
pub mod gauss;
pub mod heuristics;
pub mod lp;
pub mod model;
pub mod par;
pub mod sim;

pub use error::{Error, Result};
pub use gauss::Confidence;
pub use model::{BatchRequest, ClusterState, Instance, Layout, MachineLoad, Placement, ServiceSpec};

/// Solver selection shared by the simulator and the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    BfNsigma,
    BfUcac,
    Biheu,
    CspUcac,
    CspMac,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::BfNsigma, Algorithm::BfUcac, Algorithm::Biheu, Algorithm::CspUcac, Algorithm::CspMac];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::BfNsigma => "bf-nsigma",
            Algorithm::BfUcac => "bf-ucac",
            Algorithm::Biheu => "biheu",
            Algorithm::CspUcac => "csp-ucac",
            Algorithm::CspMac => "csp-mac",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| Error::UnknownName(s.to_string()))
    }
}

/// Runs one of the five placement algorithms on a validated instance.
pub fn solve(algo: Algorithm, instance: &Instance, conf: Confidence, budget: csp::Budget) -> Result<Placement> {
    match algo {
        Algorithm::BfNsigma => heuristics::bf_nsigma(instance, conf),
        Algorithm::BfUcac => heuristics::bf_ucac(instance, conf),
        Algorithm::Biheu => heuristics::biheu(instance, &heuristics::HeuristicConfig::new(conf, instance)),
        Algorithm::CspUcac => csp::solve_instance(instance, conf, csp::Objective::Ucac, budget).map(|r| r.placement),
        Algorithm::CspMac => {
            csp::solve_instance(instance, conf, csp::Objective::MachineCount, budget).map(|r| r.placement)
        }
    }
}
