//! Greedy placement heuristics: online Best-Fit under UCaC, the deterministic
//! n-sigma Best-Fit baseline, and the offline bi-level heuristic.
//!
//! The online algorithms see the batch as a sequence: containers are expanded
//! service by service in non-increasing `b/μ` order. Ties between machines
//! always go to the lowest index.

use std::cmp::Ordering;

use crate::gauss::{self, Confidence, FEASIBILITY_TOL};
use crate::model::{Instance, MachineLoad, Placement, ServiceSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    LowestIndex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicConfig {
    pub conf: Confidence,
    pub tie_break: TieBreak,
    /// The bi-level heuristic leaves a machine once its mean headroom
    /// `V − C_i` drops to this value.
    pub break_threshold: f64,
}

impl HeuristicConfig {
    /// Default threshold: the smallest service mean, below which no
    /// container fits on mean alone.
    pub fn new(conf: Confidence, instance: &Instance) -> Self {
        let min_mean = instance.services().iter().map(|s| s.mean).fold(f64::INFINITY, f64::min);
        Self {
            conf,
            tie_break: TieBreak::LowestIndex,
            break_threshold: if min_mean.is_finite() { min_mean } else { 0.0 },
        }
    }

    pub fn with_break_threshold(mut self, threshold: f64) -> Self {
        self.break_threshold = threshold.max(0.0);
        self
    }
}

/// Service indices in non-increasing `b/μ` order (stable).
pub fn service_order(services: &[ServiceSpec]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..services.len()).collect();
    order.sort_by(|&a, &b| services[b].normalized_uncertainty().total_cmp(&services[a].normalized_uncertainty()));
    order
}

/// One decision of [`bf_ucac_traced`].
#[derive(Debug, Clone, PartialEq)]
pub struct BfStep {
    pub service: usize,
    pub machine: usize,
    /// Machine UCaC after the container landed.
    pub ucac_after: f64,
    /// Largest post-allocation UCaC among the other feasible used machines.
    pub best_alternative: Option<f64>,
    /// The container opened a previously empty machine.
    pub opened: bool,
}

pub fn bf_ucac(instance: &Instance, conf: Confidence) -> Result<Placement> {
    bf_ucac_traced(instance, conf).map(|(p, _)| p)
}

/// BF-UCaC with the per-container audit log.
pub fn bf_ucac_traced(instance: &Instance, conf: Confidence) -> Result<(Placement, Vec<BfStep>)> {
    let services = instance.services();
    let capacity = instance.capacity();
    let n = instance.machine_count();
    let mut loads = instance.initial_loads();
    let mut used: Vec<bool> = (0..n).map(|i| !instance.cluster().initial.row_is_empty(i)).collect();
    let mut placement = Placement::zeros(n, services.len());
    let mut log = Vec::with_capacity(instance.request().total() as usize);

    for j in service_order(services) {
        let s = &services[j];
        let demand = instance.request().demands[j];
        for placed in 0..demand {
            // Best and runner-up post-allocation UCaC over used machines.
            let mut best: Option<(usize, f64)> = None;
            let mut second: Option<f64> = None;
            for i in (0..n).filter(|&i| used[i]) {
                let after = loads[i].with(s, 1);
                if !gauss::feasible(after, conf, capacity) {
                    continue;
                }
                let u = gauss::machine_ucac(after, conf);
                match best {
                    Some((_, bu)) if u <= bu => second = Some(second.map_or(u, |v: f64| v.max(u))),
                    _ => {
                        if let Some((_, bu)) = best {
                            second = Some(second.map_or(bu, |v: f64| v.max(bu)));
                        }
                        best = Some((i, u));
                    }
                }
            }
            let (machine, ucac_after, opened) = match best {
                Some((i, u)) => (i, u, false),
                None => {
                    let fresh = (0..n)
                        .find(|&i| !used[i])
                        .ok_or(Error::CapacityExhausted { service: j, remaining: u64::from(demand - placed) })?;
                    let after = loads[fresh].with(s, 1);
                    if !gauss::feasible(after, conf, capacity) {
                        return Err(Error::ServiceTooLarge { service: j });
                    }
                    (fresh, gauss::machine_ucac(after, conf), true)
                }
            };
            loads[machine] = loads[machine].with(s, 1);
            used[machine] = true;
            placement.alloc.set(machine, j, placement.alloc.get(machine, j) + 1);
            log.push(BfStep { service: j, machine, ucac_after, best_alternative: second, opened });
        }
    }
    Ok((placement, log))
}

/// Deterministic Best-Fit with container size `μ + n·√b`, `n = D(α)`.
pub fn bf_nsigma(instance: &Instance, conf: Confidence) -> Result<Placement> {
    let services = instance.services();
    let capacity = instance.capacity();
    let n = instance.machine_count();
    let sizes: Vec<f64> = services.iter().map(|s| s.mean + conf.d_alpha() * s.std_dev()).collect();
    let mut det: Vec<f64> = instance
        .cluster()
        .initial
        .rows()
        .map(|row| row.iter().zip(&sizes).map(|(&c, s)| f64::from(c) * s).sum())
        .collect();
    let mut used: Vec<bool> = (0..n).map(|i| !instance.cluster().initial.row_is_empty(i)).collect();
    let mut placement = Placement::zeros(n, services.len());

    for j in service_order(services) {
        let size = sizes[j];
        let demand = instance.request().demands[j];
        for placed in 0..demand {
            let mut best: Option<(usize, f64)> = None;
            for i in (0..n).filter(|&i| used[i]) {
                let remaining = capacity - (det[i] + size);
                if remaining < -FEASIBILITY_TOL {
                    continue;
                }
                if best.is_none_or(|(_, r)| remaining.total_cmp(&r) == Ordering::Less) {
                    best = Some((i, remaining));
                }
            }
            let machine = match best {
                Some((i, _)) => i,
                None => {
                    let fresh = (0..n)
                        .find(|&i| !used[i])
                        .ok_or(Error::CapacityExhausted { service: j, remaining: u64::from(demand - placed) })?;
                    if size > capacity + FEASIBILITY_TOL {
                        return Err(Error::ServiceTooLarge { service: j });
                    }
                    fresh
                }
            };
            det[machine] += size;
            used[machine] = true;
            placement.alloc.set(machine, j, placement.alloc.get(machine, j) + 1);
        }
    }
    Ok(placement)
}

/// Machine indices in non-increasing cumulative-uncertainty order (stable).
pub fn machine_order(loads: &[MachineLoad]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..loads.len()).collect();
    order.sort_by(|&a, &b| loads[b].sum_variance.total_cmp(&loads[a].sum_variance));
    order
}

/// Offline bi-level heuristic: machines by decreasing `B_i`, services by
/// decreasing `b/μ`, each (machine, service) pair filled to its max fit.
pub fn biheu(instance: &Instance, config: &HeuristicConfig) -> Result<Placement> {
    let services = instance.services();
    let capacity = instance.capacity();
    let conf = config.conf;
    let mut loads = instance.initial_loads();
    let mut remaining: Vec<u32> = instance.request().demands.clone();
    let mut placement = Placement::zeros(instance.machine_count(), services.len());
    let svc_order = service_order(services);

    for i in machine_order(&loads) {
        if remaining.iter().all(|&r| r == 0) {
            break;
        }
        for &j in &svc_order {
            if remaining[j] > 0 {
                let w = gauss::max_fit_count(&services[j], loads[i], conf, capacity).min(remaining[j]);
                if w > 0 {
                    loads[i] = loads[i].with(&services[j], w);
                    remaining[j] -= w;
                    placement.alloc.set(i, j, w);
                }
            }
            if capacity - loads[i].sum_mean <= config.break_threshold {
                break;
            }
        }
    }
    if let Some((j, &r)) = remaining.iter().enumerate().find(|(_, &r)| r > 0) {
        return Err(Error::CapacityExhausted { service: j, remaining: u64::from(r) });
    }
    Ok(placement)
}
