//! Generalized cutting-stock model over a pattern set, solved by
//! branch-and-bound on LP relaxations.
//!
//! Every machine takes at most one pattern; a nonempty machine must take a
//! pattern that dominates its current contents. Patterns must jointly cover
//! the request plus all existing containers. Machines with identical current
//! contents are interchangeable, so the integer program counts how many
//! machines of each such class use each pattern.

#![allow(clippy::needless_range_loop)]

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::colgen::{self, ColgenOptions, Pattern, PatternSet};
use crate::gauss::{self, Confidence};
use crate::heuristics::{self, HeuristicConfig};
use crate::lp::{LinearProgram, LpStatus, Relation, Simplex, SimplexOptions};
use crate::model::{Instance, Layout, MachineLoad, Placement};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Objective {
    /// Sum of pattern UCaCs.
    Ucac,
    /// Number of machines holding a pattern.
    MachineCount,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub time_limit: Option<Duration>,
    pub node_limit: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Self { time_limit: Some(Duration::from_secs(60)), node_limit: 1_000_000 }
    }
}

impl Budget {
    pub fn nodes(node_limit: u64) -> Self {
        Self { time_limit: None, node_limit }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CspStatus {
    Optimal,
    FeasibleWithGap,
    Infeasible,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CspSolution {
    pub status: CspStatus,
    /// Pattern index per machine; `None` leaves the machine unused.
    pub assignment: Vec<Option<usize>>,
    pub objective: f64,
    /// Best proven lower bound.
    pub bound: f64,
    /// `objective − bound`, zero when optimal.
    pub gap: f64,
    pub nodes: u64,
}

impl CspSolution {
    /// Sparse `(machine, pattern)` pairs.
    pub fn w(&self) -> Vec<(usize, usize)> {
        self.assignment.iter().enumerate().filter_map(|(i, p)| p.map(|j| (i, j))).collect()
    }

    pub fn machines_used(&self) -> usize {
        self.assignment.iter().flatten().count()
    }
}

/// JSON form of a solve: status, objective, sparse assignment and the
/// resulting placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDump {
    pub status: CspStatus,
    pub objective: f64,
    pub gap: f64,
    pub w: Vec<(usize, usize)>,
    pub placement: Layout,
}

impl SolutionDump {
    pub fn new(solution: &CspSolution, placement: &Placement) -> Self {
        Self {
            status: solution.status,
            objective: solution.objective,
            gap: solution.gap,
            w: solution.w(),
            placement: placement.alloc.clone(),
        }
    }
}

const INT_TOL: f64 = 1e-6;
const RESTART_EVERY: u64 = 1000;
/// Pattern spaces up to this size are enumerated in full, which makes the
/// search exact.
pub const ENUMERATE_UP_TO: usize = 1000;

/// Machines grouped by identical current contents.
struct MachineClass {
    machines: Vec<usize>,
    empty: bool,
}

struct Model {
    classes: Vec<MachineClass>,
    /// `(class, pattern)` per LP variable.
    vars: Vec<(usize, usize)>,
    cost: Vec<f64>,
    /// Required total per service: demand plus existing containers.
    required: Vec<u64>,
}

impl Model {
    fn build(instance: &Instance, patterns: &PatternSet, objective: Objective) -> Result<Self> {
        let cluster = instance.cluster();
        let mut classes: Vec<MachineClass> = Vec::new();
        let mut by_row: HashMap<&[u32], usize> = HashMap::new();
        for i in 0..cluster.machine_count() {
            let row = cluster.initial.row(i);
            let c = *by_row.entry(row).or_insert_with(|| {
                classes.push(MachineClass { machines: Vec::new(), empty: row.iter().all(|&z| z == 0) });
                classes.len() - 1
            });
            classes[c].machines.push(i);
        }

        let mut vars = Vec::new();
        for (c, class) in classes.iter().enumerate() {
            let row = cluster.initial.row(class.machines[0]);
            let before = vars.len();
            for (j, p) in patterns.iter().enumerate() {
                if !p.is_empty() && p.covers(row) {
                    vars.push((c, j));
                }
            }
            if !class.empty && vars.len() == before {
                return Err(Error::UncoveredMachine { machine: class.machines[0] });
            }
        }
        let cost = vars
            .iter()
            .map(|&(_, j)| match objective {
                Objective::Ucac => patterns.as_slice()[j].ucac,
                Objective::MachineCount => 1.0,
            })
            .collect();
        let existing = cluster.initial.column_totals();
        let required = instance.request().demands.iter().zip(&existing).map(|(&m, &z)| u64::from(m) + z).collect();
        Ok(Self { classes, vars, cost, required })
    }

    fn lp(&self, patterns: &PatternSet) -> LinearProgram {
        let mut lp = LinearProgram::new(self.cost.clone());
        let mut class_terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.classes.len()];
        let mut demand_terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.required.len()];
        for (v, &(c, j)) in self.vars.iter().enumerate() {
            class_terms[c].push((v, 1.0));
            for (k, &p) in patterns.as_slice()[j].counts.iter().enumerate() {
                if p > 0 {
                    demand_terms[k].push((v, f64::from(p)));
                }
            }
            lp.set_bounds(v, 0.0, self.classes[c].machines.len() as f64);
        }
        for (class, terms) in self.classes.iter().zip(class_terms) {
            let rel = if class.empty { Relation::Le } else { Relation::Eq };
            lp.add_sparse_constraint(terms, rel, class.machines.len() as f64);
        }
        for (terms, &r) in demand_terms.into_iter().zip(&self.required) {
            if r > 0 {
                lp.add_sparse_constraint(terms, Relation::Ge, r as f64);
            }
        }
        lp
    }

    /// Exact integer check of the class and demand rows.
    fn is_feasible(&self, y: &[u64], patterns: &PatternSet) -> bool {
        let mut per_class = vec![0u64; self.classes.len()];
        let mut supplied = vec![0u64; self.required.len()];
        for (v, &(c, j)) in self.vars.iter().enumerate() {
            per_class[c] += y[v];
            for (s, &p) in supplied.iter_mut().zip(&patterns.as_slice()[j].counts) {
                *s += u64::from(p) * y[v];
            }
        }
        let classes_ok = self.classes.iter().zip(&per_class).all(|(class, &n)| {
            let size = class.machines.len() as u64;
            if class.empty {
                n <= size
            } else {
                n == size
            }
        });
        classes_ok && supplied.iter().zip(&self.required).all(|(s, r)| s >= r)
    }

    fn objective(&self, y: &[u64]) -> f64 {
        y.iter().zip(&self.cost).map(|(&n, c)| n as f64 * c).sum()
    }

    /// Machines of each class take patterns in variable order.
    fn expand(&self, y: &[u64], machines: usize) -> Vec<Option<usize>> {
        let mut assignment = vec![None; machines];
        let mut next = vec![0usize; self.classes.len()];
        for (v, &(c, j)) in self.vars.iter().enumerate() {
            for _ in 0..y[v] {
                assignment[self.classes[c].machines[next[c]]] = Some(j);
                next[c] += 1;
            }
        }
        assignment
    }

    /// Class counts of a per-machine assignment, if every used pattern is a
    /// model variable.
    fn contract(&self, assignment: &[Option<usize>]) -> Option<Vec<u64>> {
        let index: HashMap<(usize, usize), usize> = self.vars.iter().enumerate().map(|(v, &cj)| (cj, v)).collect();
        let mut y = vec![0u64; self.vars.len()];
        for (c, class) in self.classes.iter().enumerate() {
            for &i in &class.machines {
                if let Some(j) = assignment[i] {
                    y[*index.get(&(c, j))?] += 1;
                }
            }
        }
        Some(y)
    }
}

struct Node {
    /// `(variable, lower, upper)` on top of the root bounds.
    bounds: Vec<(usize, f64, f64)>,
    /// Parent relaxation value.
    estimate: f64,
}

/// Branch-and-bound over the class-aggregated model.
///
/// `warm_start` is converted to patterns by exact count lookup and used as
/// the first incumbent when all its machine contents are in `patterns`.
pub fn solve_csp(
    instance: &Instance,
    patterns: &PatternSet,
    objective: Objective,
    budget: Budget,
    warm_start: Option<&Placement>,
) -> Result<CspSolution> {
    let n_machines = instance.machine_count();
    let model = Model::build(instance, patterns, objective)?;
    let lp = model.lp(patterns);
    let root_bounds: Vec<(f64, f64)> = (0..lp.num_vars()).map(|v| (lp.lower[v], lp.upper[v])).collect();
    let mut simplex = Simplex::new(&lp, SimplexOptions::default())?;

    let mut incumbent: Option<(Vec<u64>, f64)> = None;
    if let Some(p) = warm_start {
        if let Some(y) = warm_assignment(instance, patterns, p).and_then(|a| model.contract(&a)) {
            if model.is_feasible(&y, patterns) {
                let obj = model.objective(&y);
                incumbent = Some((y, obj));
            }
        }
    }

    let prune = |bound: f64, inc: f64| match objective {
        Objective::Ucac => bound >= inc - 1e-7,
        Objective::MachineCount => (bound - INT_TOL).ceil() >= inc - 0.5,
    };

    let start = Instant::now();
    let mut stack = vec![Node { bounds: Vec::new(), estimate: f64::NEG_INFINITY }];
    let mut applied: Vec<usize> = Vec::new();
    let mut nodes = 0u64;
    let mut out_of_budget = None;
    let mut root_bound = f64::NEG_INFINITY;

    while let Some(node) = stack.pop() {
        if let Some((_, inc)) = &incumbent {
            if prune(node.estimate, *inc) {
                continue;
            }
        }
        if nodes >= budget.node_limit {
            out_of_budget = Some(CspStatus::FeasibleWithGap);
            stack.push(node);
            break;
        }
        if budget.time_limit.is_some_and(|t| start.elapsed() >= t) {
            out_of_budget = Some(CspStatus::TimeLimit);
            stack.push(node);
            break;
        }
        nodes += 1;
        if nodes.is_multiple_of(RESTART_EVERY) && !stack.is_empty() {
            // Best-bound restart: dive next from the most promising open node.
            let best = (0..stack.len()).min_by(|&a, &b| stack[a].estimate.total_cmp(&stack[b].estimate)).unwrap();
            let top = stack.len() - 1;
            stack.swap(best, top);
        }

        for v in applied.drain(..) {
            simplex.set_bounds(v, root_bounds[v].0, root_bounds[v].1);
        }
        for &(v, lo, hi) in &node.bounds {
            simplex.set_bounds(v, lo, hi);
            applied.push(v);
        }
        let sol = match simplex.solve() {
            Ok(s) => s,
            // A stalled warm start falls back to a cold solve.
            Err(_) => simplex.solve()?,
        };
        if sol.status != LpStatus::Optimal {
            continue;
        }
        if node.bounds.is_empty() {
            root_bound = sol.objective_value;
        }
        if let Some((_, inc)) = &incumbent {
            if prune(sol.objective_value, *inc) {
                continue;
            }
        }

        let rounded: Vec<u64> = sol.primal.iter().map(|x| x.round().max(0.0) as u64).collect();
        let integral = sol.primal.iter().all(|x| (x - x.round()).abs() <= INT_TOL);
        if integral && model.is_feasible(&rounded, patterns) {
            let obj = model.objective(&rounded);
            if incumbent.as_ref().is_none_or(|(_, inc)| obj < *inc - 1e-9) {
                incumbent = Some((rounded, obj));
            }
            continue;
        }

        // Most fractional variable; the first one wins ties.
        let mut branch: Option<(usize, f64)> = None;
        for (v, &x) in sol.primal.iter().enumerate() {
            let frac = x - x.floor();
            if frac <= 1e-9 || frac >= 1.0 - 1e-9 {
                continue;
            }
            let dist = (frac - 0.5).abs();
            if branch.is_none_or(|(_, d)| dist < d) {
                branch = Some((v, dist));
            }
        }
        let Some((v, _)) = branch else {
            continue;
        };
        let x = sol.primal[v];
        let (lo, hi) = node.bounds.iter().rev().find(|b| b.0 == v).map(|&(_, l, u)| (l, u)).unwrap_or(root_bounds[v]);
        let child = |lo: f64, hi: f64| {
            let mut bounds: Vec<(usize, f64, f64)> = node.bounds.iter().copied().filter(|b| b.0 != v).collect();
            bounds.push((v, lo, hi));
            Node { bounds, estimate: sol.objective_value }
        };
        // The ceiling branch is explored first.
        stack.push(child(lo, x.floor()));
        stack.push(child(x.ceil(), hi));
    }

    let Some((y, obj)) = incumbent else {
        return Err(match out_of_budget {
            Some(_) => Error::BudgetExhausted { nodes },
            None => Error::Infeasible { machines: n_machines },
        });
    };
    let (status, bound) = match out_of_budget {
        None => (CspStatus::Optimal, obj),
        Some(status) => {
            let open = stack.iter().map(|n| n.estimate).fold(f64::INFINITY, f64::min);
            (status, open.max(root_bound).min(obj))
        }
    };
    Ok(CspSolution {
        status,
        assignment: model.expand(&y, n_machines),
        objective: obj,
        bound,
        gap: (obj - bound).max(0.0),
        nodes,
    })
}

/// Per-machine pattern indices of a complete placement.
fn warm_assignment(instance: &Instance, patterns: &PatternSet, placement: &Placement) -> Option<Vec<Option<usize>>> {
    let layout = instance.final_layout(placement).ok()?;
    let index: HashMap<&[u32], usize> = patterns.iter().enumerate().map(|(j, p)| (p.counts.as_slice(), j)).collect();
    layout
        .rows()
        .map(|row| if row.iter().all(|&c| c == 0) { Some(None) } else { index.get(row).map(|&j| Some(j)) })
        .collect()
}

/// Maps a pattern assignment to a placement `x_i = p − z_i`, then removes
/// surplus containers one at a time from the machine whose UCaC drops most.
pub fn placement_from_patterns(
    assignment: &[Option<usize>],
    patterns: &PatternSet,
    instance: &Instance,
    conf: Confidence,
) -> Result<Placement> {
    let services = instance.services();
    let cluster = instance.cluster();
    let n = instance.machine_count();
    let k = instance.service_count();
    if assignment.len() != n {
        return Err(Error::ShapeMismatch { expected: format!("{n} machines"), got: assignment.len().to_string() });
    }
    let mut placement = Placement::zeros(n, k);
    for (i, choice) in assignment.iter().enumerate() {
        let z = cluster.initial.row(i);
        let Some(j) = *choice else {
            continue;
        };
        let p = patterns.get(j).ok_or_else(|| Error::ShapeMismatch {
            expected: format!("pattern index below {}", patterns.len()),
            got: j.to_string(),
        })?;
        for s in 0..k {
            if p.counts[s] < z[s] {
                return Err(Error::NegativeAllocation { machine: i, pattern: j });
            }
            placement.alloc.set(i, s, p.counts[s] - z[s]);
        }
    }

    let totals = placement.alloc.column_totals();
    let mut surplus = Vec::with_capacity(k);
    for (s, (&t, &m)) in totals.iter().zip(&instance.request().demands).enumerate() {
        if t < u64::from(m) {
            log::debug!("service {s} short by {} containers", u64::from(m) - t);
            return Err(Error::Infeasible { machines: n });
        }
        surplus.push(t - u64::from(m));
    }
    let mut loads: Vec<MachineLoad> = (0..n)
        .map(|i| {
            let base = MachineLoad::of_counts(cluster.initial.row(i), services);
            placement.alloc.row(i).iter().zip(services).fold(base, |l, (&c, s)| l.with(s, c))
        })
        .collect();
    while surplus.iter().any(|&s| s > 0) {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            let before = gauss::machine_ucac(loads[i], conf);
            for s in (0..k).filter(|&s| surplus[s] > 0 && placement.alloc.get(i, s) > 0) {
                let drop = before - gauss::machine_ucac(loads[i].without(&services[s], 1), conf);
                if best.is_none_or(|(_, _, d)| drop > d + 1e-12) {
                    best = Some((i, s, drop));
                }
            }
        }
        let (i, s, _) = best.expect("surplus implies an allocated container");
        placement.alloc.set(i, s, placement.alloc.get(i, s) - 1);
        loads[i] = loads[i].without(&services[s], 1);
        surplus[s] -= 1;
    }
    Ok(placement)
}

/// Everything a full cutting-stock solve produced.
#[derive(Debug, Clone)]
pub struct CspOutcome {
    pub placement: Placement,
    pub solution: CspSolution,
    pub patterns: PatternSet,
    /// Column generation stopped at its cap.
    pub capped: bool,
}

/// Pattern generation, covering, a bi-level heuristic warm start, then
/// branch-and-bound and placement recovery.
pub fn solve_instance(
    instance: &Instance,
    conf: Confidence,
    objective: Objective,
    budget: Budget,
) -> Result<CspOutcome> {
    let patterns = generate_instance_patterns(instance, conf)?;
    solve_with_patterns(instance, conf, objective, budget, patterns.0, patterns.1)
}

/// Column generation against demand plus existing containers, followed by
/// cover patterns for the nonempty machines.
pub fn generate_instance_patterns(instance: &Instance, conf: Confidence) -> Result<(PatternSet, bool)> {
    let existing = instance.cluster().initial.column_totals();
    let required: Vec<u64> =
        instance.request().demands.iter().zip(&existing).map(|(&m, &z)| u64::from(m) + z).collect();
    let generated =
        colgen::generate_patterns(instance.services(), conf, instance.capacity(), &required, ColgenOptions::default())?;
    let patterns = colgen::cover_patterns(generated.patterns, instance.cluster(), instance.services(), conf);
    Ok((patterns, generated.capped))
}

/// [`solve_instance`] with a precomputed pattern set.
pub fn solve_with_patterns(
    instance: &Instance,
    conf: Confidence,
    objective: Objective,
    budget: Budget,
    patterns: PatternSet,
    capped: bool,
) -> Result<CspOutcome> {
    let mut patterns = colgen::cover_patterns(patterns, instance.cluster(), instance.services(), conf);
    if let Some(all) =
        colgen::enumerate_feasible_patterns(instance.services(), conf, instance.capacity(), ENUMERATE_UP_TO)
    {
        for counts in all {
            patterns.insert(Pattern::new(counts, instance.services(), conf));
        }
    }
    let warm = heuristics::biheu(instance, &HeuristicConfig::new(conf, instance)).ok();
    if let Some(w) = &warm {
        for row in instance.final_layout(w)?.rows() {
            if row.iter().any(|&c| c > 0) {
                patterns.insert(Pattern::new(row.to_vec(), instance.services(), conf));
            }
        }
    }
    let solution = solve_csp(instance, &patterns, objective, budget, warm.as_ref())?;
    let placement = placement_from_patterns(&solution.assignment, &patterns, instance, conf)?;
    Ok(CspOutcome { placement, solution, patterns, capped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_instance, BatchRequest, ClusterState, ServiceSpec};
    use approx::assert_abs_diff_eq;

    fn d2() -> Confidence {
        Confidence::from_quantile(2.0).unwrap()
    }

    fn svc() -> ServiceSpec {
        ServiceSpec::new("a", 2.0, 1.0, 8.0)
    }

    fn set_of(counts: &[&[u32]]) -> PatternSet {
        counts.iter().map(|c| Pattern::new(c.to_vec(), &[svc()], d2())).collect()
    }

    #[test]
    fn empty_cluster_single_service() {
        let inst =
            validate_instance(vec![svc()], ClusterState::empty(10.0, 4, 1), BatchRequest::new(vec![6]), d2()).unwrap();
        let patterns = set_of(&[&[3], &[2], &[1]]);
        let sol = solve_csp(&inst, &patterns, Objective::Ucac, Budget::default(), None).unwrap();
        assert_eq!(sol.status, CspStatus::Optimal);
        assert_eq!(sol.machines_used(), 2);
        assert_eq!(sol.w(), vec![(0, 0), (1, 0)]);
        assert_abs_diff_eq!(sol.objective, 2.0 * (6.0 + 2.0 * 3f64.sqrt()), epsilon = 1e-9);
        assert_abs_diff_eq!(sol.objective, 18.93, epsilon = 0.01);
    }

    #[test]
    fn zero_request_uses_nothing() {
        let inst =
            validate_instance(vec![svc()], ClusterState::empty(10.0, 3, 1), BatchRequest::new(vec![0]), d2()).unwrap();
        let patterns = set_of(&[&[3]]);
        let sol = solve_csp(&inst, &patterns, Objective::Ucac, Budget::default(), None).unwrap();
        assert!(sol.w().is_empty());
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn uncovered_machine_is_an_error() {
        let cluster = ClusterState { capacity: 10.0, initial: Layout::from_rows(&[vec![2], vec![0]], 1).unwrap() };
        let inst = validate_instance(vec![svc()], cluster, BatchRequest::new(vec![1]), d2()).unwrap();
        let patterns = set_of(&[&[1]]);
        let err = solve_csp(&inst, &patterns, Objective::Ucac, Budget::default(), None).unwrap_err();
        assert!(matches!(err, Error::UncoveredMachine { machine: 0 }));
    }

    #[test]
    fn too_few_machines_is_infeasible() {
        let inst =
            validate_instance(vec![svc()], ClusterState::empty(10.0, 1, 1), BatchRequest::new(vec![5]), d2()).unwrap();
        let err = solve_csp(&inst, &set_of(&[&[3], &[2], &[1]]), Objective::Ucac, Budget::default(), None);
        assert!(matches!(err, Err(Error::Infeasible { machines: 1 })));
    }

    #[test]
    fn nonempty_pair() {
        // Two machines holding one container each; two more arrive.
        let cluster = ClusterState { capacity: 10.0, initial: Layout::from_rows(&[vec![1], vec![1]], 1).unwrap() };
        let inst = validate_instance(vec![svc()], cluster, BatchRequest::new(vec![2]), d2()).unwrap();
        let patterns = set_of(&[&[3], &[2], &[1]]);
        let u = |n: f64| 2.0 * n + 2.0 * n.sqrt();
        let by_ucac = solve_csp(&inst, &patterns, Objective::Ucac, Budget::default(), None).unwrap();
        // Options covering 4 containers on two machines: (3,1) or (2,2).
        assert_abs_diff_eq!(by_ucac.objective, u(3.0) + u(1.0), epsilon = 1e-9);
        let p = placement_from_patterns(&by_ucac.assignment, &patterns, &inst, d2()).unwrap();
        inst.check_placement(&p, d2()).unwrap();
        assert!(u(3.0) + u(1.0) < 2.0 * u(2.0));
    }

    #[test]
    fn placement_subtracts_existing() {
        let cluster = ClusterState { capacity: 10.0, initial: Layout::from_rows(&[vec![1], vec![0]], 1).unwrap() };
        let inst = validate_instance(vec![svc()], cluster, BatchRequest::new(vec![5]), d2()).unwrap();
        let patterns = set_of(&[&[3]]);
        let p = placement_from_patterns(&[Some(0), Some(0)], &patterns, &inst, d2()).unwrap();
        assert_eq!(p.alloc.to_rows(), vec![vec![2], vec![3]]);

        let err = placement_from_patterns(&[Some(0), None], &set_of(&[&[0]]), &inst, d2()).unwrap_err();
        assert!(matches!(err, Error::NegativeAllocation { machine: 0, pattern: 0 }));
    }

    #[test]
    fn surplus_trimmed_where_ucac_drops_most() {
        // Patterns (3) and (2) give 5 containers for a demand of 4. Removing from
        // the machine with 2 drops 2 + 2(√2 − 1) ≈ 2.83, from 3 drops
        // 2 + 2(√3 − √2) ≈ 2.64.
        let inst =
            validate_instance(vec![svc()], ClusterState::empty(10.0, 2, 1), BatchRequest::new(vec![4]), d2()).unwrap();
        let patterns = set_of(&[&[3], &[2]]);
        let p = placement_from_patterns(&[Some(0), Some(1)], &patterns, &inst, d2()).unwrap();
        assert_eq!(p.alloc.to_rows(), vec![vec![3], vec![1]]);
    }

    #[test]
    fn warm_start_is_accepted() {
        let inst =
            validate_instance(vec![svc()], ClusterState::empty(10.0, 3, 1), BatchRequest::new(vec![7]), d2()).unwrap();
        let warm = heuristics::biheu(&inst, &HeuristicConfig::new(d2(), &inst)).unwrap();
        let patterns = set_of(&[&[3], &[1]]);
        let sol = solve_csp(&inst, &patterns, Objective::Ucac, Budget::nodes(0), Some(&warm)).unwrap();
        assert_eq!(sol.status, CspStatus::FeasibleWithGap);
        assert_eq!(sol.assignment, vec![Some(0), Some(0), Some(1)]);
    }

    #[test]
    fn full_solve_both_objectives() {
        let services = vec![ServiceSpec::new("a", 2.0, 1.0, 8.0), ServiceSpec::new("b", 1.0, 0.2, 4.0)];
        let cluster = ClusterState {
            capacity: 10.0,
            initial: Layout::from_rows(&[vec![1, 2], vec![0, 0], vec![0, 0], vec![2, 0]], 2).unwrap(),
        };
        let inst = validate_instance(services, cluster, BatchRequest::new(vec![3, 4]), d2()).unwrap();
        for obj in [Objective::Ucac, Objective::MachineCount] {
            let out = solve_instance(&inst, d2(), obj, Budget::default()).unwrap();
            assert_eq!(out.solution.status, CspStatus::Optimal);
            inst.check_placement(&out.placement, d2()).unwrap();
        }
    }

    #[test]
    fn dump_shape() {
        let inst =
            validate_instance(vec![svc()], ClusterState::empty(10.0, 2, 1), BatchRequest::new(vec![3]), d2()).unwrap();
        let out = solve_instance(&inst, d2(), Objective::Ucac, Budget::default()).unwrap();
        let json = serde_json::to_value(SolutionDump::new(&out.solution, &out.placement)).unwrap();
        assert_eq!(json["status"], "optimal");
        assert_eq!(json["w"], serde_json::json!([[0, 0]]));
        assert_eq!(json["placement"], serde_json::json!([[3], [0]]));
    }
}
