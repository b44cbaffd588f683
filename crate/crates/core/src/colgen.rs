//! Pattern generation for the cutting-stock model.
//!
//! A pattern is a feasible per-machine vector of container counts. The
//! restricted master problem `min Σv  s.t.  Pv ≥ d,  v ≥ 0` is solved by the
//! [`lp`](crate::lp) core; its duals price new patterns through an exact
//! branch-and-bound over the nonlinear knapsack
//! `max πᵀp  s.t.  Σμp + D√(Σbp) ≤ V`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::gauss::{self, Confidence, FEASIBILITY_TOL};
use crate::heuristics::service_order;
use crate::lp::{self, LinearProgram, LpStatus, Relation, SimplexOptions};
use crate::model::{ClusterState, MachineLoad, ServiceSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub counts: Vec<u32>,
    pub ucac: f64,
}

impl Pattern {
    pub fn new(counts: Vec<u32>, services: &[ServiceSpec], conf: Confidence) -> Self {
        let ucac = gauss::machine_ucac(MachineLoad::of_counts(&counts, services), conf);
        Self { counts, ucac }
    }

    pub fn load(&self, services: &[ServiceSpec]) -> MachineLoad {
        MachineLoad::of_counts(&self.counts, services)
    }

    /// Componentwise `self ≥ row`.
    pub fn covers(&self, row: &[u32]) -> bool {
        self.counts.iter().zip(row).all(|(p, z)| p >= z)
    }

    pub fn is_feasible(&self, capacity: f64) -> bool {
        self.ucac <= capacity + FEASIBILITY_TOL
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }
}

/// Patterns in insertion order, deduplicated by count vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatternSet {
    patterns: Vec<Pattern>,
    seen: HashSet<Vec<u32>>,
}

impl PatternSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `pattern` unless its counts are already present. Returns whether
    /// it was added.
    pub fn insert(&mut self, pattern: Pattern) -> bool {
        if !self.seen.insert(pattern.counts.clone()) {
            return false;
        }
        self.patterns.push(pattern);
        true
    }

    pub fn contains(&self, counts: &[u32]) -> bool {
        self.seen.contains(counts)
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Pattern> {
        self.patterns.get(index)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Pattern> {
        self.patterns.iter()
    }

    pub fn as_slice(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn into_vec(self) -> Vec<Pattern> {
        self.patterns
    }
}

impl FromIterator<Pattern> for PatternSet {
    fn from_iter<I: IntoIterator<Item = Pattern>>(iter: I) -> Self {
        let mut set = PatternSet::new();
        for p in iter {
            set.insert(p);
        }
        set
    }
}

impl<'a> IntoIterator for &'a PatternSet {
    type Item = &'a Pattern;
    type IntoIter = std::slice::Iter<'a, Pattern>;

    fn into_iter(self) -> Self::IntoIter {
        self.patterns.iter()
    }
}

impl Serialize for PatternSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.patterns.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PatternSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        Ok(Vec::<Pattern>::deserialize(deserializer)?.into_iter().collect())
    }
}

/// One diagonal pattern per service, each holding as many containers of that
/// service as fit on an empty machine.
pub fn initial_patterns(services: &[ServiceSpec], conf: Confidence, capacity: f64) -> Result<PatternSet> {
    let k = services.len();
    let mut set = PatternSet::new();
    for (j, s) in services.iter().enumerate() {
        let w = gauss::max_fit_count(s, MachineLoad::EMPTY, conf, capacity);
        if w == 0 {
            return Err(Error::ServiceTooLarge { service: j });
        }
        let mut counts = vec![0; k];
        counts[j] = w;
        set.insert(Pattern::new(counts, services, conf));
    }
    Ok(set)
}

/// Feasible pattern maximizing `πᵀp`, with reduced cost `1 − πᵀp`.
pub fn price_pattern(duals: &[f64], services: &[ServiceSpec], conf: Confidence, capacity: f64) -> (Vec<u32>, f64) {
    let k = services.len();
    let mut order: Vec<usize> = (0..k).filter(|&j| duals[j] > 0.0).collect();
    order.sort_by(|&a, &b| (duals[b] / services[b].mean).total_cmp(&(duals[a] / services[a].mean)));
    let mut search = Pricing {
        duals,
        services,
        conf,
        capacity,
        order: &order,
        current: vec![0; k],
        best: vec![0; k],
        best_value: 0.0,
    };
    search.descend(0, MachineLoad::EMPTY, 0.0);
    let value: f64 = search.best.iter().zip(duals).map(|(&c, &p)| f64::from(c) * p).sum();
    (search.best, 1.0 - value)
}

struct Pricing<'a> {
    duals: &'a [f64],
    services: &'a [ServiceSpec],
    conf: Confidence,
    capacity: f64,
    order: &'a [usize],
    current: Vec<u32>,
    best: Vec<u32>,
    best_value: f64,
}

impl Pricing<'_> {
    /// Upper bound on the dual value still reachable from `depth` on.
    fn bound(&self, depth: usize, load: MachineLoad) -> f64 {
        let rest = &self.order[depth..];
        let max_add: Vec<u32> =
            rest.iter().map(|&j| gauss::max_fit_count(&self.services[j], load, self.conf, self.capacity)).collect();
        let by_count: f64 = rest.iter().zip(&max_add).map(|(&j, &w)| self.duals[j] * f64::from(w)).sum();

        // Fractional knapsack on the mean budget left once the current
        // uncertainty term is paid; items are already in π/μ order.
        let mut budget =
            (self.capacity + FEASIBILITY_TOL - load.sum_mean - self.conf.d_alpha() * load.sum_variance.max(0.0).sqrt())
                .max(0.0);
        let mut by_mean = 0.0;
        for (&j, &w) in rest.iter().zip(&max_add) {
            let mu = self.services[j].mean;
            let take = f64::from(w).min(budget / mu);
            by_mean += take * self.duals[j];
            budget -= take * mu;
            if budget <= 0.0 {
                break;
            }
        }
        by_count.min(by_mean)
    }

    fn descend(&mut self, depth: usize, load: MachineLoad, value: f64) {
        if value > self.best_value + 1e-12 {
            self.best_value = value;
            self.best.clone_from(&self.current);
        }
        if depth == self.order.len() || value + self.bound(depth, load) <= self.best_value + 1e-12 {
            return;
        }
        let j = self.order[depth];
        let s = &self.services[j];
        let max = gauss::max_fit_count(s, load, self.conf, self.capacity);
        for w in (0..=max).rev() {
            self.current[j] = w;
            self.descend(depth + 1, load.with(s, w), value + self.duals[j] * f64::from(w));
        }
        self.current[j] = 0;
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ColgenOptions {
    /// Patterns are added while their reduced cost is below `-tol`.
    pub tol: f64,
    /// Most patterns added by pricing before giving up.
    pub max_columns: usize,
    pub simplex: SimplexOptions,
}

impl Default for ColgenOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_columns: 500, simplex: SimplexOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub patterns: PatternSet,
    /// The column cap stopped generation before convergence.
    pub capped: bool,
    /// Master objective after each solve; non-increasing.
    pub rmp_objectives: Vec<f64>,
    /// Final master duals.
    pub duals: Vec<f64>,
}

/// Column generation from the diagonal patterns until no pattern prices
/// below `-tol` or the column cap is hit.
pub fn generate_patterns(
    services: &[ServiceSpec],
    conf: Confidence,
    capacity: f64,
    demands: &[u64],
    opts: ColgenOptions,
) -> Result<Generated> {
    let k = services.len();
    if demands.len() != k {
        return Err(Error::ShapeMismatch { expected: format!("{k} demands"), got: demands.len().to_string() });
    }
    let mut patterns = initial_patterns(services, conf, capacity)?;
    let mut rmp_objectives = Vec::new();
    let mut added = 0;
    loop {
        let mut rmp = LinearProgram::new(vec![1.0; patterns.len()]);
        for (row, &d) in demands.iter().enumerate() {
            let terms = patterns
                .iter()
                .enumerate()
                .filter(|(_, p)| p.counts[row] > 0)
                .map(|(j, p)| (j, f64::from(p.counts[row])))
                .collect();
            rmp.add_sparse_constraint(terms, Relation::Ge, d as f64);
        }
        let sol = lp::solve_lp_with(&rmp, opts.simplex)?;
        debug_assert_eq!(sol.status, LpStatus::Optimal);
        rmp_objectives.push(sol.objective_value);
        let duals: Vec<f64> = sol.dual.iter().map(|y| y.max(0.0)).collect();

        let (counts, reduced) = price_pattern(&duals, services, conf, capacity);
        if reduced >= -opts.tol || patterns.contains(&counts) {
            return Ok(Generated { patterns, capped: false, rmp_objectives, duals });
        }
        if added == opts.max_columns {
            log::warn!("column generation stopped at the {}-column cap", opts.max_columns);
            return Ok(Generated { patterns, capped: true, rmp_objectives, duals });
        }
        patterns.insert(Pattern::new(counts, services, conf));
        added += 1;
    }
}

/// Greedy extension of `base`: services in non-increasing `b/μ` order, each
/// filled to its max fit.
pub fn extend_greedy(base: &[u32], services: &[ServiceSpec], conf: Confidence, capacity: f64) -> Vec<u32> {
    let mut counts = base.to_vec();
    let mut load = MachineLoad::of_counts(base, services);
    for j in service_order(services) {
        let w = gauss::max_fit_count(&services[j], load, conf, capacity);
        counts[j] += w;
        load = load.with(&services[j], w);
    }
    counts
}

/// Ensures every nonempty machine's current contents are dominated by some
/// pattern, adding the contents and their greedy extension when not.
pub fn cover_patterns(
    mut set: PatternSet,
    cluster: &ClusterState,
    services: &[ServiceSpec],
    conf: Confidence,
) -> PatternSet {
    for i in cluster.nonempty_machines() {
        let row = cluster.initial.row(i);
        if set.iter().any(|p| p.covers(row)) {
            continue;
        }
        set.insert(Pattern::new(row.to_vec(), services, conf));
        let ext = extend_greedy(row, services, conf, cluster.capacity);
        set.insert(Pattern::new(ext, services, conf));
    }
    set
}

/// Every nonzero feasible pattern, or `None` once more than `limit` exist.
pub fn enumerate_feasible_patterns(
    services: &[ServiceSpec],
    conf: Confidence,
    capacity: f64,
    limit: usize,
) -> Option<Vec<Vec<u32>>> {
    fn walk(
        j: usize,
        load: MachineLoad,
        counts: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
        ctx: (&[ServiceSpec], Confidence, f64, usize),
    ) -> bool {
        let (services, conf, capacity, limit) = ctx;
        if j == services.len() {
            if counts.iter().any(|&c| c > 0) {
                if out.len() == limit {
                    return false;
                }
                out.push(counts.clone());
            }
            return true;
        }
        let max = gauss::max_fit_count(&services[j], load, conf, capacity);
        for w in 0..=max {
            counts[j] = w;
            if !walk(j + 1, load.with(&services[j], w), counts, out, ctx) {
                return false;
            }
        }
        counts[j] = 0;
        true
    }
    let mut out = Vec::new();
    let mut counts = vec![0; services.len()];
    walk(0, MachineLoad::EMPTY, &mut counts, &mut out, (services, conf, capacity, limit)).then_some(out)
}

/// Patterns cached on disk together with the inputs they were generated for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternCache {
    pub capacity: f64,
    pub alpha: f64,
    pub services: Vec<ServiceSpec>,
    pub patterns: PatternSet,
    #[serde(default)]
    pub capped: bool,
}

impl PatternCache {
    /// Whether this cache was generated for exactly these inputs.
    pub fn matches(&self, services: &[ServiceSpec], capacity: f64, conf: Confidence) -> bool {
        self.capacity == capacity && self.alpha == conf.alpha() && self.services == services
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Layout;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn d2() -> Confidence {
        Confidence::from_quantile(2.0).unwrap()
    }

    fn svc(mean: f64, var: f64) -> ServiceSpec {
        ServiceSpec::new("s", mean, var, mean * 3.0)
    }

    fn dual_value(p: &[u32], duals: &[f64]) -> f64 {
        p.iter().zip(duals).map(|(&c, &d)| f64::from(c) * d).sum()
    }

    #[test]
    fn diagonal_start() {
        let services = [svc(2.0, 1.0), svc(3.0, 0.0)];
        let set = initial_patterns(&services, d2(), 10.0).unwrap();
        let counts: Vec<_> = set.iter().map(|p| p.counts.clone()).collect();
        assert_eq!(counts, vec![vec![3, 0], vec![0, 3]]);

        let set = initial_patterns(&[svc(10.0, 0.0)], d2(), 10.0).unwrap();
        assert_eq!(set.get(0).unwrap().counts, vec![1]);

        assert!(matches!(initial_patterns(&[svc(10.5, 0.0)], d2(), 10.0), Err(Error::ServiceTooLarge { service: 0 })));
    }

    #[test]
    fn pricing_examples() {
        let services = [svc(5.0, 0.0), svc(4.0, 0.0)];
        let (p, rc) = price_pattern(&[0.0, 0.0], &services, d2(), 10.0);
        assert_eq!(p, vec![0, 0]);
        assert_eq!(rc, 1.0);

        // (2,0), (1,1) and (0,2) all reach πᵀp = 1.
        let (p, rc) = price_pattern(&[0.5, 0.5], &services, d2(), 10.0);
        assert_abs_diff_eq!(dual_value(&p, &[0.5, 0.5]), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rc, 0.0, epsilon = 1e-12);

        let (p, rc) = price_pattern(&[0.4], &[svc(2.0, 1.0)], d2(), 10.0);
        assert_eq!(p, vec![3]);
        assert_abs_diff_eq!(rc, -0.2, epsilon = 1e-12);
    }

    #[test]
    fn single_service_converges_immediately() {
        let services = [svc(2.0, 1.0)];
        let g = generate_patterns(&services, d2(), 10.0, &[7], ColgenOptions::default()).unwrap();
        assert_eq!(g.patterns.len(), 1);
        assert_eq!(g.rmp_objectives.len(), 1);
        assert!(!g.capped);
    }

    #[test]
    fn mixed_pattern_is_generated() {
        // Diagonal patterns (1,0) and (0,2) need 15 machines; (1,1) fills a
        // machine exactly and brings the master down to 10.
        let services = [svc(6.0, 0.0), svc(4.0, 0.0)];
        let g = generate_patterns(&services, d2(), 10.0, &[10, 10], ColgenOptions::default()).unwrap();
        assert!(g.patterns.contains(&[1, 1]));
        assert_abs_diff_eq!(g.rmp_objectives[0], 15.0, epsilon = 1e-9);
        assert_abs_diff_eq!(*g.rmp_objectives.last().unwrap(), 10.0, epsilon = 1e-9);
        let all = enumerate_feasible_patterns(&services, d2(), 10.0, 1000).unwrap();
        for p in &all {
            assert!(1.0 - dual_value(p, &g.duals) >= -1e-6, "{p:?} prices out");
        }
    }

    #[test]
    fn diagonal_can_already_be_optimal() {
        // With μ = (5, 4) the diagonal master is already optimal at 10: (1,1)
        // prices at exactly zero.
        let services = [svc(5.0, 0.0), svc(4.0, 0.0)];
        let g = generate_patterns(&services, d2(), 10.0, &[10, 10], ColgenOptions::default()).unwrap();
        assert_eq!(g.patterns.len(), 2);
        assert_abs_diff_eq!(g.rmp_objectives[0], 10.0, epsilon = 1e-9);
    }

    #[test]
    fn column_cap_sets_flag() {
        let services = [svc(1.0, 0.3), svc(1.7, 0.1), svc(2.3, 0.9)];
        let opts = ColgenOptions { max_columns: 0, ..Default::default() };
        let g = generate_patterns(&services, d2(), 10.0, &[10, 7, 5], opts).unwrap();
        assert!(g.capped);
        assert_eq!(g.patterns.len(), 3);
    }

    #[test]
    fn cover_adds_contents_and_extension() {
        let services = [svc(2.0, 1.0), svc(3.0, 0.0)];
        let set = initial_patterns(&services, d2(), 10.0).unwrap();

        let empty = ClusterState::empty(10.0, 3, 2);
        assert_eq!(cover_patterns(set.clone(), &empty, &services, d2()), set);

        let cluster =
            ClusterState { capacity: 10.0, initial: Layout::from_rows(&[vec![1, 1], vec![0, 0]], 2).unwrap() };
        let covered = cover_patterns(set.clone(), &cluster, &services, d2());
        assert_eq!(covered.len(), 4);
        assert!(covered.contains(&[1, 1]));
        // b/μ order puts service 0 first: (1,1) -> (2,1) at 4+3+2√2 ≤ 10, a third
        // would need 6+3+2√3 > 10; then service 1 cannot grow.
        assert!(covered.contains(&[2, 1]));

        let dominated = ClusterState { capacity: 10.0, initial: Layout::from_rows(&[vec![2, 0]], 2).unwrap() };
        assert_eq!(cover_patterns(set.clone(), &dominated, &services, d2()), set);
    }

    #[test]
    fn enumeration_limit() {
        let services = [svc(1.0, 0.0)];
        assert_eq!(enumerate_feasible_patterns(&services, d2(), 3.0, 10).unwrap(), vec![vec![1], vec![2], vec![3]]);
        assert!(enumerate_feasible_patterns(&services, d2(), 3.0, 2).is_none());
    }

    #[test]
    fn dedup() {
        let services = [svc(1.0, 0.0)];
        let mut set = PatternSet::new();
        assert!(set.insert(Pattern::new(vec![2], &services, d2())));
        assert!(!set.insert(Pattern::new(vec![2], &services, d2())));
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn cache_round_trip() {
        let services = vec![svc(2.0, 1.0), svc(3.0, 0.0)];
        let cache = PatternCache {
            capacity: 10.0,
            alpha: d2().alpha(),
            services: services.clone(),
            patterns: initial_patterns(&services, d2(), 10.0).unwrap(),
            capped: false,
        };
        let text = serde_json::to_string(&cache).unwrap();
        let back: PatternCache = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cache);
        assert!(back.matches(&services, 10.0, d2()));
        assert!(!back.matches(&services, 10.0, Confidence::new(0.99).unwrap()));
    }

    fn small_services() -> impl Strategy<Value = Vec<ServiceSpec>> {
        prop::collection::vec((0.5f64..4.0, 0.0f64..2.0), 1..=3)
            .prop_map(|v| v.into_iter().map(|(m, b)| svc(m, b)).collect())
    }

    proptest! {
        #[test]
        fn pricing_is_exact(services in small_services(), duals in prop::collection::vec(0.0f64..1.0, 3)) {
            let duals = &duals[..services.len()];
            let (p, rc) = price_pattern(duals, &services, d2(), 10.0);
            let best = enumerate_feasible_patterns(&services, d2(), 10.0, 100_000)
                .unwrap()
                .iter()
                .map(|q| dual_value(q, duals))
                .fold(0.0, f64::max);
            prop_assert!((1.0 - rc - best).abs() <= 1e-9);
            prop_assert!(Pattern::new(p, &services, d2()).is_feasible(10.0));
        }

        #[test]
        fn generation_certificate(services in small_services(), demands in prop::collection::vec(0u64..40, 3)) {
            let demands = &demands[..services.len()];
            let g = generate_patterns(&services, d2(), 10.0, demands, ColgenOptions::default()).unwrap();
            for w in g.rmp_objectives.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
            for p in &g.patterns {
                prop_assert!(p.is_feasible(10.0));
            }
            for p in enumerate_feasible_patterns(&services, d2(), 10.0, 100_000).unwrap() {
                prop_assert!(1.0 - dual_value(&p, &g.duals) >= -1e-6);
            }
        }
    }
}
