//! Domain types shared by every solver: services, cluster layouts, requests
//! and placements, plus their canonical JSON forms.
//!
//! Services are indexed `0..K` in declaration order and machines `0..N`;
//! every matrix is dense and row-major with one row per machine.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::gauss::{self, Confidence};
use crate::{Error, Result};

/// Gaussian usage model of one service's containers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub id: String,
    /// Mean usage in cores.
    pub mean: f64,
    /// Uncertainty term `b`, the variance for Gaussian usage (cores²).
    pub variance: f64,
    /// Per-container usage cap; only the sampler looks at it.
    pub limit: f64,
}

impl ServiceSpec {
    pub fn new(id: impl Into<String>, mean: f64, variance: f64, limit: f64) -> Self {
        Self { id: id.into(), mean, variance, limit }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Normalized uncertainty `b/μ` used to order services.
    pub fn normalized_uncertainty(&self) -> f64 {
        self.variance / self.mean
    }
}

/// Dense `machines × services` matrix of container counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Layout {
    machines: usize,
    services: usize,
    counts: Vec<u32>,
}

impl Layout {
    pub fn zeros(machines: usize, services: usize) -> Self {
        Self { machines, services, counts: vec![0; machines * services] }
    }

    /// Builds a layout from rows; every row must have `services` entries.
    pub fn from_rows(rows: &[Vec<u32>], services: usize) -> Result<Self> {
        let mut counts = Vec::with_capacity(rows.len() * services);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != services {
                return Err(Error::ShapeMismatch {
                    expected: format!("{services} services in row {i}"),
                    got: format!("{}", row.len()),
                });
            }
            counts.extend_from_slice(row);
        }
        Ok(Self { machines: rows.len(), services, counts })
    }

    pub fn machines(&self) -> usize {
        self.machines
    }

    pub fn services(&self) -> usize {
        self.services
    }

    pub fn get(&self, machine: usize, service: usize) -> u32 {
        self.counts[machine * self.services + service]
    }

    pub fn set(&mut self, machine: usize, service: usize, value: u32) {
        self.counts[machine * self.services + service] = value;
    }

    pub fn row(&self, machine: usize) -> &[u32] {
        &self.counts[machine * self.services..(machine + 1) * self.services]
    }

    pub fn row_mut(&mut self, machine: usize) -> &mut [u32] {
        &mut self.counts[machine * self.services..(machine + 1) * self.services]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.machines).map(move |i| self.row(i))
    }

    pub fn to_rows(&self) -> Vec<Vec<u32>> {
        self.rows().map(<[u32]>::to_vec).collect()
    }

    pub fn column_totals(&self) -> Vec<u64> {
        let mut totals = vec![0u64; self.services];
        for row in self.rows() {
            for (t, &c) in totals.iter_mut().zip(row) {
                *t += u64::from(c);
            }
        }
        totals
    }

    pub fn is_zero(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    pub fn row_is_empty(&self, machine: usize) -> bool {
        self.row(machine).iter().all(|&c| c == 0)
    }

    /// Machines hosting at least one container.
    pub fn used_machines(&self) -> usize {
        (0..self.machines).filter(|&i| !self.row_is_empty(i)).count()
    }

    fn same_shape(&self, other: &Layout) -> Result<()> {
        if self.machines != other.machines || self.services != other.services {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.machines, self.services),
                got: format!("{}x{}", other.machines, other.services),
            });
        }
        Ok(())
    }

    /// Elementwise sum of two layouts of the same shape.
    pub fn plus(&self, other: &Layout) -> Result<Layout> {
        self.same_shape(other)?;
        let counts = self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect();
        Ok(Layout { counts, ..*self })
    }
}

impl Serialize for Layout {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Layout {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<u32>>::deserialize(deserializer)?;
        let services = rows.first().map_or(0, Vec::len);
        Layout::from_rows(&rows, services).map_err(serde::de::Error::custom)
    }
}

/// Machines of identical capacity and the containers they already host.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub capacity: f64,
    pub initial: Layout,
}

impl ClusterState {
    pub fn empty(capacity: f64, machines: usize, services: usize) -> Self {
        Self { capacity, initial: Layout::zeros(machines, services) }
    }

    pub fn machine_count(&self) -> usize {
        self.initial.machines()
    }

    pub fn nonempty_machines(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.machine_count()).filter(|&i| !self.initial.row_is_empty(i))
    }
}

/// Per-service container counts to allocate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BatchRequest {
    pub demands: Vec<u32>,
}

impl BatchRequest {
    pub fn new(demands: Vec<u32>) -> Self {
        Self { demands }
    }

    pub fn total(&self) -> u64 {
        self.demands.iter().map(|&d| u64::from(d)).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.demands.iter().all(|&d| d == 0)
    }
}

/// Containers newly assigned to each machine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub alloc: Layout,
}

impl Placement {
    pub fn zeros(machines: usize, services: usize) -> Self {
        Self { alloc: Layout::zeros(machines, services) }
    }

    /// Column sums equal the requested demands exactly.
    pub fn conserves(&self, request: &BatchRequest) -> bool {
        self.alloc.column_totals().iter().zip(&request.demands).all(|(&t, &d)| t == u64::from(d))
            && self.alloc.services() == request.demands.len()
    }
}

/// Cumulative mean and uncertainty of everything hosted on a machine.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MachineLoad {
    pub sum_mean: f64,
    pub sum_variance: f64,
}

impl MachineLoad {
    pub const EMPTY: MachineLoad = MachineLoad { sum_mean: 0.0, sum_variance: 0.0 };

    pub fn new(sum_mean: f64, sum_variance: f64) -> Self {
        Self { sum_mean, sum_variance }
    }

    pub fn of_counts(counts: &[u32], services: &[ServiceSpec]) -> Self {
        counts.iter().zip(services).fold(Self::EMPTY, |load, (&c, s)| load.with(s, c))
    }

    /// Load after adding `count` containers of `service`.
    pub fn with(self, service: &ServiceSpec, count: u32) -> Self {
        let c = f64::from(count);
        Self { sum_mean: self.sum_mean + c * service.mean, sum_variance: self.sum_variance + c * service.variance }
    }

    /// Load after removing `count` containers of `service`; clamps rounding
    /// residue at zero.
    pub fn without(self, service: &ServiceSpec, count: u32) -> Self {
        let c = f64::from(count);
        Self {
            sum_mean: (self.sum_mean - c * service.mean).max(0.0),
            sum_variance: (self.sum_variance - c * service.variance).max(0.0),
        }
    }
}

/// One violated invariant found by [`validate_instance`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub machine: Option<usize>,
    pub service: Option<usize>,
    pub message: String,
}

/// Every violated invariant of a candidate instance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn push(&mut self, machine: Option<usize>, service: Option<usize>, message: impl Into<String>) {
        self.violations.push(Violation { machine, service, message: message.into() });
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            match (v.machine, v.service) {
                (Some(i), _) => writeln!(f, "  machine {i}: {}", v.message)?,
                (None, Some(j)) => writeln!(f, "  service {j}: {}", v.message)?,
                (None, None) => writeln!(f, "  {}", v.message)?,
            }
        }
        Ok(())
    }
}

/// A validated problem: services, cluster state and the request.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    services: Vec<ServiceSpec>,
    cluster: ClusterState,
    request: BatchRequest,
}

impl Instance {
    pub fn services(&self) -> &[ServiceSpec] {
        &self.services
    }

    pub fn cluster(&self) -> &ClusterState {
        &self.cluster
    }

    pub fn request(&self) -> &BatchRequest {
        &self.request
    }

    pub fn capacity(&self) -> f64 {
        self.cluster.capacity
    }

    pub fn machine_count(&self) -> usize {
        self.cluster.machine_count()
    }

    pub fn service_count(&self) -> usize {
        self.services.len()
    }

    /// Loads of the initial layout, one per machine.
    pub fn initial_loads(&self) -> Vec<MachineLoad> {
        self.cluster.initial.rows().map(|r| MachineLoad::of_counts(r, &self.services)).collect()
    }

    /// Final layout `initial + alloc`.
    pub fn final_layout(&self, placement: &Placement) -> Result<Layout> {
        self.cluster.initial.plus(&placement.alloc)
    }

    /// Checks shape, demand conservation and per-machine feasibility of a
    /// solver output.
    pub fn check_placement(&self, placement: &Placement, conf: Confidence) -> Result<()> {
        let layout = self.final_layout(placement)?;
        let mut report = ValidationReport::default();
        if !placement.conserves(&self.request) {
            report.push(None, None, "placement does not conserve the requested demands");
        }
        for (i, row) in layout.rows().enumerate() {
            let load = MachineLoad::of_counts(row, &self.services);
            if !gauss::feasible(load, conf, self.capacity()) {
                report.push(Some(i), None, "violates the chance constraint after allocation");
            }
        }
        if report.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(report))
        }
    }
}

/// Checks every instance invariant and reports all violations at once.
pub fn validate_instance(
    services: Vec<ServiceSpec>,
    cluster: ClusterState,
    request: BatchRequest,
    conf: Confidence,
) -> Result<Instance> {
    let mut report = ValidationReport::default();
    let k = services.len();

    if !(cluster.capacity.is_finite() && cluster.capacity > 0.0) {
        report.push(None, None, format!("capacity must be positive and finite, got {}", cluster.capacity));
    }
    if cluster.machine_count() == 0 {
        report.push(None, None, "cluster must have at least one machine");
    }
    for (j, s) in services.iter().enumerate() {
        if !s.mean.is_finite() || s.mean <= 0.0 {
            report.push(None, Some(j), "mean must be positive");
        }
        if !s.variance.is_finite() || s.variance < 0.0 {
            report.push(None, Some(j), "variance must be non-negative");
        }
        if !s.limit.is_finite() || s.limit <= s.mean {
            report.push(None, Some(j), "limit must exceed the mean");
        }
    }
    if cluster.machine_count() > 0 && cluster.initial.services() != k {
        report.push(None, None, format!("initial layout has {} columns, expected {k}", cluster.initial.services()));
    }
    if request.demands.len() != k {
        report.push(None, None, format!("request has {} entries, expected {k}", request.demands.len()));
    }

    // Feasibility of the pre-existing rows only makes sense once shapes and
    // parameters are sound.
    if report.is_empty() {
        for (i, row) in cluster.initial.rows().enumerate() {
            let load = MachineLoad::of_counts(row, &services);
            if !gauss::feasible(load, conf, cluster.capacity) {
                let u = gauss::machine_ucac(load, conf);
                report.push(
                    Some(i),
                    None,
                    format!("machine {i} initially infeasible (ucac {u:.4} > capacity {})", cluster.capacity),
                );
            }
        }
    }

    if report.is_empty() {
        Ok(Instance { services, cluster, request })
    } else {
        Err(Error::Invalid(report))
    }
}

/// Returns the cluster after the placement has been carried out.
pub fn apply_placement(cluster: &ClusterState, placement: &Placement) -> Result<ClusterState> {
    Ok(ClusterState { capacity: cluster.capacity, initial: cluster.initial.plus(&placement.alloc)? })
}

/// Per-service allocations and deletions needed to move from `current`
/// totals to `target` totals.
pub fn diff_totals(target: &[u64], current: &[u64]) -> (BatchRequest, Vec<u32>) {
    let mut alloc = Vec::with_capacity(target.len());
    let mut del = Vec::with_capacity(target.len());
    for (&t, &c) in target.iter().zip(current) {
        alloc.push(t.saturating_sub(c) as u32);
        del.push(c.saturating_sub(t) as u32);
    }
    (BatchRequest::new(alloc), del)
}

/// Compares two layouts service by service.
pub fn diff_layouts(target: &Layout, current: &Layout) -> Result<(BatchRequest, Vec<u32>)> {
    target.same_shape(current)?;
    Ok(diff_totals(&target.column_totals(), &current.column_totals()))
}

/// Removes `deletions[k]` containers of each service, each victim drawn
/// uniformly among the service's hosted containers.
pub fn apply_deletions<R: Rng + ?Sized>(
    cluster: &ClusterState,
    deletions: &[u32],
    rng: &mut R,
) -> Result<ClusterState> {
    let mut layout = cluster.initial.clone();
    if deletions.len() != layout.services() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} deletion counts", layout.services()),
            got: deletions.len().to_string(),
        });
    }
    let totals = layout.column_totals();
    for (k, &d) in deletions.iter().enumerate() {
        let mut hosted = totals[k];
        if u64::from(d) > hosted {
            return Err(Error::ShapeMismatch {
                expected: format!("at most {hosted} deletions of service {k}"),
                got: d.to_string(),
            });
        }
        for _ in 0..d {
            let mut pick = rng.random_range(0..hosted);
            for i in 0..layout.machines() {
                let c = u64::from(layout.get(i, k));
                if pick < c {
                    layout.set(i, k, layout.get(i, k) - 1);
                    break;
                }
                pick -= c;
            }
            hosted -= 1;
        }
    }
    Ok(ClusterState { capacity: cluster.capacity, initial: layout })
}

/// Canonical JSON form of an instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub capacity: f64,
    pub services: Vec<ServiceSpec>,
    pub initial: Vec<Vec<u32>>,
    pub request: Vec<u32>,
}

impl InstanceDoc {
    pub fn from_instance(instance: &Instance) -> Self {
        Self {
            capacity: instance.capacity(),
            services: instance.services.clone(),
            initial: instance.cluster.initial.to_rows(),
            request: instance.request.demands.clone(),
        }
    }

    /// Validates the document into an [`Instance`] at confidence `conf`.
    pub fn into_instance(self, conf: Confidence) -> Result<Instance> {
        let k = self.services.len();
        let initial = Layout::from_rows(&self.initial, k).map_err(|e| {
            let mut report = ValidationReport::default();
            report.push(None, None, format!("initial: {e}"));
            Error::Invalid(report)
        })?;
        validate_instance(
            self.services,
            ClusterState { capacity: self.capacity, initial },
            BatchRequest::new(self.request),
            conf,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn conf() -> Confidence {
        Confidence::new(0.99).unwrap()
    }

    fn svc(mean: f64, var: f64) -> ServiceSpec {
        ServiceSpec::new("s", mean, var, mean * 3.0)
    }

    #[test]
    fn valid_single_machine() {
        let inst = validate_instance(
            vec![ServiceSpec::new("a", 2.0, 1.0, 6.0)],
            ClusterState::empty(10.0, 1, 1),
            BatchRequest::new(vec![3]),
            conf(),
        );
        assert!(inst.is_ok());
    }

    #[test]
    fn negative_mean_rejected() {
        let err = validate_instance(
            vec![ServiceSpec::new("a", -1.0, 1.0, 6.0)],
            ClusterState::empty(10.0, 1, 1),
            BatchRequest::new(vec![3]),
            conf(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("mean must be positive"), "{err}");
    }

    #[test]
    fn report_lists_every_violation() {
        let err = validate_instance(
            vec![ServiceSpec::new("a", -1.0, -2.0, f64::NAN)],
            ClusterState::empty(0.0, 1, 1),
            BatchRequest::new(vec![3, 4]),
            conf(),
        )
        .unwrap_err();
        match err {
            Error::Invalid(r) => assert_eq!(r.violations.len(), 5),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn initially_infeasible_machine() {
        // Four containers of (2, 1): 8 + 1.2816*2 = 11.06 at 0.9, 8 + 3.0902*2 = 14.18 at 0.999.
        let s = svc(2.0, 1.0);
        let row = vec![vec![4]];
        let lo = Confidence::new(0.9).unwrap();
        let hi = Confidence::new(0.999).unwrap();
        let load = MachineLoad::of_counts(&row[0], std::slice::from_ref(&s));
        assert!(gauss::feasible(load, lo, 11.0));
        assert!(!gauss::feasible(load, hi, 11.0));
        let cluster = ClusterState { capacity: 11.0, initial: Layout::from_rows(&row, 1).unwrap() };
        assert!(validate_instance(vec![s.clone()], cluster.clone(), BatchRequest::new(vec![0]), lo).is_ok());
        let err = validate_instance(vec![s], cluster, BatchRequest::new(vec![0]), hi).unwrap_err();
        assert!(err.to_string().contains("machine 0 initially infeasible"), "{err}");
    }

    #[test]
    fn apply_placement_adds() {
        let cluster = ClusterState { capacity: 10.0, initial: Layout::from_rows(&[vec![0], vec![2]], 1).unwrap() };
        let mut p = Placement::zeros(2, 1);
        p.alloc.set(0, 0, 3);
        p.alloc.set(1, 0, 1);
        let next = apply_placement(&cluster, &p).unwrap();
        assert_eq!(next.initial.to_rows(), vec![vec![3], vec![3]]);
        assert_eq!(next.capacity, 10.0);

        let same = apply_placement(&cluster, &Placement::zeros(2, 1)).unwrap();
        assert_eq!(same, cluster);

        assert!(apply_placement(&cluster, &Placement::zeros(3, 1)).is_err());
    }

    #[test]
    fn diff_examples() {
        let (a, d) = diff_totals(&[10, 4], &[6, 4]);
        assert_eq!(a.demands, vec![4, 0]);
        assert_eq!(d, vec![0, 0]);
        let (a, d) = diff_totals(&[3], &[5]);
        assert_eq!(a.demands, vec![0]);
        assert_eq!(d, vec![2]);
        let l = Layout::from_rows(&[vec![1, 2], vec![3, 0]], 2).unwrap();
        let (a, d) = diff_layouts(&l, &l).unwrap();
        assert!(a.is_zero());
        assert_eq!(d, vec![0, 0]);
    }

    #[test]
    fn deletions_remove_exact_counts() {
        let cluster = ClusterState {
            capacity: 100.0,
            initial: Layout::from_rows(&[vec![5, 1], vec![3, 0], vec![0, 2]], 2).unwrap(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let next = apply_deletions(&cluster, &[4, 3], &mut rng).unwrap();
        assert_eq!(next.initial.column_totals(), vec![4, 0]);
        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(apply_deletions(&cluster, &[4, 3], &mut rng2).unwrap(), next);
        assert!(apply_deletions(&cluster, &[9, 0], &mut rng).is_err());
    }

    #[test]
    fn instance_doc_field_names() {
        let json = r#"{"capacity": 10, "services": [{"id": "a", "mean": 2, "variance": 1, "limit": 6}],
                       "initial": [[0], [1]], "request": [3]}"#;
        let doc: InstanceDoc = serde_json::from_str(json).unwrap();
        let inst = doc.into_instance(conf()).unwrap();
        assert_eq!(inst.machine_count(), 2);
        let back = serde_json::to_value(InstanceDoc::from_instance(&inst)).unwrap();
        assert_eq!(back["initial"], serde_json::json!([[0], [1]]));
        let p = Placement::zeros(2, 1);
        assert_eq!(serde_json::to_string(&p).unwrap(), r#"{"alloc":[[0],[0]]}"#);
    }
}
