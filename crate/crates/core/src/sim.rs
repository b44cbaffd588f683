//! Synthetic experiments: service sampling, scenario construction, Monte
//! Carlo violation estimates and multi-day runs.
//!
//! Every random choice is drawn from a ChaCha stream derived from the
//! configured seed, so a scenario is a pure function of its configuration.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::csp::{self, Budget, Objective};
use crate::gauss::{self, Confidence};
use crate::model::{self, validate_instance, BatchRequest, ClusterState, Instance, Layout, Placement, ServiceSpec};
use crate::par::{self, Exec};
use crate::{Algorithm, Error, Result};

pub const DEFAULT_MACHINES: usize = 400;
/// Cluster size the pool's container counts refer to.
pub const REFERENCE_MACHINES: usize = 4000;
pub const DEFAULT_CAPACITY: f64 = 31.58;

/// Per-service statistics of the synthetic pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub mean: f64,
    pub std: f64,
    pub count: u32,
    pub limit: f64,
    pub remove_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServicePool {
    pub entries: Vec<PoolEntry>,
}

impl ServicePool {
    /// The 17-service pool. Usage limits are `mean + 4·std`.
    pub fn synthetic() -> Self {
        const MEAN: [f64; 17] =
            [6.18, 2.47, 1.07, 4.12, 1.06, 0.73, 1.94, 2.48, 2.42, 2.49, 0.97, 2.46, 2.52, 1.06, 2.59, 1.96, 3.33];
        const STD: [f64; 17] =
            [1.73, 0.47, 0.43, 2.69, 0.85, 0.19, 0.90, 0.82, 0.97, 0.62, 0.31, 0.62, 0.84, 0.57, 0.70, 0.55, 0.90];
        const COUNT: [u32; 17] =
            [270, 55, 1618, 904, 576, 1085, 1035, 118, 1450, 313, 44, 544, 697, 427, 363, 360, 701];
        const REMOVE: [f64; 17] = [0.5, 0.3, 0.8, 0.5, 0.8, 0.8, 0.5, 0.5, 0.5, 0.5, 0.8, 0.3, 0.5, 0.8, 0.3, 0.3, 0.5];
        let entries = (0..17)
            .map(|j| PoolEntry {
                mean: MEAN[j],
                std: STD[j],
                count: COUNT[j],
                limit: MEAN[j] + 4.0 * STD[j],
                remove_rate: REMOVE[j],
            })
            .collect();
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Services drawn from a pool, with the pool rows they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawnServices {
    pub services: Vec<ServiceSpec>,
    pub rows: Vec<usize>,
}

/// Draws `k` distinct pool rows (kept in pool order) and jitters each
/// standard deviation by a factor uniform on `jitter`.
pub fn gen_services(pool: &ServicePool, k: usize, seed: u64, jitter: (f64, f64)) -> Result<DrawnServices> {
    if k == 0 || k > pool.len() {
        return Err(Error::ServiceCount(k));
    }
    let (lo, hi) = jitter;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::ShapeMismatch {
            expected: "jitter interval 0 < lo ≤ hi".into(),
            got: format!("[{lo}, {hi}]"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = index::sample(&mut rng, pool.len(), k).into_vec();
    rows.sort_unstable();
    let services = rows
        .iter()
        .map(|&r| {
            let e = &pool.entries[r];
            let factor = if lo == hi { lo } else { rng.random_range(lo..hi) };
            let std = e.std * factor;
            ServiceSpec::new(format!("svc{r}"), e.mean, std * std, e.limit)
        })
        .collect();
    Ok(DrawnServices { services, rows })
}

/// Container counts for the drawn rows on a cluster of `machines`: the pool
/// counts rescaled so the drawn services carry the pool's total mean load
/// per machine.
pub fn scaled_counts(pool: &ServicePool, rows: &[usize], machines: usize) -> Vec<u32> {
    let load = |rs: &mut dyn Iterator<Item = usize>| -> f64 {
        rs.map(|r| f64::from(pool.entries[r].count) * pool.entries[r].mean).sum()
    };
    let all = load(&mut (0..pool.len()));
    let drawn = load(&mut rows.iter().copied());
    let factor = machines as f64 / REFERENCE_MACHINES as f64 * all / drawn;
    rows.iter().map(|&r| (f64::from(pool.entries[r].count) * factor).round() as u32).collect()
}

/// Removes each hosted container independently with its service's rate.
pub fn remove_random<R: Rng + ?Sized>(layout: &Layout, rates: &[f64], rng: &mut R) -> Result<Layout> {
    if rates.len() != layout.services() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} removal rates", layout.services()),
            got: rates.len().to_string(),
        });
    }
    let mut out = layout.clone();
    for i in 0..layout.machines() {
        for (k, &rate) in rates.iter().enumerate() {
            let c = layout.get(i, k);
            if c > 0 && rate > 0.0 {
                let removed = Binomial::new(u64::from(c), rate.min(1.0)).expect("valid binomial").sample(rng);
                out.set(i, k, c - removed as u32);
            }
        }
    }
    Ok(out)
}

/// A packed layout and what is left of it after random removals.
#[derive(Debug, Clone, PartialEq)]
pub struct NonemptyLayout {
    pub packed: Layout,
    pub current: ClusterState,
}

/// Packs `counts` onto the empty `cluster` with CSP-UCaC, then removes
/// containers at the given per-service rates.
pub fn gen_nonempty_layout(
    services: &[ServiceSpec],
    cluster: &ClusterState,
    counts: &BatchRequest,
    conf: Confidence,
    removal_rates: &[f64],
    seed: u64,
    budget: Budget,
) -> Result<NonemptyLayout> {
    let empty = ClusterState::empty(cluster.capacity, cluster.machine_count(), services.len());
    let instance = validate_instance(services.to_vec(), empty, counts.clone(), conf)?;
    let packed = csp::solve_instance(&instance, conf, Objective::Ucac, budget)?.placement.alloc;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let remaining = remove_random(&packed, removal_rates, &mut rng)?;
    Ok(NonemptyLayout { packed, current: ClusterState { capacity: cluster.capacity, initial: remaining } })
}

/// Request and deletions that bring `current` to `scale ×` the per-service
/// totals of `initial`.
pub fn gen_requests(initial: &Layout, current: &Layout, scale: f64) -> (BatchRequest, Vec<u32>) {
    let target: Vec<u64> = initial.column_totals().iter().map(|&t| (scale * t as f64).round() as u64).collect();
    model::diff_totals(&target, &current.column_totals())
}

fn clamped_normal(service: &ServiceSpec) -> Normal<f64> {
    Normal::new(service.mean, service.std_dev()).expect("finite mean and non-negative std")
}

/// `count` usage draws of `service`, Gaussian clamped to `[0, limit]`.
pub fn sample_usage(service: &ServiceSpec, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = clamped_normal(service);
    (0..count).map(|_| normal.sample(&mut rng).clamp(0.0, service.limit)).collect()
}

/// Per-workload usage distribution inside a container.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum WorkloadDist {
    Constant { value: f64 },
    Exponential { rate: f64 },
    Uniform { low: f64, high: f64 },
}

impl WorkloadDist {
    pub fn mean(&self) -> f64 {
        match *self {
            WorkloadDist::Constant { value } => value,
            WorkloadDist::Exponential { rate } => 1.0 / rate,
            WorkloadDist::Uniform { low, high } => 0.5 * (low + high),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            WorkloadDist::Constant { .. } => 0.0,
            WorkloadDist::Exponential { rate } => 1.0 / (rate * rate),
            WorkloadDist::Uniform { low, high } => (high - low).powi(2) / 12.0,
        }
    }

    fn sample_sum<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> f64 {
        match *self {
            WorkloadDist::Constant { value } => value * n as f64,
            WorkloadDist::Exponential { rate } => {
                let d = Exp::new(rate).expect("positive rate");
                (0..n).map(|_| d.sample(rng)).sum()
            }
            WorkloadDist::Uniform { low, high } => {
                let d = Uniform::new_inclusive(low, high).expect("low ≤ high");
                (0..n).map(|_| d.sample(rng)).sum()
            }
        }
    }
}

/// Container usage as the sum of `n` independent workload draws.
pub fn gen_workload_usage(dist: &WorkloadDist, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dist.sample_sum(n, &mut rng)
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Every container drawn from its Gaussian and clamped to `[0, limit]`.
    #[default]
    Clamped,
    /// Unclamped Gaussian usage; a machine total is then exactly
    /// `N(Σμ, Σσ²)` and is drawn directly.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Denominator {
    #[default]
    UsedMachines,
    AllMachines,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolationOptions {
    pub samples: usize,
    pub seed: u64,
    pub mode: SamplingMode,
    pub denominator: Denominator,
    pub exec: Exec,
}

impl Default for ViolationOptions {
    fn default() -> Self {
        Self {
            samples: 100_000,
            seed: 0,
            mode: SamplingMode::Clamped,
            denominator: Denominator::UsedMachines,
            exec: Exec::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport {
    pub samples: usize,
    /// Violating machine-samples over denominator machines × samples.
    pub machine_sample_violation_rate: f64,
    /// Violation frequency of each machine; zero for unused machines.
    pub per_machine_rates: Vec<f64>,
}

const CHUNK: usize = 2048;

/// Monte Carlo estimate of how often machines exceed capacity.
pub fn evaluate_violations(
    cluster: &ClusterState,
    placement: Option<&Placement>,
    services: &[ServiceSpec],
    opts: &ViolationOptions,
) -> Result<ViolationReport> {
    let layout = match placement {
        Some(p) => cluster.initial.plus(&p.alloc)?,
        None => cluster.initial.clone(),
    };
    let capacity = cluster.capacity;
    let used: Vec<usize> = (0..layout.machines()).filter(|&i| !layout.row_is_empty(i)).collect();
    let samples = opts.samples;
    let chunks = samples.div_ceil(CHUNK);

    // Per used machine: either its total distribution or its containers.
    let totals: Vec<Normal<f64>> = used
        .iter()
        .map(|&i| {
            let load = model::MachineLoad::of_counts(layout.row(i), services);
            Normal::new(load.sum_mean, load.sum_variance.sqrt()).expect("finite load")
        })
        .collect();
    let hosted: Vec<Vec<(Normal<f64>, f64, u32)>> = used
        .iter()
        .map(|&i| {
            layout
                .row(i)
                .iter()
                .zip(services)
                .filter(|(&c, _)| c > 0)
                .map(|(&c, s)| (clamped_normal(s), s.limit, c))
                .collect()
        })
        .collect();

    let per_chunk = par::map_indices(opts.exec, chunks, |chunk| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(chunk as u64);
        let n = CHUNK.min(samples - chunk * CHUNK);
        let mut counts = vec![0u64; used.len()];
        for _ in 0..n {
            for (m, count) in counts.iter_mut().enumerate() {
                let total = match opts.mode {
                    SamplingMode::Gaussian => totals[m].sample(&mut rng),
                    SamplingMode::Clamped => hosted[m]
                        .iter()
                        .map(|(d, limit, c)| (0..*c).map(|_| d.sample(&mut rng).clamp(0.0, *limit)).sum::<f64>())
                        .sum(),
                };
                if total > capacity {
                    *count += 1;
                }
            }
        }
        counts
    });

    let mut per_machine = vec![0u64; used.len()];
    for counts in per_chunk {
        for (a, b) in per_machine.iter_mut().zip(counts) {
            *a += b;
        }
    }
    let violations: u64 = per_machine.iter().sum();
    let machines = match opts.denominator {
        Denominator::UsedMachines => used.len(),
        Denominator::AllMachines => layout.machines(),
    };
    let denom = machines as f64 * samples as f64;
    let mut per_machine_rates = vec![0.0; layout.machines()];
    for (&i, &v) in used.iter().zip(&per_machine) {
        per_machine_rates[i] = if samples == 0 { 0.0 } else { v as f64 / samples as f64 };
    }
    Ok(ViolationReport {
        samples,
        machine_sample_violation_rate: if denom > 0.0 { violations as f64 / denom } else { 0.0 },
        per_machine_rates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    ScaleDown,
    ScaleUp,
    Empty,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::ScaleDown, Scenario::ScaleUp, Scenario::Empty];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::ScaleDown => "scale-down",
            Scenario::ScaleUp => "scale-up",
            Scenario::Empty => "empty",
        }
    }

    /// Target multiple of the packed layout's totals.
    pub fn default_scale(self) -> f64 {
        match self {
            Scenario::ScaleDown => 0.7,
            Scenario::ScaleUp => 1.2,
            Scenario::Empty => 1.0,
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| Error::UnknownName(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub seed: u64,
    /// Number of services `K`.
    pub services: usize,
    pub machines: usize,
    pub capacity: f64,
    pub alpha: f64,
    /// Defaults to the scenario's own scale.
    pub scale: Option<f64>,
    pub std_jitter: (f64, f64),
    /// Defaults to the pool's per-service rates.
    pub removal_rates: Option<Vec<f64>>,
    pub samples: usize,
    pub sampling: SamplingMode,
    pub denominator: Denominator,
    pub node_limit: u64,
    pub time_limit_secs: Option<f64>,
    pub algorithms: Vec<Algorithm>,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::ScaleDown,
            seed: 0,
            services: 5,
            machines: DEFAULT_MACHINES,
            capacity: DEFAULT_CAPACITY,
            alpha: 0.999,
            scale: None,
            std_jitter: (0.9, 1.1),
            removal_rates: None,
            samples: 100_000,
            sampling: SamplingMode::Clamped,
            denominator: Denominator::UsedMachines,
            node_limit: 1_000_000,
            time_limit_secs: Some(60.0),
            algorithms: Algorithm::ALL.to_vec(),
            exec: Exec::Parallel,
        }
    }
}

impl ScenarioConfig {
    pub fn confidence(&self) -> Result<Confidence> {
        Confidence::new(self.alpha)
    }

    pub fn budget(&self) -> Budget {
        Budget { time_limit: self.time_limit_secs.map(Duration::from_secs_f64), node_limit: self.node_limit }
    }

    pub fn scale_factor(&self) -> f64 {
        self.scale.unwrap_or(self.scenario.default_scale())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, got: String| Err(Error::ShapeMismatch { expected: what.into(), got });
        if self.services == 0 || self.services > ServicePool::synthetic().len() {
            return Err(Error::ServiceCount(self.services));
        }
        if !(self.scale_factor() > 0.0 && self.scale_factor().is_finite()) {
            return bad("scale factor > 0", self.scale_factor().to_string());
        }
        if let Some(rates) = &self.removal_rates {
            if rates.len() != self.services {
                return bad(&format!("{} removal rates", self.services), rates.len().to_string());
            }
            if let Some(r) = rates.iter().find(|&&r| !(r > 0.0 && r < 1.0)) {
                return bad("removal rates in (0, 1)", r.to_string());
            }
        }
        if self.machines == 0 {
            return bad("at least one machine", "0".into());
        }
        self.confidence().map(|_| ())
    }
}

/// The instance a scenario hands to the solvers.
#[derive(Debug, Clone)]
pub struct ScenarioInstance {
    pub instance: Instance,
    pub drawn: DrawnServices,
    /// Layout the nonempty scenarios started from, before removals.
    pub packed: Option<Layout>,
}

pub fn build_scenario(config: &ScenarioConfig) -> Result<ScenarioInstance> {
    config.validate()?;
    let conf = config.confidence()?;
    let pool = ServicePool::synthetic();
    let drawn = gen_services(&pool, config.services, config.seed, config.std_jitter)?;
    let counts = scaled_counts(&pool, &drawn.rows, config.machines);
    let k = drawn.services.len();
    let empty = ClusterState::empty(config.capacity, config.machines, k);

    if config.scenario == Scenario::Empty {
        let request: Vec<u32> = counts.iter().map(|&c| (config.scale_factor() * f64::from(c)).round() as u32).collect();
        let instance = validate_instance(drawn.services.clone(), empty, BatchRequest::new(request), conf)?;
        return Ok(ScenarioInstance { instance, drawn, packed: None });
    }

    let rates = config
        .removal_rates
        .clone()
        .unwrap_or_else(|| drawn.rows.iter().map(|&r| pool.entries[r].remove_rate).collect());
    let layout = gen_nonempty_layout(
        &drawn.services,
        &empty,
        &BatchRequest::new(counts),
        conf,
        &rates,
        config.seed.wrapping_add(1),
        config.budget(),
    )?;
    let (request, deletions) = gen_requests(&layout.packed, &layout.current.initial, config.scale_factor());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let cluster = model::apply_deletions(&layout.current, &deletions, &mut rng)?;
    let instance = validate_instance(drawn.services.clone(), cluster, request, conf)?;
    Ok(ScenarioInstance { instance, drawn, packed: Some(layout.packed) })
}

/// One algorithm's result on one instance. Serializes to the metrics CSV
/// columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub algo: Algorithm,
    pub alpha: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub ucac: f64,
    pub ucac_norm: f64,
    pub machines: usize,
    pub machines_norm: f64,
    pub violation_pct: f64,
    pub solve_ms: f64,
    #[serde(skip)]
    pub error: Option<String>,
}

/// Per-machine UCaC of one algorithm's final layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineUcacDump {
    pub scenario: String,
    pub algo: Algorithm,
    pub seed: u64,
    pub machine_ucac: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub rows: Vec<MetricsRow>,
    pub dumps: Vec<MachineUcacDump>,
    /// Final placement per algorithm, `None` where the solver failed.
    pub placements: Vec<(Algorithm, Option<Placement>)>,
}

struct Evaluated {
    placement: Option<Placement>,
    ucac: f64,
    machines: usize,
    violation: f64,
    solve_ms: f64,
    machine_ucac: Vec<f64>,
    error: Option<String>,
}

fn evaluate(instance: &Instance, algo: Algorithm, config: &ScenarioConfig, seed: u64) -> Result<Evaluated> {
    let conf = config.confidence()?;
    let started = Instant::now();
    let solved = crate::solve(algo, instance, conf, config.budget());
    let solve_ms = started.elapsed().as_secs_f64() * 1e3;
    let placement = match solved {
        Ok(p) => p,
        Err(e) => {
            log::warn!("{algo} failed: {e}");
            return Ok(Evaluated {
                placement: None,
                ucac: f64::NAN,
                machines: 0,
                violation: f64::NAN,
                solve_ms,
                machine_ucac: Vec::new(),
                error: Some(e.to_string()),
            });
        }
    };
    instance.check_placement(&placement, conf)?;
    let machine_ucac = gauss::machine_ucacs(instance.cluster(), Some(&placement), instance.services(), conf);
    let machines = instance.final_layout(&placement)?.used_machines();
    let violation = if config.samples == 0 {
        0.0
    } else {
        let opts = ViolationOptions {
            samples: config.samples,
            seed,
            mode: config.sampling,
            denominator: config.denominator,
            exec: config.exec,
        };
        evaluate_violations(instance.cluster(), Some(&placement), instance.services(), &opts)?
            .machine_sample_violation_rate
    };
    Ok(Evaluated {
        ucac: machine_ucac.iter().sum(),
        placement: Some(placement),
        machines,
        violation,
        solve_ms,
        machine_ucac,
        error: None,
    })
}

fn normalize(rows: &mut [MetricsRow]) {
    let base = rows.iter().find(|r| r.algo == Algorithm::BfNsigma && r.error.is_none()).map(|r| (r.ucac, r.machines));
    for r in rows.iter_mut() {
        let (u, m) = base.unwrap_or((f64::NAN, 0));
        r.ucac_norm = r.ucac / u;
        r.machines_norm = r.machines as f64 / m as f64;
    }
}

fn row(scenario: &str, algo: Algorithm, config: &ScenarioConfig, e: &Evaluated) -> MetricsRow {
    MetricsRow {
        scenario: scenario.to_string(),
        algo,
        alpha: config.alpha,
        k: config.services,
        seed: config.seed,
        ucac: e.ucac,
        ucac_norm: f64::NAN,
        machines: e.machines,
        machines_norm: f64::NAN,
        violation_pct: 100.0 * e.violation,
        solve_ms: e.solve_ms,
        error: e.error.clone(),
    }
}

/// Runs every configured algorithm on the scenario's instance and
/// normalizes against BF-nσ.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let built = build_scenario(config)?;
    run_on_instance(config, &built.instance, config.scenario.name())
}

/// [`run_scenario`] on a prepared instance.
pub fn run_on_instance(config: &ScenarioConfig, instance: &Instance, label: &str) -> Result<ScenarioOutcome> {
    let mut rows = Vec::new();
    let mut dumps = Vec::new();
    let mut placements = Vec::new();
    for (a, &algo) in config.algorithms.iter().enumerate() {
        let e = evaluate(instance, algo, config, config.seed.wrapping_mul(31).wrapping_add(a as u64))?;
        rows.push(row(label, algo, config, &e));
        dumps.push(MachineUcacDump {
            scenario: label.to_string(),
            algo,
            seed: config.seed,
            machine_ucac: e.machine_ucac,
        });
        placements.push((algo, e.placement));
    }
    normalize(&mut rows);
    Ok(ScenarioOutcome { rows, dumps, placements })
}

/// Seeds `seed, seed+1, …`, optionally in parallel.
pub fn run_seeds(config: &ScenarioConfig, seeds: usize) -> Result<Vec<ScenarioOutcome>> {
    par::map_indices(config.exec, seeds, |s| {
        let mut c = config.clone();
        c.seed = config.seed + s as u64;
        run_scenario(&c)
    })
    .into_iter()
    .collect()
}

/// Mean of each numeric column per algorithm, in first-seen order.
pub fn average_rows(rows: &[MetricsRow]) -> Vec<MetricsRow> {
    let mut groups: Vec<(Algorithm, Vec<&MetricsRow>)> = Vec::new();
    for r in rows {
        match groups.iter_mut().find(|(a, _)| *a == r.algo) {
            Some((_, v)) => v.push(r),
            None => groups.push((r.algo, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(_, rs)| {
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&MetricsRow) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            MetricsRow {
                ucac: mean(&|r| r.ucac),
                ucac_norm: mean(&|r| r.ucac_norm),
                machines: mean(&|r| r.machines as f64).round() as usize,
                machines_norm: mean(&|r| r.machines_norm),
                violation_pct: mean(&|r| r.violation_pct),
                solve_ms: mean(&|r| r.solve_ms),
                error: rs.iter().find_map(|r| r.error.clone()),
                ..rs[0].clone()
            }
        })
        .collect()
}

/// Day-by-day allocation: day one packs onto an empty cluster, later days
/// move each algorithm's own layout to `scale × day-one totals`.
pub fn run_multiday(config: &ScenarioConfig, days: usize, scales: &[f64]) -> Result<Vec<MetricsRow>> {
    config.validate()?;
    if days == 0 {
        return Err(Error::ShapeMismatch { expected: "at least one day".into(), got: "0".into() });
    }
    let conf = config.confidence()?;
    let pool = ServicePool::synthetic();
    let drawn = gen_services(&pool, config.services, config.seed, config.std_jitter)?;
    let base = scaled_counts(&pool, &drawn.rows, config.machines);
    let k = base.len();
    let scale_of = |d: usize| if scales.is_empty() { 1.0 } else { scales[d % scales.len()] };

    let mut clusters: Vec<ClusterState> =
        config.algorithms.iter().map(|_| ClusterState::empty(config.capacity, config.machines, k)).collect();
    let mut rows = Vec::new();
    for day in 0..days {
        let target: Vec<u64> = base.iter().map(|&c| (scale_of(day) * f64::from(c)).round() as u64).collect();
        let label = format!("day-{}", day + 1);
        let mut day_rows = Vec::new();
        for (a, &algo) in config.algorithms.iter().enumerate() {
            let (request, deletions) = model::diff_totals(&target, &clusters[a].initial.column_totals());
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ ((day as u64 + 1) << 32));
            let cluster = model::apply_deletions(&clusters[a], &deletions, &mut rng)?;
            let instance = validate_instance(drawn.services.clone(), cluster, request, conf)?;
            let seed = config.seed.wrapping_mul(31).wrapping_add((day * 7 + a) as u64);
            let e = evaluate(&instance, algo, config, seed)?;
            if let Some(p) = &e.placement {
                clusters[a] = model::apply_placement(instance.cluster(), p)?;
            } else {
                clusters[a] = instance.cluster().clone();
            }
            day_rows.push(row(&label, algo, config, &e));
        }
        normalize(&mut day_rows);
        rows.extend(day_rows);
    }
    Ok(rows)
}

/// Sum of UCaC and of used machines over all rows of each algorithm.
pub fn cumulative(rows: &[MetricsRow]) -> BTreeMap<String, (f64, usize)> {
    let mut out: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = out.entry(r.algo.name().to_string()).or_default();
        e.0 += r.ucac;
        e.1 += r.machines;
    }
    out
}
