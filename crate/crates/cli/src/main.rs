//! Command-line driver: solve instances, run synthetic scenarios, and
//! manage cached pattern sets.
//!
//! Exit codes: 0 success, 1 usage/I/O/validation error, 2 infeasible.

mod cache;

use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sbpp::colgen::PatternCache;
use sbpp::csp::{self, Budget, CspStatus, Objective};
use sbpp::model::InstanceDoc;
use sbpp::sim::{self, Denominator, SamplingMode, Scenario, ScenarioConfig};
use sbpp::{gauss, Algorithm, Confidence, Instance, Placement};

const DEFAULT_CACHE_DIR: &str = ".sbpp-cache";

#[derive(Parser)]
#[command(name = "sbpp", version, about = "Stochastic bin packing under Gaussian chance constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Place a batch request onto a cluster.
    Solve(SolveArgs),
    /// Run synthetic scenarios and write metrics.
    Simulate(SimulateArgs),
    /// Generate and cache the pattern set for an instance.
    Patterns(PatternsArgs),
}

#[derive(Args)]
struct BudgetArgs {
    /// Branch-and-bound time limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Branch-and-bound node limit.
    #[arg(long)]
    node_limit: Option<u64>,
}

impl BudgetArgs {
    fn budget(&self) -> Budget {
        let default = Budget::default();
        Budget {
            time_limit: self.time_limit.map(Duration::from_secs_f64).or(default.time_limit),
            node_limit: self.node_limit.unwrap_or(default.node_limit),
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, default_value = "csp-ucac")]
    algo: String,
    #[arg(long, default_value_t = 0.999)]
    alpha: f64,
    /// Instance JSON.
    #[arg(short, long)]
    instance: PathBuf,
    /// Placement JSON to write.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Reuse pattern sets cached by `patterns`.
    #[arg(long, env = "SBPP_PATTERN_CACHE")]
    cache_dir: Option<PathBuf>,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: Option<String>,
    /// Number of services.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    /// Run this many days instead of a single scenario.
    #[arg(long)]
    multiday: Option<usize>,
    /// Per-day scale factors, cycled.
    #[arg(long, value_delimiter = ',', default_value = "1.0,0.7,1.2,0.8,1.1,0.9,1.0")]
    day_scales: Vec<f64>,
    #[arg(long)]
    machines: Option<usize>,
    #[arg(long)]
    capacity: Option<f64>,
    /// Target multiple of the initial layout.
    #[arg(long)]
    scale: Option<f64>,
    /// Monte Carlo rounds per algorithm; 0 skips violation estimates.
    #[arg(long)]
    samples: Option<usize>,
    /// `clamped` or `gaussian`.
    #[arg(long)]
    sampling: Option<String>,
    /// `used-machines` or `all-machines`.
    #[arg(long)]
    denominator: Option<String>,
    /// Comma-separated algorithms.
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<String>>,
    /// Scenario config JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Metrics CSV; standard output when absent.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Per-machine UCaC dump (JSON).
    #[arg(long)]
    dump: Option<PathBuf>,
    /// Run on one thread.
    #[arg(long)]
    sequential: bool,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Args)]
struct PatternsArgs {
    /// Instance JSON; services, capacity and demands define the pattern set.
    #[arg(short, long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 0.999)]
    alpha: f64,
    #[arg(long, env = "SBPP_PATTERN_CACHE", default_value = DEFAULT_CACHE_DIR)]
    cache_dir: PathBuf,
    /// Regenerate even on a cache hit.
    #[arg(long)]
    force: bool,
}

/// Error carrying its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = match error.downcast_ref::<sbpp::Error>() {
            Some(e) if e.is_infeasible() => 2,
            _ => 1,
        };
        Failure { code, error }
    }
}

type CliResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Patterns(a) => cmd_patterns(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_instance(path: &Path, conf: Confidence) -> anyhow::Result<Instance> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut de = serde_json::Deserializer::from_reader(BufReader::new(file));
    let doc: InstanceDoc = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let at = e.path().to_string();
        anyhow!("{}: invalid instance at `{at}`: {}", path.display(), e.into_inner())
    })?;
    Ok(doc.into_instance(conf)?)
}

fn parse<T: std::str::FromStr<Err = sbpp::Error>>(what: &str, s: &str) -> anyhow::Result<T> {
    s.parse().map_err(|_| anyhow!("unknown {what} `{s}`"))
}

#[derive(Serialize)]
struct CspReport {
    status: CspStatus,
    objective: f64,
    bound: f64,
    gap: f64,
    nodes: u64,
    w: Vec<(usize, usize)>,
}

#[derive(Serialize)]
struct PlanDoc {
    algo: Algorithm,
    alpha: f64,
    ucac: f64,
    machines: usize,
    solve_ms: f64,
    placement: Vec<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    csp: Option<CspReport>,
}

fn cmd_solve(args: SolveArgs) -> CliResult {
    let algo: Algorithm = parse("algorithm", &args.algo)?;
    let conf = Confidence::new(args.alpha)?;
    let instance = load_instance(&args.instance, conf)?;
    let budget = args.budget.budget();

    let started = Instant::now();
    let (placement, csp) = match algo {
        Algorithm::CspUcac | Algorithm::CspMac => {
            let objective = if algo == Algorithm::CspUcac { Objective::Ucac } else { Objective::MachineCount };
            let cached = match &args.cache_dir {
                Some(dir) => cache::load(dir, &instance, conf)?,
                None => None,
            };
            let out = match cached {
                Some(c) => csp::solve_with_patterns(&instance, conf, objective, budget, c.patterns, c.capped)?,
                None => csp::solve_instance(&instance, conf, objective, budget)?,
            };
            let s = &out.solution;
            let report = CspReport {
                status: s.status,
                objective: s.objective,
                bound: s.bound,
                gap: s.gap,
                nodes: s.nodes,
                w: s.w(),
            };
            (out.placement, Some(report))
        }
        _ => (sbpp::solve(algo, &instance, conf, budget)?, None),
    };
    let solve_ms = started.elapsed().as_secs_f64() * 1e3;
    instance.check_placement(&placement, conf)?;

    let plan = plan_doc(algo, conf, &instance, &placement, solve_ms, csp)?;
    println!("ucac={:.4} machines={} solve_ms={:.1}", plan.ucac, plan.machines, plan.solve_ms);
    if let Some(path) = &args.output {
        write_json(path, &plan)?;
    }
    Ok(())
}

fn plan_doc(
    algo: Algorithm,
    conf: Confidence,
    instance: &Instance,
    placement: &Placement,
    solve_ms: f64,
    csp: Option<CspReport>,
) -> anyhow::Result<PlanDoc> {
    Ok(PlanDoc {
        algo,
        alpha: conf.alpha(),
        ucac: gauss::cluster_ucac(instance.cluster(), Some(placement), instance.services(), conf),
        machines: instance.final_layout(placement)?.used_machines(),
        solve_ms,
        placement: placement.alloc.to_rows(),
        csp,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(io::BufWriter::new(file), value)?;
    Ok(())
}

fn scenario_config(args: &SimulateArgs) -> anyhow::Result<ScenarioConfig> {
    let mut c = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut de = serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(&mut de).map_err(|e| {
                let at = e.path().to_string();
                anyhow!("{}: invalid config at `{at}`: {}", path.display(), e.into_inner())
            })?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(s) = &args.scenario {
        c.scenario = parse::<Scenario>("scenario", s)?;
    }
    if let Some(k) = args.k {
        c.services = k;
    }
    if let Some(a) = args.alpha {
        c.alpha = a;
    }
    if let Some(s) = args.seed {
        c.seed = s;
    }
    if let Some(n) = args.machines {
        c.machines = n;
    }
    if let Some(v) = args.capacity {
        c.capacity = v;
    }
    if args.scale.is_some() {
        c.scale = args.scale;
    }
    if let Some(n) = args.samples {
        c.samples = n;
    }
    if let Some(s) = &args.sampling {
        c.sampling = match s.as_str() {
            "clamped" => SamplingMode::Clamped,
            "gaussian" => SamplingMode::Gaussian,
            _ => return Err(anyhow!("unknown sampling mode `{s}`")),
        };
    }
    if let Some(d) = &args.denominator {
        c.denominator = match d.as_str() {
            "used-machines" => Denominator::UsedMachines,
            "all-machines" => Denominator::AllMachines,
            _ => return Err(anyhow!("unknown denominator `{d}`")),
        };
    }
    if let Some(algos) = &args.algos {
        c.algorithms = algos.iter().map(|a| parse("algorithm", a)).collect::<anyhow::Result<_>>()?;
    }
    if let Some(t) = args.budget.time_limit {
        c.time_limit_secs = Some(t);
    }
    if let Some(n) = args.budget.node_limit {
        c.node_limit = n;
    }
    if args.sequential {
        c.exec = sbpp::par::Exec::Sequential;
    }
    c.validate()?;
    Ok(c)
}

fn cmd_simulate(args: SimulateArgs) -> CliResult {
    let config = scenario_config(&args)?;
    let mut rows = Vec::new();
    let mut dumps = Vec::new();
    match args.multiday {
        Some(days) => {
            for s in 0..args.seeds {
                let c = ScenarioConfig { seed: config.seed + s as u64, ..config.clone() };
                rows.extend(sim::run_multiday(&c, days, &args.day_scales)?);
            }
        }
        None => {
            for out in sim::run_seeds(&config, args.seeds)? {
                rows.extend(out.rows);
                dumps.extend(out.dumps);
            }
        }
    }
    for r in rows.iter().filter(|r| r.error.is_some()) {
        log::warn!("{} seed {} {}: {}", r.scenario, r.seed, r.algo, r.error.as_deref().unwrap_or_default());
    }

    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(File::create(path).with_context(|| format!("creating {}", path.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    if let Some(path) = &args.dump {
        write_json(path, &dumps)?;
    }
    if args.out.is_some() {
        for r in sim::average_rows(&rows) {
            println!(
                "{:<10} ucac_norm={:.3} machines_norm={:.3} violation_pct={:.3}",
                r.algo.name(),
                r.ucac_norm,
                r.machines_norm,
                r.violation_pct
            );
        }
    }
    Ok(())
}

fn cmd_patterns(args: PatternsArgs) -> CliResult {
    let conf = Confidence::new(args.alpha)?;
    let instance = load_instance(&args.instance, conf)?;
    if !args.force {
        if let Some(hit) = cache::load(&args.cache_dir, &instance, conf)? {
            println!("patterns={} cached=true", hit.patterns.len());
            return Ok(());
        }
    }
    let started = Instant::now();
    let (patterns, capped) = csp::generate_instance_patterns(&instance, conf)?;
    let ms = started.elapsed().as_secs_f64() * 1e3;
    if capped {
        println!("warning: column generation stopped at its column cap");
    }
    let cache = PatternCache {
        capacity: instance.capacity(),
        alpha: conf.alpha(),
        services: instance.services().to_vec(),
        patterns,
        capped,
    };
    let path = cache::store(&args.cache_dir, &instance, &cache)?;
    println!("patterns={} cached=false generation_ms={ms:.1} path={}", cache.patterns.len(), path.display());
    Ok(())
}
