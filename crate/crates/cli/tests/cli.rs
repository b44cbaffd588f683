use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sbpp::sim::MetricsRow;
use serde_json::{json, Value};

fn sbpp(args: &[&str], cache: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sbpp"));
    cmd.args(args).env_remove("SBPP_PATTERN_CACHE");
    if let Some(dir) = cache {
        cmd.env("SBPP_PATTERN_CACHE", dir);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_instance(dir: &Path, name: &str, value: &Value) -> String {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_vec(value).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn services() -> Value {
    json!([
        {"id": "web", "mean": 2.0, "variance": 0.5, "limit": 6.0},
        {"id": "db", "mean": 3.0, "variance": 1.5, "limit": 9.0}
    ])
}

fn instance(request: [u32; 2]) -> Value {
    json!({
        "capacity": 20.0,
        "services": services(),
        "initial": [[1, 1], [0, 0], [0, 0], [0, 0]],
        "request": request
    })
}

#[test]
fn solve_writes_plan() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path(), "inst.json", &instance([4, 3]));
    let plan = dir.path().join("plan.json");
    for algo in ["bf-nsigma", "bf-ucac", "biheu", "csp-ucac", "csp-mac"] {
        let out = sbpp(&["solve", "--algo", algo, "--alpha", "0.99", "-i", &inst, "-o", plan.to_str().unwrap()], None);
        assert_eq!(out.status.code(), Some(0), "{algo}: {}", String::from_utf8_lossy(&out.stderr));
        let line = stdout(&out);
        assert!(line.starts_with("ucac=") && line.contains(" machines=") && line.contains(" solve_ms="), "{line}");
        let doc: Value = serde_json::from_slice(&fs::read(&plan).unwrap()).unwrap();
        let placed: u64 = doc["placement"]
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|r| r.as_array().unwrap())
            .map(|x| x.as_u64().unwrap())
            .sum();
        assert_eq!(placed, 7);
        assert_eq!(doc["algo"], algo);
        assert_eq!(doc.get("csp").is_some(), algo.starts_with("csp"));
    }
}

#[test]
fn malformed_instance_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut bad = instance([1, 1]);
    bad["services"][1]["mean"] = json!("three");
    let inst = write_instance(dir.path(), "bad.json", &bad);
    let out = sbpp(&["solve", "-i", &inst], None);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("services[1].mean"), "{err}");

    let missing = sbpp(&["solve", "-i", dir.path().join("nope.json").to_str().unwrap()], None);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn infeasible_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path(), "big.json", &instance([60, 60]));
    for algo in ["bf-ucac", "csp-ucac"] {
        let out = sbpp(&["solve", "--algo", algo, "-i", &inst], None);
        assert_eq!(out.status.code(), Some(2), "{algo}");
    }
}

#[test]
fn unknown_names_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path(), "inst.json", &instance([1, 1]));
    assert_eq!(sbpp(&["solve", "--algo", "first-fit", "-i", &inst], None).status.code(), Some(1));
    assert_eq!(sbpp(&["simulate", "--scenario", "sideways"], None).status.code(), Some(1));
    assert_eq!(sbpp(&["frobnicate"], None).status.code(), Some(1));
    assert_eq!(sbpp(&["--help"], None).status.code(), Some(0));
}

fn read_rows(path: &Path) -> Vec<MetricsRow> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "scenario",
            "algo",
            "alpha",
            "K",
            "seed",
            "ucac",
            "ucac_norm",
            "machines",
            "machines_norm",
            "violation_pct",
            "solve_ms"
        ]
    );
    r.deserialize().map(|row| row.unwrap()).collect()
}

const SMALL: &[&str] = &["--machines", "40", "--samples", "500", "--node-limit", "200", "--alpha", "0.99"];

#[test]
fn simulate_rows_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("m.csv");
    let dump = dir.path().join("d.json");
    let mut args = vec!["simulate", "--scenario", "scale-down", "--k", "5", "--seeds", "3"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["-o", csv.to_str().unwrap(), "--dump", dump.to_str().unwrap()]);
    let out = sbpp(&args, None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_rows(&csv);
    assert_eq!(rows.len(), 15);
    assert!(rows.iter().filter(|r| r.algo == sbpp::Algorithm::BfNsigma).all(|r| r.ucac_norm == 1.0));
    let dumps: Value = serde_json::from_slice(&fs::read(&dump).unwrap()).unwrap();
    assert_eq!(dumps.as_array().unwrap().len(), 15);

    let again = dir.path().join("m2.csv");
    let mut rerun = args.clone();
    let n = rerun.len();
    rerun[n - 3] = again.to_str().unwrap();
    assert_eq!(sbpp(&rerun, None).status.code(), Some(0));
    let strip =
        |rows: Vec<MetricsRow>| -> Vec<(u64, usize)> { rows.iter().map(|r| (r.ucac.to_bits(), r.machines)).collect() };
    assert_eq!(strip(read_rows(&csv)), strip(read_rows(&again)));
}

#[test]
fn simulate_multiday() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("days.csv");
    let mut args = vec!["simulate", "--multiday", "7", "--k", "3"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["-o", csv.to_str().unwrap()]);
    let out = sbpp(&args, None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_rows(&csv);
    assert_eq!(rows.len(), 35);
    for d in 1..=7 {
        assert_eq!(rows.iter().filter(|r| r.scenario == format!("day-{d}")).count(), 5);
    }
}

#[test]
fn simulate_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"scenario": "empty", "services": 2, "machines": 30, "samples": 0, "algorithms": ["bf-nsigma", "csp-ucac"]}"#)
        .unwrap();
    let out = sbpp(&["simulate", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(2).unwrap().starts_with("empty,csp-ucac,"));

    fs::write(&cfg, r#"{"services": 2, "machnes": 30}"#).unwrap();
    let out = sbpp(&["simulate", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn pattern_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let one = json!({
        "capacity": 20.0,
        "services": [{"id": "web", "mean": 2.0, "variance": 0.5, "limit": 6.0}],
        "initial": [[0], [0]],
        "request": [5]
    });
    let inst = write_instance(dir.path(), "one.json", &one);
    let first = sbpp(&["patterns", "-i", &inst, "--alpha", "0.99"], Some(&cache));
    assert_eq!(first.status.code(), Some(0));
    assert!(stdout(&first).starts_with("patterns=1 cached=false"), "{}", stdout(&first));

    let hit = sbpp(&["patterns", "-i", &inst, "--alpha", "0.99"], Some(&cache));
    assert!(stdout(&hit).starts_with("patterns=1 cached=true"), "{}", stdout(&hit));

    let other = sbpp(&["patterns", "-i", &inst, "--alpha", "0.999"], Some(&cache));
    assert!(stdout(&other).contains("cached=false"));
    let back = sbpp(&["patterns", "-i", &inst, "--alpha", "0.99"], Some(&cache));
    assert!(stdout(&back).contains("cached=false"));
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 1);

    let two = write_instance(dir.path(), "two.json", &instance([4, 3]));
    assert_eq!(sbpp(&["patterns", "-i", &two, "--alpha", "0.99"], Some(&cache)).status.code(), Some(0));
    let cold = sbpp(&["solve", "-i", &two, "--alpha", "0.99"], None);
    let warm = sbpp(&["solve", "-i", &two, "--alpha", "0.99"], Some(&cache));
    let ucac = |o: &Output| stdout(o).split_whitespace().next().unwrap().to_string();
    assert_eq!(ucac(&cold), ucac(&warm));
}
