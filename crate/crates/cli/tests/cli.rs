use std::path::Path;
use std::process::{Command, Output};

use pdifmp::summaries::summarize;
use pdifmp::ObservationMode;
use pdifmp_cli::commands::{dataset_from_files, summary_json};

fn pdifmp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdifmp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = pdifmp(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn simulate_tp1_setting1_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    ok(&["simulate", "--preset", "tp1-setting1", "--out", s(&out)]);
    let rows = csv_rows(&out.join("path.csv"));
    let jumps = csv_rows(&out.join("jumps.csv"));
    assert!(
        rows.len() >= 50_001 && rows.len() <= 50_001 + jumps.len(),
        "{} rows, {} jumps",
        rows.len(),
        jumps.len()
    );
    assert_eq!(rows[0][0].parse::<f64>().unwrap(), 0.0);
    assert_eq!(rows.last().unwrap()[0].parse::<f64>().unwrap(), 500.0);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["status"], "complete");
    assert_eq!(m["details"]["n_jumps"].as_u64().unwrap() as usize, jumps.len());
    assert_eq!(m["config"]["truth"]["b"], 2.0);
}

#[test]
fn repeated_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(&["simulate", "--preset", "tp3", "--seed", "7", "--out", s(&a)]);
    ok(&[
        "simulate",
        "--preset",
        "tp3",
        "--seed",
        "7",
        "--out",
        s(&b),
        "--threads",
        "3",
    ]);
    ok(&["simulate", "--preset", "tp3", "--seed", "8", "--out", s(&c)]);
    for f in ["path.csv", "jumps.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    assert_ne!(
        std::fs::read(a.join("path.csv")).unwrap(),
        std::fs::read(c.join("path.csv")).unwrap()
    );
}

#[test]
fn tp2_regimes_alternate() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--preset", "tp2", "--out", s(dir.path())]);
    let jumps = csv_rows(&dir.path().join("jumps.csv"));
    assert!(jumps.len() > 50);
    for (k, row) in jumps.iter().enumerate() {
        let z: f64 = row[1].parse().unwrap();
        assert_eq!(z, if k % 2 == 0 { 2.0 } else { 10.0 });
        let t: f64 = row[0].parse().unwrap();
        assert!((t * 1e3 - (t * 1e3).round()).abs() < 1e-6);
    }
    let header = std::fs::read_to_string(dir.path().join("path.csv")).unwrap();
    assert!(header.starts_with("t,x1,x2,regime\n"));
}

#[test]
fn summarize_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&["simulate", "--preset", "tp1-horizon-100", "--out", s(&sim)]);
    let n_jumps = csv_rows(&sim.join("jumps.csv")).len().to_string();

    let plain = dir.path().join("plain");
    ok(&[
        "summarize",
        "--path",
        s(&sim.join("path.csv")),
        "--n-jumps",
        &n_jumps,
        "--out",
        s(&plain),
    ]);
    let ds = dataset_from_files(
        &sim.join("path.csv"),
        None,
        Some(n_jumps.parse().unwrap()),
        ObservationMode::Default,
    )
    .unwrap();
    let in_memory = summary_json(&summarize(&ds, 0.01, None).unwrap());
    let from_disk = json(&plain.join("summary.json"));
    assert_eq!(from_disk, in_memory);
    assert!(from_disk.get("slope").is_none());
    assert_eq!(from_disk["density"]["values"].as_array().unwrap().len(), 512);

    let with = dir.path().join("with");
    ok(&[
        "summarize",
        "--path",
        s(&sim.join("path.csv")),
        "--jumps",
        s(&sim.join("jumps.csv")),
        "--out",
        s(&with),
    ]);
    let j = json(&with.join("summary.json"));
    assert!(j["slope"].is_f64(), "{}", j["slope"]);
    assert_eq!(j["n_jumps"].as_u64().unwrap().to_string(), n_jumps);
}

#[test]
fn malformed_and_empty_paths_are_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let out = pdifmp(&["summarize", "--path", s(&empty), "--out", s(dir.path())]);
    assert!(!out.status.success());

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "t,x1,regime\n0,0,2\n0.01,0.1,2\n0.02,x,2\n").unwrap();
    let out = pdifmp(&["summarize", "--path", s(&bad), "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

const SMALL_INFER: &str = r#"
seed = 3
[model]
model = "tp1_ou"
horizon = 100
[truth]
sigma = 1
b = 2
lambda = 0.1
[abc]
n_pop = 50
n_pilot = 20
max_budget = 300
"#;

fn write_config(dir: &Path, body: &str, out: &Path) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, format!("output = {:?}\n{body}", s(out))).unwrap();
    p
}

#[test]
fn infer_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("infer");
    let cfg = write_config(dir.path(), SMALL_INFER, &out);
    ok(&["infer", "--config", s(&cfg)]);
    let post = csv_rows(&out.join("posterior.csv"));
    assert_eq!(post.len(), 50);
    let head = std::fs::read_to_string(out.join("posterior.csv")).unwrap();
    assert!(head.starts_with("sigma,b,lambda,weight,distance\n"));
    let wsum: f64 = post.iter().map(|r| r[3].parse::<f64>().unwrap()).sum();
    assert!((wsum - 1.0).abs() < 1e-12);
    let trace = csv_rows(&out.join("ci_trace.csv"));
    assert!(trace.len() >= 2);
    assert_eq!(trace[0][2], "inf");
    let budgets: Vec<u64> = trace.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(budgets.windows(2).all(|w| w[1] > w[0]));
    let w = json(&out.join("weights.json"));
    assert_eq!(w["weights"]["w1"], 1.0);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["status"], "complete");
    assert!(m["details"]["budget_used"].as_u64().unwrap() >= 300);
    assert_eq!(csv_rows(&out.join("populations.csv")).len(), 50 * trace.len());

    // The manifest alone reproduces the run.
    let again = dir.path().join("again");
    ok(&["infer", "--config", s(&out.join("manifest.json")), "--out", s(&again)]);
    assert_eq!(
        std::fs::read(out.join("posterior.csv")).unwrap(),
        std::fs::read(again.join("posterior.csv")).unwrap()
    );
}

#[test]
fn four_parameter_posterior_has_eta_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eta");
    let body = r#"
[model]
model = "tp4_switched_sho"
horizon = 200
[truth]
sigma = 1
b = 0.1
lambda = 0.1
eta = 20
[prior]
eta = [2, 100]
[abc]
n_pop = 30
n_pilot = 20
max_budget = 30
"#;
    let cfg = write_config(dir.path(), body, &out);
    ok(&["infer", "--config", s(&cfg)]);
    let head = std::fs::read_to_string(out.join("posterior.csv")).unwrap();
    assert!(head.starts_with("sigma,b,lambda,eta,weight,distance\n"));
    assert!(csv_rows(&out.join("posterior.csv")).iter().all(|r| r.len() == 6));
}

#[test]
fn invalid_prior_produces_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let cfg = write_config(dir.path(), &format!("{SMALL_INFER}[prior]\nsigma = [5, 1]\n"), &out);
    let res = pdifmp(&["infer", "--config", s(&cfg)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("lower < upper"));
    assert!(!out.exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let cfg = write_config(dir.path(), &SMALL_INFER.replace("n_pilot", "n_pilots"), &out);
    let res = pdifmp(&["infer", "--config", s(&cfg)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("n_pilots"));
}

#[test]
fn budget_below_population_reports_partial_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("partial");
    let cfg = write_config(
        dir.path(),
        &SMALL_INFER.replace("max_budget = 300", "max_budget = 10"),
        &out,
    );
    let res = pdifmp(&["infer", "--config", s(&cfg)]);
    assert_eq!(res.status.code(), Some(3));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["status"], "budget_exhausted");
    assert!(out.join("weights.json").exists());
    assert!(!out.join("posterior.csv").exists());
}

#[test]
fn ergodic_creates_nested_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("deep").join("er");
    let body = r#"
[model]
model = "tp1_ou"
[truth]
sigma = 1
b = 2
lambda = 0.1
[ergodic]
t_long = 500
t_star = 20
n_rep = 100
"#;
    let cfg = write_config(dir.path(), body, &out);
    ok(&["ergodic", "--config", s(&cfg)]);
    let rows = csv_rows(&out.join("densities.csv"));
    assert_eq!(rows.len(), 512);
    assert!(rows.iter().all(|r| r.len() == 3));
    let r = json(&out.join("report.json"));
    assert!(r["l1_gap"].as_f64().unwrap() >= 0.0);
}

#[test]
fn presets_are_listed_and_config_sources_are_exclusive() {
    let out = ok(&["presets"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for p in [
        "tp1-setting1",
        "tp1-horizon-1000",
        "tp4-eta",
        "tp3-jump-times",
        "tp3-cos",
    ] {
        assert!(text.lines().any(|l| l == p), "{p}");
    }
    assert!(!pdifmp(&["simulate"]).status.success());
    assert!(!pdifmp(&["simulate", "--preset", "nope"]).status.success());
    assert!(!pdifmp(&["simulate", "--preset", "tp3", "--config", "x.toml"])
        .status
        .success());
}
