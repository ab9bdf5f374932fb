use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn celldelay(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_celldelay"))
        .args(args)
        .env_remove("CELLDELAY_OUT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn listing(dir: &Path) -> Vec<PathBuf> {
    let mut all: Vec<PathBuf> = walk(dir);
    all.sort();
    all
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    std::fs::read_dir(dir)
        .unwrap()
        .flat_map(|e| {
            let p = e.unwrap().path();
            if p.is_dir() {
                let mut v = walk(&p);
                v.push(p);
                v
            } else {
                vec![p]
            }
        })
        .collect()
}

#[test]
fn validate_accepts_shipped_configs_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["example1.cfg", "macro7.cfg", "macro19.cfg"] {
        let out = dir.path().join("never");
        let cfg = config(name);
        let o = celldelay(&["validate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).starts_with("sweep:") || stdout(&o).starts_with("ok:"));
    }
    assert!(listing(dir.path()).is_empty());
}

#[test]
fn config_errors_exit_with_code_2() {
    let cfg = config("example1.cfg");
    let cfg = cfg.to_str().unwrap();
    for args in [
        vec!["validate", "--config", cfg, "--set", "system.num_bs=\"x\""],
        vec!["validate", "--config", cfg, "--set", "nonsense.key=1"],
        vec!["validate", "--config", cfg, "--policy", "greedy"],
        vec!["validate", "--config", "/nonexistent.cfg"],
    ] {
        let o = celldelay(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    // The oracle refuses instances beyond its state budget.
    let macro7 = config("macro7.cfg");
    let o = celldelay(&["validate", "--config", macro7.to_str().unwrap(), "--policy", "oracle"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_writes_metrics_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("example1.cfg");
    let go = |sub: &str| {
        let out = dir.path().join(sub);
        let o = celldelay(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--horizon",
            "20000",
            "--seed",
            "5",
            "--set",
            "run.trace=true",
            "--policy",
            "backpressure",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = go("a");
    let b = go("b");
    for f in ["metrics.json", "users.csv", "trace.csv", "config.toml"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["policy"], "backpressure");
    assert_eq!(m["seed"], 5);
    assert_eq!(m["horizon"], 20000);
    // Checkpoints past the shortened horizon are dropped.
    assert!(!a.join("checkpoints.csv").exists());
}

#[test]
fn environment_sets_the_default_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("example1.cfg");
    let o = Command::new(env!("CARGO_BIN_EXE_celldelay"))
        .args(["oracle", "--config", cfg.to_str().unwrap()])
        .env("CELLDELAY_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("oracle.json")).unwrap()).unwrap();
    assert_eq!(doc["values"].as_array().unwrap().len(), 256);
    assert!(stdout(&o).starts_with("theta "));
}

#[test]
fn sweep_and_report_produce_figure_data() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let cfg = config("example1.cfg");
    let o = celldelay(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        runs.to_str().unwrap(),
        "--horizon",
        "5000",
        "--policy",
        "proposed,csit_only",
        "--set",
        "sweep.values=[0.1, 0.3]",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(runs.join("proposed/sweep.json").is_file());
    assert!(runs.join("csit_only/sweep.json").is_file());
    let csv = std::fs::read_to_string(runs.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);

    let figs = dir.path().join("figs");
    let o = celldelay(&["report", "--input", runs.to_str().unwrap(), "--out", figs.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sweep = std::fs::read_to_string(figs.join("fig_delay_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 4);
    assert_eq!(std::fs::read_to_string(figs.join("fig_queue_cdf.csv")).unwrap().lines().count(), 1);

    let missing = dir.path().join("missing");
    let o = celldelay(&["report", "--input", missing.to_str().unwrap(), "--out", figs.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_needs_a_grid() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("example1.cfg")).unwrap();
    let cut = text.find("[sweep]").unwrap();
    let cfg = dir.path().join("nosweep.cfg");
    std::fs::write(&cfg, &text[..cut]).unwrap();
    let o = celldelay(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_verification_exits_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("example1.cfg");
    let out = dir.path().join("v");
    // Zero step sizes freeze the tables, so the distance never shrinks.
    let o = celldelay(&[
        "verify-fixed-points",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--horizon",
        "20000",
        "--set",
        "run.checkpoints=[10000, 20000]",
        "--set",
        "proposed.value_step.a=0.0",
        "--set",
        "proposed.q_step.a=0.0",
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("fixed_points.json")).unwrap()).unwrap();
    assert_eq!(report["value_pass"], false);
    let worst = report["value"]["worst"].as_array().unwrap();
    assert_eq!(worst[0], worst[1]);

    // Macro instances are refused with guidance.
    let macro7 = config("macro7.cfg");
    let o = celldelay(&["verify-fixed-points", "--config", macro7.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("discrete"));
}
