use std::path::{Path, PathBuf};
use std::process::ExitCode;

use celldelay::config::{Experiment, PolicyKind};
use celldelay::io::{
    write_checkpoints, write_metrics_json, write_oracle_json, write_sweep_csv, write_sweep_json, write_trace_csv,
    write_users_csv, SweepFile, SWEEP_SCHEMA,
};
use celldelay::oracle::{bellman_residual, relative_value_iteration, OracleModel};
use celldelay::sim::{run, Estimate};
use celldelay::verify::{verify_fixed_points, DistanceSeries};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "celldelay", version, about = "Delay-aware multi-cell downlink simulator")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Parse and check a configuration without writing anything.
    Validate(Common),
    /// Simulate one policy.
    Run(Common),
    /// Run the `[sweep]` grid; `--policy` takes a comma list or `all`.
    Sweep(Common),
    /// Solve the centralized problem by relative value iteration.
    Oracle(Common),
    /// Compare learned tables against the exact per-user fixed points.
    VerifyFixedPoints(Common),
    /// Turn run outputs into plot-ready CSVs.
    Report {
        /// Directory scanned for outputs; defaults to the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, env = "CELLDELAY_OUT", default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, env = "CELLDELAY_OUT", default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted-key override such as `arrivals.rate=0.4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    horizon: Option<u64>,
}

enum Failure {
    Config(String),
    Runtime(String),
    Acceptance(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
            Failure::Acceptance(_) => 4,
        }
    }
}

impl From<celldelay::Error> for Failure {
    fn from(e: celldelay::Error) -> Self {
        use celldelay::Error::*;
        match e {
            Config(_) | Parse(_) | Unsupported(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.verb {
        Verb::Validate(c) => validate(&c),
        Verb::Run(c) => run_one(&c),
        Verb::Sweep(c) => sweep(&c),
        Verb::Oracle(c) => oracle(&c),
        Verb::VerifyFixedPoints(c) => verify(&c),
        Verb::Report { input, out } => report(input.as_deref().unwrap_or(&out), &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(m) => eprintln!("error: {m}"),
                Failure::Runtime(m) => eprintln!("error: {m}"),
                Failure::Acceptance(m) => eprintln!("FAIL: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn load(c: &Common) -> Outcome<Experiment> {
    let path = &c.config;
    if !path.is_file() {
        return Err(Failure::Config(format!("config file {} not found", path.display())));
    }
    let mut overrides = c.set.clone();
    if let Some(seed) = c.seed {
        overrides.push(format!("run.seed={seed}"));
    }
    if let Some(p) = c.policy.as_deref().filter(|p| !p.contains(',') && *p != "all") {
        let kind: PolicyKind = p.parse()?;
        overrides.push(format!("policy=\"{}\"", kind.name()));
    }
    let e = Experiment::load(path, &overrides)?;
    let Some(h) = c.horizon else {
        return Ok(e);
    };
    // A shorter horizon keeps warmup and checkpoints consistent unless they
    // were set explicitly.
    overrides.push(format!("run.horizon={h}"));
    let explicit = |key: &str| c.set.iter().any(|s| s.trim_start().starts_with(key));
    if !explicit("run.warmup") && e.config.run.warmup >= h {
        overrides.push(format!("run.warmup={}", h / 10));
    }
    if !explicit("run.checkpoints") {
        let kept: Vec<String> = e.config.run.checkpoints.iter().filter(|&&s| s <= h).map(|s| s.to_string()).collect();
        overrides.push(format!("run.checkpoints=[{}]", kept.join(",")));
    }
    Ok(Experiment::load(path, &overrides)?)
}

fn out_dir(path: &Path) -> Outcome {
    std::fs::create_dir_all(path).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn fmt(e: &Estimate) -> String {
    format!("{:.4} ± {:.4}", e.mean, e.half_width)
}

fn validate(c: &Common) -> Outcome {
    let e = load(c)?;
    let sc = e.scenario()?;
    if e.config.policy == PolicyKind::Oracle {
        OracleModel::new(&sc, &e.config.oracle)?;
    } else {
        e.build_policy(&sc, e.config.run.seed)?;
    }
    if let Some(s) = &e.config.sweep {
        e.sweep_points()?;
        println!("sweep: {} over {} values, {} replicates", s.key, s.values.len(), s.replicates);
    }
    println!(
        "ok: {} BSs x {} users, buffer {}, {} patterns, policy {}, horizon {} (warmup {})",
        sc.cfg.num_bs,
        sc.cfg.users_per_bs,
        sc.cfg.buffer_size,
        sc.patterns.len(),
        e.config.policy.name(),
        e.config.run.horizon,
        e.config.run.warmup
    );
    Ok(())
}

fn run_one(c: &Common) -> Outcome {
    let e = load(c)?;
    let sc = e.scenario()?;
    let mut policy = e.build_policy(&sc, e.config.run.seed)?;
    let out = run(&sc, policy.as_mut(), &e.config.run)?;
    out_dir(&c.out)?;
    std::fs::write(c.out.join("config.toml"), e.to_toml()).map_err(celldelay::Error::from)?;
    write_metrics_json(&c.out.join("metrics.json"), &out.metrics)?;
    write_users_csv(&c.out.join("users.csv"), &out.metrics, sc.cfg.users_per_bs)?;
    if e.config.run.trace {
        write_trace_csv(&c.out.join("trace.csv"), &out.trace)?;
    }
    if !out.snapshots.is_empty() {
        write_checkpoints(&c.out.join("checkpoints.csv"), &out.snapshots)?;
    }
    let m = &out.metrics;
    println!(
        "{}: delay {}, cost {}, drop {:.4} over {} slots",
        m.policy,
        fmt(&m.delay),
        fmt(&m.cost),
        m.drop_prob,
        m.slots
    );
    Ok(())
}

fn sweep(c: &Common) -> Outcome {
    let e = load(c)?;
    let key = e
        .config
        .sweep
        .as_ref()
        .map(|s| s.key.clone())
        .ok_or_else(|| Failure::Config("configuration has no [sweep] section".into()))?;
    let kinds: Vec<PolicyKind> = match c.policy.as_deref() {
        Some("all") => PolicyKind::ALL.to_vec(),
        Some(list) => list.split(',').map(|p| p.trim().parse()).collect::<Result<_, _>>()?,
        None => vec![e.config.policy],
    };
    out_dir(&c.out)?;
    std::fs::write(c.out.join("config.toml"), e.to_toml()).map_err(celldelay::Error::from)?;
    let mut files = Vec::new();
    for kind in kinds {
        let rows = e.run_sweep(kind)?;
        let dir = c.out.join(kind.name());
        out_dir(&dir)?;
        write_sweep_json(&dir.join("sweep.json"), &key, kind.name(), &rows)?;
        for r in &rows {
            println!("{} {key}={}: delay {}, drop {:.4}", kind.name(), r.value, fmt(&r.delay), r.drop_prob);
        }
        files.push(SweepFile {
            schema: SWEEP_SCHEMA.into(),
            key: key.clone(),
            policy: kind.name().into(),
            rows,
        });
    }
    write_sweep_csv(&c.out.join("sweep.csv"), &files)?;
    Ok(())
}

fn oracle(c: &Common) -> Outcome {
    let e = load(c)?;
    let sc = e.scenario()?;
    let model = OracleModel::new(&sc, &e.config.oracle)?;
    let (table, policy) = relative_value_iteration(&model, &e.config.oracle)?;
    out_dir(&c.out)?;
    write_oracle_json(&c.out.join("oracle.json"), &table, &policy)?;
    println!(
        "theta {:.6} after {} iterations, span {:.2e}, residual {:.2e}, monotone {}",
        table.theta,
        table.iterations,
        table.final_span,
        bellman_residual(&model, &table),
        table.is_monotone()
    );
    Ok(())
}

fn verify(c: &Common) -> Outcome {
    let e = load(c)?;
    let sc = e.scenario()?;
    let report = verify_fixed_points(&sc, &e.config.proposed, &e.config.run)?;
    out_dir(&c.out)?;
    let json = serde_json::to_string_pretty(&report).map_err(celldelay::Error::from)?;
    std::fs::write(c.out.join("fixed_points.json"), json).map_err(celldelay::Error::from)?;
    let show = |name: &str, s: &DistanceSeries, pass: bool| {
        let pts: Vec<String> = s.slots.iter().zip(&s.worst).map(|(t, d)| format!("{t}:{d:.4}")).collect();
        println!("{name} {} [{}]", if pass { "pass" } else { "fail" }, pts.join(" "));
    };
    show("value", &report.value, report.value_pass);
    show("qfactor", &report.qfactor, report.qfactor_pass);
    if report.value_pass && report.qfactor_pass {
        Ok(())
    } else {
        Err(Failure::Acceptance("learned tables did not reach the fixed points".into()))
    }
}

fn report(input: &Path, out: &Path) -> Outcome {
    let status = celldelay::report::report(input, out)?;
    let mut failed = false;
    for s in &status {
        println!("{}: {} rows -> {}", s.name, s.rows, s.path.display());
        for err in &s.errors {
            eprintln!("  {}: {err}", s.name);
            failed = true;
        }
    }
    if failed {
        return Err(Failure::Runtime("some inputs could not be read".into()));
    }
    Ok(())
}
