//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use celldelay::config::{Experiment, PolicyKind};
use celldelay::oracle::{OracleModel, OraclePolicy, relative_value_iteration};
use celldelay::proposed::PartitionSpec;
use celldelay::sim::{run, Estimate, MetricsRecord, RunSpec, SweepRow};
use celldelay::verify::{noise_check, verify_fixed_points};

type Outcome = (bool, String);

/// Accounting results of every run whose metrics this suite sees.
static LEDGER: Mutex<Vec<bool>> = Mutex::new(Vec::new());

fn note(m: &MetricsRecord) {
    LEDGER.lock().unwrap().push(m.accounting.balances());
}

fn note_rows(rows: &[SweepRow]) {
    rows.iter().flat_map(|r| &r.runs).for_each(note);
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load(name: &str, overrides: &[&str]) -> Experiment {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    Experiment::load(&config(name), &o).expect("config loads")
}

fn simulate(e: &Experiment, kind: PolicyKind, spec: &RunSpec) -> MetricsRecord {
    let scenario = e.scenario().unwrap();
    let mut policy = e.config.build_policy(kind, &scenario, spec.seed).unwrap();
    let out = run(&scenario, policy.as_mut(), spec).unwrap();
    note(&out.metrics);
    out.metrics
}

/// `a` no larger than `b`, or statistically indistinguishable from it.
fn le_or_overlap(a: &Estimate, b: &Estimate) -> bool {
    a.mean <= b.mean || a.overlaps(b)
}

fn fmt(e: &Estimate) -> String {
    format!("{:.3}±{:.3}", e.mean, e.half_width)
}

fn criterion1() -> Outcome {
    let e = load("example1.cfg", &[]);
    let scenario = e.scenario().unwrap();
    let opts = e.config.oracle;
    let t = Instant::now();
    let model = OracleModel::new(&scenario, &opts).unwrap();
    let (table, policy) = relative_value_iteration(&model, &opts).unwrap();
    let elapsed = t.elapsed();
    let monotone = table.is_monotone();
    let mut player = OraclePolicy::new(model, policy);
    let spec = RunSpec {
        checkpoints: Vec::new(),
        ..e.config.run.clone()
    };
    let out = run(&scenario, &mut player, &spec).unwrap();
    note(&out.metrics);
    let cost = out.metrics.cost;
    let ok = table.final_span < 1e-9 && elapsed < Duration::from_secs(60) && monotone && cost.contains(table.theta);
    (
        ok,
        format!(
            "oracle span {:.1e} after {} iterations in {:.2?}, monotone {monotone}, theta {:.4}, simulated cost {} over {} slots",
            table.final_span,
            table.iterations,
            elapsed,
            table.theta,
            fmt(&cost),
            out.metrics.slots
        ),
    )
}

/// Criteria 2 and 3 share one learning run.
fn criteria2_3() -> (Outcome, Outcome) {
    let e = load("example1.cfg", &[]);
    let scenario = e.scenario().unwrap();
    let report = verify_fixed_points(&scenario, &e.config.proposed, &e.config.run).unwrap();
    let series = |s: &celldelay::verify::DistanceSeries| {
        s.slots
            .iter()
            .zip(&s.worst)
            .map(|(t, d)| format!("{t}:{d:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    (
        (report.value_pass, format!("value-table distance by slot {}", series(&report.value))),
        (report.qfactor_pass, format!("Q-table distance by slot {}", series(&report.qfactor))),
    )
}

fn criterion4() -> Outcome {
    let e = load("example1.cfg", &[]);
    let scenario = e.scenario().unwrap();
    let spec = RunSpec {
        horizon: 400_000,
        warmup: 0,
        checkpoints: Vec::new(),
        ..e.config.run.clone()
    };
    let check = noise_check(&scenario, &e.config.proposed, &spec).unwrap();
    let enough = check.value.iter().chain(&check.qfactor).all(|d| d.count() >= 100_000);
    let worst = check
        .value
        .iter()
        .chain(&check.qfactor)
        .map(|d| (d.mean() / d.std_error()).abs())
        .fold(0.0, f64::max);
    let fewest = check.value.iter().chain(&check.qfactor).map(|d| d.count()).min().unwrap_or(0);
    (
        enough && check.within_band(3.0),
        format!("worst |mean Z| / s.e. = {worst:.2} over {} diagnostics, at least {fewest} samples each",
            check.value.len() + check.qfactor.len()),
    )
}

fn criterion5() -> Outcome {
    let e = load("example1.cfg", &[]);
    let rows = |k: PolicyKind| {
        let r = e.run_sweep(k).unwrap();
        note_rows(&r);
        r
    };
    let oracle = rows(PolicyKind::Oracle);
    let proposed = rows(PolicyKind::Proposed);
    let baselines: Vec<(PolicyKind, Vec<SweepRow>)> = [PolicyKind::CsitOnly, PolicyKind::Backpressure, PolicyKind::Timescale]
        .into_iter()
        .map(|k| (k, rows(k)))
        .collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, p) in proposed.iter().enumerate() {
        let o = &oracle[i];
        // The oracle is optimal; the proposed scheme can only match it.
        ok &= le_or_overlap(&o.delay, &p.delay);
        let mut cell = format!("lambda {}: oracle {} proposed {} (gap {:+.3})", p.value, fmt(&o.delay), fmt(&p.delay),
            p.delay.mean - o.delay.mean);
        for (k, b) in &baselines {
            let b = &b[i];
            let stable = b.drop_prob <= 0.05;
            if stable {
                ok &= le_or_overlap(&p.delay, &b.delay);
            }
            cell += &format!(" {} {}{}", k.name(), fmt(&b.delay), if stable { "" } else { " (unstable)" });
        }
        parts.push(cell);
    }
    (ok, parts.join("; "))
}

fn monotone(rows: &[SweepRow], increasing: bool) -> bool {
    rows.windows(2).all(|w| {
        let (a, b) = (&w[0].delay, &w[1].delay);
        if increasing {
            le_or_overlap(a, b)
        } else {
            le_or_overlap(b, a)
        }
    })
}

fn criterion6() -> Outcome {
    let power = load("macro7.cfg", &[]);
    let loading = load("macro7.cfg", &["sweep.key=\"arrivals.rate\"", "sweep.values=[0.5, 1.0, 1.5]"]);
    let timed = |e: &Experiment| {
        let t = Instant::now();
        let rows = e.run_sweep(PolicyKind::Proposed).unwrap();
        note_rows(&rows);
        (rows, t.elapsed())
    };
    let (p, tp) = timed(&power);
    let (l, tl) = timed(&loading);
    let limit = Duration::from_secs(600);
    let ok = monotone(&p, false) && monotone(&l, true) && tp < limit && tl < limit;
    let show = |rows: &[SweepRow]| rows.iter().map(|r| format!("{}:{}", r.value, fmt(&r.delay))).collect::<Vec<_>>().join(" ");
    (
        ok,
        format!("delay vs power dBm {} ({tp:.1?}); delay vs rate {} ({tl:.1?})", show(&p), show(&l)),
    )
}

fn criterion7() -> Outcome {
    let e = load("macro7.cfg", &["system.power_dbm=25.0"]);
    let spec = e.config.run.clone();
    let proposed = simulate(&e, PolicyKind::Proposed, &spec);
    let mut ok = true;
    let mut parts = Vec::new();
    let pc = proposed.queue_cdf();
    for k in [PolicyKind::CsitOnly, PolicyKind::Backpressure, PolicyKind::Timescale] {
        let b = simulate(&e, k, &spec);
        let bc = b.queue_cdf();
        // Binomial standard errors at each level, over user-slots.
        let n = b.histogram.iter().sum::<u64>() as f64;
        let mut worst: Option<(usize, f64, f64)> = None;
        for (q, (x, y)) in pc.iter().zip(&bc).enumerate() {
            let se = (x * (1.0 - x) / n).sqrt() + (y * (1.0 - y) / n).sqrt();
            if *x + 1.96 * se < *y && worst.is_none_or(|w| y - x > w.2 - w.1) {
                worst = Some((q, *x, *y));
            }
        }
        match worst {
            None => parts.push(format!("{} dominated", k.name())),
            Some((q, x, y)) => {
                ok = false;
                parts.push(format!("{} not dominated (q = {q}: proposed {x:.3} < {y:.3})", k.name()));
            }
        }
    }
    (ok, parts.join("; "))
}

fn criterion8() -> Outcome {
    let e = load("macro7.cfg", &[]);
    let spec = RunSpec {
        checkpoints: Vec::new(),
        ..e.config.run.clone()
    };
    let per_1e4 = |m: &MetricsRecord| {
        let msgs = m.messages.as_ref().expect("proposed counts messages");
        let worst = *msgs.iter().max().unwrap() as f64;
        worst * 1e4 / m.horizon as f64
    };
    let regions = per_1e4(&simulate(&e, PolicyKind::Proposed, &spec));
    let mut control = e.clone();
    control.config.proposed.partition = PartitionSpec::Singletons;
    let singletons = per_1e4(&simulate(&control, PolicyKind::Proposed, &spec));
    (
        regions < 1e4 && regions < singletons,
        format!("busiest BS sends {regions:.0} messages per 10^4 slots with 4 regions, {singletons:.0} without partition"),
    )
}

fn criterion9() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (file, kinds) in [
        ("example1.cfg", PolicyKind::ALL.to_vec()),
        ("macro7.cfg", vec![PolicyKind::Proposed, PolicyKind::Timescale, PolicyKind::Backpressure]),
    ] {
        let e = load(file, &[]);
        let spec = RunSpec {
            horizon: 20_000,
            warmup: 2_000,
            checkpoints: vec![10_000, 20_000],
            trace: true,
            ..e.config.run.clone()
        };
        let scenario = e.scenario().unwrap();
        for k in kinds {
            let once = || {
                let mut p = e.config.build_policy(k, &scenario, spec.seed).unwrap();
                let out = run(&scenario, p.as_mut(), &spec).unwrap();
                note(&out.metrics);
                (serde_json::to_string(&out.metrics).unwrap(), format!("{:?}", out.trace), format!("{:?}", out.snapshots))
            };
            if once() != once() {
                ok = false;
                parts.push(format!("{file}/{} differs between identical runs", k.name()));
            }
        }
    }
    let e = load("example1.cfg", &["run.horizon=50000", "run.warmup=5000", "run.checkpoints=[]"]);
    let a = e.run_sweep(PolicyKind::Proposed).unwrap();
    let b = e.run_sweep(PolicyKind::Proposed).unwrap();
    note_rows(&a);
    if serde_json::to_string(&a).unwrap() != serde_json::to_string(&b).unwrap() {
        ok = false;
        parts.push("example1 sweep differs between identical runs".into());
    }
    let ledger = LEDGER.lock().unwrap();
    let balanced = ledger.iter().filter(|b| **b).count();
    ok &= balanced == ledger.len();
    parts.push(format!("identical reruns bit-identical; accounting exact on {balanced} of {} runs", ledger.len()));
    (ok, parts.join("; "))
}

fn guarded<T>(f: impl FnOnce() -> T) -> Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).map_err(|e| {
        e.downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())
    })
}

fn main() {
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut push = |n: u32, r: Result<Outcome, String>| {
        let o = r.unwrap_or_else(|e| (false, format!("error: {e}")));
        println!("{} criterion {n}: {}", if o.0 { "PASS" } else { "FAIL" }, o.1);
        results.push((n, o));
    };
    push(1, guarded(criterion1));
    match guarded(criteria2_3) {
        Ok((c2, c3)) => {
            push(2, Ok(c2));
            push(3, Ok(c3));
        }
        Err(e) => {
            push(2, Err(e.clone()));
            push(3, Err(e));
        }
    }
    push(4, guarded(criterion4));
    push(5, guarded(criterion5));
    push(6, guarded(criterion6));
    push(7, guarded(criterion7));
    push(8, guarded(criterion8));
    push(9, guarded(criterion9));
    let failed: Vec<u32> = results.iter().filter(|r| !r.1 .0).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", results.len());
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
