use celldelay::channel::{candidate_rates, sample_csi, BandPlan};
use celldelay::config::PolicyKind;
use celldelay::oracle::{relative_value_iteration, OracleModel};
use celldelay::rng::{stream, Stream};
use celldelay::sim::{run, RunSpec};
use celldelay::IciPattern;
use celldelay_bench::shipped;
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

fn oracle_solve(c: &mut Criterion) {
    let e = shipped("example1.cfg", &[]);
    let sc = e.scenario().unwrap();
    let opts = e.config.oracle;
    c.bench_function("oracle/example1_rvi", |b| {
        b.iter(|| {
            let model = OracleModel::new(&sc, &opts).unwrap();
            relative_value_iteration(&model, &opts).unwrap().0.theta
        })
    });
}

fn slot_loop(c: &mut Criterion) {
    let mut group = c.benchmark_group("run");
    group.sample_size(10);
    let cases = [
        ("example1.cfg", PolicyKind::Proposed, 10_000),
        ("macro7.cfg", PolicyKind::Proposed, 2_000),
        ("macro7.cfg", PolicyKind::Backpressure, 2_000),
        ("macro7.cfg", PolicyKind::Timescale, 2_000),
    ];
    for (cfg, kind, horizon) in cases {
        let e = shipped(cfg, &[]);
        let sc = e.scenario().unwrap();
        let spec = RunSpec::with_horizon(7, horizon);
        group.bench_function(format!("{}/{}/{horizon}", cfg.trim_end_matches(".cfg"), kind.name()), |b| {
            b.iter_batched(
                || e.config.build_policy(kind, &sc, 7).unwrap(),
                |mut p| run(&sc, p.as_mut(), &spec).unwrap().metrics.delay.mean,
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn rates(c: &mut Criterion) {
    let e = shipped("macro19.cfg", &[]);
    let sc = e.scenario().unwrap();
    let csi = sample_csi(&sc.channel, &mut stream(3, Stream::Channel));
    let band = BandPlan::shared(sc.cfg.num_bs);
    let p = IciPattern::all_on(sc.cfg.num_bs);
    c.bench_function("channel/macro19_candidate_rates", |b| {
        b.iter(|| candidate_rates(&sc.cfg, &csi, &p, &band).rate[0])
    });
}

criterion_group!(benches, oracle_solve, slot_loop, rates);
criterion_main!(benches);
