use criterion::{black_box, criterion_group, criterion_main, Criterion};

use sl4slam::factor_graph::{linearize, optimize_lm, JacobianMode, LmConfig};
use sl4slam::pipeline::{run, SlamConfig};
use sl4slam::simulator::{covisible_pair, NoiseSpec, Preset, Simulation};
use sl4slam::{verify_pair, Sl4, Tangent15, VerifyConfig};

fn manifold(c: &mut Criterion) {
    let xi = Tangent15::from_slice(&[
        0.1, -0.2, 0.05, 0.3, 0.1, -0.1, 0.02, -0.01, 0.03, 0.01, -0.02, 0.01, 0.005, -0.004, 0.1,
    ]);
    let h = Sl4::exp(&xi);
    c.bench_function("sl4 exp", |b| b.iter(|| Sl4::exp(black_box(&xi))));
    c.bench_function("sl4 log", |b| b.iter(|| black_box(&h).log().unwrap()));
}

fn verification(c: &mut Criterion) {
    let (a, b) = covisible_pair(192, 32, 0.1, 0).unwrap();
    let cfg = VerifyConfig::default();
    c.bench_function("verify_pair 192x32", |bch| {
        bch.iter(|| verify_pair(black_box(&a), black_box(&b), &cfg).unwrap())
    });
}

fn backend(c: &mut Criterion) {
    let mut sim = Simulation::preset(Preset::Loop, NoiseSpec::in_model(), 0).unwrap();
    let out = run(
        &mut sim,
        SlamConfig {
            optimize_every_submap: false,
            ..Default::default()
        },
        "loop",
    )
    .unwrap();
    let graph = out.state.graph().clone();
    let values = out.state.values().clone();
    let mut g = c.benchmark_group("loop preset graph");
    g.sample_size(10);
    for mode in [JacobianMode::FiniteDifference, JacobianMode::Analytic] {
        g.bench_function(format!("linearize {mode:?}"), |b| {
            b.iter(|| linearize(&graph, &values, mode).unwrap())
        });
    }
    g.bench_function("optimize from converged", |b| {
        b.iter(|| optimize_lm(&graph, &values, &LmConfig::default()).unwrap())
    });
    g.bench_function("full run", |b| {
        b.iter(|| {
            let mut sim = Simulation::preset(Preset::Loop, NoiseSpec::in_model(), 0).unwrap();
            run(&mut sim, SlamConfig::default(), "loop").unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, manifold, verification, backend);
criterion_main!(benches);
