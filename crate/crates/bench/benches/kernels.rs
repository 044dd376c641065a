use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rwre_core::estimators::heat_kernel_profile;
use rwre_core::resolvent::{build_operators, solve_resolvent};
use rwre_core::spectral::h1_functional;
use rwre_core::walker::{auxiliary_env, simulate_ensemble, EnsembleOptions};
use rwre_core::{decompose, generate, GeneratorSpec};

fn stream(d: usize, side: usize) -> rwre_core::Environment {
    generate(&GeneratorSpec::stream(d, side, 1, 0.9)).expect("generate").env
}

fn h1(c: &mut Criterion) {
    let mut g = c.benchmark_group("h1_functional");
    for (d, side) in [(2, 64), (2, 256), (3, 32)] {
        let dec = decompose(&stream(d, side));
        g.bench_with_input(BenchmarkId::from_parameter(format!("d{d}_L{side}")), &dec, |b, dec| {
            b.iter(|| h1_functional(dec).expect("h1"))
        });
    }
    g.finish();
}

fn resolvent(c: &mut Criterion) {
    let mut g = c.benchmark_group("resolvent_gmres");
    g.sample_size(10);
    for side in [16, 32] {
        let dec = decompose(&stream(2, side));
        let bundle = build_operators(&dec).expect("operators");
        let f = dec.phi[0].clone();
        g.bench_with_input(BenchmarkId::from_parameter(format!("L{side}")), &f, |b, f| {
            b.iter(|| solve_resolvent(&bundle, f, 1e-3).expect("solve"))
        });
    }
    g.finish();
}

fn ensemble(c: &mut Criterion) {
    let env = stream(2, 32);
    let dec = decompose(&env);
    let opts = EnsembleOptions::new(1000, 100.0, 7);
    let mut g = c.benchmark_group("ensemble");
    g.sample_size(10);
    g.bench_function("paths1000_t100", |b| {
        b.iter(|| simulate_ensemble(&env, &dec, &opts, &[]).expect("simulate"))
    });
    g.finish();
}

fn heat_kernel(c: &mut Criterion) {
    let y = auxiliary_env(&stream(2, 64)).expect("auxiliary");
    c.bench_function("heat_kernel_L64_n256", |b| b.iter(|| heat_kernel_profile(&y, 256).expect("profile")));
}

criterion_group!(benches, h1, resolvent, ensemble, heat_kernel);
criterion_main!(benches);
