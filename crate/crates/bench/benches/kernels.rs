use bosefield::dynamics::{dyson_cocycle, sector_hamiltonian_sparse, QUAD_TOL_REL};
use bosefield::numkit;
use bosefield_bench::{hermitian, observable, system};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn eig(c: &mut Criterion) {
    let mut g = c.benchmark_group("hermitian_eig");
    for n in [16, 64, 128] {
        let m = hermitian(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| b.iter(|| numkit::hermitian_eig(m).unwrap()));
    }
    g.finish();
}

fn matmul(c: &mut Criterion) {
    let mut g = c.benchmark_group("matmul");
    for n in [64, 256] {
        let (a, m) = (hermitian(n), hermitian(n));
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| a.matmul(&m)));
    }
    g.finish();
}

fn sector_hamiltonian(c: &mut Criterion) {
    let mut g = c.benchmark_group("sector_hamiltonian");
    for d in [8, 16, 32] {
        let (spec, basis) = system(d, 2);
        g.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, _| b.iter(|| sector_hamiltonian_sparse(&spec, &basis, 2).unwrap()));
    }
    g.finish();
}

fn dyson(c: &mut Criterion) {
    let (spec, basis) = system(6, 2);
    let obs = observable(&basis, 2);
    let tol = QUAD_TOL_REL * obs.norm();
    c.bench_function("dyson_cocycle_d6_order6", |b| b.iter(|| dyson_cocycle(&spec, &basis, 2, &obs, 0.25, 6, tol).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = eig, matmul, sector_hamiltonian, dyson
}
criterion_main!(benches);
