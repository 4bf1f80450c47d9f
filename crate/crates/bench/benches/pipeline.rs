use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mpb_bench as fx;
use mpb_core::classical;
use mpb_core::modes::privileged_state;
use mpb_core::scenario::TrajectoryParams;
use mpb_core::state::DensityMatrix;
use mpb_core::wwm::{self, PhaseSpaceGrid};

fn poles(c: &mut Criterion) {
    let fb = fx::flat_band();
    c.bench_function("flat_band/build_400", |b| b.iter(fx::flat_band));
    c.bench_function("flat_band/find_pole", |b| b.iter(|| black_box(&fb).pole().unwrap()));
    c.bench_function("flat_band/reduced_series_400", |b| b.iter(|| fx::reduced_series(&fb, 400)));
}

fn modes(c: &mut Criterion) {
    let fb = fx::flat_band();
    let (times, states) = fx::reduced_series(&fb, 400);
    let channels = fb.catalogue().unwrap().density_channels();
    c.bench_function("modes/operator_fit_400", |b| {
        b.iter(|| mpb_core::modes::OperatorModes::fit(&times, &states, &channels, 1.0).unwrap())
    });
    let ops = fx::operator_modes(&fb, 400);
    let slow = ops.effective_gamma().unwrap().slow_count();
    c.bench_function("modes/privileged_state", |b| b.iter(|| privileged_state(&ops, slow, black_box(50.0)).unwrap()));
}

fn wigner(c: &mut Criterion) {
    let mut group = c.benchmark_group("wigner");
    for n in [64, 128, 256] {
        let g = fx::position_grid(n);
        let rho = DensityMatrix::from_nearly_valid(fx::gaussian(&g)).unwrap();
        group
            .bench_with_input(BenchmarkId::new("state", n), &n, |b, _| b.iter(|| wwm::state_wigner(&rho, &g).unwrap()));
        let w = wwm::wigner_transform(rho.matrix(), &g).unwrap();
        group.bench_with_input(BenchmarkId::new("weyl", n), &n, |b, _| b.iter(|| wwm::weyl_quantize(&w, &g).unwrap()));
    }
    group.finish();
}

fn star(c: &mut Criterion) {
    let mut group = c.benchmark_group("star_product");
    for order in [2, 4, 6] {
        let (f, k) = fx::symbol_pair(96, 1e-2);
        group.bench_with_input(BenchmarkId::from_parameter(order), &order, |b, &o| {
            b.iter(|| wwm::star_product(&f, &k, o).unwrap())
        });
    }
    group.finish();
}

fn classical_limit(c: &mut Criterion) {
    let mut group = c.benchmark_group("classical");
    group.sample_size(10);
    let g = PhaseSpaceGrid::new((-3.0, 3.0), (-3.0, 3.0), 200, 200, 1e-2).unwrap();
    group.bench_function("band_symbols_200", |b| {
        b.iter(|| classical::band_projector_symbols(&g, &[0.0, 1.0, 2.0, 3.0], 1.0, 1.0).unwrap())
    });
    let syms = classical::band_projector_symbols(&g, &[0.0, 1.0, 2.0, 3.0], 1.0, 1.0).unwrap();
    group.bench_function("domains_200", |b| {
        b.iter(|| {
            syms.iter()
                .map(|s| classical::characteristic_domain(s, classical::DOMAIN_THRESHOLD).unwrap())
                .collect::<Vec<_>>()
        })
    });
    let fb = fx::flat_band();
    let tp = TrajectoryParams::default();
    group.bench_function("flat_band_trajectory", |b| b.iter(|| fb.classical_trajectory(&tp).unwrap()));
    group.finish();
}

criterion_group!(benches, poles, modes, wigner, star, classical_limit);
criterion_main!(benches);
