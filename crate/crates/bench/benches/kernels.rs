use std::hint::black_box;

use bubbletower::ansatz::{flow_residual_on, physical_grid};
use bubbletower::constants::compute_cstar;
use bubbletower::corrector::solve_phibar;
use bubbletower::duhamel::{duhamel_power_law, DuhamelOptions, PowerLawSource};
use bubbletower::grid::{RadialField, RadialGrid};
use bubbletower::profiles::{bubble_value, Dimension};
use bubbletower::simulator::{evolve_nonlinear, extract_bubble_scales, EvolutionState, StepControls};
use bubbletower_bench::{state, table};
use criterion::{criterion_group, criterion_main, Criterion};

fn constants(c: &mut Criterion) {
    let dim = Dimension::new(7).unwrap();
    c.bench_function("interaction constant", |b| b.iter(|| compute_cstar(black_box(dim), 1e-12).unwrap()));
}

fn corrector(c: &mut Criterion) {
    let t = table(2).unwrap();
    c.bench_function("corrector 2000 nodes", |b| b.iter(|| solve_phibar(black_box(&t), 2000).unwrap()));
}

fn residual(c: &mut Criterion) {
    let (t, _, st) = state(2, -1e4).unwrap();
    let grid = physical_grid(&t, -1e4, 40).unwrap();
    c.bench_function("flow residual", |b| b.iter(|| flow_residual_on(black_box(&st), &grid).unwrap()));
}

fn duhamel(c: &mut Criterion) {
    let dim = Dimension::new(7).unwrap();
    let src = PowerLawSource::new(-1.1, 3.0, -0.5, 0.0, 1.0, 1.0);
    c.bench_function("duhamel origin value", |b| {
        b.iter(|| duhamel_power_law(dim, black_box(&src), 0.0, -1e3, DuhamelOptions::default()).unwrap())
    });
}

fn simulator(c: &mut Criterion) {
    let dim = Dimension::new(7).unwrap();
    let grid = RadialGrid::mapped(0.5, 1e3, 5000).unwrap();
    let u = RadialField::from_fn(grid.clone(), |r| bubble_value(dim, r));
    let controls = StepControls::default();
    c.bench_function("evolve 0.05 time units", |b| {
        b.iter(|| {
            let s = EvolutionState::with_decaying_tail(dim, u.clone(), 0.0).unwrap();
            evolve_nonlinear(s, 0.05, &controls).unwrap()
        })
    });
    c.bench_function("bubble scale fit", |b| {
        b.iter(|| extract_bubble_scales(dim, &grid, black_box(&u.values), 1).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = constants, corrector, residual, duhamel, simulator
}
criterion_main!(benches);
