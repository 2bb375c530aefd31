use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spinamp_bench::{cluster, polarizations};
use spinamp_core::*;
use std::hint::black_box;

fn bench_hamiltonian_assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assemble_hamiltonian");
    for m in [3usize, 5, 7] {
        let sys = cluster(m, 11);
        let settings = HamiltonianSettings::new(FieldPoint::gauss(4000.0).unwrap());
        group.bench_with_input(BenchmarkId::from_parameter(m + 1), &sys, |b, sys| {
            b.iter(|| assemble_hamiltonian(black_box(sys), &settings).unwrap())
        });
    }
    group.finish();
}

fn bench_propagator(c: &mut Criterion) {
    let mut group = c.benchmark_group("propagator");
    group.sample_size(20);
    for m in [5usize, 7] {
        let sys = cluster(m, 23);
        let settings = HamiltonianSettings::new(FieldPoint::gauss(100.0).unwrap())
            .with_mode(FlipFlopMode::ForceOn);
        let h = assemble_hamiltonian(&sys, &settings).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(1 << (m + 1)), &h, |b, h| {
            b.iter(|| propagator(black_box(h), 1e-4).unwrap())
        });
    }
    group.finish();
}

fn bench_trajectory(c: &mut Criterion) {
    let mut group = c.benchmark_group("trajectory_100_samples");
    group.sample_size(10);
    for m in [5usize, 7] {
        let sys = cluster(m, 37);
        let settings = HamiltonianSettings::new(FieldPoint::gauss(4000.0).unwrap());
        let rho = DensityMatrix::thermal_product(&polarizations(m + 1, 41)).unwrap();
        let dt = 2e-6;
        let schedule = EvolutionSchedule::new(vec![Segment::Free {
            duration_s: 100.0 * dt,
            settings,
        }])
        .unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(1 << (m + 1)), &sys, |b, sys| {
            b.iter(|| run_trajectory(black_box(sys), &rho, &schedule, dt).unwrap())
        });
    }
    group.finish();
}

fn bench_mixing_iteration(c: &mut Criterion) {
    c.bench_function("mixing_799_pool_200_steps", |b| {
        let params = StepParams::new(-1.0, 0.9991, 1.0).unwrap();
        b.iter(|| {
            let mut state = PoolState::uniform(0.12, 799).unwrap();
            for _ in 0..200 {
                state = step(&state, &params);
            }
            black_box(state)
        })
    });
}

fn bench_bloch_profile(c: &mut Criterion) {
    let family = PulseFamily::hermite_default();
    let duration = calibrate_duration(&family, 140.0, 128).unwrap();
    let pulse = family.build(140.0, duration, 128).unwrap();
    let offsets: Vec<f64> = (0..81).map(|k| -400.0 + 10.0 * k as f64).collect();
    c.bench_function("hermite_profile_81_offsets", |b| {
        b.iter(|| excitation_profile(black_box(&pulse), &offsets).unwrap())
    });
}

fn bench_calibration(c: &mut Criterion) {
    let family = PulseFamily::hermite_default();
    c.bench_function("calibrate_hermite_128_samples", |b| {
        b.iter(|| calibrate_duration(black_box(&family), 140.0, 128).unwrap())
    });
}

criterion_group!(
    benches,
    bench_hamiltonian_assembly,
    bench_propagator,
    bench_trajectory,
    bench_mixing_iteration,
    bench_bloch_profile,
    bench_calibration
);
criterion_main!(benches);
