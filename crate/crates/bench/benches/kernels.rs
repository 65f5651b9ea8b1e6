use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;

use cim_core::gaussian::{gaussian_step, GaussianDopo};
use cim_core::rng::seeded;
use cim_core::sde::{step_adiabatic, SignalState};
use cim_core::{ring_antiferromagnet, run_trial, Backend, DopoEnsemble, PhysicalParams, PumpSchedule, TrialSpec};

fn sde_step(c: &mut Criterion) {
    let s = SignalState::coherent(0.6);
    let f = Complex64::new(0.01, 0.0);
    c.bench_function("adiabatic_step", |b| {
        b.iter(|| step_adiabatic(black_box(s), 1.1, f, 0.0224, 0.1, 0.01, (0.03, -0.02)))
    });
}

fn gaussian(c: &mut Criterion) {
    let phys = PhysicalParams::default();
    let eps_p = phys.pump_amplitude(0.9);
    let d = GaussianDopo { mu: 3.0, var: 0.4 };
    c.bench_function("gaussian_step", |b| {
        b.iter(|| gaussian_step(black_box(d), eps_p, 0.2, &phys, 0.01, 0.05))
    });
}

fn reweight_resample(c: &mut Criterion) {
    let mut group = c.benchmark_group("reweight_resample");
    for m in [100usize, 1000, 10_000] {
        let base = DopoEnsemble::uniform(m, SignalState::coherent(0.2));
        let mut rng = seeded(1);
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, _| {
            b.iter(|| {
                let mut e = base.clone();
                e.reweight(0.0224, 0.1, 0.05, 0.01).unwrap();
                e.resample(1.0, &mut rng)
            })
        });
    }
    group.finish();
}

fn short_trials(c: &mut Criterion) {
    let problem = ring_antiferromagnet(16).unwrap();
    let mut group = c.benchmark_group("trial_100_steps");
    group.sample_size(10);
    for backend in [Backend::Exact, Backend::Gaussian] {
        let mut spec = TrialSpec::new(PhysicalParams::default(), PumpSchedule::new(0.0, 1.2, 1.0).unwrap(), 0.01);
        spec.particles = 200;
        group.bench_function(backend.to_string(), |b| {
            b.iter(|| run_trial(backend, &problem, &spec, 7, &mut ()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sde_step, gaussian, reweight_resample, short_trials);
criterion_main!(benches);
