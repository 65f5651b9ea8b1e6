use cim_core::config::ExperimentConfig;
use cim_core::harness::{run_batch, run_pair};
use cim_core::ising::IsingProblem;
use cim_core::trial::{run_trial, Backend, TraceRecorder, TrialSpec, TRACE_HEADER};
use cim_core::{ring_antiferromagnet, PhysicalParams, PumpSchedule};

fn spec(zeta: f64, xi: f64, duration: f64, particles: usize) -> TrialSpec {
    let phys = PhysicalParams {
        zeta,
        xi,
        ..PhysicalParams::default()
    };
    let mut s = TrialSpec::new(phys, PumpSchedule::new(0.0, 1.5, duration).unwrap(), 0.01);
    s.particles = particles;
    s
}

fn dopo_column(trace: &TraceRecorder, dopo: usize) -> Vec<f64> {
    trace.rows.iter().filter(|r| r.dopo == dopo).map(|r| r.obs.mean_x).collect()
}

#[test]
fn uncoupled_dopos_evolve_independently() {
    let single = IsingProblem::new(1, []).unwrap();
    let ring = ring_antiferromagnet(3).unwrap();
    let s = spec(0.0, 0.1, 10.0, 64);
    for backend in [Backend::Exact, Backend::Gaussian] {
        let mut alone = TraceRecorder::new(25);
        let mut coupled = TraceRecorder::new(25);
        run_trial(backend, &single, &s, 21, &mut alone).unwrap();
        run_trial(backend, &ring, &s, 21, &mut coupled).unwrap();
        assert_eq!(dopo_column(&alone, 0), dopo_column(&coupled, 0), "{backend}");
    }
}

#[test]
fn gaussian_without_measurement_is_deterministic() {
    let problem = ring_antiferromagnet(4).unwrap();
    let s = spec(0.3, 0.0, 20.0, 1);
    let a = run_trial(Backend::Gaussian, &problem, &s, 1, &mut ()).unwrap();
    let b = run_trial(Backend::Gaussian, &problem, &s, 99, &mut ()).unwrap();
    assert_eq!(a.final_mean_x, b.final_mean_x);
}

#[test]
fn backends_share_trace_schema() {
    let problem = ring_antiferromagnet(2).unwrap();
    let s = spec(0.3, 0.1, 5.0, 50);
    let columns = TRACE_HEADER.split(',').count();
    for backend in [Backend::Exact, Backend::Gaussian] {
        let mut trace = TraceRecorder::new(10);
        run_trial(backend, &problem, &s, 2, &mut trace).unwrap();
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TRACE_HEADER));
        assert!(lines.all(|l| l.split(',').count() == columns));
        if backend == Backend::Gaussian {
            assert!(trace.rows.iter().all(|r| r.obs.skewness_x == 0.0));
        }
    }
}

#[test]
fn pair_traces_below_threshold_have_nonnegative_photons() {
    let cfg = ExperimentConfig {
        duration: 30.0,
        particles: 500,
        trace_every: 20,
        ..ExperimentConfig::default()
    };
    let runs = run_pair(&cfg).unwrap();
    for run in &runs {
        for r in run.trace.rows.iter().filter(|r| r.p < 0.5) {
            let n = r.obs.photon_number;
            match run.backend {
                Backend::Gaussian => assert!(n >= 0.0, "{n}"),
                // Sampled: allow the particle estimate a few standard errors.
                Backend::Exact => assert!(n > -3.0 / (500f64).sqrt(), "p = {}: {n}", r.p),
            }
        }
    }
}

#[test]
fn imaginary_quadrature_stays_at_sampling_noise() {
    let problem = ring_antiferromagnet(4).unwrap();
    let res = run_trial(Backend::Exact, &problem, &spec(0.3, 0.1, 30.0, 400), 5, &mut ()).unwrap();
    assert!(res.max_imag_z < 6.0, "{}", res.max_imag_z);
}

#[test]
fn uncoupled_pair_succeeds_by_chance() {
    let cfg = ExperimentConfig {
        backend: Backend::Gaussian,
        size: 2,
        zeta: 0.0,
        duration: 20.0,
        trials: 400,
        ..ExperimentConfig::default()
    };
    let p = &run_batch(&cfg).unwrap().points[0];
    assert!((p.success_rate - 0.5).abs() < 4.0 * 0.025, "{}", p.success_rate);
}

#[test]
fn smoke_batch() {
    let cfg = ExperimentConfig {
        size: 2,
        trials: 10,
        particles: 100,
        duration: 20.0,
        ..ExperimentConfig::default()
    };
    let res = run_batch(&cfg).unwrap();
    let p = &res.points[0];
    assert_eq!(p.successes + p.failures + p.invalid, 10);
    assert!((0.0..=1.0).contains(&p.success_rate));
}

#[test]
fn config_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("triangle.txt");
    std::fs::write(&problem, "3\n0 1 -1\n1 2 -1\n0 2 -1\n").unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(
        &path,
        format!("problem = \"file\"\nproblem_file = {:?}\nbackend = \"gaussian\"\nT = 10.0\ntrials = 3\n", problem),
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&path, &["zeta=0.6".into()]).unwrap();
    assert_eq!(cfg.problem().unwrap().n(), 3);
    assert_eq!(cfg.zeta, 0.6);
    let res = run_batch(&cfg).unwrap();
    assert_eq!(res.points[0].trials, 3);
}
