//! Numerical self-checks: fixed points, variance closure, pump elimination,
//! reweighting and resampling statistics, time-step convergence, determinism.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;

use crate::config::ExperimentConfig;
use crate::ensemble::{normal_cdf, DopoEnsemble, Observables, Particle};
use crate::error::Result;
use crate::gaussian::{gaussian_step, GaussianDopo, VACUUM_VARIANCE};
use crate::harness::{run_batch, summary_csv, trials_csv};
use crate::ising::IsingProblem;
use crate::params::{PhysicalParams, PumpSchedule};
use crate::rng::{seeded, splitmix64};
use crate::sde::{step_adiabatic, step_full_pump, FullPumpState, SignalSde, SignalState};
use crate::trial::{run_exact_trial, StepSnapshot, TrialObserver, TrialSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
    pub warning: Option<String>,
}

impl CheckResult {
    fn within(name: &str, measured: f64, tolerance: f64, detail: String) -> Self {
        CheckResult {
            name: name.into(),
            passed: measured.is_finite() && measured <= tolerance,
            measured,
            tolerance,
            detail,
            warning: None,
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: {} (measured {:.4e}, tolerance {:.4e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.measured,
            self.tolerance
        )?;
        if let Some(w) = &self.warning {
            write!(f, "\n       warning: {w}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

/// Collects full observables at the steps listed in `at`.
struct Sampler {
    from_step: usize,
    rows: Vec<Observables>,
}

impl TrialObserver for Sampler {
    fn wants_observables(&self, step: usize) -> bool {
        step >= self.from_step
    }

    fn observe(&mut self, snap: &StepSnapshot<'_>) {
        if let Some(obs) = snap.observables {
            self.rows.push(obs[0]);
        }
    }
}

fn single_dopo() -> IsingProblem {
    IsingProblem::new(1, []).expect("one spin is a valid problem")
}

fn free_dopo(gamma_p: f64) -> PhysicalParams {
    PhysicalParams {
        gamma_s: 1.0,
        gamma_p,
        kappa: 0.1,
        xi: 0.0,
        zeta: 0.0,
    }
}

/// Above-threshold steady state of one uncoupled DOPO without measurement:
/// `|⟨a⟩| = |⟨X̂⟩|/2 → sqrt(p-1)/g` and `⟨n̂⟩ → (p-1)/g²`.
pub fn fixed_point_checks(p: f64, g: f64, particles: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let duration = 20.0;
    let dtau = 0.01;
    let mut spec = TrialSpec::new(free_dopo(10.0), PumpSchedule::constant(p, duration)?, dtau);
    spec.g_override = Some(g);
    spec.particles = particles;
    spec.initial_amplitude = 0.1;
    let steps = (duration / dtau).round() as usize;
    let mut sampler = Sampler {
        from_step: steps / 2,
        rows: Vec::new(),
    };
    run_exact_trial(&single_dopo(), &spec, seed, &mut sampler)?;
    let count = sampler.rows.len() as f64;
    let amplitude = sampler.rows.iter().map(|o| 0.5 * o.mean_x.abs()).sum::<f64>() / count;
    let photons = sampler.rows.iter().map(|o| o.photon_number).sum::<f64>() / count;
    let x_star = (p - 1.0).sqrt() / g;
    let n_star = (p - 1.0) / (g * g);
    Ok(vec![
        CheckResult::within(
            "fixed-point amplitude",
            (amplitude - x_star).abs() / x_star,
            0.05,
            format!("time-averaged |<X>|/2 = {amplitude:.3}, expected {x_star:.3}"),
        ),
        CheckResult::within(
            "fixed-point photon number",
            (photons - n_star).abs() / n_star,
            0.10,
            format!("time-averaged <n> = {photons:.2}, expected {n_star:.2}"),
        ),
    ])
}

/// Integrates the Gaussian variance equation at fixed `p` without measurement
/// until it settles.
pub fn settled_gaussian_variance(phys: &PhysicalParams, p: f64) -> f64 {
    let ph = PhysicalParams { xi: 0.0, ..*phys };
    let dt = 0.01 / ph.gamma_s;
    let eps_p = ph.pump_amplitude(p);
    let mut s = GaussianDopo::default();
    for _ in 0..(40.0 / (ph.gamma_s * dt)) as usize {
        s = gaussian_step(s, eps_p, 0.0, &ph, dt, 0.0).0;
    }
    s.var
}

pub fn gaussian_variance_checks(phys: &PhysicalParams) -> Vec<CheckResult> {
    let vac = settled_gaussian_variance(phys, 0.0);
    let kappa_scale = phys.kappa * phys.kappa / (phys.gamma_s * phys.gamma_p);
    let p = 0.5;
    let below = settled_gaussian_variance(phys, p);
    let star = (1.0 + p) / (4.0 * (1.0 - p));
    vec![
        CheckResult::within(
            "vacuum variance",
            (vac - VACUUM_VARIANCE).abs(),
            kappa_scale,
            format!("p = 0 settles at sigma^2 = {vac:.6}"),
        ),
        CheckResult::within(
            "below-threshold variance",
            (below - star).abs() / star,
            0.05,
            format!("p = {p} settles at sigma^2 = {below:.5}, linear theory {star}"),
        ),
    ]
}

/// Largest relative gap between the noiseless full signal/pump trajectory and
/// the pump-eliminated one, after the pump has relaxed.
pub fn adiabatic_error(phys: &PhysicalParams, p: f64, duration: f64) -> f64 {
    let g = phys.saturation();
    let xi_norm = phys.xi / phys.gamma_s;
    let eps_p = phys.pump_amplitude(p);
    let dt = 0.01 / phys.gamma_p.max(phys.gamma_s);
    let dtau = phys.gamma_s * dt;
    let eta0 = 0.1;
    let alpha_s = Complex64::new(eta0 / g, 0.0);
    // Start the pump on its slaved value so only the residual lag is measured.
    let alpha_p = (eps_p - 0.5 * phys.kappa * alpha_s * alpha_s) / phys.gamma_p;
    let mut full = FullPumpState {
        alpha_s,
        beta_s: alpha_s,
        alpha_p,
        beta_p: alpha_p,
    };
    let mut slow = SignalState::coherent(eta0);
    let relaxed = 1.0 / phys.gamma_p;
    let zero = Complex64::default();
    let mut worst: f64 = 0.0;
    for k in 0..(duration / dt).round() as usize {
        full = match step_full_pump(full, eps_p, zero, phys, dt, (0.0, 0.0)) {
            Ok(s) => s,
            Err(_) => return f64::INFINITY,
        };
        slow = match step_adiabatic(slow, p, zero, g, xi_norm, dtau, (0.0, 0.0)) {
            Ok(s) => s,
            Err(_) => return f64::INFINITY,
        };
        if (k + 1) as f64 * dt >= relaxed {
            let a = full.normalized(g).eta;
            worst = worst.max((a - slow.eta).norm() / slow.eta.norm());
        }
    }
    worst
}

/// Pump elimination at the configured decay-rate ratio. The neglected terms
/// scale as `γ_s/γ_p`, so the budget is 1% at a ratio of 100 and grows in
/// proportion below it.
pub fn adiabatic_check(phys: &PhysicalParams) -> CheckResult {
    let ratio = phys.gamma_p / phys.gamma_s;
    let err = adiabatic_error(phys, 2.0, 10.0 / phys.gamma_s);
    let tolerance = 0.01 * (100.0 / ratio).max(1.0);
    let mut c = CheckResult::within(
        "adiabatic elimination",
        err,
        tolerance,
        format!("gamma_p/gamma_s = {ratio}, max relative amplitude gap {err:.3e}"),
    );
    if ratio < 10.0 {
        c.warning = Some(format!(
            "gamma_p/gamma_s = {ratio} is small; the pump does not follow the signal closely"
        ));
    }
    c
}

/// Particle spread used by the reweighting checks.
fn spread_ensemble(m: usize, rng: &mut impl Rng) -> DopoEnsemble {
    let particles: Vec<Particle> = (0..m)
        .map(|_| {
            let x: f64 = rng.sample(rand_distr::StandardNormal);
            let y: f64 = rng.sample(rand_distr::StandardNormal);
            Particle {
                eta: Complex64::new(0.3 * x, 0.05 * y),
                mu: Complex64::new(0.3 * x, -0.05 * y),
                log_w: 0.0,
            }
        })
        .collect();
    DopoEnsemble::from_particles(&particles).expect("non-empty ensemble")
}

/// Mean and standard error of a sample.
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `E[Σ_k w_k exp(a_k ΔW - a_k² dτ/2)] = 1` for `ΔW ~ N(0, dτ)`.
pub fn martingale_check(samples: usize, seed: u64) -> CheckResult {
    let (g, xi_norm, dtau) = (0.2, 0.5, 0.01f64);
    let mut rng = seeded(seed);
    let base = spread_ensemble(64, &mut rng);
    let totals: Vec<f64> = (0..samples)
        .map(|_| {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            let mut e = base.clone();
            e.reweight(g, xi_norm, z * dtau.sqrt(), dtau).unwrap_or(f64::NAN)
        })
        .collect();
    let (mean, se) = mean_se(&totals);
    CheckResult::within(
        "reweighting martingale",
        (mean - 1.0).abs() / se,
        3.0,
        format!("mean unnormalized total {mean:.6} +- {se:.2e} over {samples} draws (in standard errors)"),
    )
}

/// Final weighted `⟨X̂⟩` of a measured single-DOPO ensemble, with or without
/// resampling.
fn filtered_mean(m: usize, steps: usize, resample: bool, rng: &mut impl Rng) -> f64 {
    let (g, xi_norm, dtau, p) = (0.3, 4.0, 0.01f64, 0.9);
    let sde = SignalSde { g, xi_norm };
    let mut e = DopoEnsemble::uniform(m, SignalState::default());
    for _ in 0..steps {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        let record = (e.mean_x_scaled().re, z * dtau.sqrt());
        e.advance(rng, &sde, p, Complex64::default(), record, dtau, f64::INFINITY)
            .expect("bounded test dynamics");
        if resample {
            e.resample(1.0, rng);
        }
    }
    e.mean_x_scaled().re / g
}

/// Resampling leaves the weighted estimator unbiased: repeated runs with and
/// without it agree in mean.
pub fn resampling_check(particles: usize, steps: usize, reps: usize, seed: u64) -> CheckResult {
    let mut rng_w = seeded(splitmix64(seed));
    let mut rng_r = seeded(splitmix64(seed ^ 1));
    let weighted: Vec<f64> = (0..reps).map(|_| filtered_mean(particles, steps, false, &mut rng_w)).collect();
    let resampled: Vec<f64> = (0..reps).map(|_| filtered_mean(particles, steps, true, &mut rng_r)).collect();
    let (mw, sw) = mean_se(&weighted);
    let (mr, sr) = mean_se(&resampled);
    let se = (sw * sw + sr * sr).sqrt();
    CheckResult::within(
        "resampling unbiasedness",
        (mw - mr).abs() / se,
        3.0,
        format!("weighted {mw:.4} vs resampled {mr:.4}, {reps} repetitions (in standard errors)"),
    )
}

/// Marginal `P(X > 0)` identities of the particle kernel.
pub fn marginal_probability_checks() -> Vec<CheckResult> {
    let vacuum = DopoEnsemble::uniform(1, SignalState::default()).observables(1.0);
    let g = 0.02;
    let one = DopoEnsemble::uniform(1, SignalState::coherent(0.5 * g)).observables(g);
    let mut rng = seeded(7);
    let mixed = spread_ensemble(100, &mut rng).observables(0.1);
    vec![
        CheckResult::within(
            "vacuum P(X>0)",
            (vacuum.prob_x_positive - 0.5).abs(),
            0.0,
            format!("P(X>0) = {}", vacuum.prob_x_positive),
        ),
        CheckResult::within(
            "unit-mean P(X>0)",
            (one.prob_x_positive - normal_cdf(1.0)).abs(),
            1e-6,
            format!("P(X>0) = {:.9}, Phi(1) = {:.9}", one.prob_x_positive, normal_cdf(1.0)),
        ),
        CheckResult::within(
            "P(X>0) + P(X<0)",
            (mixed.prob_x_positive + mixed.prob_x_negative() - 1.0).abs(),
            1e-12,
            format!("sum = {}", mixed.prob_x_positive + mixed.prob_x_negative()),
        ),
    ]
}

/// Final `(⟨X̂⟩, stderr)` of an unmeasured DOPO at `p = 2`.
fn settled_mean(phys: &PhysicalParams, dtau: f64, particles: usize, seed: u64) -> Result<(f64, f64)> {
    let duration = 5.0;
    let mut spec = TrialSpec::new(
        PhysicalParams { xi: 0.0, zeta: 0.0, ..*phys },
        PumpSchedule::constant(2.0, duration)?,
        dtau,
    );
    spec.particles = particles;
    spec.initial_amplitude = 0.5;
    let steps = spec.normalized()?.steps();
    let mut sampler = Sampler {
        from_step: steps,
        rows: Vec::new(),
    };
    run_exact_trial(&single_dopo(), &spec, seed, &mut sampler)?;
    let last = sampler.rows.last().copied().unwrap_or_default();
    Ok((last.mean_x, (last.variance_x.max(0.0) / particles as f64).sqrt()))
}

/// Weak convergence: halving `dτ` moves the ensemble mean by less than two
/// combined standard errors.
pub fn dtau_convergence_check(phys: &PhysicalParams, dtau: f64, particles: usize, seed: u64) -> Result<CheckResult> {
    let (a, sa) = settled_mean(phys, dtau, particles, seed)?;
    let (b, sb) = settled_mean(phys, dtau / 2.0, particles, splitmix64(seed))?;
    let se = (sa * sa + sb * sb).sqrt();
    Ok(CheckResult::within(
        "time-step convergence",
        (a - b).abs() / se,
        2.0,
        format!(
            "<X> = {a:.4} at dtau = {dtau}, {b:.4} at dtau = {} (shift {:.3e}, in standard errors)",
            dtau / 2.0,
            (a - b).abs()
        ),
    ))
}

/// A small sweep run on one and two worker threads must write identical CSV.
pub fn determinism_check(cfg: &ExperimentConfig) -> Result<CheckResult> {
    let mut small = ExperimentConfig {
        problem: "ring".into(),
        size: 4,
        particles: cfg.particles.min(50),
        trials: 4,
        duration: cfg.duration.min(20.0),
        sweep_values: Vec::new(),
        threads: Some(1),
        ..cfg.clone()
    };
    let one = run_batch(&small)?;
    small.threads = Some(2);
    let two = run_batch(&small)?;
    let same = summary_csv(&one) == summary_csv(&two)
        && one.points.iter().zip(&two.points).all(|(a, b)| trials_csv(a) == trials_csv(b));
    Ok(CheckResult {
        name: "determinism".into(),
        passed: same,
        measured: if same { 0.0 } else { 1.0 },
        tolerance: 0.0,
        detail: format!("{} sweep CSV on 1 vs 2 threads {}", small.backend, if same { "identical" } else { "differs" }),
        warning: None,
    })
}

/// The full suite. Uses the configured rates for the pump-elimination and
/// time-step checks; the remaining checks use fixed reference settings.
pub fn validate(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    let phys = cfg.physical();
    let mut checks = fixed_point_checks(2.0, 0.02, 2000, cfg.seed)?;
    checks.extend(gaussian_variance_checks(&phys));
    checks.push(adiabatic_check(&phys));
    checks.push(resampling_check(16, 32, 10_000, cfg.seed));
    checks.push(martingale_check(10_000, cfg.seed));
    checks.extend(marginal_probability_checks());
    checks.push(dtau_convergence_check(&phys, cfg.dtau, 2000, cfg.seed)?);
    checks.push(determinism_check(cfg)?);
    Ok(ValidationReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn martingale_holds() {
        let c = martingale_check(4000, 3);
        assert!(c.passed, "{c}");
    }

    #[test]
    fn marginal_identities() {
        for c in marginal_probability_checks() {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn variance_closure_defaults() {
        for c in gaussian_variance_checks(&PhysicalParams::default()) {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn slow_pump_warns() {
        let phys = PhysicalParams {
            gamma_p: 2.0,
            ..PhysicalParams::default()
        };
        let c = adiabatic_check(&phys);
        assert!(c.warning.is_some());
        let fast = adiabatic_error(&PhysicalParams { gamma_p: 100.0, kappa: 0.2, ..PhysicalParams::default() }, 2.0, 10.0);
        assert!(adiabatic_error(&phys, 2.0, 10.0) > fast);
    }

    #[test]
    fn report_formatting() {
        let report = ValidationReport {
            checks: vec![CheckResult::within("x", 2.0, 1.0, "d".into())],
        };
        assert!(!report.all_passed());
        let text = report.to_string();
        assert!(text.starts_with("[FAIL] x: d"));
        assert!(text.ends_with("1 checks, 1 failed"));
    }
}
