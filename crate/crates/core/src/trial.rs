//! Single-trial drivers for the exact (replicator) and Gaussian backends.
//!
//! Both backends follow the same loop: read out the current means, draw the
//! shared homodyne record, build the feedback field, then advance every DOPO.
//! The exact backend additionally reweights its particles against the record
//! and resamples them when their weights degenerate.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{AdvanceError, DopoEnsemble, Ensemble, Observables};
use crate::error::{CimError, Result};
use crate::feedback::{feedback_field, homodyne_sample, MeasurementRecord};
use crate::gaussian::{
    gaussian_feedback, gaussian_observables, gaussian_photon_number, gaussian_prob_x_positive,
    gaussian_readout, gaussian_step, GaussianState,
};
use crate::ising::{GroundTruth, IsingProblem, SpinConfig};
use crate::params::{derive_normalized, NormalizedParams, PhysicalParams, PumpSchedule};
use crate::rng::{particle_streams, RecordStream};
use crate::sde::{SignalSde, SignalState};

/// Work per step above which DOPOs are advanced on the rayon pool.
const PARALLEL_WORK: usize = 1 << 14;
/// Steps between hermiticity diagnostics.
const DIAGNOSTIC_EVERY: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Exact,
    Gaussian,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Exact => "exact",
            Backend::Gaussian => "gaussian",
        })
    }
}

impl FromStr for Backend {
    type Err = CimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Backend::Exact),
            "gaussian" => Ok(Backend::Gaussian),
            other => Err(CimError::config("backend", format!("unknown backend `{other}`"))),
        }
    }
}

/// Everything that defines one trial apart from the problem and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub phys: PhysicalParams,
    pub ramp: PumpSchedule,
    pub dtau: f64,
    /// Replaces the derived saturation parameter when set.
    pub g_override: Option<f64>,
    /// Particles per DOPO (exact backend only).
    pub particles: usize,
    /// Resample when `ESS < resample_threshold · M`.
    pub resample_threshold: f64,
    /// Initial in-phase amplitude `η = μ` (normalized units) on every DOPO.
    pub initial_amplitude: f64,
}

impl TrialSpec {
    pub fn new(phys: PhysicalParams, ramp: PumpSchedule, dtau: f64) -> Self {
        TrialSpec {
            phys,
            ramp,
            dtau,
            g_override: None,
            particles: 1000,
            resample_threshold: 0.5,
            initial_amplitude: 0.0,
        }
    }

    pub fn normalized(&self) -> Result<NormalizedParams> {
        let n = derive_normalized(&self.phys, self.ramp, self.dtau)?;
        match self.g_override {
            Some(g) => n.with_g(g),
            None => Ok(n),
        }
    }

    /// Amplitude beyond which an exact-backend sample is declared divergent.
    pub fn divergence_bound(&self) -> f64 {
        10.0 * self.ramp.p_max().max(1.0).sqrt()
    }
}

/// State handed to a [`TrialObserver`] after each step.
#[derive(Debug, Clone)]
pub struct StepSnapshot<'a> {
    /// Number of completed steps.
    pub step: usize,
    pub tau: f64,
    pub p: f64,
    /// `⟨X̂_i⟩` after the step.
    pub mean_x: &'a [f64],
    /// Homodyne readout of this step, in `X̂` units.
    pub measured_x: &'a [f64],
    /// Normalized feedback `f_i` injected during this step.
    pub feedback_f: &'a [f64],
    /// Full observables, present only when requested.
    pub observables: Option<&'a [Observables]>,
}

/// Receives per-step snapshots of a running trial.
pub trait TrialObserver {
    /// Whether step `step` needs full observables (costs an extra pass).
    fn wants_observables(&self, _step: usize) -> bool {
        false
    }

    fn observe(&mut self, snap: &StepSnapshot<'_>);
}

impl TrialObserver for () {
    fn observe(&mut self, _snap: &StepSnapshot<'_>) {}
}

/// One row of the trace CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub tau: f64,
    pub p: f64,
    pub dopo: usize,
    pub obs: Observables,
    pub measured_x: f64,
    pub feedback_f: f64,
}

pub const TRACE_HEADER: &str =
    "tau,p,dopo_index,mean_x,photon_number,variance_x,skewness_x,prob_x_positive,measured_x,feedback_f";

impl TraceRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.tau,
            self.p,
            self.dopo,
            self.obs.mean_x,
            self.obs.photon_number,
            self.obs.variance_x,
            self.obs.skewness_x,
            self.obs.prob_x_positive,
            self.measured_x,
            self.feedback_f
        )
    }
}

/// Records full observables every `every` steps.
#[derive(Debug, Clone)]
pub struct TraceRecorder {
    pub every: usize,
    pub rows: Vec<TraceRow>,
}

impl TraceRecorder {
    pub fn new(every: usize) -> Self {
        TraceRecorder {
            every: every.max(1),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }
}

impl TrialObserver for TraceRecorder {
    fn wants_observables(&self, step: usize) -> bool {
        step % self.every == 0
    }

    fn observe(&mut self, snap: &StepSnapshot<'_>) {
        if let Some(obs) = snap.observables {
            for (i, o) in obs.iter().enumerate() {
                self.rows.push(TraceRow {
                    tau: snap.tau,
                    p: snap.p,
                    dopo: i,
                    obs: *o,
                    measured_x: snap.measured_x[i],
                    feedback_f: snap.feedback_f[i],
                });
            }
        }
    }
}

/// Records `(p, ⟨X̂⟩)` at every step.
#[derive(Debug, Clone, Default)]
pub struct MeanRecorder {
    pub p: Vec<f64>,
    pub mean_x: Vec<Vec<f64>>,
}

impl TrialObserver for MeanRecorder {
    fn observe(&mut self, snap: &StepSnapshot<'_>) {
        self.p.push(snap.p);
        self.mean_x.push(snap.mean_x.to_vec());
    }
}

impl<A: TrialObserver, B: TrialObserver> TrialObserver for (A, B) {
    fn wants_observables(&self, step: usize) -> bool {
        self.0.wants_observables(step) || self.1.wants_observables(step)
    }

    fn observe(&mut self, snap: &StepSnapshot<'_>) {
        self.0.observe(snap);
        self.1.observe(snap);
    }
}

/// Outcome of a completed trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub backend: Backend,
    /// Final `⟨X̂_i⟩`.
    pub final_mean_x: Vec<f64>,
    /// Spin readout `sign⟨X̂_i⟩`; `None` when some mean is exactly zero.
    pub spins: Option<SpinConfig>,
    pub steps: usize,
    pub resample_events: usize,
    /// Largest `|Im⟨η+μ⟩| / stderr` seen by the hermiticity diagnostic.
    pub max_imag_z: f64,
    /// Times the Gaussian variance floor was enforced.
    pub floor_hits: usize,
}

impl TrialResult {
    pub fn is_tie(&self) -> bool {
        self.spins.is_none()
    }

    /// Success iff the readout attains the ground-state energy. Ties fail.
    pub fn is_success(&self, problem: &IsingProblem, truth: &GroundTruth) -> Result<bool> {
        match &self.spins {
            Some(s) => truth.is_success(problem, s),
            None => Ok(false),
        }
    }
}

fn readout(mean_x: &[f64]) -> Option<SpinConfig> {
    if mean_x.iter().any(|m| *m == 0.0 || !m.is_finite()) {
        return None;
    }
    SpinConfig::new(mean_x.iter().map(|m| if *m > 0.0 { 1 } else { -1 }).collect()).ok()
}

pub fn run_trial<O: TrialObserver>(
    backend: Backend,
    problem: &IsingProblem,
    spec: &TrialSpec,
    seed: u64,
    observer: &mut O,
) -> Result<TrialResult> {
    match backend {
        Backend::Exact => run_exact_trial(problem, spec, seed, observer),
        Backend::Gaussian => run_gaussian_trial(problem, spec, seed, observer),
    }
}

/// Exact backend: positive-P particles with replicator reweighting.
pub fn run_exact_trial<O: TrialObserver>(
    problem: &IsingProblem,
    spec: &TrialSpec,
    seed: u64,
    observer: &mut O,
) -> Result<TrialResult> {
    let norm = spec.normalized()?;
    if spec.particles == 0 {
        return Err(CimError::config("particles", "must be at least 1"));
    }
    if !spec.phys.adiabatic_ok() {
        return Err(CimError::input(
            "exact backend uses the pump-eliminated SDE and needs gamma_p >= gamma_s",
        ));
    }
    let n = problem.n();
    let g = norm.g;
    let dtau = norm.dtau;
    let sde = SignalSde {
        g,
        xi_norm: norm.xi_norm,
    };
    let measuring = norm.xi_norm > 0.0;
    let bound = spec.divergence_bound();
    let mut ens = Ensemble::new(n, spec.particles, g, SignalState::coherent(spec.initial_amplitude))?;
    let mut record_stream = RecordStream::new(seed, n);
    let mut rngs = particle_streams(seed, n);
    let parallel = n * spec.particles >= PARALLEL_WORK;

    let steps = norm.steps();
    let mut means = ens.mean_x_scaled();
    let mut resample_events = 0;
    let mut max_imag_z: f64 = 0.0;
    let mut mean_hat = vec![0.0; n];
    let mut f_out = vec![0.0; n];

    for k in 0..steps {
        let tau = k as f64 * dtau;
        let p = norm.ramp.pump_rate(tau);
        let record = if measuring {
            let dw = record_stream.next_increments(dtau);
            homodyne_sample(&means, &dw, norm.xi_norm, g, dtau, tau)?
        } else {
            MeasurementRecord::noiseless(&means, tau)
        };
        let field = feedback_field(&record, problem, norm.zeta_norm)?;

        let advance = |(i, (d, rng)): (usize, (&mut DopoEnsemble, &mut rand_chacha::ChaCha8Rng))| {
            d.advance(
                rng,
                &sde,
                p,
                field.f[i],
                (means[i], record.dw_meas[i]),
                dtau,
                bound,
            )
            .map_err(|e| match e {
                AdvanceError::Diverged => CimError::Diverged {
                    step: k,
                    dopo: i,
                    reason: format!("sample amplitude left |η| <= {bound:.3}"),
                },
                AdvanceError::Degenerate => CimError::DegenerateEnsemble { step: k, dopo: i },
            })?;
            Ok(d.resample(spec.resample_threshold, rng))
        };
        let resampled: Result<Vec<bool>> = if parallel {
            ens.dopos_mut()
                .par_iter_mut()
                .zip(rngs.par_iter_mut())
                .enumerate()
                .map(advance)
                .collect()
        } else {
            ens.dopos_mut()
                .iter_mut()
                .zip(rngs.iter_mut())
                .enumerate()
                .map(advance)
                .collect()
        };
        resample_events += resampled?.into_iter().filter(|r| *r).count();
        means = ens.mean_x_scaled();

        let done = k + 1;
        if done % DIAGNOSTIC_EVERY == 0 {
            for i in 0..n {
                max_imag_z = max_imag_z.max(imag_z(ens.dopo(i)));
            }
        }
        for i in 0..n {
            mean_hat[i] = means[i] / g;
            f_out[i] = field.f[i].re;
        }
        let measured = record.x_hat(g);
        let obs: Option<Vec<Observables>> = observer
            .wants_observables(done)
            .then(|| (0..n).map(|i| ens.observables(i)).collect());
        observer.observe(&StepSnapshot {
            step: done,
            tau: done as f64 * dtau,
            p: norm.ramp.pump_rate(done as f64 * dtau),
            mean_x: &mean_hat,
            measured_x: &measured,
            feedback_f: &f_out,
            observables: obs.as_deref(),
        });
    }

    let final_mean_x: Vec<f64> = means.iter().map(|m| m / g).collect();
    Ok(TrialResult {
        backend: Backend::Exact,
        spins: readout(&final_mean_x),
        final_mean_x,
        steps,
        resample_events,
        max_imag_z,
        floor_hits: 0,
    })
}

/// `|Im⟨η+μ⟩|` in units of its standard error.
fn imag_z(d: &DopoEnsemble) -> f64 {
    let mean = d.mean_x_scaled();
    let var: f64 = d
        .particles()
        .zip(d.weights())
        .map(|(p, w)| w * ((p.eta + p.mu).im - mean.im).powi(2))
        .sum();
    if var == 0.0 {
        return if mean.im == 0.0 { 0.0 } else { f64::INFINITY };
    }
    mean.im.abs() / (var / d.ess()).sqrt()
}

/// Gaussian backend: per-DOPO mean and variance under the same record contract.
pub fn run_gaussian_trial<O: TrialObserver>(
    problem: &IsingProblem,
    spec: &TrialSpec,
    seed: u64,
    observer: &mut O,
) -> Result<TrialResult> {
    let norm = spec.normalized()?;
    let phys = spec.phys;
    let n = problem.n();
    let g = norm.g;
    let dt = norm.dtau / phys.gamma_s;
    let measuring = phys.xi > 0.0;
    let mut state = GaussianState::coherent(n, spec.initial_amplitude / g);
    let mut record_stream = RecordStream::new(seed, n);
    let steps = norm.steps();
    let zero = vec![0.0; n];
    let mut mean_hat = vec![0.0; n];
    let mut f_out = vec![0.0; n];

    for k in 0..steps {
        let tau = k as f64 * norm.dtau;
        let p = norm.ramp.pump_rate(tau);
        let eps_p = phys.pump_amplitude(p);
        let dw = if measuring {
            record_stream.next_increments(dt)
        } else {
            zero.clone()
        };
        let measured = gaussian_readout(&state, &dw, phys.xi, dt);
        let eps_s = gaussian_feedback(&state, &dw, problem, phys.zeta, phys.xi, dt)?;
        for i in 0..n {
            let (next, clamped) = gaussian_step(state.dopos[i], eps_p, eps_s[i], &phys, dt, dw[i]);
            if !(next.mu.is_finite() && next.var.is_finite()) {
                return Err(CimError::Diverged {
                    step: k,
                    dopo: i,
                    reason: "gaussian moments became non-finite".into(),
                });
            }
            state.floor_hits += usize::from(clamped);
            state.dopos[i] = next;
        }

        let done = k + 1;
        for i in 0..n {
            mean_hat[i] = 2.0 * state.dopos[i].mu;
            f_out[i] = g * eps_s[i] / phys.gamma_s;
        }
        let obs: Option<Vec<Observables>> = observer.wants_observables(done).then(|| {
            state
                .dopos
                .iter()
                .map(|d| {
                    let (mean_x, variance_x) = gaussian_observables(d);
                    Observables {
                        mean_x,
                        mean_x_imag: 0.0,
                        photon_number: gaussian_photon_number(d),
                        variance_x,
                        skewness_x: 0.0,
                        prob_x_positive: gaussian_prob_x_positive(d),
                    }
                })
                .collect()
        });
        observer.observe(&StepSnapshot {
            step: done,
            tau: done as f64 * norm.dtau,
            p: norm.ramp.pump_rate(done as f64 * norm.dtau),
            mean_x: &mean_hat,
            measured_x: &measured,
            feedback_f: &f_out,
            observables: obs.as_deref(),
        });
    }

    let final_mean_x: Vec<f64> = state.dopos.iter().map(|d| 2.0 * d.mu).collect();
    Ok(TrialResult {
        backend: Backend::Gaussian,
        spins: readout(&final_mean_x),
        final_mean_x,
        steps,
        resample_events: 0,
        max_imag_z: 0.0,
        floor_hits: state.floor_hits,
    })
}

/// Decision point of a DOPO pair: the pump rate from which `|⟨X̂_1⟩ - ⟨X̂_2⟩|`
/// stays above `factor` times its RMS over the pre-threshold window
/// `p ∈ [window.0, window.1]` until the end of the trace.
///
/// Brief noise excursions above the level that later fall back are not
/// decisions and are skipped.
pub fn bifurcation_point(
    p: &[f64],
    mean_x: &[Vec<f64>],
    window: (f64, f64),
    factor: f64,
) -> Option<f64> {
    let diff: Vec<f64> = mean_x.iter().map(|m| (m[0] - m[1]).abs()).collect();
    let (sum, count) = p
        .iter()
        .zip(&diff)
        .filter(|(p, _)| **p >= window.0 && **p <= window.1)
        .fold((0.0, 0usize), |(s, c), (_, d)| (s + d * d, c + 1));
    if count == 0 {
        return None;
    }
    let level = factor * (sum / count as f64).sqrt();
    let last_below = diff.iter().rposition(|d| *d <= level);
    let first_above = match last_below {
        Some(k) => k + 1,
        None => 0,
    };
    p.get(first_above).copied().filter(|p| *p > window.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::ring_antiferromagnet;

    fn spec(p_end: f64, duration: f64) -> TrialSpec {
        let mut s = TrialSpec::new(
            PhysicalParams::default(),
            PumpSchedule::new(0.0, p_end, duration).unwrap(),
            0.01,
        );
        s.particles = 50;
        s
    }

    #[test]
    fn backend_names() {
        assert_eq!("exact".parse::<Backend>().unwrap(), Backend::Exact);
        assert_eq!(Backend::Gaussian.to_string(), "gaussian");
        assert!("delay-line".parse::<Backend>().is_err());
    }

    #[test]
    fn readout_ties() {
        assert!(readout(&[1.0, 0.0]).is_none());
        assert_eq!(readout(&[0.3, -2.0]).unwrap().spins(), &[1, -1]);
    }

    #[test]
    fn exact_trial_is_deterministic() {
        let problem = ring_antiferromagnet(2).unwrap();
        let s = spec(1.2, 2.0);
        let a = run_exact_trial(&problem, &s, 9, &mut ()).unwrap();
        let b = run_exact_trial(&problem, &s, 9, &mut ()).unwrap();
        assert_eq!(a, b);
        let c = run_exact_trial(&problem, &s, 10, &mut ()).unwrap();
        assert_ne!(a.final_mean_x, c.final_mean_x);
    }

    #[test]
    fn gaussian_without_measurement_is_deterministic() {
        let problem = ring_antiferromagnet(2).unwrap();
        let mut s = spec(1.5, 5.0);
        s.phys.xi = 0.0;
        s.initial_amplitude = 0.001;
        let a = run_gaussian_trial(&problem, &s, 1, &mut ()).unwrap();
        let b = run_gaussian_trial(&problem, &s, 2, &mut ()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trace_rows_cover_every_dopo() {
        let problem = ring_antiferromagnet(3).unwrap();
        let s = spec(1.0, 1.0);
        let mut rec = TraceRecorder::new(10);
        run_gaussian_trial(&problem, &s, 3, &mut rec).unwrap();
        assert_eq!(rec.rows.len(), 3 * 10);
        let csv = rec.to_csv();
        assert!(csv.starts_with(TRACE_HEADER));
        assert_eq!(csv.lines().count(), 31);
    }

    #[test]
    fn bifurcation_detector() {
        let p: Vec<f64> = (0..100).map(|k| k as f64 / 100.0).collect();
        let means: Vec<Vec<f64>> = p
            .iter()
            .map(|&p| match p {
                p if p < 0.6 => vec![0.1, -0.1],
                // A transient excursion that falls back is not the decision.
                p if p < 0.65 => vec![10.0, 0.0],
                p if p < 0.7 => vec![0.0, 0.1],
                p => vec![10.0 * p, -10.0 * p],
            })
            .collect();
        assert_eq!(bifurcation_point(&p, &means, (0.1, 0.5), 5.0), Some(0.7));
        let flat = vec![vec![0.1, -0.1]; 100];
        assert_eq!(bifurcation_point(&p, &flat, (0.1, 0.5), 5.0), None);
    }
}
