//! Weighted positive-P particle ensembles with measurement-driven reweighting.
//!
//! The joint state of the machine is a product over DOPOs, so each DOPO carries
//! its own population of `M` weighted samples `(η, μ)`. Continuous homodyne
//! measurement multiplies each sample's weight by the likelihood ratio of the
//! observed record,
//!
//! ```text
//! w_k ← w_k · exp(a_k ΔW - a_k² dτ / 2),   a_k = sqrt(ξ') (X_k - X̄),
//! ```
//!
//! with `X_k = Re(η_k + μ_k) / g`. Samples whose quadrature agrees with the
//! record are copied (their weight grows) and the others fade out. Weight
//! degeneracy is controlled by systematic resampling back to `M` equal weights
//! whenever the effective sample size drops below a fraction of `M`.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{CimError, Result};
use crate::feedback::MeasurementRecord;
use crate::sde::{NonFinite, SignalSde, SignalState};

/// One weighted sample of a DOPO's positive-P distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub eta: Complex64,
    pub mu: Complex64,
    pub log_w: f64,
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Log of the record likelihood ratio for a sample whose quadrature deviates
/// from the ensemble mean by `dev` (in `X̂` units).
#[inline]
fn log_likelihood_increment(sqrt_xi: f64, dev: f64, dw: f64, dtau: f64) -> f64 {
    let a = sqrt_xi * dev;
    a * dw - 0.5 * a * a * dtau
}

/// The samples of a single DOPO, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct DopoEnsemble {
    eta: Vec<Complex64>,
    mu: Vec<Complex64>,
    log_w: Vec<f64>,
    /// Normalized weights, kept in sync with `log_w`.
    w: Vec<f64>,
}

impl DopoEnsemble {
    pub fn uniform(m: usize, state: SignalState) -> Self {
        let lw = -(m as f64).ln();
        DopoEnsemble {
            eta: vec![state.eta; m],
            mu: vec![state.mu; m],
            log_w: vec![lw; m],
            w: vec![1.0 / m as f64; m],
        }
    }

    pub fn from_particles(particles: &[Particle]) -> Result<Self> {
        if particles.is_empty() {
            return Err(CimError::input("ensemble needs at least one particle"));
        }
        let mut e = DopoEnsemble {
            eta: particles.iter().map(|p| p.eta).collect(),
            mu: particles.iter().map(|p| p.mu).collect(),
            log_w: particles.iter().map(|p| p.log_w).collect(),
            w: vec![0.0; particles.len()],
        };
        e.normalize().map_err(|_| CimError::input("particle weights are not normalizable"))?;
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    pub fn particle(&self, k: usize) -> Particle {
        Particle {
            eta: self.eta[k],
            mu: self.mu[k],
            log_w: self.log_w[k],
        }
    }

    pub fn particles(&self) -> impl Iterator<Item = Particle> + '_ {
        (0..self.len()).map(|k| self.particle(k))
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Shifts log-weights so the weights sum to one.
    fn normalize(&mut self) -> std::result::Result<(), ()> {
        let max = self.log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(());
        }
        let mut sum = 0.0;
        for (w, lw) in self.w.iter_mut().zip(&self.log_w) {
            *w = (lw - max).exp();
            sum += *w;
        }
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(());
        }
        let shift = max + sum.ln();
        let inv = 1.0 / sum;
        for (w, lw) in self.w.iter_mut().zip(self.log_w.iter_mut()) {
            *w *= inv;
            *lw -= shift;
        }
        Ok(())
    }

    /// `E_w[η + μ]` (complex).
    pub fn mean_x_scaled(&self) -> Complex64 {
        self.w
            .iter()
            .zip(self.eta.iter().zip(&self.mu))
            .map(|(w, (e, m))| (e + m) * w)
            .sum()
    }

    /// Effective sample size `1 / Σ w²`.
    pub fn ess(&self) -> f64 {
        1.0 / self.w.iter().map(|w| w * w).sum::<f64>()
    }

    /// Multiplies each weight by its record likelihood ratio and renormalizes.
    /// Returns the unnormalized total weight (the normalizing constant).
    pub fn reweight(&mut self, g: f64, xi_norm: f64, dw: f64, dtau: f64) -> std::result::Result<f64, ()> {
        if dw == 0.0 || xi_norm == 0.0 {
            return Ok(1.0);
        }
        let xbar = self.mean_x_scaled().re / g;
        let sqrt_xi = xi_norm.sqrt();
        let mut total = 0.0;
        for k in 0..self.len() {
            let dev = (self.eta[k] + self.mu[k]).re / g - xbar;
            let inc = log_likelihood_increment(sqrt_xi, dev, dw, dtau);
            self.log_w[k] += inc;
            total += self.w[k] * inc.exp();
        }
        self.normalize()?;
        Ok(total)
    }

    /// Systematic resampling to `M` equal weights if `ESS < threshold · M`.
    /// Returns whether resampling happened.
    pub fn resample<R: Rng + ?Sized>(&mut self, threshold: f64, rng: &mut R) -> bool {
        let m = self.len();
        if self.ess() >= threshold * m as f64 {
            return false;
        }
        let step = 1.0 / m as f64;
        let mut u = rng.random::<f64>() * step;
        let mut cum = self.w[0];
        let mut src = 0;
        let mut eta = Vec::with_capacity(m);
        let mut mu = Vec::with_capacity(m);
        for _ in 0..m {
            while u > cum && src + 1 < m {
                src += 1;
                cum += self.w[src];
            }
            eta.push(self.eta[src]);
            mu.push(self.mu[src]);
            u += step;
        }
        self.eta = eta;
        self.mu = mu;
        self.log_w.fill(-(m as f64).ln());
        self.w.fill(step);
        true
    }

    /// One fused step: reweight against the record with the pre-step samples,
    /// then propagate every sample through the SDE with fresh diffusion noise.
    /// `record` is `(⟨η+μ⟩ before the step, ΔW)`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn advance<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        sde: &SignalSde,
        p: f64,
        f: Complex64,
        record: (f64, f64),
        dtau: f64,
        bound: f64,
    ) -> std::result::Result<(), AdvanceError> {
        let g = sde.g;
        let (xbar_scaled, dw) = record;
        let measuring = dw != 0.0 && sde.xi_norm > 0.0;
        let xbar = xbar_scaled / g;
        let sqrt_xi = sde.xi_norm.sqrt();
        let sd = dtau.sqrt();
        for k in 0..self.len() {
            let s = SignalState::new(self.eta[k], self.mu[k]);
            if measuring {
                let dev = s.x().re / g - xbar;
                self.log_w[k] += log_likelihood_increment(sqrt_xi, dev, dw, dtau);
            }
            let z1: f64 = rng.sample(rand_distr::StandardNormal);
            let z2: f64 = rng.sample(rand_distr::StandardNormal);
            let next = sde
                .step(s, p, f, dtau, (sd * z1, sd * z2))
                .map_err(|NonFinite| AdvanceError::Diverged)?;
            if next.eta.norm_sqr() > bound * bound || next.mu.norm_sqr() > bound * bound {
                return Err(AdvanceError::Diverged);
            }
            self.eta[k] = next.eta;
            self.mu[k] = next.mu;
        }
        if measuring {
            self.normalize().map_err(|_| AdvanceError::Degenerate)?;
        }
        Ok(())
    }

    /// Moments of `x = η + μ` under the weights: `(E[x], E[x²], E[x³])`.
    fn raw_moments(&self) -> (Complex64, Complex64, Complex64) {
        let mut m = (Complex64::default(), Complex64::default(), Complex64::default());
        for (w, (e, u)) in self.w.iter().zip(self.eta.iter().zip(&self.mu)) {
            let x = e + u;
            let x2 = x * x;
            m.0 += x * w;
            m.1 += x2 * w;
            m.2 += x2 * x * w;
        }
        m
    }

    pub fn observables(&self, g: f64) -> Observables {
        let (m1, m2, m3) = self.raw_moments();
        let mean = m1.re / g;
        // Normally ordered identities for X̂ = a + a†.
        let second = m2.re / (g * g) + 1.0;
        let third = m3.re / (g * g * g) + 3.0 * mean;
        let photons: f64 = self
            .w
            .iter()
            .zip(self.eta.iter().zip(&self.mu))
            .map(|(w, (e, u))| w * (e * u).re)
            .sum::<f64>()
            / (g * g);
        // Dividing by Σw keeps symmetric cases exact despite rounding in the weights.
        let prob_pos = self
            .w
            .iter()
            .zip(self.eta.iter().zip(&self.mu))
            .map(|(w, (e, u))| w * normal_cdf((e + u).re / g))
            .sum::<f64>()
            / self.w.iter().sum::<f64>();
        Observables {
            mean_x: mean,
            mean_x_imag: m1.im / g,
            photon_number: photons,
            variance_x: second - mean * mean,
            skewness_x: third - 3.0 * mean * second + 2.0 * mean.powi(3),
            prob_x_positive: prob_pos.clamp(0.0, 1.0),
        }
    }

    /// Standard error of the weighted mean of `X = Re(η+μ)/g`, using the
    /// effective sample size.
    pub fn mean_x_stderr(&self, g: f64) -> f64 {
        let mean = self.mean_x_scaled().re / g;
        let var: f64 = self
            .w
            .iter()
            .zip(self.eta.iter().zip(&self.mu))
            .map(|(w, (e, u))| w * ((e + u).re / g - mean).powi(2))
            .sum();
        (var / self.ess()).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum AdvanceError {
    Diverged,
    Degenerate,
}

/// Physical observables of one DOPO, all in `X̂ = a + a†` units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Observables {
    pub mean_x: f64,
    /// Imaginary part of the sampled `⟨X̂⟩`; zero in expectation.
    pub mean_x_imag: f64,
    pub photon_number: f64,
    pub variance_x: f64,
    /// Third central moment `⟨ΔX³⟩`.
    pub skewness_x: f64,
    pub prob_x_positive: f64,
}

impl Observables {
    pub fn prob_x_negative(&self) -> f64 {
        1.0 - self.prob_x_positive
    }
}

/// The full machine: one [`DopoEnsemble`] per DOPO, all with the same `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    dopos: Vec<DopoEnsemble>,
    g: f64,
}

impl Ensemble {
    /// `n` DOPOs with `m` identical samples each.
    pub fn new(n: usize, m: usize, g: f64, initial: SignalState) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(CimError::input("ensemble needs at least one DOPO and one particle"));
        }
        if !(g > 0.0) {
            return Err(CimError::input("g must be positive"));
        }
        Ok(Ensemble {
            dopos: vec![DopoEnsemble::uniform(m, initial); n],
            g,
        })
    }

    pub fn from_dopos(dopos: Vec<DopoEnsemble>, g: f64) -> Result<Self> {
        let m = dopos.first().map(DopoEnsemble::len).unwrap_or(0);
        if m == 0 || dopos.iter().any(|d| d.len() != m) {
            return Err(CimError::input("all DOPOs must hold the same non-zero particle count"));
        }
        Ok(Ensemble { dopos, g })
    }

    pub fn n(&self) -> usize {
        self.dopos.len()
    }

    pub fn m(&self) -> usize {
        self.dopos[0].len()
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn dopo(&self, i: usize) -> &DopoEnsemble {
        &self.dopos[i]
    }

    pub(crate) fn dopos_mut(&mut self) -> &mut [DopoEnsemble] {
        &mut self.dopos
    }

    /// Weighted means `⟨η_i + μ_i⟩` (real parts), in scaled units.
    pub fn mean_x_scaled(&self) -> Vec<f64> {
        self.dopos.iter().map(|d| d.mean_x_scaled().re).collect()
    }

    /// `⟨X̂_i⟩ = E_w[Re(η+μ)] / g`.
    pub fn mean_x(&self, i: usize) -> f64 {
        self.dopos[i].mean_x_scaled().re / self.g
    }

    pub fn photon_number(&self, i: usize) -> f64 {
        self.observables(i).photon_number
    }

    pub fn variance_x(&self, i: usize) -> f64 {
        self.observables(i).variance_x
    }

    pub fn skewness_x(&self, i: usize) -> f64 {
        self.observables(i).skewness_x
    }

    pub fn prob_x_positive(&self, i: usize) -> f64 {
        self.observables(i).prob_x_positive
    }

    pub fn observables(&self, i: usize) -> Observables {
        self.dopos[i].observables(self.g)
    }

    /// Applies one measurement record to every DOPO. Returns the unnormalized
    /// total weight of each DOPO before renormalization.
    pub fn reweight(&mut self, record: &MeasurementRecord, xi_norm: f64, dtau: f64) -> Result<Vec<f64>> {
        if record.len() != self.n() {
            return Err(CimError::input("record length does not match DOPO count"));
        }
        let g = self.g;
        self.dopos
            .iter_mut()
            .zip(&record.dw_meas)
            .enumerate()
            .map(|(i, (d, &dw))| {
                d.reweight(g, xi_norm, dw, dtau)
                    .map_err(|_| CimError::DegenerateEnsemble { step: 0, dopo: i })
            })
            .collect()
    }

    /// Resamples every DOPO whose ESS fell below `threshold · M`, each with its
    /// own generator. Returns how many DOPOs were resampled.
    pub fn resample<R: Rng>(&mut self, threshold: f64, rngs: &mut [R]) -> usize {
        self.dopos
            .iter_mut()
            .zip(rngs.iter_mut())
            .filter_map(|(d, r)| d.resample(threshold, r).then_some(()))
            .count()
    }
}
