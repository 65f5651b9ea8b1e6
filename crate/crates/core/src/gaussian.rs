//! Gaussian approximation: each DOPO is a displaced squeezed vacuum described by
//! a real mean `μ` and in-phase variance `σ²` (vacuum `σ² = 1/4` in
//! `x̂ = (a + a†)/2` units). Integrated in physical time `t`.

use crate::ensemble::normal_cdf;
use crate::error::{CimError, Result};
use crate::ising::IsingProblem;
use crate::params::PhysicalParams;

pub const VACUUM_VARIANCE: f64 = 0.25;
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Mean and variance of one DOPO.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianDopo {
    pub mu: f64,
    pub var: f64,
}

impl Default for GaussianDopo {
    fn default() -> Self {
        GaussianDopo {
            mu: 0.0,
            var: VACUUM_VARIANCE,
        }
    }
}

/// The Gaussian state of every DOPO in the machine.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub dopos: Vec<GaussianDopo>,
    /// Number of times the variance floor had to be enforced.
    pub floor_hits: usize,
}

impl GaussianState {
    pub fn vacuum(n: usize) -> Self {
        GaussianState {
            dopos: vec![GaussianDopo::default(); n],
            floor_hits: 0,
        }
    }

    /// Coherent state with displacement `alpha` on every DOPO.
    pub fn coherent(n: usize, alpha: f64) -> Self {
        GaussianState {
            dopos: vec![
                GaussianDopo {
                    mu: alpha,
                    var: VACUUM_VARIANCE
                };
                n
            ],
            floor_hits: 0,
        }
    }
}

/// One Euler–Maruyama step of the mean/variance equations.
///
/// `eps_p` is the pump amplitude, `eps_s` the injected feedback field and `dw`
/// the `N(0, dt)` measurement increment shared with the readout. Returns the new
/// state and whether the variance floor was hit.
pub fn gaussian_step(
    s: GaussianDopo,
    eps_p: f64,
    eps_s: f64,
    phys: &PhysicalParams,
    dt: f64,
    dw: f64,
) -> (GaussianDopo, bool) {
    let GaussianDopo { mu, var } = s;
    let gain = phys.kappa / phys.gamma_p * eps_p;
    let sat = phys.kappa * phys.kappa / (2.0 * phys.gamma_p);
    let excess = var - VACUUM_VARIANCE;

    let d_mu = phys.xi.sqrt() * excess * dw
        + (-phys.gamma_s * mu + gain * mu
            - sat * (mu.powi(3) + mu / var * excess * (3.0 * var - VACUUM_VARIANCE))
            + eps_s)
            * dt;

    let d_var = (-2.0 * phys.gamma_s * excess + 2.0 * gain * (var + VACUUM_VARIANCE)
        - sat
            * (5.0 / 8.0 + 6.0 * var * var + 6.0 * var * mu * mu - 0.5 * var + 1.5 * mu * mu
                - 3.0 / (32.0 * var))
        - 4.0 * phys.xi * excess * excess)
        * dt;

    let mut next = GaussianDopo {
        mu: mu + d_mu,
        var: var + d_var,
    };
    let clamped = !(next.var >= VARIANCE_FLOOR);
    if clamped {
        next.var = VARIANCE_FLOOR;
    }
    (next, clamped)
}

/// Homodyne readout `X_j = 2μ_j + ΔW_j / (sqrt(ξ) dt)` in `a + a†` units.
/// Without a measurement channel the readout is the noiseless mean.
pub fn gaussian_readout(state: &GaussianState, dw: &[f64], xi: f64, dt: f64) -> Vec<f64> {
    state
        .dopos
        .iter()
        .zip(dw)
        .map(|(d, w)| {
            if xi > 0.0 {
                2.0 * d.mu + w / (xi.sqrt() * dt)
            } else {
                2.0 * d.mu
            }
        })
        .collect()
}

/// `ε_si = ζ Σ_j J_ij X_j / 2`, i.e. the coupling acts on the displacement
/// estimate `μ_j + ΔW_j / (2 sqrt(ξ) dt)` built from the shared record.
pub fn gaussian_feedback(
    state: &GaussianState,
    dw: &[f64],
    problem: &IsingProblem,
    zeta: f64,
    xi: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    if state.dopos.len() != problem.n() || dw.len() != problem.n() {
        return Err(CimError::input(format!(
            "gaussian state/record sizes ({}, {}) do not match {} spins",
            state.dopos.len(),
            dw.len(),
            problem.n()
        )));
    }
    if zeta == 0.0 {
        return Ok(vec![0.0; problem.n()]);
    }
    let readout = gaussian_readout(state, dw, xi, dt);
    Ok(problem
        .local_fields(&readout)
        .into_iter()
        .map(|h| 0.5 * zeta * h)
        .collect())
}

/// `(⟨X̂⟩, Var X̂)` with `X̂ = a + a†`: `(2μ, 4σ²)`.
pub fn gaussian_observables(d: &GaussianDopo) -> (f64, f64) {
    (2.0 * d.mu, 4.0 * d.var)
}

/// Mean photon number of the pure displaced squeezed state,
/// `μ² + σ² + 1/(16σ²) - 1/2`.
pub fn gaussian_photon_number(d: &GaussianDopo) -> f64 {
    d.mu * d.mu + d.var + 1.0 / (16.0 * d.var) - 0.5
}

/// `P(X > 0)` of the Gaussian in-phase marginal.
pub fn gaussian_prob_x_positive(d: &GaussianDopo) -> f64 {
    normal_cdf(d.mu / d.var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::ring_antiferromagnet;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn phys(xi: f64) -> PhysicalParams {
        PhysicalParams {
            gamma_s: 1.0,
            gamma_p: 10.0,
            kappa: 0.1,
            xi,
            zeta: 0.3,
        }
    }

    #[test]
    fn vacuum_mean_ignores_measurement() {
        let (next, _) = gaussian_step(GaussianDopo::default(), 0.0, 0.0, &phys(0.7), 0.01, 0.3);
        assert_eq!(next.mu, 0.0);
    }

    #[test]
    fn vacuum_variance_drift() {
        let p = phys(0.0);
        let dt = 0.01;
        let (next, _) = gaussian_step(GaussianDopo::default(), 0.0, 0.0, &p, dt, 0.0);
        let expected = -p.kappa * p.kappa / (4.0 * p.gamma_p) * dt;
        assert_relative_eq!(next.var - VACUUM_VARIANCE, expected, max_relative = 1e-10);
    }

    #[test]
    fn linear_variance_fixed_point() {
        // Without the κ² and ξ terms, σ* = (1+p)/(4(1-p)) makes the drift vanish.
        let p = 0.5;
        let mut ph = phys(0.0);
        ph.kappa = 1e-9;
        ph.gamma_p = 1.0;
        let eps_p = ph.pump_amplitude(p);
        let star = (1.0 + p) / (4.0 * (1.0 - p));
        assert_relative_eq!(star, 0.75);
        let (next, _) = gaussian_step(GaussianDopo { mu: 0.0, var: star }, eps_p, 0.0, &ph, 0.1, 0.0);
        assert!((next.var - star).abs() < 1e-15);
    }

    #[test]
    fn variance_floor_is_enforced() {
        let (next, hit) = gaussian_step(GaussianDopo { mu: 0.0, var: 2e-6 }, 0.0, 0.0, &phys(1e6), 0.1, 0.0);
        assert!(hit);
        assert_eq!(next.var, VARIANCE_FLOOR);
    }

    #[test]
    fn feedback_examples() {
        let problem = ring_antiferromagnet(2).unwrap();
        let a = 0.8;
        let s = GaussianState {
            dopos: vec![GaussianDopo { mu: a, var: 0.3 }, GaussianDopo { mu: -a, var: 0.3 }],
            floor_hits: 0,
        };
        let eps = gaussian_feedback(&s, &[0.0, 0.0], &problem, 0.3, 0.1, 0.01).unwrap();
        assert_relative_eq!(eps[0], 0.3 * a, max_relative = 1e-15);
        assert_relative_eq!(eps[1], -0.3 * a, max_relative = 1e-15);
        let zero = gaussian_feedback(&s, &[0.1, 0.2], &problem, 0.0, 0.1, 0.01).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);
        assert!(gaussian_feedback(&s, &[0.0], &problem, 0.3, 0.1, 0.01).is_err());
    }

    #[test]
    fn observables_units() {
        assert_eq!(gaussian_observables(&GaussianDopo::default()), (0.0, 1.0));
        assert_eq!(gaussian_observables(&GaussianDopo { mu: 25.0, var: 0.25 }).0, 50.0);
        assert_eq!(gaussian_observables(&GaussianDopo { mu: 0.0, var: 0.75 }).1, 3.0);
        assert!(gaussian_photon_number(&GaussianDopo::default()).abs() < 1e-15);
        assert_eq!(gaussian_prob_x_positive(&GaussianDopo::default()), 0.5);
    }

    proptest! {
        #[test]
        fn mirror_symmetry(mu in -5.0f64..5.0, var in 0.05f64..3.0, eps_s in -2.0f64..2.0,
                           p in 0.0f64..1.5, dw in -0.3f64..0.3) {
            let ph = phys(0.1);
            let eps_p = ph.pump_amplitude(p);
            let (a, _) = gaussian_step(GaussianDopo { mu, var }, eps_p, eps_s, &ph, 0.01, dw);
            let (b, _) = gaussian_step(GaussianDopo { mu: -mu, var }, eps_p, -eps_s, &ph, 0.01, -dw);
            prop_assert!((a.mu + b.mu).abs() < 1e-12);
            prop_assert!((a.var - b.var).abs() < 1e-12);
        }

        #[test]
        fn measurement_never_adds_variance(mu in -5.0f64..5.0, var in 0.05f64..3.0, p in 0.0f64..1.5) {
            let with = phys(0.5);
            let without = phys(0.0);
            let eps_p = with.pump_amplitude(p);
            let (a, _) = gaussian_step(GaussianDopo { mu, var }, eps_p, 0.0, &with, 0.01, 0.0);
            let (b, _) = gaussian_step(GaussianDopo { mu, var }, eps_p, 0.0, &without, 0.01, 0.0);
            prop_assert!(a.var <= b.var);
            if (var - VACUUM_VARIANCE).abs() > 1e-6 {
                prop_assert!(a.var < b.var);
            }
        }
    }
}
