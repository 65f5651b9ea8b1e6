//! Drift and diffusion laws of the DOPO signal field in the positive-P
//! representation, integrated with Euler–Maruyama.
//!
//! Two forms are provided:
//!
//! * the pump-eliminated normalized SDE in `(η, μ) = g (α_s, β_s)` with
//!   `τ = γ_s t`,
//!
//!   ```text
//!   dη = [-(1+ξ')η + μ(p - η²) + f] dτ + g sqrt(p - η²) dω_η
//!   dμ = [-(1+ξ')μ + η(p - μ²) + f] dτ + g sqrt(p - μ²) dω_μ
//!   ```
//!
//! * the full signal/pump system in physical units, used to check that the
//!   elimination is faithful when `γ_p ≫ γ_s`.
//!
//! Square roots are principal complex roots: once `η² > p` the diffusion turns
//! imaginary and the amplitudes leave the real axis, which is how the doubled
//! phase space of the representation is explored.

use num_complex::Complex64;

use crate::params::PhysicalParams;

/// Principal square root with `±0` imaginary parts both treated as `+0`, and a
/// fast path for the common non-negative real argument.
#[inline]
pub fn principal_sqrt(z: Complex64) -> Complex64 {
    if z.im == 0.0 {
        if z.re >= 0.0 {
            Complex64::new(z.re.sqrt(), 0.0)
        } else {
            Complex64::new(0.0, (-z.re).sqrt())
        }
    } else {
        // Algebraic form; picks the branch that avoids cancellation.
        let r = (z.re * z.re + z.im * z.im).sqrt();
        if z.re >= 0.0 {
            let t = (0.5 * (r + z.re)).sqrt();
            Complex64::new(t, z.im / (2.0 * t))
        } else {
            let t = (0.5 * (r - z.re)).sqrt();
            Complex64::new(z.im.abs() / (2.0 * t), t.copysign(z.im))
        }
    }
}

/// Raised when an Euler–Maruyama step produces a non-finite amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonFinite;

/// Signal amplitudes `(η, μ)` of one positive-P sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SignalState {
    pub eta: Complex64,
    pub mu: Complex64,
}

impl SignalState {
    pub fn new(eta: Complex64, mu: Complex64) -> Self {
        SignalState { eta, mu }
    }

    /// Coherent state `|α⟩⟨α|` with `η = μ = g α` real.
    pub fn coherent(amplitude: f64) -> Self {
        let a = Complex64::new(amplitude, 0.0);
        SignalState { eta: a, mu: a }
    }

    /// `η + μ`, the scaled in-phase quadrature sample.
    #[inline]
    pub fn x(&self) -> Complex64 {
        self.eta + self.mu
    }

    pub fn is_finite(&self) -> bool {
        self.eta.is_finite() && self.mu.is_finite()
    }
}

/// Deterministic part of the normalized SDE, per unit `dτ`.
#[inline]
pub fn drift_adiabatic(
    eta: Complex64,
    mu: Complex64,
    p: f64,
    xi_norm: f64,
    f: Complex64,
) -> (Complex64, Complex64) {
    let damp = 1.0 + xi_norm;
    let d_eta = -damp * eta + mu * (p - eta * eta) + f;
    let d_mu = -damp * mu + eta * (p - mu * mu) + f;
    (d_eta, d_mu)
}

/// Noise amplitudes multiplying the two independent real Wiener increments.
#[inline]
pub fn diffusion_adiabatic(eta: Complex64, mu: Complex64, p: f64, g: f64) -> (Complex64, Complex64) {
    let p = Complex64::new(p, 0.0);
    (
        g * principal_sqrt(p - eta * eta),
        g * principal_sqrt(p - mu * mu),
    )
}

/// Constants of the normalized signal SDE that do not change along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSde {
    pub g: f64,
    pub xi_norm: f64,
}

impl SignalSde {
    /// One Euler–Maruyama step. `noise` holds the two Wiener increments, each
    /// `N(0, dτ)`; pass `(0, 0)` for the noiseless flow.
    #[inline]
    pub fn step(
        &self,
        state: SignalState,
        p: f64,
        f: Complex64,
        dtau: f64,
        noise: (f64, f64),
    ) -> Result<SignalState, NonFinite> {
        step_adiabatic(state, p, f, self.g, self.xi_norm, dtau, noise)
    }
}

#[inline]
pub fn step_adiabatic(
    state: SignalState,
    p: f64,
    f: Complex64,
    g: f64,
    xi_norm: f64,
    dtau: f64,
    noise: (f64, f64),
) -> Result<SignalState, NonFinite> {
    let (a_eta, a_mu) = drift_adiabatic(state.eta, state.mu, p, xi_norm, f);
    let mut next = SignalState {
        eta: state.eta + a_eta * dtau,
        mu: state.mu + a_mu * dtau,
    };
    if noise.0 != 0.0 || noise.1 != 0.0 {
        let (b_eta, b_mu) = diffusion_adiabatic(state.eta, state.mu, p, g);
        next.eta += b_eta * noise.0;
        next.mu += b_mu * noise.1;
    }
    if next.is_finite() {
        Ok(next)
    } else {
        Err(NonFinite)
    }
}

/// Signal and pump amplitudes of one positive-P sample, in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FullPumpState {
    pub alpha_s: Complex64,
    pub beta_s: Complex64,
    pub alpha_p: Complex64,
    pub beta_p: Complex64,
}

impl FullPumpState {
    pub fn is_finite(&self) -> bool {
        self.alpha_s.is_finite()
            && self.beta_s.is_finite()
            && self.alpha_p.is_finite()
            && self.beta_p.is_finite()
    }

    /// The pump-eliminated sample `(η, μ) = g (α_s, β_s)`.
    pub fn normalized(&self, g: f64) -> SignalState {
        SignalState {
            eta: self.alpha_s * g,
            mu: self.beta_s * g,
        }
    }
}

/// One Euler–Maruyama step of the signal/pump system
///
/// ```text
/// dα_s = [-(γ_s+ξ)α_s + κ β_s α_p + ε_s] dt + sqrt(κ α_p) dW_α
/// dα_p = [-γ_p α_p - (κ/2) α_s² + ε_p] dt
/// ```
///
/// and the mirrored `β` equations. `noise` holds `(dW_α, dW_β)`, each `N(0, dt)`.
pub fn step_full_pump(
    state: FullPumpState,
    eps_p: f64,
    eps_s: Complex64,
    phys: &PhysicalParams,
    dt: f64,
    noise: (f64, f64),
) -> Result<FullPumpState, NonFinite> {
    let FullPumpState {
        alpha_s,
        beta_s,
        alpha_p,
        beta_p,
    } = state;
    let k = phys.kappa;
    let loss = phys.gamma_s + phys.xi;
    let mut next = FullPumpState {
        alpha_s: alpha_s + (-loss * alpha_s + k * beta_s * alpha_p + eps_s) * dt,
        beta_s: beta_s + (-loss * beta_s + k * alpha_s * beta_p + eps_s) * dt,
        alpha_p: alpha_p + (-phys.gamma_p * alpha_p - 0.5 * k * alpha_s * alpha_s + eps_p) * dt,
        beta_p: beta_p + (-phys.gamma_p * beta_p - 0.5 * k * beta_s * beta_s + eps_p) * dt,
    };
    if noise.0 != 0.0 || noise.1 != 0.0 {
        next.alpha_s += principal_sqrt(k * alpha_p) * noise.0;
        next.beta_s += principal_sqrt(k * beta_p) * noise.1;
    }
    if next.is_finite() {
        Ok(next)
    } else {
        Err(NonFinite)
    }
}
