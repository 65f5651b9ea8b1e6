//! Physical rates, their normalized counterparts and the pump ramp.

use serde::{Deserialize, Serialize};

use crate::error::{CimError, Result};

/// Rates of a single DOPO and its measurement-feedback channel, in units of
/// inverse time (except `zeta`, which is a coupling gain).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Signal loss rate.
    pub gamma_s: f64,
    /// Pump loss rate.
    pub gamma_p: f64,
    /// Parametric coupling.
    pub kappa: f64,
    /// Measurement out-coupling rate.
    pub xi: f64,
    /// Feedback strength.
    pub zeta: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            gamma_s: 1.0,
            gamma_p: 10.0,
            kappa: 0.1,
            xi: 0.1,
            zeta: 0.3,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma_s", self.gamma_s),
            ("gamma_p", self.gamma_p),
            ("kappa", self.kappa),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(CimError::input(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("xi", self.xi), ("zeta", self.zeta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CimError::input(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// `g = κ / sqrt(2 γ_p γ_s)`.
    pub fn saturation(&self) -> f64 {
        self.kappa / (2.0 * self.gamma_p * self.gamma_s).sqrt()
    }

    /// Free-running threshold pump amplitude `ε_th = γ_s γ_p / κ`.
    pub fn threshold_pump(&self) -> f64 {
        self.gamma_s * self.gamma_p / self.kappa
    }

    /// Pump amplitude `ε_p` corresponding to normalized pump rate `p`.
    pub fn pump_amplitude(&self, p: f64) -> f64 {
        p * self.threshold_pump()
    }

    /// The adiabatic (pump-eliminated) model needs `γ_p ≥ γ_s`.
    pub fn adiabatic_ok(&self) -> bool {
        self.gamma_p >= self.gamma_s
    }
}

/// Linear pump ramp `p(τ) = p_start + (p_end - p_start) τ / T`, held at `p_end`
/// once `τ ≥ T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpSchedule {
    pub p_start: f64,
    pub p_end: f64,
    /// Total normalized duration `T`.
    pub duration: f64,
}

impl PumpSchedule {
    pub fn new(p_start: f64, p_end: f64, duration: f64) -> Result<Self> {
        if !(p_start.is_finite() && p_end.is_finite()) {
            return Err(CimError::input("pump endpoints must be finite"));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(CimError::input(format!("ramp duration must be positive, got {duration}")));
        }
        Ok(PumpSchedule {
            p_start,
            p_end,
            duration,
        })
    }

    pub fn constant(p: f64, duration: f64) -> Result<Self> {
        PumpSchedule::new(p, p, duration)
    }

    pub fn pump_rate(&self, tau: f64) -> f64 {
        let frac = (tau / self.duration).clamp(0.0, 1.0);
        let p = self.p_start + (self.p_end - self.p_start) * frac;
        p.clamp(self.p_start.min(self.p_end), self.p_start.max(self.p_end))
    }

    pub fn p_max(&self) -> f64 {
        self.p_start.max(self.p_end)
    }
}

/// Dimensionless constants of the normalized signal SDE, clocked by `τ = γ_s t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedParams {
    /// Saturation parameter `g`.
    pub g: f64,
    /// `ξ' = ξ / γ_s`.
    pub xi_norm: f64,
    /// `ζ' = ζ / γ_s`.
    pub zeta_norm: f64,
    pub dtau: f64,
    pub ramp: PumpSchedule,
    /// Threshold pump amplitude, kept for reporting.
    pub eps_th: f64,
}

impl NormalizedParams {
    pub fn steps(&self) -> usize {
        (self.ramp.duration / self.dtau).round() as usize
    }

    /// Replaces the derived `g` with an explicit value.
    pub fn with_g(mut self, g: f64) -> Result<Self> {
        if !(g.is_finite() && g > 0.0) {
            return Err(CimError::input(format!("g must be positive, got {g}")));
        }
        self.g = g;
        Ok(self)
    }
}

pub fn derive_normalized(
    phys: &PhysicalParams,
    ramp: PumpSchedule,
    dtau: f64,
) -> Result<NormalizedParams> {
    phys.validate()?;
    if !(dtau.is_finite() && dtau > 0.0) {
        return Err(CimError::input(format!("dtau must be positive, got {dtau}")));
    }
    Ok(NormalizedParams {
        g: phys.saturation(),
        xi_norm: phys.xi / phys.gamma_s,
        zeta_norm: phys.zeta / phys.gamma_s,
        dtau,
        ramp,
        eps_th: phys.threshold_pump(),
    })
}
