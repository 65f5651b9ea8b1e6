//! Homodyne measurement records and the feedback fields built from them.
//!
//! All records are expressed in the scaled amplitude units of `η + μ`
//! (`x̃ = g X`, with `X = a + a†`). The physical record
//! `X dt = ⟨X̂⟩ dt + dW / sqrt(ξ)` becomes, in normalized time,
//!
//! ```text
//! x̃_i = ⟨η_i + μ_i⟩ + g ΔW_i / (sqrt(ξ') dτ),   ΔW_i ~ N(0, dτ).
//! ```
//!
//! Every particle of DOPO `i` sees the same `ΔW_i`; the record is a property of
//! the machine, not of the samples used to represent its state.

use num_complex::Complex64;

use crate::error::{CimError, Result};
use crate::ising::IsingProblem;

/// One step of homodyne readouts.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    /// Readouts in units of `η + μ`.
    pub x_tilde: Vec<f64>,
    /// The `N(0, dτ)` increments that produced them.
    pub dw_meas: Vec<f64>,
    pub tau: f64,
}

impl MeasurementRecord {
    /// A record carrying no measurement noise. Used when there is no
    /// measurement channel (`ξ = 0`): the feedback then acts on the means.
    pub fn noiseless(mean_x: &[f64], tau: f64) -> Self {
        MeasurementRecord {
            x_tilde: mean_x.to_vec(),
            dw_meas: vec![0.0; mean_x.len()],
            tau,
        }
    }

    pub fn len(&self) -> usize {
        self.x_tilde.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_tilde.is_empty()
    }

    /// Readouts converted to `X̂ = a + a†` units.
    pub fn x_hat(&self, g: f64) -> Vec<f64> {
        self.x_tilde.iter().map(|x| x / g).collect()
    }
}

/// Normalized feedback amplitudes `f_i = g ε_si / γ_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackField {
    pub f: Vec<Complex64>,
}

impl FeedbackField {
    pub fn zeros(n: usize) -> Self {
        FeedbackField {
            f: vec![Complex64::default(); n],
        }
    }
}

/// Builds a record from per-DOPO means `⟨η+μ⟩` and pre-drawn increments.
pub fn homodyne_sample(
    mean_x: &[f64],
    dw: &[f64],
    xi_norm: f64,
    g: f64,
    dtau: f64,
    tau: f64,
) -> Result<MeasurementRecord> {
    if !(xi_norm > 0.0) {
        return Err(CimError::input(format!(
            "homodyne sampling needs ξ' > 0, got {xi_norm}"
        )));
    }
    if mean_x.len() != dw.len() {
        return Err(CimError::input("mean and increment vectors differ in length"));
    }
    let scale = g / (xi_norm.sqrt() * dtau);
    let x_tilde = mean_x.iter().zip(dw).map(|(m, w)| m + scale * w).collect();
    Ok(MeasurementRecord {
        x_tilde,
        dw_meas: dw.to_vec(),
        tau,
    })
}

/// `f_i = ζ' Σ_j J_ij x̃_j / 2`.
///
/// The record measures `a + a†`; halving converts it to a displacement so that
/// the antisymmetric mode of an antiferromagnetic pair sees the feedback as a
/// threshold reduction of exactly `ζ'`.
pub fn feedback_field(
    record: &MeasurementRecord,
    problem: &IsingProblem,
    zeta_norm: f64,
) -> Result<FeedbackField> {
    if record.len() != problem.n() {
        return Err(CimError::input(format!(
            "record has {} entries, problem has {} spins",
            record.len(),
            problem.n()
        )));
    }
    if zeta_norm == 0.0 {
        return Ok(FeedbackField::zeros(problem.n()));
    }
    let f = problem
        .local_fields(&record.x_tilde)
        .into_iter()
        .map(|h| Complex64::new(0.5 * zeta_norm * h, 0.0))
        .collect();
    Ok(FeedbackField { f })
}
