//! Simulator for measurement-feedback coherent Ising machines.
//!
//! The machine is a network of degenerate optical parametric oscillators
//! (DOPOs) whose in-phase quadratures are continuously measured; the readouts
//! are combined through the Ising couplings and injected back as feedback.
//!
//! Two backends are provided:
//!
//! * [`trial::Backend::Exact`]: positive-P stochastic differential equations
//!   for an ensemble of weighted particles per DOPO, with measurement-induced
//!   collapse realized as replicator reweighting plus resampling;
//! * [`trial::Backend::Gaussian`]: a displaced-squeezed-vacuum closure that
//!   evolves only a mean and a variance per DOPO.
//!
//! [`harness`] runs batches of trials, success-rate sweeps and the invariant
//! checks used by the `cim` command-line tool.

pub mod config;
pub mod ensemble;
pub mod error;
pub mod feedback;
pub mod gaussian;
pub mod harness;
pub mod ising;
pub mod params;
pub mod rng;
pub mod sde;
pub mod trial;
pub mod validate;

pub use ensemble::{DopoEnsemble, Ensemble, Observables, Particle};
pub use error::{CimError, Result};
pub use feedback::{FeedbackField, MeasurementRecord};
pub use gaussian::{GaussianDopo, GaussianState};
pub use ising::{ground_states_bruteforce, ring_antiferromagnet, GroundTruth, IsingProblem, SpinConfig};
pub use params::{NormalizedParams, PhysicalParams, PumpSchedule};
pub use sde::{FullPumpState, SignalState};
pub use trial::{run_trial, Backend, TrialResult, TrialSpec};
