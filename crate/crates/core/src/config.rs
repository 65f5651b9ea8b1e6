//! Experiment configuration: a flat TOML key-value file plus `key=value`
//! overrides. Keys follow the physical symbols (`gamma_s`, `gamma_p`, `kappa`,
//! `xi`, `zeta`, `p_end`, `T`, `dtau`, `seed`, ...).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CimError, Result};
use crate::ising::{ring_antiferromagnet, IsingProblem};
use crate::params::{PhysicalParams, PumpSchedule};
use crate::trial::{Backend, TrialSpec};

/// Parameters that can be swept.
pub const SWEEPABLE: &[&str] = &[
    "zeta", "xi", "kappa", "gamma_s", "gamma_p", "g", "p_start", "p_end", "T", "dtau",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `ring` or `file`.
    pub problem: String,
    /// Spin count for generated problems.
    pub size: usize,
    pub problem_file: Option<PathBuf>,
    pub backend: Backend,

    pub gamma_s: f64,
    pub gamma_p: f64,
    pub kappa: f64,
    pub xi: f64,
    pub zeta: f64,
    /// Overrides the derived saturation parameter.
    pub g: Option<f64>,

    pub p_start: f64,
    pub p_end: f64,
    #[serde(rename = "T")]
    pub duration: f64,
    pub dtau: f64,

    pub particles: usize,
    pub trials: usize,
    pub seed: u64,
    pub resample_threshold: f64,
    /// Initial `η = μ` on every DOPO (normalized units).
    pub initial_amplitude: f64,

    pub sweep_param: String,
    /// Empty means a single point at the current value of `sweep_param`.
    pub sweep_values: Vec<f64>,

    pub output_dir: PathBuf,
    /// Trace rows are written every this many steps.
    pub trace_every: usize,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let phys = PhysicalParams::default();
        ExperimentConfig {
            problem: "ring".into(),
            size: 16,
            problem_file: None,
            backend: Backend::Exact,
            gamma_s: phys.gamma_s,
            gamma_p: phys.gamma_p,
            kappa: phys.kappa,
            xi: phys.xi,
            zeta: phys.zeta,
            g: None,
            p_start: 0.0,
            p_end: 1.5,
            duration: 200.0,
            dtau: 0.01,
            particles: 1000,
            trials: 100,
            seed: 1,
            resample_threshold: 0.5,
            initial_amplitude: 0.0,
            sweep_param: "zeta".into(),
            sweep_values: Vec::new(),
            output_dir: PathBuf::from("cim-output"),
            trace_every: 10,
            threads: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML text, then applies `key=value` overrides (values in TOML
    /// syntax; bare words are taken as strings).
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CimError::config("<file>", e.message().to_string()))?;
        for ov in overrides {
            let (key, value) = ov
                .split_once('=')
                .ok_or_else(|| CimError::config(ov.clone(), "override must look like key=value"))?;
            let key = key.trim();
            let raw = value.trim();
            let value = format!("v = {raw}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            table.insert(key.to_string(), value);
        }
        let cfg: ExperimentConfig = table
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| CimError::config(offending_key(&table), e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ExperimentConfig::from_toml_str(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Paper-scale particle and trial counts.
    pub fn paper_scale(mut self) -> Self {
        self.particles = 10_000;
        self.trials = 1000;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.physical()
            .validate()
            .map_err(|e| CimError::config(first_bad_rate(self), e.to_string()))?;
        if self.trials == 0 {
            return Err(CimError::config("trials", "must be at least 1"));
        }
        if self.particles == 0 {
            return Err(CimError::config("particles", "must be at least 1"));
        }
        if !(self.dtau.is_finite() && self.dtau > 0.0) {
            return Err(CimError::config("dtau", "must be positive"));
        }
        if !(self.duration.is_finite() && self.duration >= self.dtau) {
            return Err(CimError::config("T", "must be at least one step long"));
        }
        if !(self.p_start.is_finite() && self.p_end.is_finite()) {
            return Err(CimError::config("p_end", "pump endpoints must be finite"));
        }
        if let Some(g) = self.g {
            if !(g.is_finite() && g > 0.0) {
                return Err(CimError::config("g", "must be positive"));
            }
        }
        if !(self.resample_threshold > 0.0 && self.resample_threshold <= 1.0) {
            return Err(CimError::config("resample_threshold", "must lie in (0, 1]"));
        }
        if !SWEEPABLE.contains(&self.sweep_param.as_str()) {
            return Err(CimError::config(
                "sweep_param",
                format!("`{}` is not one of {:?}", self.sweep_param, SWEEPABLE),
            ));
        }
        if self.sweep_values.iter().any(|v| !v.is_finite()) {
            return Err(CimError::config("sweep_values", "values must be finite"));
        }
        if self.sweep_values.windows(2).any(|w| w[0] > w[1]) {
            return Err(CimError::config("sweep_values", "values must be sorted"));
        }
        match self.problem.as_str() {
            "ring" if self.size < 2 => Err(CimError::config("size", "ring needs at least 2 spins")),
            "ring" => Ok(()),
            "file" if self.problem_file.is_none() => {
                Err(CimError::config("problem_file", "required when problem = \"file\""))
            }
            "file" => Ok(()),
            other => Err(CimError::config("problem", format!("unknown problem source `{other}`"))),
        }?;
        if self.threads == Some(0) {
            return Err(CimError::config("threads", "must be at least 1"));
        }
        Ok(())
    }

    pub fn physical(&self) -> PhysicalParams {
        PhysicalParams {
            gamma_s: self.gamma_s,
            gamma_p: self.gamma_p,
            kappa: self.kappa,
            xi: self.xi,
            zeta: self.zeta,
        }
    }

    pub fn problem(&self) -> Result<IsingProblem> {
        match self.problem.as_str() {
            "ring" => ring_antiferromagnet(self.size),
            "file" => {
                let path = self
                    .problem_file
                    .as_ref()
                    .ok_or_else(|| CimError::config("problem_file", "missing"))?;
                IsingProblem::load(path)
            }
            other => Err(CimError::config("problem", format!("unknown problem source `{other}`"))),
        }
    }

    pub fn trial_spec(&self) -> Result<TrialSpec> {
        let ramp = PumpSchedule::new(self.p_start, self.p_end, self.duration)
            .map_err(|e| CimError::config("T", e.to_string()))?;
        let mut spec = TrialSpec::new(self.physical(), ramp, self.dtau);
        spec.g_override = self.g;
        spec.particles = self.particles;
        spec.resample_threshold = self.resample_threshold;
        spec.initial_amplitude = self.initial_amplitude;
        Ok(spec)
    }

    /// Current value of a sweepable parameter.
    pub fn param(&self, name: &str) -> Result<f64> {
        Ok(match name {
            "zeta" => self.zeta,
            "xi" => self.xi,
            "kappa" => self.kappa,
            "gamma_s" => self.gamma_s,
            "gamma_p" => self.gamma_p,
            "g" => self.g.unwrap_or_else(|| self.physical().saturation()),
            "p_start" => self.p_start,
            "p_end" => self.p_end,
            "T" => self.duration,
            "dtau" => self.dtau,
            other => return Err(CimError::config("sweep_param", format!("`{other}` is not sweepable"))),
        })
    }

    /// A copy with one sweepable parameter replaced.
    pub fn with_param(&self, name: &str, value: f64) -> Result<Self> {
        let mut c = self.clone();
        match name {
            "zeta" => c.zeta = value,
            "xi" => c.xi = value,
            "kappa" => c.kappa = value,
            "gamma_s" => c.gamma_s = value,
            "gamma_p" => c.gamma_p = value,
            "g" => c.g = Some(value),
            "p_start" => c.p_start = value,
            "p_end" => c.p_end = value,
            "T" => c.duration = value,
            "dtau" => c.dtau = value,
            other => return Err(CimError::config("sweep_param", format!("`{other}` is not sweepable"))),
        }
        c.validate()?;
        Ok(c)
    }

    pub fn sweep_points(&self) -> Result<Vec<f64>> {
        if self.sweep_values.is_empty() {
            Ok(vec![self.param(&self.sweep_param)?])
        } else {
            Ok(self.sweep_values.clone())
        }
    }
}

fn first_bad_rate(c: &ExperimentConfig) -> &'static str {
    let checks: [(&'static str, f64, bool); 5] = [
        ("gamma_s", c.gamma_s, true),
        ("gamma_p", c.gamma_p, true),
        ("kappa", c.kappa, true),
        ("xi", c.xi, false),
        ("zeta", c.zeta, false),
    ];
    checks
        .iter()
        .find(|(_, v, strict)| !(v.is_finite() && if *strict { *v > 0.0 } else { *v >= 0.0 }))
        .map(|(k, _, _)| *k)
        .unwrap_or("gamma_s")
}

/// Finds the first key that fails to deserialize on its own.
fn offending_key(table: &toml::Table) -> String {
    table
        .iter()
        .find(|(k, v)| {
            let mut single = toml::Table::new();
            single.insert((*k).clone(), (*v).clone());
            single.try_into::<ExperimentConfig>().is_err()
        })
        .map(|(k, _)| k.clone())
        .unwrap_or_else(|| "<file>".into())
}
