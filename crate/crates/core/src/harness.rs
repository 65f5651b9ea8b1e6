//! Batches of independent trials, parameter sweeps and their CSV output.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{CimError, Result};
use crate::ising::{energy, ground_states_bruteforce, ring_antiferromagnet, GroundTruth, IsingProblem, SpinConfig};
use crate::rng::trial_seed;
use crate::trial::{bifurcation_point, run_trial, Backend, MeanRecorder, TraceRecorder, TrialResult, TrialSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialStatus {
    Success,
    Failure,
    /// Some `⟨X̂_i⟩` was exactly zero; scored as a failure.
    Tie,
    /// Diverged or degenerate; excluded from the success rate.
    Invalid,
}

impl TrialStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialStatus::Success => "success",
            TrialStatus::Failure => "failure",
            TrialStatus::Tie => "tie",
            TrialStatus::Invalid => "invalid",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub index: usize,
    pub seed: u64,
    pub status: TrialStatus,
    pub spins: Option<SpinConfig>,
    pub energy: Option<f64>,
    pub final_mean_x: Vec<f64>,
    pub resample_events: usize,
    /// Why an invalid trial was discarded.
    pub reason: Option<String>,
    pub wall_time: Duration,
}

/// Aggregate of all trials at one sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub trials: usize,
    pub successes: usize,
    pub failures: usize,
    pub ties: usize,
    pub invalid: usize,
    /// Successes over valid (non-invalid) trials; ties count as failures.
    pub success_rate: f64,
    pub mean_wall_time: Duration,
    pub records: Vec<TrialRecord>,
}

impl SweepPoint {
    pub fn from_records(value: f64, records: Vec<TrialRecord>) -> Self {
        let count = |s: TrialStatus| records.iter().filter(|r| r.status == s).count();
        let successes = count(TrialStatus::Success);
        let ties = count(TrialStatus::Tie);
        let failures = count(TrialStatus::Failure) + ties;
        let invalid = count(TrialStatus::Invalid);
        let valid = records.len() - invalid;
        let total: Duration = records.iter().map(|r| r.wall_time).sum();
        SweepPoint {
            value,
            trials: records.len(),
            successes,
            failures,
            ties,
            invalid,
            success_rate: if valid == 0 { 0.0 } else { successes as f64 / valid as f64 },
            mean_wall_time: total / records.len().max(1) as u32,
            records,
        }
    }

    /// Binomial standard error of the success rate.
    pub fn success_rate_stderr(&self) -> f64 {
        let valid = (self.trials - self.invalid) as f64;
        if valid == 0.0 {
            return 0.0;
        }
        (self.success_rate * (1.0 - self.success_rate) / valid).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub param: String,
    pub backend: Backend,
    pub points: Vec<SweepPoint>,
}

pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    builder
        .build()
        .map_err(|e| CimError::config("threads", e.to_string()))
}

/// Runs and scores a single trial. Divergence and degeneracy are recorded as
/// invalid; other errors abort.
pub fn score_trial(
    backend: Backend,
    problem: &IsingProblem,
    truth: &GroundTruth,
    spec: &TrialSpec,
    index: usize,
    seed: u64,
) -> Result<TrialRecord> {
    let start = Instant::now();
    let outcome = run_trial(backend, problem, spec, seed, &mut ());
    let wall_time = start.elapsed();
    let mut record = TrialRecord {
        index,
        seed,
        status: TrialStatus::Invalid,
        spins: None,
        energy: None,
        final_mean_x: Vec::new(),
        resample_events: 0,
        reason: None,
        wall_time,
    };
    match outcome {
        Ok(res) => {
            record.status = match &res.spins {
                None => TrialStatus::Tie,
                Some(_) if res.is_success(problem, truth)? => TrialStatus::Success,
                Some(_) => TrialStatus::Failure,
            };
            record.energy = res.spins.as_ref().map(|s| energy(problem, s)).transpose()?;
            record.spins = res.spins;
            record.final_mean_x = res.final_mean_x;
            record.resample_events = res.resample_events;
        }
        Err(e) if e.is_trial_failure() => record.reason = Some(e.to_string()),
        Err(e) => return Err(e),
    }
    Ok(record)
}

/// Runs `cfg.trials` trials at every sweep value. Results are identical for
/// any thread count.
pub fn run_batch(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let problem = cfg.problem()?;
    let truth = ground_states_bruteforce(&problem)?;
    let pool = thread_pool(cfg.threads)?;
    let mut points = Vec::new();
    for value in cfg.sweep_points()? {
        let records = trials_at(cfg, &problem, &truth, &pool, value, 0..cfg.trials)?;
        points.push(SweepPoint::from_records(value, records));
    }
    Ok(SweepResult {
        param: cfg.sweep_param.clone(),
        backend: cfg.backend,
        points,
    })
}

/// Trials with indices in `range` at one sweep value. Concatenating adjacent
/// ranges gives the same records as one larger batch.
pub fn run_trials(cfg: &ExperimentConfig, value: f64, range: Range<usize>) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let problem = cfg.problem()?;
    let truth = ground_states_bruteforce(&problem)?;
    let pool = thread_pool(cfg.threads)?;
    trials_at(cfg, &problem, &truth, &pool, value, range)
}

fn trials_at(
    cfg: &ExperimentConfig,
    problem: &IsingProblem,
    truth: &GroundTruth,
    pool: &rayon::ThreadPool,
    value: f64,
    range: Range<usize>,
) -> Result<Vec<TrialRecord>> {
    let spec = cfg.with_param(&cfg.sweep_param, value)?.trial_spec()?;
    pool.install(|| {
        range
            .into_par_iter()
            .map(|t| {
                let seed = trial_seed(cfg.seed, value, t as u64);
                score_trial(cfg.backend, problem, truth, &spec, t, seed)
            })
            .collect()
    })
}

pub const SUMMARY_HEADER: &str = "param,value,backend,trials,successes,failures,ties,invalid,success_rate";
pub const TRIALS_HEADER: &str = "trial,seed,status,energy,spins,final_mean_x,resample_events,reason";

pub fn summary_csv(result: &SweepResult) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for p in &result.points {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            result.param, p.value, result.backend, p.trials, p.successes, p.failures, p.ties, p.invalid, p.success_rate
        )
        .unwrap();
    }
    out
}

pub fn trials_csv(point: &SweepPoint) -> String {
    let mut out = format!("{TRIALS_HEADER}\n");
    for r in &point.records {
        let means: Vec<String> = r.final_mean_x.iter().map(f64::to_string).collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.index,
            r.seed,
            r.status.as_str(),
            r.energy.map(|e| e.to_string()).unwrap_or_default(),
            r.spins.as_ref().map(|s| s.to_string()).unwrap_or_default(),
            means.join(";"),
            r.resample_events,
            r.reason.as_deref().unwrap_or("").replace(',', ";"),
        )
        .unwrap();
    }
    out
}

/// Writes `summary.csv`, one `point_NNN.csv` per sweep value and
/// `timing.csv`. Only the timing file depends on the machine.
pub fn write_sweep(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let summary = dir.join("summary.csv");
    std::fs::write(&summary, summary_csv(result))?;
    written.push(summary);
    let mut timing = String::from("value,mean_wall_time_s\n");
    for (k, p) in result.points.iter().enumerate() {
        let path = dir.join(format!("point_{k:03}.csv"));
        std::fs::write(&path, trials_csv(p))?;
        written.push(path);
        writeln!(timing, "{},{}", p.value, p.mean_wall_time.as_secs_f64()).unwrap();
    }
    let timing_path = dir.join("timing.csv");
    std::fs::write(&timing_path, timing)?;
    written.push(timing_path);
    Ok(written)
}

/// A single traced trial of the configured problem and backend.
pub fn run_traced(cfg: &ExperimentConfig, trial: usize) -> Result<(TrialResult, TraceRecorder)> {
    cfg.validate()?;
    let problem = cfg.problem()?;
    let value = cfg.sweep_points()?[0];
    let spec = cfg.with_param(&cfg.sweep_param, value)?.trial_spec()?;
    let mut trace = TraceRecorder::new(cfg.trace_every);
    let seed = trial_seed(cfg.seed, value, trial as u64);
    let pool = thread_pool(cfg.threads)?;
    let result = pool.install(|| run_trial(cfg.backend, &problem, &spec, seed, &mut trace))?;
    Ok((result, trace))
}

/// One backend's run of the antiferromagnetic pair.
#[derive(Debug, Clone)]
pub struct PairRun {
    pub backend: Backend,
    pub result: TrialResult,
    pub trace: TraceRecorder,
    /// Pump rate at which the pair decided; see [`bifurcation_point`].
    pub decision_p: Option<f64>,
}

/// Pre-threshold window and factor used to locate the pair's decision.
pub const DECISION_WINDOW: (f64, f64) = (0.1, 0.5);
pub const DECISION_FACTOR: f64 = 5.0;

/// The two-DOPO antiferromagnet under both backends with identical seeds.
pub fn run_pair(cfg: &ExperimentConfig) -> Result<Vec<PairRun>> {
    cfg.validate()?;
    let problem = ring_antiferromagnet(2)?;
    let value = cfg.sweep_points()?[0];
    let spec = cfg.with_param(&cfg.sweep_param, value)?.trial_spec()?;
    let seed = trial_seed(cfg.seed, value, 0);
    [Backend::Exact, Backend::Gaussian]
        .into_iter()
        .map(|backend| {
            let mut obs = (TraceRecorder::new(cfg.trace_every), MeanRecorder::default());
            let result = run_trial(backend, &problem, &spec, seed, &mut obs)?;
            let (trace, means) = obs;
            let decision_p = bifurcation_point(&means.p, &means.mean_x, DECISION_WINDOW, DECISION_FACTOR);
            Ok(PairRun {
                backend,
                result,
                trace,
                decision_p,
            })
        })
        .collect()
}

/// Writes `pair_<backend>.csv` traces.
pub fn write_pair(runs: &[PairRun], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    runs.iter()
        .map(|r| {
            let path = dir.join(format!("pair_{}.csv", r.backend));
            std::fs::write(&path, r.trace.to_csv())?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(backend: Backend) -> ExperimentConfig {
        ExperimentConfig {
            size: 4,
            backend,
            duration: 20.0,
            p_end: 1.2,
            particles: 20,
            trials: 6,
            sweep_values: vec![0.1, 0.5],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn batch_counts_add_up() {
        for backend in [Backend::Exact, Backend::Gaussian] {
            let res = run_batch(&small(backend)).unwrap();
            assert_eq!(res.points.len(), 2);
            for p in &res.points {
                assert_eq!(p.trials, 6);
                assert_eq!(p.successes + p.failures + p.invalid, 6);
                assert!((0.0..=1.0).contains(&p.success_rate));
                let ordered: Vec<usize> = p.records.iter().map(|r| r.index).collect();
                assert_eq!(ordered, (0..6).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn csv_is_independent_of_thread_count() {
        let mut cfg = small(Backend::Exact);
        cfg.threads = Some(1);
        let a = run_batch(&cfg).unwrap();
        cfg.threads = Some(3);
        let b = run_batch(&cfg).unwrap();
        assert_eq!(summary_csv(&a), summary_csv(&b));
        for (pa, pb) in a.points.iter().zip(&b.points) {
            assert_eq!(trials_csv(pa), trials_csv(pb));
        }
    }

    #[test]
    fn trial_ranges_concatenate() {
        let cfg = small(Backend::Gaussian);
        let whole = run_batch(&cfg).unwrap();
        let mut parts = run_trials(&cfg, 0.5, 0..2).unwrap();
        parts.extend(run_trials(&cfg, 0.5, 2..6).unwrap());
        let merged = SweepPoint::from_records(0.5, parts);
        assert_eq!(trials_csv(&merged), trials_csv(&whole.points[1]));
    }

    #[test]
    fn sweep_files_written() {
        let dir = tempfile::tempdir().unwrap();
        let res = run_batch(&small(Backend::Gaussian)).unwrap();
        let files = write_sweep(&res, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 3);
        assert!(summary.starts_with(SUMMARY_HEADER));
    }

    #[test]
    fn too_large_for_ground_truth() {
        let cfg = ExperimentConfig {
            size: 30,
            ..small(Backend::Gaussian)
        };
        assert!(matches!(run_batch(&cfg), Err(CimError::Capability(_))));
    }

    #[test]
    fn pair_runs_both_backends() {
        let cfg = ExperimentConfig {
            duration: 20.0,
            particles: 50,
            trace_every: 50,
            ..ExperimentConfig::default()
        };
        let runs = run_pair(&cfg).unwrap();
        assert_eq!(runs.len(), 2);
        for r in &runs {
            // 2000 steps, a row per DOPO every 50 steps.
            assert!(r.trace.rows.len() >= 80);
            assert_eq!(r.result.final_mean_x.len(), 2);
        }
        let dir = tempfile::tempdir().unwrap();
        let files = write_pair(&runs, dir.path()).unwrap();
        assert!(files[0].ends_with("pair_exact.csv"));
    }
}
