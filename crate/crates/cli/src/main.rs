use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use cim_core::config::ExperimentConfig;
use cim_core::harness::{run_batch, run_pair, run_traced, write_pair, write_sweep};
use cim_core::ising::{ground_states_bruteforce, ring_antiferromagnet, IsingProblem};
use cim_core::validate::validate;

/// Measurement-feedback coherent Ising machine simulator.
#[derive(Parser)]
#[command(name = "cim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set zeta=0.5`.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Use 10^4 particles and 1000 trials.
    #[arg(long)]
    paper_scale: bool,

    #[arg(short, long, env = "CIM_OUTPUT_DIR")]
    output: Option<PathBuf>,

    /// Worker threads.
    #[arg(short = 'j', long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let text = match &self.config {
            Some(path) => std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
            None => String::new(),
        };
        let mut cfg = ExperimentConfig::from_toml_str(&text, &self.set)?;
        if self.paper_scale {
            cfg = cfg.paper_scale();
        }
        if let Some(out) = &self.output {
            cfg.output_dir = out.clone();
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial and write its observable trace.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Trial index used to derive the seed.
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Run the two-spin antiferromagnet under both backends instead.
        #[arg(long)]
        pair: bool,
    },
    /// Success rates over a parameter sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Exact ground states by enumeration.
    GroundTruth {
        #[command(flatten)]
        common: Common,
        /// Problem file; overrides the configured problem.
        #[arg(long)]
        problem: Option<PathBuf>,
        /// Antiferromagnetic ring of this size; overrides the configured problem.
        #[arg(long, conflicts_with = "problem")]
        ring: Option<usize>,
    },
    /// Run the numerical self-checks. Exits nonzero if any fails.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn simulate(cfg: &ExperimentConfig, trial: usize, pair: bool) -> Result<()> {
    if pair {
        let runs = run_pair(cfg)?;
        let files = write_pair(&runs, &cfg.output_dir)?;
        for (run, file) in runs.iter().zip(&files) {
            let decision = run
                .decision_p
                .map(|p| format!("{p:.3}"))
                .unwrap_or_else(|| "none".into());
            println!(
                "{:8} final <X> = {:?}  decision at p = {}  -> {}",
                run.backend.to_string(),
                run.result.final_mean_x,
                decision,
                file.display()
            );
        }
        return Ok(());
    }
    let (result, trace) = run_traced(cfg, trial)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join(format!("trace_{}_{trial}.csv", cfg.backend));
    std::fs::write(&path, trace.to_csv())?;
    let spins = result.spins.as_ref().map(|s| s.to_string()).unwrap_or_else(|| "tie".into());
    println!("backend   {}", result.backend);
    println!("steps     {}", result.steps);
    println!("resamples {}", result.resample_events);
    println!("spins     {spins}");
    println!("trace     {}", path.display());
    Ok(())
}

fn sweep(cfg: &ExperimentConfig) -> Result<()> {
    let result = run_batch(cfg)?;
    write_sweep(&result, &cfg.output_dir)?;
    println!(
        "{:>10} {:>7} {:>9} {:>5} {:>8} {:>10} {:>9}",
        result.param, "trials", "successes", "ties", "invalid", "rate", "wall(s)"
    );
    for p in &result.points {
        println!(
            "{:>10} {:>7} {:>9} {:>5} {:>8} {:>10.4} {:>9.3}",
            p.value,
            p.trials,
            p.successes,
            p.ties,
            p.invalid,
            p.success_rate,
            p.mean_wall_time.as_secs_f64()
        );
    }
    println!("results in {}", cfg.output_dir.display());
    Ok(())
}

fn ground_truth(problem: &IsingProblem) -> Result<()> {
    let truth = ground_states_bruteforce(problem)?;
    println!("spins       {}", problem.n());
    println!("min energy  {}", truth.e_min);
    println!("degeneracy  {}", truth.configs.len());
    for c in &truth.configs {
        println!("{c}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { common, trial, pair } => simulate(&common.load()?, trial, pair)?,
        Command::Sweep { common } => sweep(&common.load()?)?,
        Command::GroundTruth { common, problem, ring } => {
            let problem = match (problem, ring) {
                (Some(path), _) => IsingProblem::load(&path)?,
                (None, Some(n)) => ring_antiferromagnet(n)?,
                (None, None) => common.load()?.problem()?,
            };
            ground_truth(&problem)?
        }
        Command::Validate { common } => {
            let report = validate(&common.load()?)?;
            println!("{report}");
            return Ok(report.all_passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn overrides_and_scale() -> Result<()> {
        let cli = Cli::try_parse_from(["cim", "sweep", "--set", "zeta=0.7", "--paper-scale", "-j", "2"])?;
        let Command::Sweep { common } = cli.command else {
            anyhow::bail!("wrong subcommand");
        };
        let cfg = common.load()?;
        assert_eq!(cfg.zeta, 0.7);
        assert_eq!((cfg.particles, cfg.trials), (10_000, 1000));
        assert_eq!(cfg.threads, Some(2));
        Ok(())
    }
}
