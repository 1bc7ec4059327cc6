use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use explorecon::LearningConfig;
use explorecon_cli::config::parse_seeds;
use explorecon_cli::problem::{builtin, EnvParams};
use explorecon_cli::run::{learn, solve};
use explorecon_cli::verify::{run_suite, DEFAULT_INSTANCES};
use explorecon_cli::{Algorithm, ExperimentConfig};

#[derive(Parser)]
#[command(name = "explorecon", version, about = "Exploration-conscious criteria on finite MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact DP solution of the configured criterion; writes solution.json.
    Solve(Overrides),
    /// Runs a learner over seeds; writes per-seed CSVs and report.json.
    Learn(Overrides),
    /// Runs a numerical verification suite; exits nonzero on any failure.
    Verify {
        /// Suite name or `all`.
        suite: String,
        /// Random instances for the randomized suites.
        #[arg(long, default_value_t = DEFAULT_INSTANCES)]
        instances: u64,
    },
    /// Writes a built-in environment as JSON.
    Env {
        name: String,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Expected,
    Surrogate,
    Baseline,
    Dp,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Expected => Algorithm::Expected,
            AlgorithmArg::Surrogate => Algorithm::Surrogate,
            AlgorithmArg::Baseline => Algorithm::Baseline,
            AlgorithmArg::Dp => Algorithm::Dp,
        }
    }
}

/// Learning block created by `--steps` alone: `η = t^{−0.6}`, episodes of
/// 100 steps, about 20 checkpoints.
const DEFAULT_HORIZON: u64 = 100;
const DEFAULT_CHECKPOINTS: u64 = 20;

/// Command-line values override the config file field by field.
#[derive(Args)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `3`, `0..10` or `1,4,9`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmArg>,
    /// Total learning steps; creates a default learning block if needed.
    #[arg(long)]
    steps: Option<u64>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match (&self.config, &self.env) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(env)) => ExperimentConfig::new(env.clone()),
            (None, None) => bail!("give --config or --env"),
        };
        if let Some(env) = &self.env {
            config.env = env.clone();
        }
        if let Some(out) = &self.out {
            config.out = Some(out.clone());
        }
        if let Some(seeds) = &self.seeds {
            config.seeds = parse_seeds(seeds)?;
        }
        if let Some(g) = self.gamma {
            config.gamma = Some(g);
        }
        if let Some(a) = self.alpha {
            config.set_alpha(a)?;
        }
        if let Some(s) = self.sigma {
            config.set_sigma(s)?;
        }
        if let Some(a) = self.algorithm {
            config.algorithm = a.into();
        }
        if let Some(steps) = self.steps {
            match &mut config.learning {
                Some(l) => l.total_steps = steps,
                None => {
                    let mut l = LearningConfig::polynomial(steps, 0.6, 0)?;
                    l.episode_horizon = Some(DEFAULT_HORIZON);
                    l.checkpoint_every = (steps >= DEFAULT_CHECKPOINTS).then_some(steps / DEFAULT_CHECKPOINTS);
                    config.learning = Some(l);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }
}

fn out_dir(config: &ExperimentConfig) -> PathBuf {
    config.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Solve(o) => {
            let config = o.resolve()?;
            let report = solve(&config)?;
            let dir = out_dir(&config);
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join("solution.json");
            std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
            println!("{}", report.summary());
            println!("wrote {}", path.display());
        }
        Command::Learn(o) => {
            let config = o.resolve()?;
            let report = learn(&config)?;
            let dir = out_dir(&config);
            report.write(&dir)?;
            if let Some(last) = report.aggregate.last() {
                for m in &last.metrics {
                    match m.ci90_half_width {
                        Some(h) => println!("step {} {}: {:.6} ± {:.6}", last.step, m.metric, m.mean, h),
                        None => println!("step {} {}: {:.6}", last.step, m.metric, m.mean),
                    }
                }
            }
            println!("wrote {} seed traces to {}", report.seeds.len(), dir.display());
        }
        Command::Verify { suite, instances } => {
            let checks = run_suite(&suite, instances)?;
            let failed = checks.iter().filter(|c| !c.passed).count();
            for c in &checks {
                println!("{}", c.line());
            }
            println!("{suite}: {} passed, {failed} failed", checks.len() - failed);
            if failed > 0 {
                std::process::exit(1);
            }
        }
        Command::Env { name, gamma, seed, delta, alpha, out } => {
            let problem = builtin(&name, EnvParams { gamma, seed, delta, alpha })?;
            let json = problem.to_json()? + "\n";
            match out {
                Some(path) => std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?,
                None => std::io::stdout().write_all(json.as_bytes())?,
            }
        }
    }
    Ok(())
}
