//! Resolves an environment reference into a solvable problem.

use std::path::Path;

use anyhow::{bail, Context, Result};
use explorecon::envs::{
    bimodal_reward_mdp, counterexample_bias_tight, counterexample_monotonicity,
    counterexample_sensitivity_tight, random_grid_mdp, random_mdp, t_cliff_walking, Env,
};
use explorecon::{ActionGrid, GridMdp, Policy, TabularMdp};

use crate::config::{Criterion, ExperimentConfig};

pub const BUILTIN_ENVS: [&str; 7] = [
    "t-cliff",
    "nonmonotone",
    "bias-tight",
    "sensitivity-tight",
    "bimodal",
    "random",
    "random-grid",
];

pub enum Problem {
    Tabular(Env),
    Grid(GridMdp),
}

impl Problem {
    pub fn mdp(&self) -> &TabularMdp {
        match self {
            Problem::Tabular(env) => &env.mdp,
            Problem::Grid(g) => g.mdp(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(match self {
            Problem::Tabular(env) => env.mdp.to_json()?,
            Problem::Grid(g) => g.to_json()?,
        })
    }
}

/// Parameters of the built-in generators.
#[derive(Debug, Clone, Copy)]
pub struct EnvParams {
    pub gamma: Option<f64>,
    pub seed: u64,
    pub delta: Option<f64>,
    pub alpha: Option<f64>,
}

pub fn builtin(name: &str, p: EnvParams) -> Result<Problem> {
    let g = |default: f64| p.gamma.unwrap_or(default);
    Ok(match name {
        "t-cliff" => Problem::Tabular(t_cliff_walking(g(0.99))?),
        "nonmonotone" => Problem::Tabular(counterexample_monotonicity(g(0.99))?),
        "bias-tight" => Problem::Tabular(counterexample_bias_tight(g(0.99))?),
        "sensitivity-tight" => Problem::Tabular(counterexample_sensitivity_tight(
            g(0.99),
            p.delta.unwrap_or(0.1),
            p.alpha.unwrap_or(0.5),
        )?),
        "bimodal" => Problem::Grid(bimodal_reward_mdp(ActionGrid::new(-6.0, 6.0, 241)?, g(0.99))?),
        "random" => Problem::Tabular(plain_env(
            &format!("random:{}", p.seed),
            random_mdp(p.seed, 5, 3, g(0.9), 0.3)?,
        )),
        "random-grid" => Problem::Grid(random_grid_mdp(p.seed, 3, ActionGrid::new(-3.0, 3.0, 121)?, g(0.9))?),
        other => bail!("unknown environment {other:?}"),
    })
}

fn plain_env(name: &str, mdp: TabularMdp) -> Env {
    let pi0 = Policy::uniform(mdp.n_states(), mdp.n_actions());
    Env {
        name: name.into(),
        mdp,
        pi0,
        reward_shift: 0.0,
        start: None,
        terminals: Vec::new(),
        v_hat: None,
        bottleneck: Vec::new(),
    }
}

/// Loads a tabular or grid MDP file; a top-level `grid` key selects the
/// latter. A `gamma` override replaces the stored discount.
pub fn load_file(path: &Path, gamma: Option<f64>) -> Result<Problem> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let problem = if value.get("grid").is_some() {
        let g = GridMdp::from_json(&text)?;
        match gamma {
            Some(gamma) => {
                Problem::Grid(GridMdp::new(g.mdp().with_gamma(gamma)?, *g.grid(), g.reward_fn())?)
            }
            None => Problem::Grid(g),
        }
    } else {
        let mut mdp = TabularMdp::from_json(&text)?;
        if let Some(gamma) = gamma {
            mdp = mdp.with_gamma(gamma)?;
        }
        Problem::Tabular(plain_env(&path.display().to_string(), mdp))
    };
    Ok(problem)
}

pub fn resolve(config: &ExperimentConfig) -> Result<Problem> {
    if BUILTIN_ENVS.contains(&config.env.as_str()) {
        let alpha = match &config.criterion {
            Criterion::Alpha(spec) => match spec.alpha {
                explorecon::alpha::AlphaValue::Constant(a) => Some(a),
                _ => None,
            },
            _ => None,
        };
        let params = EnvParams { gamma: config.gamma, seed: config.env_seed, delta: config.delta, alpha };
        builtin(&config.env, params)
    } else {
        load_file(Path::new(&config.env), config.gamma)
    }
}
