//! The `solve` and `learn` commands as library functions.

use anyhow::{bail, Context, Result};
use explorecon::alpha::{
    evaluate_mixture, lipschitz_constant, solve_alpha_optimal, state_dependent_bias, AlphaValue,
    BasePolicy,
};
use explorecon::envs::Env;
use explorecon::gaussian::{gaussian_lipschitz, sigma_gap_bound, solve_sigma_optimal};
use explorecon::learning::{
    baseline_q_learning, evaluate_policies, expected_alpha_q_learning, surrogate_alpha_q_learning,
};
use explorecon::mdp::value_iteration;
use explorecon::{AlphaSpec, LearnResult, Policy, QFn, ValueFn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Algorithm, Criterion, ExperimentConfig, ENV_BASE_POLICY};
use crate::problem::{resolve, Problem};
use crate::report::{aggregate, Provenance, RunReport, SeedTrace, TraceRow};

/// DP tolerance for every exact evaluation the harness reports.
pub const EVAL_TOL: f64 = 1e-10;

/// Worker pool capped by `EXPLORECON_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(text) = std::env::var("EXPLORECON_THREADS") {
        let n: usize = text
            .trim()
            .parse()
            .with_context(|| format!("EXPLORECON_THREADS={text:?} is not a count"))?;
        builder = builder.num_threads(n.max(1));
    }
    Ok(builder.build()?)
}

fn provenance(config: &ExperimentConfig) -> Provenance {
    Provenance {
        config_hash: config.hash(),
        version: env!("CARGO_PKG_VERSION").into(),
        env: config.env.clone(),
        algorithm: config.algorithm.name().into(),
    }
}

fn actions(pi: &Policy) -> Vec<usize> {
    (0..pi.n_states()).map(|s| pi.action(s).expect("greedy policies are deterministic")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AlphaReport {
    pub v_alpha_star: Vec<f64>,
    pub pi_alpha_star: Vec<usize>,
    pub q_alpha_star: Vec<Vec<f64>>,
    pub q_mixture: Vec<Vec<f64>>,
    /// Value of `π*_α` executed with its own α.
    pub v_mixture: Vec<f64>,
    /// `‖v* − v^{π^α(π*_α,π₀)}‖∞`
    pub bias_gap: f64,
    pub lipschitz: Vec<f64>,
    /// `max_s α(s)L(s)/(1−γ)`
    pub bias_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaReport {
    pub v_sigma_star: Vec<f64>,
    pub mu_sigma_star: Vec<f64>,
    pub q_sigma: Vec<Vec<f64>>,
    /// `‖v* − v*_σ‖∞`
    pub bias_gap: f64,
    pub lipschitz: f64,
    /// `√(2/π)·𝓛σ/(1−γ)²`
    pub bias_bound: f64,
}

/// Everything `solve` writes. Values are on the environment's own scale
/// (any generator reward shift removed).
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub provenance: Provenance,
    pub gamma: f64,
    pub reward_shift: f64,
    pub v_star: Vec<f64>,
    pub pi_star: Vec<usize>,
    pub q_star: Vec<Vec<f64>>,
    pub alpha: Option<AlphaReport>,
    pub sigma: Option<SigmaReport>,
}

impl SolveReport {
    pub fn summary(&self) -> String {
        let mut lines = vec![format!(
            "gamma={} states={} max v*={:.6}",
            self.gamma,
            self.v_star.len(),
            self.v_star.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        )];
        if let Some(a) = &self.alpha {
            lines.push(format!("alpha: bias gap {:.6} (bound {:.6})", a.bias_gap, a.bias_bound));
        }
        if let Some(s) = &self.sigma {
            lines.push(format!(
                "sigma: bias gap {:.6} (bound {:.6}), mu* = {:?}",
                s.bias_gap, s.bias_bound, s.mu_sigma_star
            ));
        }
        lines.join("\n")
    }
}

fn shift_of(problem: &Problem) -> f64 {
    match problem {
        Problem::Tabular(env) => env.value_shift(),
        Problem::Grid(_) => 0.0,
    }
}

fn unshifted(v: &ValueFn, shift: f64) -> Vec<f64> {
    v.as_slice().iter().map(|x| x - shift).collect()
}

fn q_rows(q: &QFn, shift: f64) -> Vec<Vec<f64>> {
    q.to_rows().into_iter().map(|r| r.into_iter().map(|x| x - shift).collect()).collect()
}

fn alpha_spec(config: &ExperimentConfig, problem: &Problem) -> Result<Option<AlphaSpec>> {
    let Criterion::Alpha(file) = &config.criterion else {
        return Ok(None);
    };
    let mdp = problem.mdp();
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let uses_env_pi0 = matches!(&file.pi0, BasePolicy::Named(name) if name == ENV_BASE_POLICY);
    if !uses_env_pi0 {
        return Ok(Some(file.resolve(n, m)?));
    }
    let pi0 = match problem {
        Problem::Tabular(env) => env.pi0.clone(),
        Problem::Grid(_) => Policy::uniform(n, m),
    };
    let alpha = match &file.alpha {
        AlphaValue::Constant(a) => vec![*a; n],
        AlphaValue::PerState(v) => v.clone(),
    };
    Ok(Some(AlphaSpec::new(pi0, alpha)?))
}

pub fn solve(config: &ExperimentConfig) -> Result<SolveReport> {
    config.validate()?;
    let problem = resolve(config)?;
    let mdp = problem.mdp();
    let shift = shift_of(&problem);
    let (v_star, pi_star) = value_iteration(mdp, EVAL_TOL)?;
    let q_star = explorecon::mdp::q_from_v(mdp, &v_star)?;
    let mut report = SolveReport {
        provenance: provenance(config),
        gamma: mdp.gamma(),
        reward_shift: match &problem {
            Problem::Tabular(env) => env.reward_shift,
            Problem::Grid(_) => 0.0,
        },
        v_star: unshifted(&v_star, shift),
        pi_star: actions(&pi_star),
        q_star: q_rows(&q_star, shift),
        alpha: None,
        sigma: None,
    };
    match &config.criterion {
        Criterion::Alpha(_) => {
            let spec = alpha_spec(config, &problem)?.expect("alpha criterion");
            let sol = solve_alpha_optimal(mdp, &spec, EVAL_TOL)?;
            let v_mix = evaluate_mixture(mdp, &sol.pi_alpha_star, &spec, spec.alpha(), EVAL_TOL)?;
            let lips = lipschitz_constant(mdp, spec.pi0(), EVAL_TOL)?;
            report.alpha = Some(AlphaReport {
                v_alpha_star: unshifted(&sol.v_alpha_star, shift),
                pi_alpha_star: actions(&sol.pi_alpha_star),
                q_alpha_star: q_rows(&sol.q_alpha_star, shift),
                q_mixture: q_rows(&sol.q_mixture, shift),
                bias_gap: v_star.dist(&v_mix),
                v_mixture: unshifted(&v_mix, shift),
                bias_bound: state_dependent_bias(spec.alpha(), &lips, mdp.gamma())?,
                lipschitz: lips.per_state,
            });
        }
        Criterion::Sigma(spec) => {
            let Problem::Grid(gmdp) = &problem else {
                bail!("sigma criterion needs a grid environment (bimodal, random-grid or a grid file)");
            };
            let sol = solve_sigma_optimal(gmdp, spec, EVAL_TOL)?;
            let lips = gaussian_lipschitz(gmdp);
            let bound = sigma_gap_bound(lips.total, &[spec.sigma], mdp.gamma(), 0.0, 0.0)?;
            report.sigma = Some(SigmaReport {
                bias_gap: v_star.dist(&sol.v_sigma_star),
                v_sigma_star: sol.v_sigma_star.into_vec(),
                mu_sigma_star: sol.mu_sigma_star.iter().map(|&i| gmdp.grid().point(i)).collect(),
                q_sigma: sol.q_sigma.to_rows(),
                lipschitz: lips.total,
                bias_bound: bound.bias_abs_moment,
            });
        }
        Criterion::None => {}
    }
    Ok(report)
}

/// Value reported for a policy: at the declared start state, else the mean
/// over states (the uniform restart distribution).
fn headline(env: &Env, v: &ValueFn) -> f64 {
    let v = env.unshift(v);
    match env.start {
        Some(s) => v[s],
        None => v.as_slice().iter().sum::<f64>() / v.len() as f64,
    }
}

fn trace_rows(env: &Env, spec: &AlphaSpec, res: &LearnResult) -> Result<Vec<TraceRow>> {
    let mdp = &env.mdp;
    res.snapshots
        .iter()
        .zip(&res.trace)
        .map(|(snap, point)| {
            let returned = snap.q_alpha.as_ref().unwrap_or(&snap.q);
            let behaviour = evaluate_mixture(mdp, &snap.q.greedy_policy(), spec, spec.alpha(), EVAL_TOL)?;
            let beta0 = evaluate_policies(mdp, returned, spec, &[0.0], EVAL_TOL)?.remove(0);
            let beta_alpha = evaluate_mixture(mdp, &returned.greedy_policy(), spec, spec.alpha(), EVAL_TOL)?;
            Ok(TraceRow {
                step: point.step,
                train_value_exact: headline(env, &behaviour),
                eval_value_beta0: headline(env, &beta0),
                eval_value_beta_alpha: headline(env, &beta_alpha),
                q_error: point.q_error,
                qalpha_error: point.qalpha_error,
            })
        })
        .collect()
}

pub fn learn(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let problem = resolve(config)?;
    let Problem::Tabular(env) = &problem else {
        bail!("learning runs on tabular environments only");
    };
    let spec = alpha_spec(config, &problem)?.context("learning needs an alpha criterion")?;
    let base = config.learning.clone().context("learning block missing")?;
    let algorithm = config.algorithm;
    let run_seed = |seed: u64| -> Result<SeedTrace> {
        let mut cfg = base.clone();
        cfg.seed = seed;
        if cfg.start_state.is_none() {
            cfg.start_state = env.start;
        }
        let res = match algorithm {
            Algorithm::Expected => expected_alpha_q_learning(&env.mdp, &spec, &cfg)?,
            Algorithm::Surrogate => surrogate_alpha_q_learning(&env.mdp, &spec, &cfg)?,
            Algorithm::Baseline => baseline_q_learning(&env.mdp, &spec, &cfg)?,
            Algorithm::Dp => bail!("algorithm dp does not learn; use solve"),
        };
        let rows = trace_rows(env, &spec, &res)?;
        let values = evaluate_policies(&env.mdp, res.policy_q(), &spec, &config.eval_betas, EVAL_TOL)?;
        let final_eval = config
            .eval_betas
            .iter()
            .zip(&values)
            .map(|(&b, v)| (b, headline(env, v)))
            .collect();
        Ok(SeedTrace { seed, rows, final_eval })
    };
    // Results come back in seed order regardless of completion order.
    let seeds = thread_pool()?.install(|| {
        config.seeds.par_iter().map(|&s| run_seed(s)).collect::<Result<Vec<_>>>()
    })?;
    Ok(RunReport { provenance: provenance(config), aggregate: aggregate(&seeds)?, seeds })
}
