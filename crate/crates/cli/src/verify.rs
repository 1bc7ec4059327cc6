//! Named numerical verification suites. Each check reports the measured
//! value, its reference and the tolerance it was held to.

use anyhow::{bail, Result};
use explorecon::alpha::{
    alpha_gap_bound, build_surrogate_mdp, empirical_bound_check, evaluate_mixture,
    improvement_check, solve_alpha_optimal, NoiseModel,
};
use explorecon::envs::{
    bimodal_reward_mdp, counterexample_bias_tight, counterexample_monotonicity,
    counterexample_sensitivity_tight, random_grid_mdp, random_mdp,
};
use explorecon::gaussian::{
    build_sigma_surrogate, evaluate_gaussian_policy, gaussian_lipschitz,
    gradient_equivalence_check, sigma_gap_bound, solve_sigma_optimal,
};
use explorecon::mdp::{argmax_lowest, policy_evaluation, value_iteration};
use explorecon::{ActionGrid, AlphaSpec, GridMdp, Policy, SigmaSpec, TabularMdp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const SUITES: [&str; 12] = [
    "nonmonotone",
    "bias-tight",
    "sensitivity-tight",
    "alpha-bound",
    "state-function",
    "surrogate-equivalence",
    "improvement",
    "separation",
    "sigma-bound",
    "sigma-equivalence",
    "gradient",
    "enumeration",
];

/// Default number of random instances for the randomized suites.
pub const DEFAULT_INSTANCES: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `|measured − reference| ≤ tol`
    Equal,
    /// `measured ≤ reference + tol`
    AtMost,
    /// `measured ≥ reference − tol`
    AtLeast,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub measured: f64,
    pub reference: f64,
    pub tol: f64,
    pub relation: Relation,
    pub passed: bool,
}

impl Check {
    fn new(suite: &str, name: impl Into<String>, measured: f64, relation: Relation, reference: f64, tol: f64) -> Self {
        let passed = match relation {
            Relation::Equal => (measured - reference).abs() <= tol,
            Relation::AtMost => measured <= reference + tol,
            Relation::AtLeast => measured >= reference - tol,
        };
        Self { suite: suite.into(), name: name.into(), measured, reference, tol, relation, passed }
    }

    pub fn line(&self) -> String {
        let op = match self.relation {
            Relation::Equal => "≈",
            Relation::AtMost => "≤",
            Relation::AtLeast => "≥",
        };
        format!(
            "{} {}/{}: {:.12e} {op} {:.12e} (tol {:.1e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.measured,
            self.reference,
            self.tol
        )
    }
}

/// Runs one suite, or every suite for `"all"`. `instances` sizes the
/// randomized suites; the fixed ones ignore it.
pub fn run_suite(name: &str, instances: u64) -> Result<Vec<Check>> {
    if name == "all" {
        let mut out = Vec::new();
        for s in SUITES {
            out.extend(run_suite(s, instances)?);
        }
        return Ok(out);
    }
    let n = instances.max(1);
    match name {
        "nonmonotone" => nonmonotone(),
        "bias-tight" => bias_tight(),
        "sensitivity-tight" => sensitivity_tight(),
        "alpha-bound" => alpha_bound(n),
        "state-function" => state_function(n),
        "surrogate-equivalence" => surrogate_equivalence(n),
        "improvement" => improvement(n),
        "separation" => separation(),
        "sigma-bound" => sigma_bound(n),
        "sigma-equivalence" => sigma_equivalence(n),
        "gradient" => gradient(),
        "enumeration" => enumeration(n),
        other => bail!("unknown suite {other:?}; expected one of {} or all", SUITES.join(", ")),
    }
}

const DP_TOL: f64 = 1e-12;

/// Random instance `k` of a suite: sizes, discount, α and a random `π₀`.
struct Instance {
    mdp: TabularMdp,
    spec: AlphaSpec,
}

fn instance(base: u64, k: u64, max_alpha: f64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(base + k);
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(2..=4);
    let g = rng.gen_range(0.5..0.99);
    let alpha = rng.gen_range(0.0..max_alpha);
    let mdp = random_mdp(base + k, n, m, g, 0.3)?;
    let mut probs: Vec<f64> = (0..n * m).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    for row in probs.chunks_mut(m) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= s);
    }
    let spec = AlphaSpec::constant(alpha, Policy::stochastic(probs, n, m)?)?;
    Ok(Instance { mdp, spec })
}

fn nonmonotone() -> Result<Vec<Check>> {
    const S: &str = "nonmonotone";
    let g = 0.99;
    let env = counterexample_monotonicity(g)?;
    let spec = env.alpha_constant(0.25)?;
    let sol = solve_alpha_optimal(&env.mdp, &spec, DP_TOL)?;
    let v = env.unshift(&sol.v_alpha_star);
    let at = |b: f64| -> Result<f64> {
        let v = evaluate_mixture(&env.mdp, &sol.pi_alpha_star, &spec, &[b; 3], DP_TOL)?;
        Ok(env.unshift(&v)[0])
    };
    Ok(vec![
        Check::new(S, "v*_alpha(s1)", v[1], Relation::Equal, 0.8, 1e-8),
        Check::new(S, "v*_alpha(s2)", v[2], Relation::Equal, 0.75, 1e-8),
        Check::new(S, "v*_alpha(s0)", v[0], Relation::Equal, 0.7875 * g, 1e-8),
        Check::new(S, "beta=0 value at s0", at(0.0)?, Relation::Equal, 0.8 * g, 1e-8),
        Check::new(S, "beta=0.1 value at s0", at(0.1)?, Relation::Equal, 0.81 * g, 1e-8),
        Check::new(S, "beta=0.1 exceeds beta=0", at(0.1)? - at(0.0)?, Relation::AtLeast, 0.01 * g, 1e-8),
    ])
}

fn bias_tight() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for g in [0.9, 0.99] {
        let env = counterexample_bias_tight(g)?;
        let (v_star, _) = value_iteration(&env.mdp, DP_TOL)?;
        for a in [0.1, 0.3, 0.6] {
            let spec = env.alpha_constant(a)?;
            let sol = solve_alpha_optimal(&env.mdp, &spec, DP_TOL)?;
            let v = evaluate_mixture(&env.mdp, &sol.pi_alpha_star, &spec, &[a], DP_TOL)?;
            out.push(Check::new(
                "bias-tight",
                format!("gamma={g} alpha={a} gap"),
                v_star.dist(&v),
                Relation::Equal,
                0.5 * a / (1.0 - g),
                1e-8,
            ));
        }
    }
    Ok(out)
}

fn sensitivity_tight() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (g, d, a) in [(0.99, 0.1, 0.5), (0.9, 0.05, 0.2)] {
        let env = counterexample_sensitivity_tight(g, d, a)?;
        let spec = env.alpha_constant(a)?;
        let v_hat = env.v_hat.clone().expect("preset estimate");
        let rep = empirical_bound_check(&env.mdp, &spec, &NoiseModel::Fixed { v_hat }, 1, 1e-10)?;
        let t = &rep.trials[0];
        let tag = format!("gamma={g} delta={d} alpha={a}");
        out.push(Check::new("sensitivity-tight", format!("{tag} estimate error"), t.delta, Relation::Equal, d, 1e-10));
        out.push(Check::new(
            "sensitivity-tight",
            format!("{tag} gap"),
            t.sensitivity_gap,
            Relation::Equal,
            2.0 * g * d * (1.0 - a) / (1.0 - g),
            1e-8,
        ));
    }
    Ok(out)
}

fn alpha_bound(n: u64) -> Result<Vec<Check>> {
    let mut worst = f64::NEG_INFINITY;
    let mut trials = 0;
    for k in 0..n {
        let inst = instance(10_000, k, 1.0)?;
        let alpha = inst.spec.alpha()[0];
        for delta in [0.01, 0.1] {
            let rep = empirical_bound_check(&inst.mdp, &inst.spec, &NoiseModel::Uniform { delta }, 5, 1e-8)?;
            let bound = alpha_gap_bound(rep.lipschitz.max, alpha, inst.mdp.gamma(), delta)?;
            for t in &rep.trials {
                worst = worst.max(t.total_gap - bound);
                trials += 1;
            }
        }
    }
    Ok(vec![Check::new(
        "alpha-bound",
        format!("max gap minus bound over {trials} trials"),
        worst,
        Relation::AtMost,
        0.0,
        1e-8,
    )])
}

fn state_function(n: u64) -> Result<Vec<Check>> {
    let (mut spread, mut disagree) = (0.0f64, 0usize);
    for k in 0..n {
        let inst = instance(20_000, k, 0.95)?;
        let alpha = inst.spec.alpha()[0];
        let sol = solve_alpha_optimal(&inst.mdp, &inst.spec, 1e-11)?;
        for s in 0..inst.mdp.n_states() {
            let d: Vec<f64> = (0..inst.mdp.n_actions())
                .map(|a| sol.q_alpha_star.get(s, a) - (1.0 - alpha) * sol.q_mixture.get(s, a))
                .collect();
            let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
            spread = spread.max(hi - lo);
            disagree += usize::from(
                argmax_lowest(sol.q_alpha_star.row(s)) != argmax_lowest(sol.q_mixture.row(s)),
            );
        }
    }
    Ok(vec![
        Check::new("state-function", "max spread across actions", spread, Relation::AtMost, 0.0, 1e-8),
        Check::new("state-function", "greedy disagreements", disagree as f64, Relation::Equal, 0.0, 0.0),
    ])
}

fn surrogate_equivalence(n: u64) -> Result<Vec<Check>> {
    let mut worst = 0.0f64;
    for k in 0..n {
        let inst = instance(40_000, k, 1.0)?;
        let surrogate = build_surrogate_mdp(&inst.mdp, &inst.spec)?;
        let (nn, m) = (inst.mdp.n_states(), inst.mdp.n_actions());
        let actions = (0..nn).map(|s| (s + k as usize) % m).collect();
        let pi = Policy::deterministic(actions, m)?;
        let on_surrogate = policy_evaluation(&surrogate, &pi, DP_TOL)?;
        let mixed = evaluate_mixture(&inst.mdp, &pi, &inst.spec, inst.spec.alpha(), DP_TOL)?;
        worst = worst.max(on_surrogate.dist(&mixed));
    }
    Ok(vec![Check::new(
        "surrogate-equivalence",
        "max |v_surrogate − v_mixture|",
        worst,
        Relation::AtMost,
        0.0,
        1e-9,
    )])
}

fn improvement(n: u64) -> Result<Vec<Check>> {
    let mut worst = 0.0f64;
    for k in 0..n {
        let inst = instance(50_000, k, 1.0)?;
        let alpha = inst.spec.alpha()[0];
        let rep = improvement_check(&inst.mdp, &inst.spec, &[0.0, 0.5 * alpha], 1e-11)?;
        worst = worst.max(rep.worst_violation);
    }
    Ok(vec![Check::new(
        "improvement",
        "max ordering violation pi0 ≤ alpha ≤ beta",
        worst,
        Relation::AtMost,
        0.0,
        1e-9,
    )])
}

fn bimodal(points: usize) -> Result<GridMdp> {
    Ok(bimodal_reward_mdp(ActionGrid::new(-6.0, 6.0, points)?, 0.99)?)
}

/// `½(2π(½+σ²))^{−1/2}(e^{−(μ−1)²/(1+2σ²)} + e^{−(μ+1)²/(1+2σ²)})`
fn bimodal_smoothed(mu: f64, sigma: f64) -> f64 {
    let var = 0.5 + sigma * sigma;
    let c = 0.5 / (2.0 * std::f64::consts::PI * var).sqrt();
    c * ((-(mu - 1.0).powi(2) / (2.0 * var)).exp() + (-(mu + 1.0).powi(2) / (2.0 * var)).exp())
}

fn separation() -> Result<Vec<Check>> {
    const S: &str = "separation";
    let gmdp = bimodal(241)?;
    let spec = SigmaSpec::new(1.0)?;
    let sol = solve_sigma_optimal(&gmdp, &spec, DP_TOL)?;
    let mu = sol.mu_sigma_star[0];
    let zero = gmdp.grid().nearest(0.0);
    let r_sigma = build_sigma_surrogate(&gmdp, &spec)?.reward(0, mu);
    let r_det = gmdp.mdp().reward(0, zero);
    Ok(vec![
        Check::new(S, "mu*_sigma", gmdp.grid().point(mu), Relation::Equal, 0.0, 1e-12),
        Check::new(S, "smoothed reward at mu*", r_sigma, Relation::AtLeast, 0.23, 2e-3),
        Check::new(S, "smoothed reward closed form", r_sigma, Relation::Equal, bimodal_smoothed(0.0, 1.0), 2e-3),
        Check::new(S, "raw reward at 0", r_det, Relation::AtMost, 0.21, 2e-3),
    ])
}

fn sigma_instances(n: u64) -> Result<Vec<GridMdp>> {
    let mut out = vec![bimodal(241)?];
    for seed in 0..n {
        out.push(random_grid_mdp(seed, 3, ActionGrid::new(-3.0, 3.0, 121)?, 0.9)?);
    }
    Ok(out)
}

fn sigma_bound(n: u64) -> Result<Vec<Check>> {
    let mut worst = f64::NEG_INFINITY;
    for gmdp in sigma_instances(n)? {
        let (v_star, _) = value_iteration(gmdp.mdp(), DP_TOL)?;
        let lips = gaussian_lipschitz(&gmdp);
        for sigma in [0.25, 0.5, 1.0] {
            for renormalize in [true, false] {
                let spec = SigmaSpec::with_options(sigma, 6.0, renormalize)?;
                let sol = solve_sigma_optimal(&gmdp, &spec, DP_TOL)?;
                let bound = sigma_gap_bound(lips.total, &[sigma], gmdp.mdp().gamma(), 0.0, 0.0)?;
                worst = worst.max(v_star.dist(&sol.v_sigma_star) / bound.bias_abs_moment);
            }
        }
    }
    Ok(vec![Check::new("sigma-bound", "max bias / bound", worst, Relation::AtMost, 1.0, 0.0)])
}

fn sigma_equivalence(n: u64) -> Result<Vec<Check>> {
    let mut worst = 0.0f64;
    for gmdp in sigma_instances(n.min(5))? {
        for sigma in [0.25, 1.0] {
            let spec = SigmaSpec::new(sigma)?;
            let sol = solve_sigma_optimal(&gmdp, &spec, DP_TOL)?;
            let direct = evaluate_gaussian_policy(&gmdp, &sol.mu_sigma_star, &spec, sigma, DP_TOL)?;
            worst = worst.max(direct.dist(&sol.v_sigma_star));
        }
    }
    Ok(vec![Check::new(
        "sigma-equivalence",
        "max |v of Gaussian policy − v*_sigma|",
        worst,
        Relation::AtMost,
        0.0,
        1e-8,
    )])
}

fn gradient() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut devs = Vec::new();
    for points in [121, 241, 481] {
        let gmdp = bimodal(points)?;
        let spec = SigmaSpec::with_options(1.0, 6.0, false)?;
        let sol = solve_sigma_optimal(&gmdp, &spec, DP_TOL)?;
        let rep = gradient_equivalence_check(&gmdp, &sol, &spec, 2.0 * gmdp.grid().spacing())?;
        devs.push(rep.max_deviation);
    }
    out.push(Check::new("gradient", "max deviation, 241 points", devs[1], Relation::AtMost, 5e-3, 0.0));
    out.push(Check::new("gradient", "481-point deviation vs 121-point", devs[2], Relation::AtMost, devs[0], 0.0));
    Ok(out)
}

/// `max_π v^π` over all deterministic policies, state by state.
fn enumerate_optimal(mdp: &TabularMdp) -> Result<Vec<f64>> {
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let mut best = vec![f64::NEG_INFINITY; n];
    let mut actions = vec![0usize; n];
    loop {
        let v = policy_evaluation(mdp, &Policy::deterministic(actions.clone(), m)?, DP_TOL)?;
        for (b, x) in best.iter_mut().zip(v.as_slice()) {
            *b = b.max(*x);
        }
        // Odometer increment over action tuples.
        let Some(i) = actions.iter().position(|&a| a + 1 < m) else { break };
        actions[i] += 1;
        actions[..i].iter_mut().for_each(|a| *a = 0);
    }
    Ok(best)
}

fn enumeration(n: u64) -> Result<Vec<Check>> {
    let tol = 1e-10;
    let mut worst = 0.0f64;
    for k in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(30_000 + k);
        let ns = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=3);
        let g = rng.gen_range(0.0..0.99);
        let mdp = random_mdp(k, ns, m, g, 0.4)?;
        let (v, _) = value_iteration(&mdp, tol)?;
        let best = enumerate_optimal(&mdp)?;
        for (a, b) in v.as_slice().iter().zip(&best) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(vec![Check::new("enumeration", "max |v_VI − v_enum|", worst, Relation::AtMost, 0.0, 2.0 * tol)])
}
