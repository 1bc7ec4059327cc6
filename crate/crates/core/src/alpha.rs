//! The α-greedy exploration-conscious criterion.
//!
//! A mixture policy acts with a deterministic policy w.p. `1 − α(s)` and with
//! a fixed base policy `π₀` w.p. `α(s)`. Folding the base-policy step into the
//! model gives a surrogate MDP `M_α` whose ordinary optimal policy is the
//! α-optimal one, so everything here reduces to DP on `M_α`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::mdp::{
    bellman_fixed, greedy_policy, iterate_to_fixed_point, mixture_policy, policy_evaluation,
    q_from_v, value_iteration, Policy, QFn, TabularMdp, ValueFn,
};

/// Base policy `π₀` and per-state mixing weight `α(s) ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSpec {
    pi0: Policy,
    alpha: Vec<f64>,
}

impl AlphaSpec {
    pub fn new(pi0: Policy, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != pi0.n_states() {
            return Err(Error::Dimension(format!(
                "alpha has {} entries, pi0 covers {} states",
                alpha.len(),
                pi0.n_states()
            )));
        }
        if let Some(a) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return param(format!("alpha={a} outside [0,1]"));
        }
        // Re-validates stochastic rows of user-supplied base policies.
        let pi0 = match pi0 {
            Policy::Stochastic { n_actions, probs } => {
                Policy::stochastic(probs, alpha.len(), n_actions)?
            }
            det => det,
        };
        Ok(Self { pi0, alpha })
    }

    pub fn constant(alpha: f64, pi0: Policy) -> Result<Self> {
        let n = pi0.n_states();
        Self::new(pi0, vec![alpha; n])
    }

    pub fn pi0(&self) -> &Policy {
        &self.pi0
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    #[inline]
    pub fn alpha_at(&self, s: usize) -> f64 {
        self.alpha[s]
    }

    /// The common value when α does not depend on the state.
    pub fn constant_alpha(&self) -> Option<f64> {
        let a0 = self.alpha[0];
        self.alpha.iter().all(|&a| a == a0).then_some(a0)
    }

    pub fn max_alpha(&self) -> f64 {
        self.alpha.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_alpha(&self) -> f64 {
        self.alpha.iter().copied().fold(1.0, f64::min)
    }

    pub fn with_alpha(&self, alpha: Vec<f64>) -> Result<Self> {
        Self::new(self.pi0.clone(), alpha)
    }

    fn check(&self, mdp: &TabularMdp) -> Result<()> {
        if self.alpha.len() != mdp.n_states() || self.pi0.n_actions() != mdp.n_actions() {
            return Err(Error::Dimension("alpha spec does not match MDP".into()));
        }
        Ok(())
    }
}

/// JSON form: `{ "alpha": x | [x..], "pi0": "uniform" | "action:<k>" | [[..]] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSpecFile {
    pub alpha: AlphaValue,
    #[serde(default = "default_pi0")]
    pub pi0: BasePolicy,
}

fn default_pi0() -> BasePolicy {
    BasePolicy::Named("uniform".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaValue {
    Constant(f64),
    PerState(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BasePolicy {
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

impl BasePolicy {
    pub fn resolve(&self, n_states: usize, n_actions: usize) -> Result<Policy> {
        match self {
            BasePolicy::Named(name) if name == "uniform" => Ok(Policy::uniform(n_states, n_actions)),
            BasePolicy::Named(name) => match name.strip_prefix("action:") {
                Some(k) => {
                    let k: usize = k
                        .parse()
                        .map_err(|_| Error::Parameter(format!("bad base policy {name:?}")))?;
                    Policy::constant_action(k, n_states, n_actions)
                }
                None => param(format!("unknown base policy {name:?}")),
            },
            BasePolicy::Matrix(rows) => {
                if rows.len() != n_states || rows.iter().any(|r| r.len() != n_actions) {
                    return Err(Error::Dimension(format!("pi0 must be {n_states}x{n_actions}")));
                }
                Policy::stochastic(rows.concat(), n_states, n_actions)
            }
        }
    }
}

impl AlphaSpecFile {
    pub fn resolve(&self, n_states: usize, n_actions: usize) -> Result<AlphaSpec> {
        let pi0 = self.pi0.resolve(n_states, n_actions)?;
        let alpha = match &self.alpha {
            AlphaValue::Constant(a) => vec![*a; n_states],
            AlphaValue::PerState(v) => v.clone(),
        };
        AlphaSpec::new(pi0, alpha)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AlphaSolution {
    pub v_alpha_star: ValueFn,
    pub pi_alpha_star: Policy,
    /// Optimal q of the surrogate MDP (indexed by the chosen action).
    pub q_alpha_star: QFn,
    /// q of the α-optimal mixture on the original MDP (indexed by the
    /// executed action).
    pub q_mixture: QFn,
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    pub per_state: Vec<f64>,
    pub max: f64,
}

/// `r_α(s,a) = (1−α(s)) r(s,a) + α(s) r^{π₀}(s)` and the matching dynamics.
pub fn build_surrogate_mdp(mdp: &TabularMdp, spec: &AlphaSpec) -> Result<TabularMdp> {
    spec.check(mdp)?;
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let r0 = mdp.policy_reward(&spec.pi0)?;
    let p0 = mdp.policy_transition(&spec.pi0)?;
    let mut reward = Vec::with_capacity(n * m);
    let mut transition = Vec::with_capacity(n * m * n);
    for s in 0..n {
        let w = spec.alpha[s];
        for a in 0..m {
            reward.push((1.0 - w) * mdp.reward(s, a) + w * r0[s]);
            transition.extend(
                mdp.transition_row(s, a)
                    .iter()
                    .zip(&p0[s * n..(s + 1) * n])
                    .map(|(p, q)| (1.0 - w) * p + w * q),
            );
        }
    }
    TabularMdp::new(n, m, mdp.gamma(), mdp.r_max(), reward, transition)
        .map_err(|e| Error::Solver(format!("surrogate construction broke an invariant: {e}")))
}

/// `T_α v = (1−α) T v + α T^{π₀} v`, evaluated on the original MDP.
pub fn alpha_bellman_optimal(mdp: &TabularMdp, spec: &AlphaSpec, v: &ValueFn) -> Result<ValueFn> {
    spec.check(mdp)?;
    let tv = crate::mdp::bellman_optimal(mdp, v)?;
    let t0 = bellman_fixed(mdp, &spec.pi0, v)?;
    Ok(ValueFn::new(
        (0..mdp.n_states())
            .map(|s| (1.0 - spec.alpha[s]) * tv[s] + spec.alpha[s] * t0[s])
            .collect(),
    ))
}

/// Solves the α-optimal criterion by iterating `T_α` to `tol`.
pub fn solve_alpha_optimal(mdp: &TabularMdp, spec: &AlphaSpec, tol: f64) -> Result<AlphaSolution> {
    if !(tol > 0.0) {
        return param(format!("tol={tol} must be positive"));
    }
    spec.check(mdp)?;
    let v = iterate_to_fixed_point(mdp.gamma(), tol, vec![0.0; mdp.n_states()], |v| {
        alpha_bellman_optimal(mdp, spec, &ValueFn::new(v.to_vec()))
            .expect("shapes checked above")
            .into_vec()
    })?;
    let v = ValueFn::new(v);
    let surrogate = build_surrogate_mdp(mdp, spec)?;
    Ok(AlphaSolution {
        pi_alpha_star: greedy_policy(mdp, &v)?,
        q_alpha_star: q_from_v(&surrogate, &v)?,
        q_mixture: q_from_v(mdp, &v)?,
        v_alpha_star: v,
    })
}

/// Exact value on the original MDP of `π^β(π, π₀)`.
pub fn evaluate_mixture(
    mdp: &TabularMdp,
    pi: &Policy,
    spec: &AlphaSpec,
    beta: &[f64],
    tol: f64,
) -> Result<ValueFn> {
    spec.check(mdp)?;
    let mix = mixture_policy(pi, &spec.pi0, beta)?;
    policy_evaluation(mdp, &mix, tol)
}

#[derive(Debug, Clone, Serialize)]
pub struct BetaValues {
    pub beta: f64,
    pub v_beta: ValueFn,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImprovementReport {
    pub alpha: f64,
    pub v_pi0: ValueFn,
    pub v_alpha: ValueFn,
    pub per_beta: Vec<BetaValues>,
    /// Largest amount by which any ordering was violated (0 when none).
    pub worst_violation: f64,
    pub slack: f64,
}

impl ImprovementReport {
    pub fn holds(&self) -> bool {
        self.worst_violation <= self.slack
    }

    /// Whether all compared values coincide within the slack.
    pub fn all_equal(&self) -> bool {
        self.per_beta.iter().all(|b| {
            b.v_beta.dist(&self.v_pi0) <= self.slack && self.v_alpha.dist(&self.v_pi0) <= self.slack
        })
    }
}

/// Checks `v^{π₀} ≤ v^{π^α(π*_α,π₀)} ≤ v^{π^β(π*_α,π₀)}` for every β ≤ α,
/// component-wise with slack `2·tol`. Only defined for constant α.
pub fn improvement_check(
    mdp: &TabularMdp,
    spec: &AlphaSpec,
    betas: &[f64],
    tol: f64,
) -> Result<ImprovementReport> {
    let alpha = spec
        .constant_alpha()
        .ok_or_else(|| Error::Parameter("improvement check needs a constant alpha".into()))?;
    if let Some(b) = betas.iter().find(|&&b| !(0.0..=alpha).contains(&b)) {
        return param(format!("beta={b} outside [0, alpha={alpha}]"));
    }
    let sol = solve_alpha_optimal(mdp, spec, tol)?;
    let n = mdp.n_states();
    let v_pi0 = policy_evaluation(mdp, &spec.pi0, tol)?;
    let v_alpha = evaluate_mixture(mdp, &sol.pi_alpha_star, spec, &vec![alpha; n], tol)?;
    let mut worst = lower_violation(&v_pi0, &v_alpha);
    let mut per_beta = Vec::with_capacity(betas.len());
    for &beta in betas {
        let v_beta = evaluate_mixture(mdp, &sol.pi_alpha_star, spec, &vec![beta; n], tol)?;
        worst = worst.max(lower_violation(&v_alpha, &v_beta));
        per_beta.push(BetaValues { beta, v_beta });
    }
    Ok(ImprovementReport {
        alpha,
        v_pi0,
        v_alpha,
        per_beta,
        worst_violation: worst,
        slack: 2.0 * tol,
    })
}

/// `max_s (lo(s) − hi(s))⁺`.
fn lower_violation(lo: &ValueFn, hi: &ValueFn) -> f64 {
    lo.as_slice()
        .iter()
        .zip(hi.as_slice())
        .fold(0.0, |m, (l, h)| m.max(l - h))
}

/// `L(s) = v*(s) − (T^{π₀} v*)(s)`, the one-step cost of deferring to `π₀`.
pub fn lipschitz_constant(mdp: &TabularMdp, pi0: &Policy, tol: f64) -> Result<LipschitzReport> {
    let (v_star, _) = value_iteration(mdp, tol)?;
    let t0 = bellman_fixed(mdp, pi0, &v_star)?;
    let mut per_state = Vec::with_capacity(mdp.n_states());
    for s in 0..mdp.n_states() {
        let l = v_star[s] - t0[s];
        if l < -10.0 * tol {
            return Err(Error::Solver(format!(
                "negative Lipschitz constant {l} at state {s}"
            )));
        }
        per_state.push(l.max(0.0));
    }
    let max = per_state.iter().copied().fold(0.0, f64::max);
    Ok(LipschitzReport { per_state, max })
}

/// `αL/(1−γ) + 2(1−α)γδ/(1−γ)`.
pub fn alpha_gap_bound(lipschitz: f64, alpha: f64, gamma: f64, delta: f64) -> Result<f64> {
    let (bias, sens) = alpha_gap_terms(lipschitz, alpha, gamma, delta)?;
    Ok(bias + sens)
}

/// The bias and sensitivity terms of [`alpha_gap_bound`] separately.
pub fn alpha_gap_terms(lipschitz: f64, alpha: f64, gamma: f64, delta: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&gamma) {
        return param(format!("gamma={gamma} outside [0,1)"));
    }
    if !(0.0..=1.0).contains(&alpha) || delta < 0.0 || lipschitz < 0.0 {
        return param("need alpha in [0,1], delta >= 0, L >= 0");
    }
    let h = 1.0 / (1.0 - gamma);
    Ok((alpha * lipschitz * h, 2.0 * (1.0 - alpha) * gamma * delta * h))
}

/// Bias term for state-dependent α: `max_s α(s)L(s) / (1−γ)`.
pub fn state_dependent_bias(alpha: &[f64], lips: &LipschitzReport, gamma: f64) -> Result<f64> {
    if alpha.len() != lips.per_state.len() {
        return Err(Error::Dimension("alpha and L differ in length".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return param(format!("gamma={gamma} outside [0,1)"));
    }
    let b = alpha
        .iter()
        .zip(&lips.per_state)
        .map(|(a, l)| a * l)
        .fold(0.0, f64::max);
    Ok(b / (1.0 - gamma))
}

/// `γ δ ‖π* − π̂‖_TV / (1−γ)` with `δ = ‖v* − v̂‖∞`.
pub fn generalized_sensitivity_bound(
    mdp: &TabularMdp,
    v_star: &ValueFn,
    v_hat: &ValueFn,
    pi_star: &Policy,
    pi_hat: &Policy,
) -> Result<f64> {
    if v_star.len() != v_hat.len() {
        return Err(Error::Dimension("value functions differ in length".into()));
    }
    let delta = v_star.dist(v_hat);
    let tv = pi_star.total_variation(pi_hat)?;
    let g = mdp.gamma();
    Ok(g * delta * tv / (1.0 - g))
}

/// How the approximate α-optimal value is produced in [`empirical_bound_check`].
#[derive(Debug, Clone)]
pub enum NoiseModel {
    /// Independent `U[−δ, δ]` noise per state, one draw per seed.
    Uniform { delta: f64 },
    /// A fixed estimate `v̂`; δ is its measured distance to `v*_α`.
    Fixed { v_hat: ValueFn },
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundTrial {
    pub seed: u64,
    pub delta: f64,
    /// `‖v* − v*_α‖∞`
    pub bias_gap: f64,
    /// `‖v*_α − v^{π^α(π̂,π₀)}‖∞`
    pub sensitivity_gap: f64,
    /// `‖v* − v^{π^α(π̂,π₀)}‖∞`
    pub total_gap: f64,
    pub bias_bound: f64,
    pub sensitivity_bound: f64,
}

impl BoundTrial {
    pub fn total_bound(&self) -> f64 {
        self.bias_bound + self.sensitivity_bound
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheckReport {
    pub lipschitz: LipschitzReport,
    pub trials: Vec<BoundTrial>,
}

/// Perturbs `v*_α`, acts greedily on the perturbed value, evaluates the
/// resulting mixture exactly and checks each trial against the bias and
/// sensitivity terms. Errors on the first trial that exceeds a bound by more
/// than `tol`.
pub fn empirical_bound_check(
    mdp: &TabularMdp,
    spec: &AlphaSpec,
    noise: &NoiseModel,
    seeds: u64,
    tol: f64,
) -> Result<BoundCheckReport> {
    if let NoiseModel::Uniform { delta } = noise {
        if !(*delta >= 0.0) {
            return param(format!("noise delta={delta} must be non-negative"));
        }
    }
    // Inner solves run well below the reporting tolerance.
    let inner = (tol * 1e-2).max(1e-13);
    let g = mdp.gamma();
    let lips = lipschitz_constant(mdp, &spec.pi0, inner)?;
    let (v_star, _) = value_iteration(mdp, inner)?;
    let sol = solve_alpha_optimal(mdp, spec, inner)?;
    let bias_gap = v_star.dist(&sol.v_alpha_star);
    let bias_bound = state_dependent_bias(&spec.alpha, &lips, g)?;
    let runs = match noise {
        NoiseModel::Uniform { .. } => seeds.max(1),
        NoiseModel::Fixed { .. } => 1,
    };
    let mut trials = Vec::with_capacity(runs as usize);
    for seed in 0..runs {
        let v_hat = match noise {
            NoiseModel::Uniform { delta } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                sol.v_alpha_star.map(|x| {
                    let u: f64 = rng.gen_range(-1.0..=1.0);
                    x + delta * u
                })
            }
            NoiseModel::Fixed { v_hat } => v_hat.clone(),
        };
        let delta = sol.v_alpha_star.dist(&v_hat);
        let pi_hat = greedy_policy(mdp, &v_hat)?;
        let v_mix = evaluate_mixture(mdp, &pi_hat, spec, &spec.alpha, inner)?;
        let trial = BoundTrial {
            seed,
            delta,
            bias_gap,
            sensitivity_gap: sol.v_alpha_star.dist(&v_mix),
            total_gap: v_star.dist(&v_mix),
            bias_bound,
            sensitivity_bound: 2.0 * (1.0 - spec.min_alpha()) * g * delta / (1.0 - g),
        };
        if trial.bias_gap > trial.bias_bound + tol
            || trial.sensitivity_gap > trial.sensitivity_bound + tol
            || trial.total_gap > trial.total_bound() + tol
        {
            return Err(Error::BoundViolation(format!("{trial:?}")));
        }
        trials.push(trial);
    }
    Ok(BoundCheckReport {
        lipschitz: lips,
        trials,
    })
}
