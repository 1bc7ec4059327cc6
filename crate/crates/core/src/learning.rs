//! Sample-based learners for the α-greedy criterion.
//!
//! Every learner acts greedily with respect to its `q`, swaps in a `π₀`
//! action with probability `α(s)`, and records both the chosen and the
//! executed action. Step sizes are keyed to per-pair visit counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alpha::{evaluate_mixture, solve_alpha_optimal, AlphaSpec};
use crate::error::{param, Error, Result};
use crate::mdp::{q_value_iteration, QFn, TabularMdp, ValueFn};

/// Oracle tolerance for the DP solutions traces are measured against.
const ORACLE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EtaSchedule {
    /// `η = scale / (1 + n)^exponent` after `n` prior visits.
    Polynomial { exponent: f64 },
    Constant,
}

/// JSON form: `{"steps", "eta", "eta_exponent", "seed", "q0", ...}`. A
/// missing or null `eta_exponent` selects a constant step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LearningConfigFile", into = "LearningConfigFile")]
pub struct LearningConfig {
    pub total_steps: u64,
    pub eta_schedule: EtaSchedule,
    pub eta_scale: f64,
    pub seed: u64,
    /// Steps per episode; `None` runs one unbroken trajectory.
    pub episode_horizon: Option<u64>,
    pub initial_q: f64,
    /// Episode start state; `None` restarts uniformly over states.
    pub start_state: Option<usize>,
    /// Trace interval; `None` records only the first and last step.
    pub checkpoint_every: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct LearningConfigFile {
    steps: u64,
    #[serde(default = "default_eta")]
    eta: f64,
    #[serde(default)]
    eta_exponent: Option<f64>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    q0: f64,
    #[serde(default)]
    horizon: Option<u64>,
    #[serde(default)]
    start_state: Option<usize>,
    #[serde(default)]
    checkpoint_every: Option<u64>,
}

fn default_eta() -> f64 {
    1.0
}

impl TryFrom<LearningConfigFile> for LearningConfig {
    type Error = Error;
    fn try_from(f: LearningConfigFile) -> Result<Self> {
        let config = LearningConfig {
            total_steps: f.steps,
            eta_schedule: match f.eta_exponent {
                Some(exponent) => EtaSchedule::Polynomial { exponent },
                None => EtaSchedule::Constant,
            },
            eta_scale: f.eta,
            seed: f.seed,
            episode_horizon: f.horizon,
            initial_q: f.q0,
            start_state: f.start_state,
            checkpoint_every: f.checkpoint_every,
        };
        config.validate()?;
        Ok(config)
    }
}

impl From<LearningConfig> for LearningConfigFile {
    fn from(c: LearningConfig) -> Self {
        LearningConfigFile {
            steps: c.total_steps,
            eta: c.eta_scale,
            eta_exponent: match c.eta_schedule {
                EtaSchedule::Polynomial { exponent } => Some(exponent),
                EtaSchedule::Constant => None,
            },
            seed: c.seed,
            q0: c.initial_q,
            horizon: c.episode_horizon,
            start_state: c.start_state,
            checkpoint_every: c.checkpoint_every,
        }
    }
}

impl LearningConfig {
    /// Polynomial schedule with unit scale, zero initial q and no episodes.
    pub fn polynomial(total_steps: u64, exponent: f64, seed: u64) -> Result<Self> {
        let config = Self {
            total_steps,
            eta_schedule: EtaSchedule::Polynomial { exponent },
            eta_scale: 1.0,
            seed,
            episode_horizon: None,
            initial_q: 0.0,
            start_state: None,
            checkpoint_every: None,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if let EtaSchedule::Polynomial { exponent } = self.eta_schedule {
            if !(exponent > 0.5 && exponent <= 1.0) {
                return param(format!("eta exponent {exponent} outside (0.5, 1]"));
            }
        }
        if !(self.eta_scale > 0.0 && self.eta_scale.is_finite()) {
            return param(format!("eta scale {} must be positive", self.eta_scale));
        }
        if !self.initial_q.is_finite() {
            return param("initial q must be finite");
        }
        if self.episode_horizon == Some(0) || self.checkpoint_every == Some(0) {
            return param("horizon and checkpoint interval must be positive");
        }
        Ok(())
    }

    /// Step size after `visits` prior updates of the same pair.
    #[inline]
    pub fn eta(&self, visits: u64) -> f64 {
        match self.eta_schedule {
            EtaSchedule::Polynomial { exponent } => {
                self.eta_scale / ((1 + visits) as f64).powf(exponent)
            }
            EtaSchedule::Constant => self.eta_scale,
        }
    }
}

/// One transition `(s, a_chosen, a_env, r, s')` with the exploration coin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSample {
    pub s: usize,
    pub a_chosen: usize,
    pub a_env: usize,
    /// `true` when the greedy action was executed.
    pub x: bool,
    pub r: f64,
    pub s_next: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub step: u64,
    /// Mean reward per step since the previous trace point.
    pub train_return: f64,
    pub q_error: f64,
    pub qalpha_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub q: QFn,
    pub q_alpha: Option<QFn>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnResult {
    pub q: QFn,
    pub q_alpha: Option<QFn>,
    pub trace: Vec<TracePoint>,
    /// Tables at every trace point, in step order.
    pub snapshots: Vec<Snapshot>,
}

impl LearnResult {
    /// The table whose greedy policy the algorithm returns.
    pub fn policy_q(&self) -> &QFn {
        self.q_alpha.as_ref().unwrap_or(&self.q)
    }
}

/// Renders a trace as CSV with columns `step,train_return,q_error,qalpha_error`.
pub fn trace_csv(trace: &[TracePoint]) -> String {
    let mut out = String::from("step,train_return,q_error,qalpha_error\n");
    for p in trace {
        let qa = p.qalpha_error.map(|x| x.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", p.step, p.train_return, p.q_error, qa));
    }
    out
}

fn sample_from<R: Rng + ?Sized>(rng: &mut R, n: usize, prob: impl Fn(usize) -> f64) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for i in 0..n {
        let p = prob(i);
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Greedy choice, exploration coin, and one environment transition.
pub fn sample_step<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    rng: &mut R,
    s: usize,
    q_for_greedy: &QFn,
    spec: &AlphaSpec,
) -> StepSample {
    let m = mdp.n_actions();
    let a_chosen = q_for_greedy.greedy_action(s);
    let x = rng.gen::<f64>() >= spec.alpha_at(s);
    let a_env = if x {
        a_chosen
    } else {
        sample_from(rng, m, |a| spec.pi0().prob(s, a))
    };
    let row = mdp.transition_row(s, a_env);
    let s_next = sample_from(rng, row.len(), |j| row[j]);
    StepSample { s, a_chosen, a_env, x, r: mdp.reward(s, a_env), s_next }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Variant {
    Expected,
    Surrogate,
    Baseline,
}

/// Expected α-Q-learning: targets `r + γ((1−α(s'))·max q(s') + α(s')·Σπ₀ q(s'))` on
/// `(s, a_env)`.
pub fn expected_alpha_q_learning(
    mdp: &TabularMdp,
    spec: &AlphaSpec,
    config: &LearningConfig,
) -> Result<LearnResult> {
    run(mdp, spec, config, Variant::Expected)
}

/// Surrogate α-Q-learning: the `q` arm of [`expected_alpha_q_learning`] plus a
/// surrogate table `q_α` that is updated on every action each step.
pub fn surrogate_alpha_q_learning(
    mdp: &TabularMdp,
    spec: &AlphaSpec,
    config: &LearningConfig,
) -> Result<LearnResult> {
    run(mdp, spec, config, Variant::Surrogate)
}

/// Watkins Q-learning under the same α-greedy behaviour.
pub fn baseline_q_learning(
    mdp: &TabularMdp,
    spec: &AlphaSpec,
    config: &LearningConfig,
) -> Result<LearnResult> {
    run(mdp, spec, config, Variant::Baseline)
}

struct Oracles {
    q: QFn,
    q_alpha: Option<QFn>,
}

fn oracles(mdp: &TabularMdp, spec: &AlphaSpec, variant: Variant) -> Result<Oracles> {
    Ok(match variant {
        Variant::Baseline => Oracles { q: q_value_iteration(mdp, ORACLE_TOL)?, q_alpha: None },
        Variant::Expected | Variant::Surrogate => {
            let sol = solve_alpha_optimal(mdp, spec, ORACLE_TOL)?;
            Oracles {
                q: sol.q_mixture,
                q_alpha: (variant == Variant::Surrogate).then_some(sol.q_alpha_star),
            }
        }
    })
}

fn run(
    mdp: &TabularMdp,
    spec: &AlphaSpec,
    config: &LearningConfig,
    variant: Variant,
) -> Result<LearnResult> {
    config.validate()?;
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    if spec.alpha().len() != n || spec.pi0().n_actions() != m {
        return Err(Error::Dimension("alpha spec does not match MDP".into()));
    }
    if let Some(s0) = config.start_state {
        if s0 >= n {
            return param(format!("start state {s0} out of range"));
        }
    }
    let oracle = oracles(mdp, spec, variant)?;
    let gamma = mdp.gamma();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut q = QFn::constant(n, m, config.initial_q);
    let mut q_alpha = (variant == Variant::Surrogate).then(|| q.clone());
    let mut visits = vec![0u64; n * m];
    let mut visits_alpha = vec![0u64; n * m];

    let mut trace = Vec::new();
    let mut snapshots = Vec::new();
    let mut window_reward = 0.0;
    let mut window_len = 0u64;
    let mut record = |step: u64, q: &QFn, qa: &Option<QFn>, wr: &mut f64, wl: &mut u64| {
        trace.push(TracePoint {
            step,
            train_return: if *wl > 0 { *wr / *wl as f64 } else { 0.0 },
            q_error: q.dist(&oracle.q),
            qalpha_error: qa.as_ref().zip(oracle.q_alpha.as_ref()).map(|(a, b)| a.dist(b)),
        });
        snapshots.push(Snapshot { step, q: q.clone(), q_alpha: qa.clone() });
        *wr = 0.0;
        *wl = 0;
    };
    record(0, &q, &q_alpha, &mut window_reward, &mut window_len);

    let restart = |rng: &mut ChaCha8Rng| config.start_state.unwrap_or_else(|| rng.gen_range(0..n));
    let mut s = restart(&mut rng);
    let mut t_in_episode = 0u64;
    let mut next_alpha_target = vec![0.0; m];
    for step in 1..=config.total_steps {
        let smp = sample_step(mdp, &mut rng, s, &q, spec);
        let sp = smp.s_next;
        let w = spec.alpha_at(sp);

        let pair = s * m + smp.a_env;
        let eta = config.eta(visits[pair]);
        visits[pair] += 1;

        if let Some(qa) = q_alpha.as_mut() {
            let own = smp.r + gamma * qa.max_value(sp);
            for (b, target) in next_alpha_target.iter_mut().enumerate() {
                *target = if b == smp.a_chosen || !smp.x { own } else { q.get(s, b) };
            }
            // Keyed to q_α's own per-pair counter so the step never depends
            // on which action was executed.
            for (b, &target) in next_alpha_target.iter().enumerate() {
                let eta_b = config.eta(visits_alpha[s * m + b]);
                visits_alpha[s * m + b] += 1;
                let old = qa.get(s, b);
                qa.set(s, b, old + eta_b * (target - old));
            }
        }

        let y = match variant {
            Variant::Baseline => smp.r + gamma * q.max_value(sp),
            Variant::Expected | Variant::Surrogate => {
                let mean0: f64 = (0..m).map(|b| spec.pi0().prob(sp, b) * q.get(sp, b)).sum();
                smp.r + gamma * ((1.0 - w) * q.max_value(sp) + w * mean0)
            }
        };
        let old = q.get(s, smp.a_env);
        q.set(s, smp.a_env, old + eta * (y - old));

        window_reward += smp.r;
        window_len += 1;
        t_in_episode += 1;
        s = sp;
        if config.episode_horizon.is_some_and(|h| t_in_episode >= h) {
            s = restart(&mut rng);
            t_in_episode = 0;
        }
        let due = config.checkpoint_every.is_some_and(|k| step % k == 0);
        if due || step == config.total_steps {
            record(step, &q, &q_alpha, &mut window_reward, &mut window_len);
        }
    }
    Ok(LearnResult { q, q_alpha, trace, snapshots })
}

/// Exact values of the greedy policy of `q` mixed with `π₀` at each β.
pub fn evaluate_policies(
    mdp: &TabularMdp,
    q: &QFn,
    spec: &AlphaSpec,
    betas: &[f64],
    tol: f64,
) -> Result<Vec<ValueFn>> {
    let pi = q.greedy_policy();
    betas
        .iter()
        .map(|&b| evaluate_mixture(mdp, &pi, spec, &vec![b; mdp.n_states()], tol))
        .collect()
}

/// Exact value of the greedy policy of `q` mixed with `π₀` at the spec's own
/// (possibly state-dependent) α.
pub fn evaluate_train_policy(mdp: &TabularMdp, q: &QFn, spec: &AlphaSpec, tol: f64) -> Result<ValueFn> {
    evaluate_mixture(mdp, &q.greedy_policy(), spec, spec.alpha(), tol)
}
