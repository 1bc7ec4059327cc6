//! Finite discounted MDPs and the classical Bellman machinery.
//!
//! Storage is dense: rewards are `[s][a]`, transitions `[s][a][s']`, both
//! flattened row-major. All operators are pure functions of their inputs.

use std::ops::Index;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Row sums of transition and policy rows must be within this of 1.
pub const PROB_TOL: f64 = 1e-12;

/// Relative slack under which two action values count as tied.
pub const GREEDY_TIE_TOL: f64 = 1e-12;

const RENORM_SKIP: f64 = 1e-14;
const MAX_SWEEPS: usize = 5_000_000;

/// Validates a probability row in place, renormalizing it when the sum is off
/// by rounding only.
fn check_prob_row(row: &mut [f64]) -> std::result::Result<(), String> {
    let mut sum = 0.0;
    for &p in row.iter() {
        if !p.is_finite() || p < 0.0 {
            return Err(format!("entry {p} is negative or not finite"));
        }
        sum += p;
    }
    let dev = (sum - 1.0).abs();
    if dev > PROB_TOL {
        return Err(format!("row sums to {sum}"));
    }
    if dev > RENORM_SKIP {
        row.iter_mut().for_each(|p| *p /= sum);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    r_max: f64,
    reward: Vec<f64>,
    transition: Vec<f64>,
}

impl TabularMdp {
    /// Builds an MDP from dense row-major arrays, enforcing every invariant.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        r_max: f64,
        mut reward: Vec<f64>,
        mut transition: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return param("n_states and n_actions must be positive");
        }
        if !(0.0..1.0).contains(&gamma) {
            return param(format!("gamma={gamma} outside [0,1)"));
        }
        if !(r_max >= 0.0 && r_max.is_finite()) {
            return param(format!("r_max={r_max} must be finite and non-negative"));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::Dimension(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        let slack = PROB_TOL * r_max.max(1.0);
        for s in 0..n_states {
            for a in 0..n_actions {
                let r = &mut reward[s * n_actions + a];
                if !r.is_finite() || *r < -slack || *r > r_max + slack {
                    return Err(Error::Reward {
                        state: s,
                        action: a,
                        value: *r,
                        r_max,
                    });
                }
                *r = r.clamp(0.0, r_max);
                let start = (s * n_actions + a) * n_states;
                check_prob_row(&mut transition[start..start + n_states]).map_err(|reason| {
                    Error::Transition {
                        state: s,
                        action: a,
                        reason,
                    }
                })?;
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            gamma,
            r_max,
            reward,
            transition,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    /// Same dynamics and rewards under a different discount.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            gamma,
            self.r_max,
            self.reward.clone(),
            self.transition.clone(),
        )
    }

    /// Expected next value `Σ_s' P(s'|s,a) v(s')`.
    #[inline]
    pub fn expected_next(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        self.transition_row(s, a)
            .iter()
            .zip(v)
            .map(|(p, x)| p * x)
            .sum()
    }

    pub(crate) fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(Error::Dimension(format!(
                "policy is {}x{}, MDP is {}x{}",
                policy.n_states(),
                policy.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }

    pub(crate) fn check_values(&self, v: &ValueFn) -> Result<()> {
        if v.len() != self.n_states {
            return Err(Error::Dimension(format!(
                "value has {} entries, MDP has {} states",
                v.len(),
                self.n_states
            )));
        }
        Ok(())
    }

    /// Policy-averaged reward `r^π`.
    pub fn policy_reward(&self, policy: &Policy) -> Result<Vec<f64>> {
        self.check_policy(policy)?;
        Ok((0..self.n_states)
            .map(|s| {
                (0..self.n_actions)
                    .map(|a| policy.prob(s, a) * self.reward(s, a))
                    .sum()
            })
            .collect())
    }

    /// Policy-averaged dynamics `P^π`, dense `[s][s']`.
    pub fn policy_transition(&self, policy: &Policy) -> Result<Vec<f64>> {
        self.check_policy(policy)?;
        let n = self.n_states;
        let mut out = vec![0.0; n * n];
        for s in 0..n {
            for a in 0..self.n_actions {
                let p_a = policy.prob(s, a);
                if p_a == 0.0 {
                    continue;
                }
                let row = self.transition_row(s, a);
                for (o, p) in out[s * n..(s + 1) * n].iter_mut().zip(row) {
                    *o += p_a * p;
                }
            }
        }
        Ok(out)
    }

    pub fn to_file_format(&self) -> MdpFile {
        let reward = (0..self.n_states)
            .map(|s| (0..self.n_actions).map(|a| self.reward(s, a)).collect())
            .collect();
        let mut transition = Vec::new();
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for (sp, &p) in self.transition_row(s, a).iter().enumerate() {
                    if p != 0.0 {
                        transition.push(TransitionRecord { s, a, sp, p });
                    }
                }
            }
        }
        MdpFile {
            n_states: self.n_states,
            n_actions: self.n_actions,
            gamma: self.gamma,
            r_max: self.r_max,
            reward,
            transition,
        }
    }

    pub fn from_file_format(file: &MdpFile) -> Result<Self> {
        let (n, m) = (file.n_states, file.n_actions);
        if file.reward.len() != n || file.reward.iter().any(|row| row.len() != m) {
            return Err(Error::Dimension(format!("reward must be {n}x{m}")));
        }
        let reward = file.reward.iter().flatten().copied().collect();
        let mut transition = vec![0.0; n * m * n];
        for rec in &file.transition {
            if rec.s >= n || rec.a >= m || rec.sp >= n {
                return Err(Error::Dimension(format!(
                    "transition record ({}, {}, {}) out of range",
                    rec.s, rec.a, rec.sp
                )));
            }
            transition[(rec.s * m + rec.a) * n + rec.sp] += rec.p;
        }
        Self::new(n, m, file.gamma, file.r_max, reward, transition)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file_format())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MdpFile = serde_json::from_str(text)?;
        Self::from_file_format(&file)
    }
}

/// On-disk MDP layout. Omitted `(s, a, sp)` triples have probability 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub r_max: f64,
    pub reward: Vec<Vec<f64>>,
    pub transition: Vec<TransitionRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub s: usize,
    pub a: usize,
    pub sp: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Deterministic {
        n_actions: usize,
        actions: Vec<usize>,
    },
    Stochastic {
        n_actions: usize,
        probs: Vec<f64>,
    },
}

impl Policy {
    pub fn deterministic(actions: Vec<usize>, n_actions: usize) -> Result<Self> {
        if let Some(&a) = actions.iter().find(|&&a| a >= n_actions) {
            return Err(Error::Policy(format!("action {a} >= n_actions {n_actions}")));
        }
        Ok(Policy::Deterministic { n_actions, actions })
    }

    /// Row-major `[s][a]` probabilities.
    pub fn stochastic(mut probs: Vec<f64>, n_states: usize, n_actions: usize) -> Result<Self> {
        if probs.len() != n_states * n_actions || n_actions == 0 {
            return Err(Error::Dimension(format!(
                "policy has {} entries, expected {}x{}",
                probs.len(),
                n_states,
                n_actions
            )));
        }
        for (s, row) in probs.chunks_mut(n_actions).enumerate() {
            check_prob_row(row).map_err(|e| Error::Policy(format!("state {s}: {e}")))?;
        }
        Ok(Policy::Stochastic { n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy::Stochastic {
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn constant_action(action: usize, n_states: usize, n_actions: usize) -> Result<Self> {
        Self::deterministic(vec![action; n_states], n_actions)
    }

    pub fn n_states(&self) -> usize {
        match self {
            Policy::Deterministic { actions, .. } => actions.len(),
            Policy::Stochastic { n_actions, probs } => probs.len() / n_actions,
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            Policy::Deterministic { n_actions, .. } | Policy::Stochastic { n_actions, .. } => {
                *n_actions
            }
        }
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        match self {
            Policy::Deterministic { actions, .. } => {
                if actions[s] == a {
                    1.0
                } else {
                    0.0
                }
            }
            Policy::Stochastic { n_actions, probs } => probs[s * n_actions + a],
        }
    }

    pub fn row(&self, s: usize) -> Vec<f64> {
        (0..self.n_actions()).map(|a| self.prob(s, a)).collect()
    }

    /// The action of a deterministic policy, if it is one.
    pub fn action(&self, s: usize) -> Option<usize> {
        match self {
            Policy::Deterministic { actions, .. } => Some(actions[s]),
            Policy::Stochastic { .. } => None,
        }
    }

    pub fn to_stochastic(&self) -> Policy {
        let (n, m) = (self.n_states(), self.n_actions());
        let probs = (0..n)
            .flat_map(|s| (0..m).map(move |a| (s, a)))
            .map(|(s, a)| self.prob(s, a))
            .collect();
        Policy::Stochastic {
            n_actions: m,
            probs,
        }
    }

    /// Max over states of the L1 distance between action distributions
    /// (ranges over `[0, 2]`).
    pub fn total_variation(&self, other: &Policy) -> Result<f64> {
        if self.n_states() != other.n_states() || self.n_actions() != other.n_actions() {
            return Err(Error::Dimension("policies differ in shape".into()));
        }
        Ok((0..self.n_states())
            .map(|s| {
                (0..self.n_actions())
                    .map(|a| (self.prob(s, a) - other.prob(s, a)).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueFn(Vec<f64>);

impl ValueFn {
    pub fn new(values: Vec<f64>) -> Self {
        ValueFn(values)
    }

    pub fn zeros(n: usize) -> Self {
        ValueFn(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn max_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `‖self − other‖∞`.
    pub fn dist(&self, other: &ValueFn) -> f64 {
        max_abs_diff(&self.0, &other.0)
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> ValueFn {
        ValueFn(self.0.iter().map(|&x| f(x)).collect())
    }
}

impl Index<usize> for ValueFn {
    type Output = f64;
    fn index(&self, s: usize) -> &f64 {
        &self.0[s]
    }
}

impl From<Vec<f64>> for ValueFn {
    fn from(v: Vec<f64>) -> Self {
        ValueFn(v)
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QFn {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QFn {
    pub fn new(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "q has {} entries, expected {}x{}",
                values.len(),
                n_states,
                n_actions
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn constant(n_states: usize, n_actions: usize, value: f64) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![value; n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, x: f64) {
        self.values[s * self.n_actions + a] = x;
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max_a q(s, a)` for every state.
    pub fn state_max(&self) -> ValueFn {
        ValueFn((0..self.n_states).map(|s| self.max_value(s)).collect())
    }

    /// `Σ_a π(a|s) q(s, a)` for every state.
    pub fn state_mean(&self, policy: &Policy) -> ValueFn {
        ValueFn(
            (0..self.n_states)
                .map(|s| {
                    self.row(s)
                        .iter()
                        .enumerate()
                        .map(|(a, q)| policy.prob(s, a) * q)
                        .sum()
                })
                .collect(),
        )
    }

    pub fn greedy_action(&self, s: usize) -> usize {
        argmax_lowest(self.row(s))
    }

    pub fn greedy_policy(&self) -> Policy {
        Policy::Deterministic {
            n_actions: self.n_actions,
            actions: (0..self.n_states).map(|s| self.greedy_action(s)).collect(),
        }
    }

    pub fn dist(&self, other: &QFn) -> f64 {
        max_abs_diff(&self.values, &other.values)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.n_actions).map(|r| r.to_vec()).collect()
    }
}

/// Index of the largest entry; entries within [`GREEDY_TIE_TOL`] (relative)
/// of the maximum are ties, resolved toward the lowest index.
pub fn argmax_lowest(row: &[f64]) -> usize {
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = GREEDY_TIE_TOL * best.abs().max(1.0);
    row.iter().position(|&x| x >= best - slack).unwrap_or(0)
}

/// `T^π v = r^π + γ P^π v`.
pub fn bellman_fixed(mdp: &TabularMdp, policy: &Policy, v: &ValueFn) -> Result<ValueFn> {
    mdp.check_policy(policy)?;
    mdp.check_values(v)?;
    let g = mdp.gamma();
    Ok(ValueFn(
        (0..mdp.n_states())
            .map(|s| {
                (0..mdp.n_actions())
                    .map(|a| {
                        let p = policy.prob(s, a);
                        if p == 0.0 {
                            0.0
                        } else {
                            p * (mdp.reward(s, a) + g * mdp.expected_next(s, a, v.as_slice()))
                        }
                    })
                    .sum()
            })
            .collect(),
    ))
}

/// `T v = max_a [r(s,a) + γ Σ P(s'|s,a) v(s')]`.
pub fn bellman_optimal(mdp: &TabularMdp, v: &ValueFn) -> Result<ValueFn> {
    mdp.check_values(v)?;
    Ok(ValueFn(optimal_backup(mdp, v.as_slice())))
}

fn optimal_backup(mdp: &TabularMdp, v: &[f64]) -> Vec<f64> {
    let g = mdp.gamma();
    (0..mdp.n_states())
        .map(|s| {
            (0..mdp.n_actions())
                .map(|a| mdp.reward(s, a) + g * mdp.expected_next(s, a, v))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Deterministic policy attaining `T v`, lowest action index on ties.
pub fn greedy_policy(mdp: &TabularMdp, v: &ValueFn) -> Result<Policy> {
    Ok(q_from_v(mdp, v)?.greedy_policy())
}

/// `q(s,a) = r(s,a) + γ Σ P(s'|s,a) v(s')`.
pub fn q_from_v(mdp: &TabularMdp, v: &ValueFn) -> Result<QFn> {
    mdp.check_values(v)?;
    let g = mdp.gamma();
    let mut values = Vec::with_capacity(mdp.n_states() * mdp.n_actions());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            values.push(mdp.reward(s, a) + g * mdp.expected_next(s, a, v.as_slice()));
        }
    }
    QFn::new(mdp.n_states(), mdp.n_actions(), values)
}

/// `T^q q(s,a) = r(s,a) + γ Σ P(s'|s,a) max_a' q(s',a')`.
pub fn q_bellman_optimal(mdp: &TabularMdp, q: &QFn) -> Result<QFn> {
    if q.n_states() != mdp.n_states() || q.n_actions() != mdp.n_actions() {
        return Err(Error::Dimension("q shape does not match MDP".into()));
    }
    q_from_v(mdp, &q.state_max())
}

/// Exact value of `policy`: solves `(I − γP^π) v = r^π` and checks
/// `‖v − T^π v‖∞ ≤ tol·(1−γ)/γ`, refining by fixed-point sweeps if rounding
/// left it short.
pub fn policy_evaluation(mdp: &TabularMdp, policy: &Policy, tol: f64) -> Result<ValueFn> {
    if !(tol > 0.0) {
        return param(format!("tol={tol} must be positive"));
    }
    let r = mdp.policy_reward(policy)?;
    let g = mdp.gamma();
    if g == 0.0 {
        return Ok(ValueFn(r));
    }
    let n = mdp.n_states();
    let p = mdp.policy_transition(policy)?;
    let a = DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - g * p[i * n + j]
    });
    let b = DVector::from_vec(r.clone());
    let v0 = match a.lu().solve(&b) {
        Some(x) => x.iter().copied().collect::<Vec<_>>(),
        None => vec![0.0; n],
    };
    let v = iterate_to_fixed_point(g, tol, v0, |v| {
        (0..n)
            .map(|s| r[s] + g * (0..n).map(|j| p[s * n + j] * v[j]).sum::<f64>())
            .collect()
    })?;
    Ok(ValueFn(v))
}

/// Value iteration to `‖v − v*‖∞ ≤ tol`, plus the greedy policy of the result.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<(ValueFn, Policy)> {
    if !(tol > 0.0) {
        return param(format!("tol={tol} must be positive"));
    }
    let v = iterate_to_fixed_point(mdp.gamma(), tol, vec![0.0; mdp.n_states()], |v| {
        optimal_backup(mdp, v)
    })?;
    let v = ValueFn(v);
    let pi = greedy_policy(mdp, &v)?;
    Ok((v, pi))
}

/// Iterates a γ-contraction from `v0` until successive iterates are within
/// `tol·(1−γ)/γ`, which bounds the distance of the last iterate to the fixed
/// point by `tol`.
pub(crate) fn iterate_to_fixed_point(
    gamma: f64,
    tol: f64,
    v0: Vec<f64>,
    mut op: impl FnMut(&[f64]) -> Vec<f64>,
) -> Result<Vec<f64>> {
    let mut v = op(&v0);
    if gamma == 0.0 {
        return Ok(v);
    }
    let threshold = tol * (1.0 - gamma) / gamma;
    let mut prev_res = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        let next = op(&v);
        let res = max_abs_diff(&next, &v);
        v = next;
        if res <= threshold {
            return Ok(v);
        }
        // Residual stalled at rounding level: the fixed point is reached to
        // machine precision.
        if res >= prev_res && res <= 1e3 * f64::EPSILON * v.iter().fold(1.0f64, |m, x| m.max(x.abs())) {
            return Ok(v);
        }
        prev_res = res;
    }
    Err(Error::Solver("fixed-point iteration did not converge".into()))
}

/// Fixed point of `T^q` to `tol`.
pub fn q_value_iteration(mdp: &TabularMdp, tol: f64) -> Result<QFn> {
    let (v, _) = value_iteration(mdp, tol)?;
    q_from_v(mdp, &v)
}

/// `(1 − α(s))·π₁(·|s) + α(s)·π₀(·|s)`.
pub fn mixture_policy(pi1: &Policy, pi0: &Policy, alpha: &[f64]) -> Result<Policy> {
    let (n, m) = (pi1.n_states(), pi1.n_actions());
    if pi0.n_states() != n || pi0.n_actions() != m || alpha.len() != n {
        return Err(Error::Dimension("mixture components differ in shape".into()));
    }
    if let Some(a) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return param(format!("mixture weight {a} outside [0,1]"));
    }
    let mut probs = Vec::with_capacity(n * m);
    for (s, &w) in alpha.iter().enumerate() {
        for a in 0..m {
            probs.push((1.0 - w) * pi1.prob(s, a) + w * pi0.prob(s, a));
        }
    }
    Policy::stochastic(probs, n, m)
}
