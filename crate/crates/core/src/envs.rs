//! Environment generators.
//!
//! Rewards that would be negative are shifted by a constant `c ≥ 0` recorded
//! in [`Env::reward_shift`]; every policy value moves by `c/(1−γ)`, so
//! orderings and greedy sets are unchanged and [`Env::unshift`] recovers the
//! original scale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alpha::AlphaSpec;
use crate::error::{param, Error, Result};
use crate::gaussian::{ActionGrid, GridMdp};
use crate::mdp::{Policy, TabularMdp, ValueFn};

/// A generated MDP with the metadata its experiments need.
#[derive(Debug, Clone)]
pub struct Env {
    pub name: String,
    pub mdp: TabularMdp,
    pub pi0: Policy,
    /// Constant added to every raw reward.
    pub reward_shift: f64,
    pub start: Option<usize>,
    pub terminals: Vec<usize>,
    /// Preset value estimate, for environments that come with one.
    pub v_hat: Option<ValueFn>,
    /// States where a smaller exploration rate is warranted.
    pub bottleneck: Vec<usize>,
}

impl Env {
    fn plain(name: &str, mdp: TabularMdp, pi0: Policy) -> Self {
        Self {
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

    /// `c/(1−γ)`: the amount every value is raised by the shift.
    pub fn value_shift(&self) -> f64 {
        self.reward_shift / (1.0 - self.mdp.gamma())
    }

    /// Undoes the reward shift on a value function.
    pub fn unshift(&self, v: &ValueFn) -> ValueFn {
        let c = self.value_shift();
        v.map(|x| x - c)
    }

    pub fn alpha_constant(&self, alpha: f64) -> Result<AlphaSpec> {
        AlphaSpec::constant(alpha, self.pi0.clone())
    }

    /// `low` on the bottleneck states and `high` elsewhere.
    pub fn alpha_state_dependent(&self, low: f64, high: f64) -> Result<AlphaSpec> {
        let mut alpha = vec![high; self.mdp.n_states()];
        for &s in &self.bottleneck {
            alpha[s] = low;
        }
        AlphaSpec::new(self.pi0.clone(), alpha)
    }
}

pub type Cell = (usize, usize);

/// Layout and reward scheme of a deterministic grid world. Rewards here are
/// on the unshifted scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWorldSpec {
    pub height: usize,
    pub width: usize,
    pub cliff: Vec<Cell>,
    pub barrier: Vec<Cell>,
    pub bonus: Vec<Cell>,
    pub start: Cell,
    pub goal: Cell,
    pub step_reward: f64,
    /// Paid per step while absorbed in the goal.
    pub goal_reward: f64,
    /// Paid per step while absorbed in a cliff cell.
    pub cliff_reward: f64,
    /// Paid on entering a bonus cell.
    pub bonus_reward: f64,
    pub gamma: f64,
}

/// Up, right, down, left.
pub const MOVES: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

impl GridWorldSpec {
    pub fn state(&self, cell: Cell) -> usize {
        cell.0 * self.width + cell.1
    }

    pub fn cell(&self, state: usize) -> Cell {
        (state / self.width, state % self.width)
    }

    fn validate(&self) -> Result<()> {
        let in_bounds = |c: &Cell| c.0 < self.height && c.1 < self.width;
        let all = self
            .cliff
            .iter()
            .chain(&self.barrier)
            .chain(&self.bonus)
            .chain([&self.start, &self.goal]);
        if let Some(c) = all.clone().find(|c| !in_bounds(c)) {
            return param(format!("cell {c:?} outside the {}x{} grid", self.height, self.width));
        }
        for special in [self.start, self.goal] {
            if self.cliff.contains(&special) || self.barrier.contains(&special) {
                return param(format!("start/goal {special:?} lies on cliff or barrier"));
            }
        }
        Ok(())
    }

    fn step(&self, cell: Cell, a: usize) -> Cell {
        let (dr, dc) = MOVES[a];
        let r = cell.0 as isize + dr;
        let c = cell.1 as isize + dc;
        if r < 0 || c < 0 || r >= self.height as isize || c >= self.width as isize {
            return cell;
        }
        let next = (r as usize, c as usize);
        if self.barrier.contains(&next) {
            cell
        } else {
            next
        }
    }

    /// Builds the MDP with uniform `π₀` over the four moves. Goal and cliff
    /// cells are absorbing.
    pub fn build(&self, name: &str) -> Result<Env> {
        self.validate()?;
        let n = self.height * self.width;
        let m = MOVES.len();
        let mut raw = vec![0.0; n * m];
        let mut transition = vec![0.0; n * m * n];
        let mut terminals = Vec::new();
        for s in 0..n {
            let cell = self.cell(s);
            let absorbing = if cell == self.goal {
                Some(self.goal_reward)
            } else if self.cliff.contains(&cell) {
                Some(self.cliff_reward)
            } else if self.barrier.contains(&cell) {
                Some(0.0)
            } else {
                None
            };
            if absorbing.is_some() && !self.barrier.contains(&cell) {
                terminals.push(s);
            }
            for a in 0..m {
                let (next, r) = match absorbing {
                    Some(r) => (cell, r),
                    None => {
                        let next = self.step(cell, a);
                        let bonus = if self.bonus.contains(&next) { self.bonus_reward } else { 0.0 };
                        (next, self.step_reward + bonus)
                    }
                };
                raw[s * m + a] = r;
                transition[(s * m + a) * n + self.state(next)] = 1.0;
            }
        }
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let shift = (-lo).max(0.0);
        let reward = raw.iter().map(|r| r + shift).collect();
        let mdp = TabularMdp::new(n, m, self.gamma, hi + shift, reward, transition)?;
        Ok(Env {
            name: name.into(),
            pi0: Policy::uniform(n, m),
            reward_shift: shift,
            start: Some(self.state(self.start)),
            terminals,
            v_hat: None,
            bottleneck: Vec::new(),
            mdp,
        })
    }
}

/// Column of the barrier; its rows above the cliff-side row are walled off.
pub const CLIFF_BARRIER_COL: usize = 6;

/// The 4×12 T-Cliff-Walking layout.
///
/// Row 3 holds start `(3,0)`, goal `(3,11)` and the cliff between them. A
/// wall occupies rows 0–1 of column [`CLIFF_BARRIER_COL`], leaving the
/// single passage `(2, CLIFF_BARRIER_COL)` next to the cliff. Entering
/// `(2,1)`, `(2,2)` or `(2,3)` pays `0.01(1−γ)`. Goal and cliff are absorbing
/// and pay `±(1−γ)` per step, so their values are `±1`.
pub fn t_cliff_walking_spec(gamma: f64) -> GridWorldSpec {
    let scale = 1.0 - gamma;
    GridWorldSpec {
        height: 4,
        width: 12,
        cliff: (1..11).map(|c| (3, c)).collect(),
        barrier: vec![(0, CLIFF_BARRIER_COL), (1, CLIFF_BARRIER_COL)],
        bonus: vec![(2, 1), (2, 2), (2, 3)],
        start: (3, 0),
        goal: (3, 11),
        step_reward: 0.0,
        goal_reward: scale,
        cliff_reward: -scale,
        bonus_reward: 0.01 * scale,
        gamma,
    }
}

pub fn t_cliff_walking(gamma: f64) -> Result<Env> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return param(format!("gamma={gamma} outside (0,1)"));
    }
    let spec = t_cliff_walking_spec(gamma);
    let mut env = spec.build("t-cliff")?;
    env.bottleneck = [CLIFF_BARRIER_COL - 1, CLIFF_BARRIER_COL, CLIFF_BARRIER_COL + 1]
        .iter()
        .map(|&c| spec.state((2, c)))
        .collect();
    Ok(env)
}

/// Three states; `s₀` chooses between `s₁` (pays 0.8 forever under either
/// action) and `s₂` (action 0 pays 1, action 1 pays 0). `π₀` always takes
/// action 1. Rewards are scaled by `(1−γ)` so values read on the unit scale.
pub fn counterexample_monotonicity(gamma: f64) -> Result<Env> {
    let k = 1.0 - gamma;
    #[rustfmt::skip]
    let reward = vec![
        0.0, 0.0,
        0.8 * k, 0.8 * k,
        k, 0.0,
    ];
    #[rustfmt::skip]
    let transition = vec![
        0.0, 1.0, 0.0,   0.0, 0.0, 1.0,
        0.0, 1.0, 0.0,   0.0, 1.0, 0.0,
        0.0, 0.0, 1.0,   0.0, 0.0, 1.0,
    ];
    let mdp = TabularMdp::new(3, 2, gamma, k, reward, transition)?;
    let pi0 = Policy::constant_action(1, 3, 2)?;
    Ok(Env::plain("nonmonotone", mdp, pi0))
}

/// One state, two self-loop actions paying 0 and 1; uniform `π₀`.
pub fn counterexample_bias_tight(gamma: f64) -> Result<Env> {
    let mdp = TabularMdp::new(1, 2, gamma, 1.0, vec![0.0, 1.0], vec![1.0, 1.0])?;
    Ok(Env::plain("bias-tight", mdp, Policy::uniform(1, 2)))
}

/// Two states; action 0 moves to `s₀` paying `−γδ`, action 1 moves to `s₁`
/// paying `+γδ`. Uniform `π₀`. Rewards are shifted by `γδ`.
///
/// The preset `v̂ = v*_α + (δ, −δ)` (shifted scale) makes both actions tie in
/// every state, so the lowest-index greedy policy takes action 0 everywhere.
pub fn counterexample_sensitivity_tight(gamma: f64, delta: f64, alpha: f64) -> Result<Env> {
    if !(delta >= 0.0) || !(0.0..=1.0).contains(&alpha) {
        return param("need delta >= 0 and alpha in [0,1]");
    }
    let c = gamma * delta;
    #[rustfmt::skip]
    let reward = vec![
        0.0, 2.0 * c,
        0.0, 2.0 * c,
    ];
    #[rustfmt::skip]
    let transition = vec![
        1.0, 0.0,   0.0, 1.0,
        1.0, 0.0,   0.0, 1.0,
    ];
    let mdp = TabularMdp::new(2, 2, gamma, 2.0 * c, reward, transition)?;
    let mut env = Env::plain("sensitivity-tight", mdp, Policy::uniform(2, 2));
    env.reward_shift = c;
    let v_alpha = c * (1.0 - alpha) / (1.0 - gamma) + env.value_shift();
    env.v_hat = Some(ValueFn::new(vec![v_alpha + delta, v_alpha - delta]));
    Ok(env)
}

/// `r(u) = ½π^{−1/2}(e^{−(u−1)²} + e^{−(u+1)²})`.
pub fn bimodal_reward(u: f64) -> f64 {
    let c = 0.5 / std::f64::consts::PI.sqrt();
    c * ((-(u - 1.0).powi(2)).exp() + (-(u + 1.0).powi(2)).exp())
}

/// One state, grid actions, self-loops, bimodal reward.
pub fn bimodal_reward_mdp(grid: ActionGrid, gamma: f64) -> Result<GridMdp> {
    let reward: Vec<f64> = grid.points().into_iter().map(bimodal_reward).collect();
    let r_max = 1.0 / std::f64::consts::PI.sqrt();
    let m = grid.n_points();
    let mdp = TabularMdp::new(1, m, gamma, r_max, reward, vec![1.0; m])?;
    GridMdp::new(mdp, grid, "bimodal")
}

/// Rows from normalized `Exp(1)` draws (a flat Dirichlet); a `sparsity`
/// fraction of each row is zeroed, always keeping one entry. Rewards are
/// uniform on `[0,1]`.
pub fn random_mdp(
    seed: u64,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    sparsity: f64,
) -> Result<TabularMdp> {
    if !(0.0..1.0).contains(&sparsity) {
        return param(format!("sparsity={sparsity} outside [0,1)"));
    }
    if n_states == 0 || n_actions == 0 {
        return param("n_states and n_actions must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        let keep: usize = rng.gen_range(0..n_states);
        let mut row: Vec<f64> = (0..n_states)
            .map(|j| {
                let drop = j != keep && rng.gen::<f64>() < sparsity;
                let e = -(1.0 - rng.gen::<f64>()).ln();
                if drop {
                    0.0
                } else {
                    e
                }
            })
            .collect();
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|p| *p /= sum);
        } else {
            row[keep] = 1.0;
        }
        transition.extend(row);
    }
    let reward = (0..n_states * n_actions).map(|_| rng.gen::<f64>()).collect();
    TabularMdp::new(n_states, n_actions, gamma, 1.0, reward, transition)
}

/// A grid MDP whose rewards and transition logits are sums of a few smooth
/// bumps in the action, so finite-difference Lipschitz constants stay
/// bounded under refinement.
pub fn random_grid_mdp(seed: u64, n_states: usize, grid: ActionGrid, gamma: f64) -> Result<GridMdp> {
    if n_states == 0 {
        return Err(Error::Dimension("need at least one state".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = grid.points();
    let span = grid.hi() - grid.lo();
    let bump = |rng: &mut ChaCha8Rng| {
        let centre = grid.lo() + span * rng.gen::<f64>();
        let width = span * rng.gen_range(0.1..0.4);
        let height = rng.gen_range(-1.0..1.0);
        move |x: f64| height * (-0.5 * ((x - centre) / width).powi(2)).exp()
    };
    let m = xs.len();
    let mut reward = vec![0.0; n_states * m];
    let mut transition = vec![0.0; n_states * m * n_states];
    for s in 0..n_states {
        let bumps: Vec<_> = (0..3).map(|_| bump(&mut rng)).collect();
        let raw: Vec<f64> = xs.iter().map(|&x| bumps.iter().map(|b| b(x)).sum()).collect();
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (a, r) in raw.iter().enumerate() {
            reward[s * m + a] = if hi > lo { (r - lo) / (hi - lo) } else { 0.5 };
        }
        let logits: Vec<Vec<f64>> = (0..n_states)
            .map(|_| {
                let b = bump(&mut rng);
                let base = rng.gen_range(-1.0..1.0);
                xs.iter().map(|&x| base + 2.0 * b(x)).collect()
            })
            .collect();
        for a in 0..m {
            let row = &mut transition[(s * m + a) * n_states..(s * m + a + 1) * n_states];
            for (sp, l) in logits.iter().enumerate() {
                row[sp] = l[a].exp();
            }
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= sum);
        }
    }
    let mdp = TabularMdp::new(n_states, m, gamma, 1.0, reward, transition)?;
    GridMdp::new(mdp, grid, format!("random-smooth:{seed}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alpha::solve_alpha_optimal;
    use crate::mdp::value_iteration;

    #[test]
    fn cliff_layout_is_consistent() {
        let env = t_cliff_walking(0.99).unwrap();
        let spec = t_cliff_walking_spec(0.99);
        assert_eq!(env.mdp.n_states(), 48);
        assert_eq!(env.start, Some(spec.state((3, 0))));
        assert_eq!(env.terminals.len(), 11);
        for &t in &env.terminals {
            for a in 0..4 {
                assert_eq!(env.mdp.transition_row(t, a)[t], 1.0);
            }
        }
        assert!((env.mdp.r_max() - 0.02).abs() < 1e-12);
        assert!((env.value_shift() - 1.0).abs() < 1e-9);
        // Walking into the wall is a no-op.
        let left_of_wall = spec.state((1, CLIFF_BARRIER_COL - 1));
        assert_eq!(env.mdp.transition_row(left_of_wall, 1)[left_of_wall], 1.0);
    }

    #[test]
    fn nonmonotone_values() {
        let env = counterexample_monotonicity(0.99).unwrap();
        let (v, _) = value_iteration(&env.mdp, 1e-12).unwrap();
        assert!((v[0] - 0.99).abs() < 1e-9);
        let sol = solve_alpha_optimal(&env.mdp, &env.alpha_constant(0.25).unwrap(), 1e-12).unwrap();
        assert!((sol.v_alpha_star[1] - 0.8).abs() < 1e-9);
        assert!((sol.v_alpha_star[2] - 0.75).abs() < 1e-9);
    }

    #[test]
    fn sensitivity_preset_ties() {
        let env = counterexample_sensitivity_tight(0.99, 0.1, 0.5).unwrap();
        let q = crate::mdp::q_from_v(&env.mdp, env.v_hat.as_ref().unwrap()).unwrap();
        for s in 0..2 {
            assert!((q.get(s, 0) - q.get(s, 1)).abs() < 1e-12);
            assert_eq!(q.greedy_action(s), 0);
        }
    }

    #[test]
    fn bimodal_closed_form() {
        assert!((bimodal_reward(0.0) - (-1.0f64).exp() / std::f64::consts::PI.sqrt()).abs() < 1e-15);
        assert_eq!(bimodal_reward(0.7), bimodal_reward(-0.7));
    }

    #[test]
    fn random_generators_are_seeded() {
        assert_eq!(random_mdp(3, 4, 2, 0.9, 0.5).unwrap(), random_mdp(3, 4, 2, 0.9, 0.5).unwrap());
        assert_ne!(random_mdp(3, 4, 2, 0.9, 0.0).unwrap(), random_mdp(4, 4, 2, 0.9, 0.0).unwrap());
        let g = ActionGrid::new(-1.0, 1.0, 21).unwrap();
        assert_eq!(random_grid_mdp(5, 3, g, 0.9).unwrap(), random_grid_mdp(5, 3, g, 0.9).unwrap());
        assert!(random_mdp(0, 2, 2, 0.9, 1.0).is_err());
    }
}
