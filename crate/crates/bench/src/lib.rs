//! Shared fixtures for the solver benchmarks.

use explorecon::envs::{bimodal_reward_mdp, random_mdp, t_cliff_walking, Env};
use explorecon::{ActionGrid, AlphaSpec, GridMdp, LearningConfig, Policy, TabularMdp};

/// Random MDP with `n` states and 4 actions at γ = 0.95.
pub fn random_fixture(n: usize) -> TabularMdp {
    random_mdp(n as u64, n, 4, 0.95, 0.5).expect("valid random MDP")
}

/// Uniform `π₀` at constant α = 0.3 for `mdp`.
pub fn alpha_fixture(mdp: &TabularMdp) -> AlphaSpec {
    AlphaSpec::constant(0.3, Policy::uniform(mdp.n_states(), mdp.n_actions())).expect("valid alpha")
}

/// One-state bimodal reward problem on `points` grid actions.
pub fn bimodal_fixture(points: usize) -> GridMdp {
    let grid = ActionGrid::new(-6.0, 6.0, points).expect("valid grid");
    bimodal_reward_mdp(grid, 0.99).expect("valid bimodal MDP")
}

pub fn cliff_fixture() -> Env {
    t_cliff_walking(0.99).expect("valid cliff world")
}

/// Constant step size, episodes of 100 steps from the start state.
pub fn learning_fixture(env: &Env, steps: u64) -> LearningConfig {
    let mut cfg = LearningConfig::polynomial(steps, 0.6, 0).expect("valid learning config");
    cfg.episode_horizon = Some(100);
    cfg.start_state = env.start;
    cfg
}
