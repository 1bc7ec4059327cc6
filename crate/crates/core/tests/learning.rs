use explorecon::envs::{counterexample_monotonicity, random_mdp};
use explorecon::learning::{
    baseline_q_learning, evaluate_policies, evaluate_train_policy, expected_alpha_q_learning,
    sample_step, surrogate_alpha_q_learning,
};
use explorecon::{AlphaSpec, EtaSchedule, LearningConfig, Policy, QFn};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(steps: u64, seed: u64) -> LearningConfig {
    let mut c = LearningConfig::polynomial(steps, 0.6, seed).unwrap();
    c.checkpoint_every = Some(steps / 4);
    c
}

#[test]
fn runs_are_bit_identical_for_a_seed() {
    let mdp = random_mdp(3, 4, 3, 0.9, 0.2).unwrap();
    let spec = AlphaSpec::constant(0.3, Policy::uniform(4, 3)).unwrap();
    for run in [expected_alpha_q_learning, surrogate_alpha_q_learning, baseline_q_learning] {
        let a = run(&mdp, &spec, &config(20_000, 11)).unwrap();
        let b = run(&mdp, &spec, &config(20_000, 11)).unwrap();
        assert_eq!(a, b);
        let c = run(&mdp, &spec, &config(20_000, 12)).unwrap();
        assert_ne!(a.q, c.q);
    }
}

#[test]
fn zero_alpha_reduces_to_q_learning() {
    let mdp = random_mdp(5, 5, 3, 0.9, 0.3).unwrap();
    let spec = AlphaSpec::constant(0.0, Policy::uniform(5, 3)).unwrap();
    let cfg = config(30_000, 4);
    let base = baseline_q_learning(&mdp, &spec, &cfg).unwrap();
    let exp = expected_alpha_q_learning(&mdp, &spec, &cfg).unwrap();
    let sur = surrogate_alpha_q_learning(&mdp, &spec, &cfg).unwrap();
    assert_eq!(base.q, exp.q);
    assert_eq!(base.q, sur.q);
}

#[test]
fn surrogate_q_arm_follows_the_expected_learner() {
    let mdp = random_mdp(8, 4, 2, 0.95, 0.1).unwrap();
    let spec = AlphaSpec::new(Policy::uniform(4, 2), vec![0.1, 0.5, 0.9, 0.3]).unwrap();
    let cfg = config(40_000, 2);
    let exp = expected_alpha_q_learning(&mdp, &spec, &cfg).unwrap();
    let sur = surrogate_alpha_q_learning(&mdp, &spec, &cfg).unwrap();
    assert_eq!(exp.q, sur.q);
    for (a, b) in exp.trace.iter().zip(&sur.trace) {
        assert_eq!((a.step, a.train_return, a.q_error), (b.step, b.train_return, b.q_error));
    }
    assert!(exp.q_alpha.is_none() && sur.q_alpha.is_some());
}

#[test]
fn trace_steps_increase_and_end_at_total() {
    let mdp = random_mdp(1, 3, 2, 0.9, 0.0).unwrap();
    let spec = AlphaSpec::constant(0.2, Policy::uniform(3, 2)).unwrap();
    let mut cfg = config(1_000, 0);
    cfg.checkpoint_every = Some(300);
    let res = surrogate_alpha_q_learning(&mdp, &spec, &cfg).unwrap();
    let steps: Vec<u64> = res.trace.iter().map(|p| p.step).collect();
    assert_eq!(steps, vec![0, 300, 600, 900, 1000]);
    assert_eq!(res.snapshots.len(), steps.len());
    assert!(res.trace.iter().all(|p| p.qalpha_error.is_some()));
}

#[test]
fn step_sizes_satisfy_robbins_monro() {
    // Σ (1+n)^{-p} diverges and Σ (1+n)^{-2p} converges for p in (0.5, 1].
    for &p in &[0.51, 0.6, 0.8, 1.0] {
        let cfg = LearningConfig::polynomial(1, p, 0).unwrap();
        let partial = |k: u64| (0..k).map(|n| cfg.eta(n)).sum::<f64>();
        let sq = |k: u64| (0..k).map(|n| cfg.eta(n).powi(2)).sum::<f64>();
        // Lower bound of the integral test for Σ η.
        let k = 1_000_000u64;
        let lower = if p == 1.0 {
            ((k + 1) as f64).ln()
        } else {
            (((k + 1) as f64).powf(1.0 - p) - 1.0) / (1.0 - p)
        };
        assert!(partial(k) >= lower - 1e-9);
        // Upper bound 1 + ∫₁^∞ x^{-2p} dx for Σ η².
        let cap = 1.0 + 1.0 / (2.0 * p - 1.0);
        assert!(sq(k) <= cap);
    }
    assert!(LearningConfig::polynomial(1, 0.5, 0).is_err());
    assert!(LearningConfig::polynomial(1, 1.2, 0).is_err());
    let mut c = LearningConfig::polynomial(1, 0.7, 0).unwrap();
    c.eta_schedule = EtaSchedule::Constant;
    c.eta_scale = 0.3;
    assert_eq!(c.eta(12345), 0.3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn greedy_action_executes_when_coin_says_so(seed in any::<u64>(), alpha in 0.0..=1.0f64) {
        let mdp = random_mdp(seed, 4, 3, 0.9, 0.3).unwrap();
        let spec = AlphaSpec::constant(alpha, Policy::uniform(4, 3)).unwrap();
        let q = QFn::new(4, 3, (0..12).map(|i| ((i * 7) % 5) as f64).collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in 0..4 {
            let smp = sample_step(&mdp, &mut rng, s, &q, &spec);
            prop_assert_eq!(smp.a_chosen, q.greedy_action(s));
            if smp.x {
                prop_assert_eq!(smp.a_env, smp.a_chosen);
            }
            prop_assert!(mdp.transition_row(s, smp.a_env)[smp.s_next] > 0.0);
            prop_assert_eq!(smp.r, mdp.reward(s, smp.a_env));
        }
    }
}

#[test]
fn learned_q_approaches_oracle_on_nonmonotone_mdp() {
    let env = counterexample_monotonicity(0.9).unwrap();
    let spec = env.alpha_constant(0.25).unwrap();
    let mut cfg = LearningConfig::polynomial(200_000, 0.6, 1).unwrap();
    cfg.initial_q = env.mdp.r_max() / (1.0 - env.mdp.gamma());
    cfg.episode_horizon = Some(50);
    let res = surrogate_alpha_q_learning(&env.mdp, &spec, &cfg).unwrap();
    let last = res.trace.last().unwrap();
    assert!(last.q_error < 0.05, "q error {}", last.q_error);
    assert!(last.qalpha_error.unwrap() < 0.05);
    let vals = evaluate_policies(&env.mdp, res.policy_q(), &spec, &[0.0, 0.25], 1e-10).unwrap();
    let train = evaluate_train_policy(&env.mdp, res.policy_q(), &spec, 1e-10).unwrap();
    assert!(vals[1].dist(&train) < 1e-12);
}
