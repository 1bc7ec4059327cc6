//! Independent oracles shared by the integration and acceptance targets.
//! None of these call into the solvers they are used to check.

#![allow(dead_code)]

use explorecon::TabularMdp;

/// Gaussian elimination with partial pivoting on a dense `n × n` system.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let (head, tail) = a.split_at_mut(col + 1);
        let (pivot_row, b_pivot) = (&head[col], b[col]);
        for (row, b_row) in tail.iter_mut().zip(&mut b[col + 1..]) {
            let f = row[col] / pivot_row[col];
            for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            *b_row -= f * b_pivot;
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

/// Value of a stochastic policy given as `probs[s][a]`, by direct solve.
pub fn value_of(mdp: &TabularMdp, probs: &[Vec<f64>]) -> Vec<f64> {
    let (n, m, g) = (mdp.n_states(), mdp.n_actions(), mdp.gamma());
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for s in 0..n {
        a[s][s] += 1.0;
        for (act, &p) in probs[s].iter().enumerate().take(m) {
            b[s] += p * mdp.reward(s, act);
            for (j, pj) in mdp.transition_row(s, act).iter().enumerate() {
                a[s][j] -= g * p * pj;
            }
        }
    }
    solve_dense(a, b)
}

pub fn deterministic_probs(actions: &[usize], m: usize) -> Vec<Vec<f64>> {
    actions
        .iter()
        .map(|&a| (0..m).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// `(1−α)·pi + α·pi0` row by row.
pub fn mix(pi: &[Vec<f64>], pi0: &[Vec<f64>], alpha: &[f64]) -> Vec<Vec<f64>> {
    pi.iter()
        .zip(pi0)
        .zip(alpha)
        .map(|((r1, r0), &w)| r1.iter().zip(r0).map(|(a, b)| (1.0 - w) * a + w * b).collect())
        .collect()
}

/// Every deterministic policy, as action vectors, in lexicographic order.
pub fn all_deterministic(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                (0..m).map(move |a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}

/// Per-state maximum over all deterministic policies: the optimal value.
pub fn enumerate_optimal(mdp: &TabularMdp) -> Vec<f64> {
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let mut best = vec![f64::NEG_INFINITY; n];
    for actions in all_deterministic(n, m) {
        let v = value_of(mdp, &deterministic_probs(&actions, m));
        for s in 0..n {
            best[s] = best[s].max(v[s]);
        }
    }
    best
}

/// Per-state maximum over deterministic `π` of the value of `(1−α)π + απ₀`.
pub fn enumerate_alpha_optimal(mdp: &TabularMdp, pi0: &[Vec<f64>], alpha: &[f64]) -> Vec<f64> {
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let mut best = vec![f64::NEG_INFINITY; n];
    for actions in all_deterministic(n, m) {
        let v = value_of(mdp, &mix(&deterministic_probs(&actions, m), pi0, alpha));
        for s in 0..n {
            best[s] = best[s].max(v[s]);
        }
    }
    best
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `r_σ(μ)` of the bimodal reward under an untruncated Gaussian of width
/// `σ`: the convolution of two unit-variance-½ bumps.
pub fn bimodal_smoothed(mu: f64, sigma: f64) -> f64 {
    let var = 0.5 + sigma * sigma;
    let c = 0.5 / (std::f64::consts::PI.sqrt() * (2.0 * var).sqrt());
    c * ((-(mu - 1.0).powi(2) / (2.0 * var)).exp() + (-(mu + 1.0).powi(2) / (2.0 * var)).exp())
}

/// Derivative of [`bimodal_smoothed`] in `μ`.
pub fn bimodal_smoothed_slope(mu: f64, sigma: f64) -> f64 {
    let var = 0.5 + sigma * sigma;
    let c = 0.5 / (std::f64::consts::PI.sqrt() * (2.0 * var).sqrt());
    -c / var
        * ((mu - 1.0) * (-(mu - 1.0).powi(2) / (2.0 * var)).exp()
            + (mu + 1.0) * (-(mu + 1.0).powi(2) / (2.0 * var)).exp())
}
