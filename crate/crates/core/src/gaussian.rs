//! The σ-optimal criterion on a discretized one-dimensional action grid.
//!
//! A Gaussian policy with mean `μ(s)` and fixed width σ is folded into the
//! model: `M_σ` replaces every action by the Gaussian-weighted average of its
//! neighbours, and the deterministic optimum of `M_σ` is the σ-optimal mean.
//! All continuum statements hold here up to the quadrature of the grid.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{param, Error, Result};
use crate::mdp::{
    argmax_lowest, policy_evaluation, q_from_v, value_iteration, MdpFile, Policy, QFn, TabularMdp,
    ValueFn,
};

/// Uniform grid `lo = x_0 < … < x_{n−1} = hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridFields", into = "GridFields")]
pub struct ActionGrid {
    lo: f64,
    hi: f64,
    n_points: usize,
}

#[derive(Serialize, Deserialize)]
struct GridFields {
    lo: f64,
    hi: f64,
    n_points: usize,
}

impl TryFrom<GridFields> for ActionGrid {
    type Error = Error;
    fn try_from(f: GridFields) -> Result<Self> {
        ActionGrid::new(f.lo, f.hi, f.n_points)
    }
}

impl From<ActionGrid> for GridFields {
    fn from(g: ActionGrid) -> Self {
        GridFields { lo: g.lo, hi: g.hi, n_points: g.n_points }
    }
}

impl ActionGrid {
    pub fn new(lo: f64, hi: f64, n_points: usize) -> Result<Self> {
        if n_points < 3 {
            return param(format!("grid needs at least 3 points, got {n_points}"));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return param(format!("grid bounds [{lo}, {hi}] invalid"));
        }
        Ok(Self { lo, hi, n_points })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    /// Index of the grid point closest to `x` (clamped into range).
    pub fn nearest(&self, x: f64) -> usize {
        let i = ((x - self.lo) / self.spacing()).round();
        i.clamp(0.0, (self.n_points - 1) as f64) as usize
    }
}

fn default_truncation() -> f64 {
    6.0
}

fn default_renormalize() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaSpec {
    pub sigma: f64,
    #[serde(default = "default_truncation")]
    pub truncation: f64,
    #[serde(default = "default_renormalize")]
    pub renormalize: bool,
}

impl SigmaSpec {
    pub fn new(sigma: f64) -> Result<Self> {
        Self::with_options(sigma, default_truncation(), default_renormalize())
    }

    pub fn with_options(sigma: f64, truncation: f64, renormalize: bool) -> Result<Self> {
        let spec = Self { sigma, truncation, renormalize };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return param(format!("sigma={} must be positive", self.sigma));
        }
        if !(self.truncation >= 4.0) {
            return param(format!("truncation={} must be at least 4", self.truncation));
        }
        Ok(())
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::with_options(sigma, self.truncation, self.renormalize)
    }
}

/// A tabular MDP whose actions are the points of an [`ActionGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridMdp {
    mdp: TabularMdp,
    grid: ActionGrid,
    reward_fn: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridMdpFile {
    #[serde(flatten)]
    pub mdp: MdpFile,
    pub grid: ActionGrid,
    #[serde(default)]
    pub reward_fn: String,
}

impl GridMdp {
    pub fn new(mdp: TabularMdp, grid: ActionGrid, reward_fn: impl Into<String>) -> Result<Self> {
        if mdp.n_actions() != grid.n_points() {
            return Err(Error::Dimension(format!(
                "{} actions but {} grid points",
                mdp.n_actions(),
                grid.n_points()
            )));
        }
        Ok(Self { mdp, grid, reward_fn: reward_fn.into() })
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn grid(&self) -> &ActionGrid {
        &self.grid
    }

    pub fn reward_fn(&self) -> &str {
        &self.reward_fn
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GridMdpFile {
            mdp: self.mdp.to_file_format(),
            grid: self.grid,
            reward_fn: self.reward_fn.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GridMdpFile = serde_json::from_str(text)?;
        Self::new(TabularMdp::from_file_format(&file.mdp)?, file.grid, file.reward_fn)
    }
}

/// Gaussian weights over the grid for a policy with mean at grid point
/// `mean`.
///
/// Each point in the truncation window gets `φ((x−μ)/σ)·h/σ`, halved at the
/// two end points. With `renormalize` the weights are rescaled to unit sum,
/// dropping mass that falls outside the grid. Without it the end points also
/// receive the analytic tail mass beyond them (the projection of out-of-range
/// actions onto the boundary), then the vector is rescaled to absorb the
/// quadrature error.
pub fn gaussian_weights(grid: &ActionGrid, mean: usize, spec: &SigmaSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if mean >= grid.n_points() {
        return param(format!("mean index {mean} outside grid"));
    }
    let h = grid.spacing();
    if spec.sigma < h / 2.0 {
        return param(format!(
            "sigma={} under-resolved by grid spacing {h}",
            spec.sigma
        ));
    }
    let mu = grid.point(mean);
    let reach = spec.truncation * spec.sigma;
    let norm = h / (spec.sigma * (2.0 * std::f64::consts::PI).sqrt());
    let mut w: Vec<f64> = grid
        .points()
        .iter()
        .map(|&x| {
            let z = (x - mu) / spec.sigma;
            if (x - mu).abs() <= reach {
                norm * (-0.5 * z * z).exp()
            } else {
                0.0
            }
        })
        .collect();
    // Trapezoid end weights: each end point owns half a cell inside the grid.
    let last = w.len() - 1;
    w[0] *= 0.5;
    w[last] *= 0.5;
    if !spec.renormalize {
        let upper_tail = |d: f64| 0.5 * erfc(d / (spec.sigma * std::f64::consts::SQRT_2));
        if mu - grid.lo() <= reach {
            w[0] += upper_tail(mu - grid.lo());
        }
        if grid.hi() - mu <= reach {
            w[last] += upper_tail(grid.hi() - mu);
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

/// Row-major `n × n` table of [`gaussian_weights`] for every mean.
pub fn weight_table(grid: &ActionGrid, spec: &SigmaSpec) -> Result<Vec<f64>> {
    let mut table = Vec::with_capacity(grid.n_points() * grid.n_points());
    for a in 0..grid.n_points() {
        table.extend(gaussian_weights(grid, a, spec)?);
    }
    Ok(table)
}

/// `r_σ(s,a) = Σ w(a'|a) r(s,a')` and `P_σ(·|s,a) = Σ w(a'|a) P(·|s,a')`.
pub fn build_sigma_surrogate(gmdp: &GridMdp, spec: &SigmaSpec) -> Result<TabularMdp> {
    let table = weight_table(&gmdp.grid, spec)?;
    smooth_with_table(&gmdp.mdp, &table)
}

fn smooth_with_table(mdp: &TabularMdp, table: &[f64]) -> Result<TabularMdp> {
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let mut reward = vec![0.0; n * m];
    let mut transition = vec![0.0; n * m * n];
    for s in 0..n {
        for a in 0..m {
            let w = &table[a * m..(a + 1) * m];
            let out = &mut transition[(s * m + a) * n..(s * m + a + 1) * n];
            let mut r = 0.0;
            for (b, &wb) in w.iter().enumerate().filter(|(_, &x)| x > 0.0) {
                r += wb * mdp.reward(s, b);
                for (o, p) in out.iter_mut().zip(mdp.transition_row(s, b)) {
                    *o += wb * p;
                }
            }
            reward[s * m + a] = r;
        }
    }
    TabularMdp::new(n, m, mdp.gamma(), mdp.r_max(), reward, transition)
        .map_err(|e| Error::Solver(format!("smoothed MDP broke an invariant: {e}")))
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaSolution {
    pub v_sigma_star: ValueFn,
    /// Grid index of the σ-optimal mean per state.
    pub mu_sigma_star: Vec<usize>,
    /// Optimal q of the surrogate, indexed by the mean.
    pub q_sigma: QFn,
    /// q on the original grid MDP of the σ-optimal Gaussian policy, indexed
    /// by the executed action.
    pub q_expected: QFn,
}

/// Value iteration on `M_σ`.
pub fn solve_sigma_optimal(gmdp: &GridMdp, spec: &SigmaSpec, tol: f64) -> Result<SigmaSolution> {
    if !(tol > 0.0) {
        return param(format!("tol={tol} must be positive"));
    }
    let surrogate = build_sigma_surrogate(gmdp, spec)?;
    let (v, _) = value_iteration(&surrogate, tol)?;
    let q_sigma = q_from_v(&surrogate, &v)?;
    let mu_sigma_star = (0..surrogate.n_states())
        .map(|s| argmax_lowest(q_sigma.row(s)))
        .collect();
    Ok(SigmaSolution {
        q_expected: q_from_v(&gmdp.mdp, &v)?,
        q_sigma,
        mu_sigma_star,
        v_sigma_star: v,
    })
}

/// The stochastic grid policy `π_{μ,σ}`; `sigma == 0` means the
/// deterministic policy `μ`.
pub fn gaussian_policy(grid: &ActionGrid, mu: &[usize], spec: &SigmaSpec) -> Result<Policy> {
    let m = grid.n_points();
    if spec.sigma == 0.0 {
        return Policy::deterministic(mu.to_vec(), m);
    }
    let mut probs = Vec::with_capacity(mu.len() * m);
    for &a in mu {
        probs.extend(gaussian_weights(grid, a, spec)?);
    }
    Policy::stochastic(probs, mu.len(), m)
}

/// Exact value on the original grid MDP of `π_{μ,σ'}`.
pub fn evaluate_gaussian_policy(
    gmdp: &GridMdp,
    mu: &[usize],
    spec: &SigmaSpec,
    sigma: f64,
    tol: f64,
) -> Result<ValueFn> {
    let pi = if sigma == 0.0 {
        Policy::deterministic(mu.to_vec(), gmdp.grid.n_points())?
    } else {
        gaussian_policy(&gmdp.grid, mu, &spec.with_sigma(sigma)?)?
    };
    policy_evaluation(&gmdp.mdp, &pi, tol)
}

#[derive(Debug, Clone, Serialize)]
pub struct NoImprovementReport {
    pub sigma: f64,
    pub sigma_prime: f64,
    pub v_sigma_star: ValueFn,
    pub v_sigma_prime: ValueFn,
    /// `v^{π_{μ*,σ'}} − v*_σ` per state.
    pub difference: Vec<f64>,
    pub tol: f64,
}

impl NoImprovementReport {
    /// Whether shrinking the noise lowered the value at some state.
    pub fn strictly_worse(&self) -> bool {
        self.difference.iter().any(|&d| d < -self.tol)
    }
}

/// Compares the σ-optimal mean executed with a smaller width `σ'` against
/// `v*_σ`.
pub fn no_improvement_check(
    gmdp: &GridMdp,
    spec: &SigmaSpec,
    sigma_prime: f64,
    tol: f64,
) -> Result<NoImprovementReport> {
    if !(0.0..=spec.sigma).contains(&sigma_prime) {
        return param(format!(
            "sigma'={sigma_prime} must lie in [0, sigma={}]",
            spec.sigma
        ));
    }
    let sol = solve_sigma_optimal(gmdp, spec, tol)?;
    let v_prime = evaluate_gaussian_policy(gmdp, &sol.mu_sigma_star, spec, sigma_prime, tol)?;
    let difference = v_prime
        .as_slice()
        .iter()
        .zip(sol.v_sigma_star.as_slice())
        .map(|(a, b)| a - b)
        .collect();
    Ok(NoImprovementReport {
        sigma: spec.sigma,
        sigma_prime,
        v_sigma_star: sol.v_sigma_star,
        v_sigma_prime: v_prime,
        difference,
        tol: 2.0 * tol,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SufficientCondition {
    /// `E[(a−μ*)² q] / E[q]` under the σ̃ weights; `None` when `E[q] ≤ 0`.
    pub ratio: Option<f64>,
    /// `E[(a−μ*)²]` of the same weights, the quadrature image of σ̃².
    pub threshold: f64,
    pub holds: Option<bool>,
}

/// Per-state check of `E[(a−μ*)² q]/E[q] ≤ σ̃²` with the expectation taken
/// under the σ̃-Gaussian centred at `μ*_σ`, using `q_expected`.
///
/// The threshold is the second moment of the discrete weights, so a
/// constant q meets it with equality.
pub fn improvement_sufficient_condition(
    gmdp: &GridMdp,
    solution: &SigmaSolution,
    spec: &SigmaSpec,
    sigma_tilde: f64,
) -> Result<Vec<SufficientCondition>> {
    if !(sigma_tilde > 0.0 && sigma_tilde < spec.sigma) {
        return param(format!(
            "sigma~={sigma_tilde} must lie in (0, sigma={})",
            spec.sigma
        ));
    }
    let tilde = spec.with_sigma(sigma_tilde)?;
    let xs = gmdp.grid.points();
    let mut out = Vec::with_capacity(solution.mu_sigma_star.len());
    for (s, &mu) in solution.mu_sigma_star.iter().enumerate() {
        let w = gaussian_weights(&gmdp.grid, mu, &tilde)?;
        let q = solution.q_expected.row(s);
        let centre = xs[mu];
        let (mut eq, mut eq2, mut m2) = (0.0, 0.0, 0.0);
        for ((wi, qi), xi) in w.iter().zip(q).zip(&xs) {
            let d2 = (xi - centre) * (xi - centre);
            eq += wi * qi;
            eq2 += wi * d2 * qi;
            m2 += wi * d2;
        }
        let ratio = (eq > 0.0).then(|| eq2 / eq);
        out.push(SufficientCondition {
            ratio,
            threshold: m2,
            holds: ratio.map(|r| r <= m2 * (1.0 + 1e-12)),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GradientReport {
    pub max_deviation: f64,
    /// Stencil half-width in grid steps.
    pub stencil: usize,
    pub points_checked: usize,
}

/// Compares `∂_a q_σ(s,a)` with `Σ w(a'|a) ∂_a' q_expected(s,a')`, both by
/// central differences over `±k` grid steps, `k = round(fd_step/(2h))`.
/// One-sided differences are used for `q_expected` near the grid ends.
pub fn gradient_equivalence_check(
    gmdp: &GridMdp,
    solution: &SigmaSolution,
    spec: &SigmaSpec,
    fd_step: f64,
) -> Result<GradientReport> {
    let grid = &gmdp.grid;
    let (m, h) = (grid.n_points(), grid.spacing());
    if !(fd_step >= 2.0 * h * (1.0 - 1e-9)) {
        return param(format!("fd_step={fd_step} below twice the grid spacing {h}"));
    }
    let k = ((fd_step / (2.0 * h)).round() as usize).max(1);
    if 2 * k + 1 > m {
        return param(format!("grid of {m} points too coarse for stencil {k}"));
    }
    let table = weight_table(grid, spec)?;
    let mut max_dev: f64 = 0.0;
    let mut checked = 0;
    for s in 0..solution.q_sigma.n_states() {
        let qs = solution.q_sigma.row(s);
        let qe = solution.q_expected.row(s);
        let dqe: Vec<f64> = (0..m)
            .map(|b| {
                let (lo, hi) = (b.saturating_sub(k), (b + k).min(m - 1));
                (qe[hi] - qe[lo]) / ((hi - lo) as f64 * h)
            })
            .collect();
        for a in k..m - k {
            let lhs = (qs[a + k] - qs[a - k]) / (2.0 * k as f64 * h);
            let w = &table[a * m..(a + 1) * m];
            let rhs: f64 = w.iter().zip(&dqe).map(|(wi, d)| wi * d).sum();
            max_dev = max_dev.max((lhs - rhs).abs());
            checked += 1;
        }
    }
    Ok(GradientReport { max_deviation: max_dev, stencil: k, points_checked: checked })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GaussianLipschitz {
    pub l_r: f64,
    pub l_p: f64,
    /// `(1−γ)L_r + γ L_p R_max`
    pub total: f64,
}

/// Finite-difference Lipschitz constants over adjacent grid actions, with
/// the transition distance measured in `‖·‖₁`.
pub fn gaussian_lipschitz(gmdp: &GridMdp) -> GaussianLipschitz {
    let mdp = &gmdp.mdp;
    let h = gmdp.grid.spacing();
    let (mut l_r, mut l_p): (f64, f64) = (0.0, 0.0);
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() - 1 {
            l_r = l_r.max((mdp.reward(s, a + 1) - mdp.reward(s, a)).abs() / h);
            let tv: f64 = mdp
                .transition_row(s, a)
                .iter()
                .zip(mdp.transition_row(s, a + 1))
                .map(|(p, q)| (p - q).abs())
                .sum();
            l_p = l_p.max(tv / h);
        }
    }
    let g = mdp.gamma();
    GaussianLipschitz { l_r, l_p, total: (1.0 - g) * l_r + g * l_p * mdp.r_max() }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SigmaGapBound {
    /// `𝓛‖σ‖₁ / (2(1−γ)²)`
    pub bias_half: f64,
    /// `√(2/π)·𝓛‖σ‖₁ / (1−γ)²`, the form that is asserted.
    pub bias_abs_moment: f64,
    /// `γδ·min(½·gap, 2)/(1−γ)`
    pub sensitivity: f64,
}

pub fn sigma_gap_bound(
    lips: f64,
    sigma: &[f64],
    gamma: f64,
    delta: f64,
    mu_gap_weighted: f64,
) -> Result<SigmaGapBound> {
    if !(0.0..1.0).contains(&gamma) {
        return param(format!("gamma={gamma} outside [0,1)"));
    }
    if lips < 0.0 || delta < 0.0 || mu_gap_weighted < 0.0 || sigma.iter().any(|&x| x < 0.0) {
        return param("Lipschitz constant, sigma, delta and gap must be non-negative");
    }
    let s1: f64 = sigma.iter().sum();
    let h2 = (1.0 - gamma).powi(2);
    Ok(SigmaGapBound {
        bias_half: lips * s1 / (2.0 * h2),
        bias_abs_moment: (2.0 / std::f64::consts::PI).sqrt() * lips * s1 / h2,
        sensitivity: gamma * delta * (0.5 * mu_gap_weighted).min(2.0) / (1.0 - gamma),
    })
}

/// `max_s |μ₁(s) − μ₂(s)|/σ`, the σ⁻²-weighted distance in one dimension.
pub fn weighted_mean_gap(grid: &ActionGrid, mu1: &[usize], mu2: &[usize], sigma: f64) -> f64 {
    mu1.iter()
        .zip(mu2)
        .map(|(&a, &b)| (grid.point(a) - grid.point(b)).abs() / sigma)
        .fold(0.0, f64::max)
}
