//! Experiment configuration and its content hash.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use explorecon::alpha::{AlphaSpecFile, AlphaValue};
use explorecon::{LearningConfig, SigmaSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::problem::BUILTIN_ENVS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Criterion {
    Alpha(AlphaSpecFile),
    Sigma(SigmaSpec),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Expected,
    Surrogate,
    Baseline,
    #[default]
    Dp,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Expected => "expected",
            Algorithm::Surrogate => "surrogate",
            Algorithm::Baseline => "baseline",
            Algorithm::Dp => "dp",
        }
    }
}

/// Base-policy name that selects the environment's own `π₀`.
pub const ENV_BASE_POLICY: &str = "env";

fn default_criterion() -> Criterion {
    Criterion::None
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in environment name or path to an MDP JSON file.
    pub env: String,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Generator seed for the random environments.
    #[serde(default)]
    pub env_seed: u64,
    /// Estimation error for `sensitivity-tight`.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_criterion")]
    pub criterion: Criterion,
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub learning: Option<LearningConfig>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub eval_betas: Vec<f64>,
    /// Output directory; not part of the hash.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(env: impl Into<String>) -> Self {
        Self {
            env: env.into(),
            gamma: None,
            env_seed: 0,
            delta: None,
            criterion: Criterion::None,
            algorithm: Algorithm::Dp,
            learning: None,
            seeds: default_seeds(),
            eval_betas: Vec::new(),
            out: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }

    /// Sets a constant α, keeping the base policy of an existing α block.
    pub fn set_alpha(&mut self, alpha: f64) -> Result<()> {
        match &mut self.criterion {
            Criterion::Alpha(spec) => spec.alpha = AlphaValue::Constant(alpha),
            Criterion::None => {
                self.criterion = Criterion::Alpha(AlphaSpecFile {
                    alpha: AlphaValue::Constant(alpha),
                    pi0: explorecon::alpha::BasePolicy::Named(ENV_BASE_POLICY.into()),
                })
            }
            Criterion::Sigma(_) => bail!("--alpha given for a sigma criterion"),
        }
        Ok(())
    }

    pub fn set_sigma(&mut self, sigma: f64) -> Result<()> {
        match &mut self.criterion {
            Criterion::Sigma(spec) => *spec = spec.with_sigma(sigma)?,
            Criterion::None => self.criterion = Criterion::Sigma(SigmaSpec::new(sigma)?),
            Criterion::Alpha(_) => bail!("--sigma given for an alpha criterion"),
        }
        Ok(())
    }

    /// Checks cross-field consistency and that file references exist.
    pub fn validate(&self) -> Result<()> {
        if !BUILTIN_ENVS.contains(&self.env.as_str()) {
            ensure!(
                Path::new(&self.env).is_file(),
                "env {:?} is neither a built-in ({}) nor an existing file",
                self.env,
                BUILTIN_ENVS.join(", ")
            );
        }
        if let Some(g) = self.gamma {
            ensure!((0.0..1.0).contains(&g), "gamma={g} outside [0,1)");
        }
        ensure!(!self.seeds.is_empty(), "at least one seed is required");
        for b in &self.eval_betas {
            ensure!((0.0..=1.0).contains(b), "eval beta {b} outside [0,1]");
        }
        match self.algorithm {
            Algorithm::Dp => {}
            Algorithm::Expected | Algorithm::Surrogate | Algorithm::Baseline => {
                ensure!(
                    matches!(self.criterion, Criterion::Alpha(_)),
                    "algorithm {} needs an alpha criterion",
                    self.algorithm.name()
                );
                let learning = self
                    .learning
                    .as_ref()
                    .with_context(|| format!("algorithm {} needs a learning block", self.algorithm.name()))?;
                learning.validate()?;
            }
        }
        if let Criterion::Sigma(spec) = &self.criterion {
            spec.validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form without the output directory.
    pub fn hash(&self) -> String {
        let mut semantic = self.clone();
        semantic.out = None;
        // serde_json::Value keeps object keys sorted, so this is canonical.
        let value = serde_json::to_value(&semantic).expect("config serializes");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}

/// Parses `"3"`, `"0..10"` (exclusive) or `"1,4,9"`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        ensure!(a < b, "empty seed range {text}");
        return Ok((a..b).collect());
    }
    let seeds = text
        .split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    ensure!(!seeds.is_empty(), "no seeds given");
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_forms() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("5").unwrap(), vec![5]);
        assert_eq!(parse_seeds("1, 4,9").unwrap(), vec![1, 4, 9]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let mut a = ExperimentConfig::new("t-cliff");
        a.set_alpha(0.3).unwrap();
        let mut b = a.clone();
        b.out = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.set_alpha(0.31).unwrap();
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.seeds = vec![0, 1];
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn json_defaults_and_round_trip() {
        let text = r#"{"env": "bias-tight", "criterion": {"kind": "alpha", "alpha": 0.3}}"#;
        let c: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(c.algorithm, Algorithm::Dp);
        assert_eq!(c.seeds, vec![0]);
        c.validate().unwrap();
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"env": "x", "bogus": 1}"#).is_err());
    }

    #[test]
    fn criterion_must_match_algorithm() {
        let mut c = ExperimentConfig::new("t-cliff");
        c.algorithm = Algorithm::Expected;
        assert!(c.validate().is_err());
        c.set_alpha(0.3).unwrap();
        assert!(c.validate().is_err(), "learning block missing");
        c.learning = Some(LearningConfig::polynomial(10, 0.6, 0).unwrap());
        c.validate().unwrap();
        assert!(c.set_sigma(1.0).is_err());
        let missing = ExperimentConfig::new("/definitely/not/here.json");
        assert!(missing.validate().is_err());
    }
}
