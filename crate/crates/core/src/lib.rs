//! Exploration-conscious reinforcement learning on finite MDPs.
//!
//! The crate solves the α-greedy and Gaussian-σ exploration-conscious
//! criteria by dynamic programming on surrogate MDPs, runs the Expected and
//! Surrogate α-Q-learning algorithms, and exposes the bias/sensitivity bound
//! machinery used to check them numerically.

// Negated comparisons reject NaN as well as out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alpha;
pub mod envs;
pub mod error;
pub mod gaussian;
pub mod learning;
pub mod mdp;
pub mod stats;

pub use alpha::{AlphaSolution, AlphaSpec, LipschitzReport};
pub use error::{Error, Result};
pub use gaussian::{ActionGrid, GridMdp, SigmaSolution, SigmaSpec};
pub use learning::{EtaSchedule, LearnResult, LearningConfig, StepSample};
pub use mdp::{Policy, QFn, TabularMdp, ValueFn};
