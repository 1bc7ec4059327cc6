//! Seed aggregation.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{param, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    /// Half-width of the two-sided Student-t interval; 0 for `n < 2`.
    pub half_width: f64,
}

impl Summary {
    pub fn lo(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.mean + self.half_width
    }
}

/// Mean, sample standard deviation and a `level` confidence interval.
pub fn summarize(xs: &[f64], level: f64) -> Result<Summary> {
    if xs.is_empty() {
        return param("cannot summarize an empty sample");
    }
    if !(level > 0.0 && level < 1.0) {
        return param(format!("confidence level {level} outside (0,1)"));
    }
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Ok(Summary { n, mean, std: 0.0, half_width: 0.0 });
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.5 + level / 2.0);
    Ok(Summary { n, mean, std, half_width: t * std / (n as f64).sqrt() })
}

/// Two-sided 90% interval.
pub fn ci90(xs: &[f64]) -> Result<Summary> {
    summarize(xs, 0.9)
}
