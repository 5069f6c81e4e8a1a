//! Accuracy statistics: means with normal-approximation 95% intervals, paired
//! differences, and the sign test.

use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const Z95: f64 = 1.96;

/// Mean and 95% confidence half-width of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator).
    pub std: f64,
    /// `1.96 * std / sqrt(n)`.
    pub ci95: f64,
}

impl Summary {
    pub fn lower(&self) -> f64 {
        self.mean - self.ci95
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci95
    }

    /// True when the whole interval lies above zero.
    pub fn excludes_zero_above(&self) -> bool {
        self.lower() > 0.0
    }
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Statistics(alloc::format!(
            "a confidence interval needs at least 2 samples, got {n}"
        )));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let std = libm::sqrt(var);
    Ok(Summary {
        n,
        mean,
        std,
        ci95: Z95 * std / libm::sqrt(n as f64),
    })
}

/// Summary of `a[i] - b[i]`.
pub fn paired_difference(a: &[f64], b: &[f64]) -> Result<Summary> {
    if a.len() != b.len() {
        return Err(Error::Statistics(alloc::format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    summarize(&diffs)
}

/// `P(X >= wins)` for `X ~ Binomial(n, 1/2)`.
pub fn sign_test_p_value(wins: usize, n: usize) -> f64 {
    if wins == 0 {
        return 1.0;
    }
    if wins > n {
        return 0.0;
    }
    let ln_half_n = n as f64 * core::f64::consts::LN_2;
    let ln_fact = |k: usize| libm::lgamma(k as f64 + 1.0);
    (wins..=n)
        .map(|k| libm::exp(ln_fact(n) - ln_fact(k) - ln_fact(n - k) - ln_half_n))
        .sum::<f64>()
        .min(1.0)
}

/// Head-to-head record of method A against method B over paired episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedWins {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// One-sided sign-test p-value for "A wins on a majority of episodes",
    /// with ties counted as not-wins.
    pub p_value: f64,
}

pub fn paired_wins(a: &[f64], b: &[f64]) -> Result<PairedWins> {
    if a.len() != b.len() {
        return Err(Error::Statistics("paired samples differ in length".into()));
    }
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (x, y) in a.iter().zip(b) {
        if x > y {
            wins += 1;
        } else if x < y {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    Ok(PairedWins {
        wins,
        losses,
        ties,
        p_value: sign_test_p_value(wins, a.len()),
    })
}
