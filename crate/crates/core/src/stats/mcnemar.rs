use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{check_aligned, StatsError};

/// Below this many discordant pairs the exact binomial test is used.
const EXACT_BELOW: u64 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McNemarMethod {
    Exact,
    ChiSquare,
}

impl McNemarMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::ChiSquare => "chi_square",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// A correct, B wrong.
    pub b: u64,
    /// A wrong, B correct.
    pub c: u64,
    pub p_value: f64,
    pub method: McNemarMethod,
    pub stars: String,
}

pub fn stars(p: f64) -> &'static str {
    if p <= 0.001 {
        "***"
    } else if p <= 0.01 {
        "**"
    } else if p <= 0.05 {
        "*"
    } else {
        "ns"
    }
}

pub fn mcnemar_counts(correct_a: &[bool], correct_b: &[bool]) -> Result<(u64, u64), StatsError> {
    check_aligned(correct_a, correct_b)?;
    let mut b = 0;
    let mut c = 0;
    for (&x, &y) in correct_a.iter().zip(correct_b) {
        match (x, y) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok((b, c))
}

/// Two-sided exact binomial p-value on the discordant pairs.
pub fn mcnemar_exact(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let k = b.min(c);
    // P(X <= k) for X ~ Bin(n, 1/2), accumulated in log space.
    let ln_half_n = n as f64 * std::f64::consts::LN_2;
    let mut ln_choose = 0.0f64;
    let mut tail = 0.0f64;
    for i in 0..=k {
        if i > 0 {
            ln_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        tail += (ln_choose - ln_half_n).exp();
    }
    (2.0 * tail).min(1.0)
}

/// Continuity-corrected chi-square statistic on one degree of freedom.
pub fn mcnemar_chi_square(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let diff = (b as f64 - c as f64).abs() - 1.0;
    let stat = diff.max(0.0).powi(2) / n as f64;
    let dist = ChiSquared::new(1.0).expect("one degree of freedom");
    (1.0 - dist.cdf(stat)).clamp(0.0, 1.0)
}

pub fn mcnemar(correct_a: &[bool], correct_b: &[bool]) -> Result<McNemarResult, StatsError> {
    let (b, c) = mcnemar_counts(correct_a, correct_b)?;
    let (p_value, method) = if b + c < EXACT_BELOW {
        (mcnemar_exact(b, c), McNemarMethod::Exact)
    } else {
        (mcnemar_chi_square(b, c), McNemarMethod::ChiSquare)
    };
    Ok(McNemarResult {
        b,
        c,
        p_value,
        method,
        stars: stars(p_value).to_string(),
    })
}
