//! Natural-log probabilities.
//!
//! Error probabilities in a relay tree shrink doubly exponentially with the
//! level, so every quantity the recursions touch is kept as `ln p`.

use std::f64::consts::{LN_2, LN_10};
use std::fmt;
use std::ops::Mul;

use crate::error::{Error, Result};

/// `ln p` for a probability `p ∈ [0, 1]`. Probability zero is `-inf`.
#[derive(Clone, Copy, PartialEq, PartialOrd)]
pub struct LogProb(f64);

impl LogProb {
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);
    pub const ONE: LogProb = LogProb(0.0);

    pub fn new(ln: f64) -> Result<Self> {
        if ln.is_nan() || ln > 0.0 {
            return Err(Error::arg(format!("log-probability must be <= 0, got {ln}")));
        }
        Ok(LogProb(ln))
    }

    pub fn from_prob(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::arg(format!("probability must lie in [0, 1], got {p}")));
        }
        Ok(LogProb(p.ln()))
    }

    /// Rounding in log-sum-exp can push a sum of probabilities a few ulps
    /// above zero; those are pulled back to exactly one.
    pub(crate) fn clamped(ln: f64) -> Self {
        debug_assert!(!ln.is_nan());
        LogProb(ln.min(0.0))
    }

    #[inline]
    pub fn ln(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    /// `log₂ p⁻¹`, the number of bits of confidence.
    #[inline]
    pub fn bits(self) -> f64 {
        -self.0 / LN_2
    }

    pub fn log10(self) -> f64 {
        self.0 / LN_10
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn is_one(self) -> bool {
        self.0 == 0.0
    }

    /// `ln(1 - p)`.
    pub fn complement(self) -> LogProb {
        LogProb(log1m_exp(self.0))
    }

    /// `p^k`, with `0^0 = 1`.
    pub fn powi(self, k: u64) -> LogProb {
        if k == 0 {
            LogProb::ONE
        } else {
            LogProb(self.0 * k as f64)
        }
    }

    pub fn scale(self, w: f64) -> Result<LogProb> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::arg(format!("weight must lie in [0, 1], got {w}")));
        }
        Ok(self * LogProb(w.ln()))
    }
}

impl Mul for LogProb {
    type Output = LogProb;

    fn mul(self, rhs: LogProb) -> LogProb {
        if self.is_zero() || rhs.is_zero() {
            LogProb::ZERO
        } else {
            LogProb(self.0 + rhs.0)
        }
    }
}

impl fmt::Debug for LogProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LogProb({:e} = exp({}))", self.prob(), self.0)
    }
}

/// `ln(1 - e^x)` for `x <= 0`, switching formulation at `-ln 2`.
pub fn log1m_exp(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x >= 0.0 {
        f64::NEG_INFINITY
    } else if x > -LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `ln Σ e^{x_i}`; empty input gives `-inf`.
pub fn log_sum_exp<I>(terms: I) -> f64
where
    I: IntoIterator<Item = f64>,
{
    let terms: Vec<f64> = terms.into_iter().collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = terms.iter().map(|&t| (t - max).exp()).sum();
    max + sum.ln()
}

pub fn log_sum_exp_probs<I>(terms: I) -> LogProb
where
    I: IntoIterator<Item = LogProb>,
{
    LogProb::clamped(log_sum_exp(terms.into_iter().map(LogProb::ln)))
}

/// Binomial coefficient as an exact integer when it fits in `u128`.
pub fn choose_exact(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // c (n - i) is divisible by i + 1; cancel the common factor first so
        // only the result itself can overflow.
        let d = i as u128 + 1;
        let g = gcd(c, d);
        c = (c / g).checked_mul((n - i) as u128 / (d / g))?;
    }
    Some(c)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `ln C(n, k)`: exact integer coefficients up to `u128`, then a sum of
/// logarithms of the multiplicative form.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if let Some(c) = choose_exact(n, k) {
        return (c as f64).ln();
    }
    let k = k.min(n - k);
    (0..k)
        .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum()
}

pub fn log2_choose(n: u64, k: u64) -> f64 {
    ln_choose(n, k) / LN_2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_positive_and_nan() {
        assert!(LogProb::new(0.1).is_err());
        assert!(LogProb::new(f64::NAN).is_err());
        assert!(LogProb::from_prob(1.5).is_err());
        assert!(LogProb::from_prob(-0.1).is_err());
    }

    #[test]
    fn zero_and_one_round_trip() {
        assert_eq!(LogProb::from_prob(0.0).unwrap(), LogProb::ZERO);
        assert_eq!(LogProb::from_prob(1.0).unwrap(), LogProb::ONE);
        assert_eq!(LogProb::ZERO.prob(), 0.0);
        assert_eq!(LogProb::ZERO.complement(), LogProb::ONE);
        assert_eq!(LogProb::ONE.complement(), LogProb::ZERO);
        assert_eq!(LogProb::ZERO.powi(0), LogProb::ONE);
    }

    #[test]
    fn complement_is_accurate_at_both_ends() {
        let tiny = LogProb::new(-700.0).unwrap();
        assert!((tiny.complement().ln() + (-700.0f64).exp()).abs() < 1e-300);
        let near_one = LogProb::from_prob(1.0 - 1e-12).unwrap();
        let c = near_one.complement().prob();
        assert!((c - 1e-12).abs() / 1e-12 < 1e-3);
    }

    #[test]
    fn log_sum_exp_large_offsets() {
        let v = log_sum_exp([-1000.0, -1000.0]);
        assert!((v - (-1000.0 + LN_2)).abs() < 1e-12);
        assert_eq!(log_sum_exp(std::iter::empty()), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp([f64::NEG_INFINITY, -3.0]), -3.0);
    }

    #[test]
    fn choose_matches_pascal() {
        assert_eq!(choose_exact(10, 5), Some(252));
        assert_eq!(choose_exact(4, 7), Some(0));
        assert_eq!(choose_exact(128, 64), Some(23951146041928082866135587776380551750));
        for n in 1..60u64 {
            for k in 1..n {
                let lhs = choose_exact(n, k).unwrap();
                let rhs = choose_exact(n - 1, k - 1).unwrap() + choose_exact(n - 1, k).unwrap();
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn ln_choose_beyond_u128() {
        // Reference values from 30-digit arithmetic.
        assert!((ln_choose(200, 100) - 135.753236081278493).abs() < 1e-12);
        assert!((ln_choose(1000, 500) - 689.467261567851180).abs() < 1e-11);
    }
}
