//! Brute-force fusion by enumerating all `2^M` child-message vectors.
//!
//! Nothing here reuses the binomial machinery of [`crate::kernel`]: each
//! vector's probability is a plain product of per-child Bernoulli factors,
//! summed in linear domain with compensated summation.

use std::fmt;

use crate::error::{Error, Result};
use crate::kernel::{ErrorPair, Priors, TiePhase};
use crate::logprob::LogProb;

pub const MAX_ENUMERATION_ARITY: u32 = 20;

/// Map from a message vector (bit `t` = message of child `t`) to the
/// probability that the fusing agent outputs "1".
pub struct VectorRule {
    decide: Box<dyn Fn(u32) -> f64 + Send + Sync>,
}

impl fmt::Debug for VectorRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("VectorRule")
    }
}

impl VectorRule {
    pub fn from_fn<F>(decide: F) -> Self
    where
        F: Fn(u32) -> f64 + Send + Sync + 'static,
    {
        VectorRule {
            decide: Box::new(decide),
        }
    }

    pub fn decide(&self, vector: u32) -> f64 {
        (self.decide)(vector)
    }

    /// Single child passed straight through.
    pub fn identity() -> Self {
        Self::from_fn(|v| (v & 1) as f64)
    }

    /// "1" when more than half the messages are "1"; an exact tie (even `m`)
    /// outputs "1" with probability `tie_weight`.
    pub fn majority(m: u32, tie_weight: f64) -> Self {
        Self::from_fn(move |v| {
            let ones = v.count_ones();
            if 2 * ones > m {
                1.0
            } else if 2 * ones == m {
                tie_weight
            } else {
                0.0
            }
        })
    }

    pub fn alternating(m: u32, phase: TiePhase) -> Self {
        let w = match phase {
            TiePhase::TiesToOne => 1.0,
            TiePhase::TiesToZero => 0.0,
        };
        Self::majority(m, w)
    }

    /// The same rule applied after reordering the children:
    /// child `t` of the input is read at position `perm[t]`.
    pub fn permuted(self, perm: Vec<u32>) -> Self {
        Self::from_fn(move |v| {
            let mut w = 0u32;
            for (t, &to) in perm.iter().enumerate() {
                if v >> t & 1 == 1 {
                    w |= 1 << to;
                }
            }
            self.decide(w)
        })
    }
}

/// Neumaier's compensated sum.
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

fn check_arity(m: u32) -> Result<()> {
    if m == 0 || m > MAX_ENUMERATION_ARITY {
        return Err(Error::arg(format!(
            "enumeration arity must lie in 1..={MAX_ENUMERATION_ARITY}, got {m}"
        )));
    }
    Ok(())
}

/// Probability of `vector` when each child is "1" independently with
/// probability `p_one`.
fn vector_prob(vector: u32, m: u32, p_one: f64) -> f64 {
    let p_zero = 1.0 - p_one;
    (0..m)
        .map(|t| if vector >> t & 1 == 1 { p_one } else { p_zero })
        .product()
}

fn to_pair(alpha: f64, beta: f64) -> Result<ErrorPair> {
    Ok(ErrorPair::new(
        LogProb::from_prob(alpha.clamp(0.0, 1.0))?,
        LogProb::from_prob(beta.clamp(0.0, 1.0))?,
    ))
}

/// `α' = Σ P0(v) d(v)`, `β' = Σ P1(v) (1 − d(v))` over all `2^M` vectors,
/// with children "1" w.p. `α` under H0 and `1 − β` under H1.
pub fn enumerate_step(pair: ErrorPair, m: u32, rule: &VectorRule) -> Result<ErrorPair> {
    check_arity(m)?;
    let a = pair.alpha_prob();
    let one_under_h1 = 1.0 - pair.beta_prob();
    let mut alpha = CompensatedSum::default();
    let mut beta = CompensatedSum::default();
    for v in 0..(1u32 << m) {
        let d = rule.decide(v);
        if !(0.0..=1.0).contains(&d) {
            return Err(Error::arg(format!(
                "vector rule returned {d} for vector {v:#b}"
            )));
        }
        alpha.add(vector_prob(v, m, a) * d);
        beta.add(vector_prob(v, m, one_under_h1) * (1.0 - d));
    }
    to_pair(alpha.value(), beta.value())
}

/// Per-vector MAP decision: H1 iff `π1 P1(v) >= π0 P0(v)` (ties to H1).
pub fn map_rule(pair: ErrorPair, priors: Priors, m: u32) -> VectorRule {
    let a = pair.alpha_prob();
    let b = pair.beta_prob();
    let ln = f64::ln;
    // ln P(message | hypothesis) for a "1" and a "0".
    let (h0_one, h0_zero) = (ln(a), ln(1.0 - a));
    let (h1_one, h1_zero) = (ln(1.0 - b), ln(b));
    let (w0, w1) = (ln(priors.pi0), ln(priors.pi1));
    VectorRule::from_fn(move |v| {
        let mut l0 = w0;
        let mut l1 = w1;
        for t in 0..m {
            if v >> t & 1 == 1 {
                l0 += h0_one;
                l1 += h1_one;
            } else {
                l0 += h0_zero;
                l1 += h1_zero;
            }
        }
        let tie = l0 == l1 || (l0 - l1).abs() <= 1e-12 * (l0.abs() + l1.abs());
        if l1 > l0 || tie {
            1.0
        } else {
            0.0
        }
    })
}

/// Fusion with the per-vector MAP rule, which minimizes the total error over
/// all deterministic vector rules.
pub fn optimal_step(pair: ErrorPair, priors: Priors, m: u32) -> Result<ErrorPair> {
    check_arity(m)?;
    enumerate_step(pair, m, &map_rule(pair, priors, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a: f64, b: f64) -> ErrorPair {
        ErrorPair::from_probs(a, b).unwrap()
    }

    fn close(x: f64, y: f64) -> bool {
        (x - y).abs() <= 1e-13 * y.abs().max(1e-300)
    }

    #[test]
    fn enumerate_examples() {
        let p = enumerate_step(pair(0.1, 0.1), 3, &VectorRule::majority(3, 0.5)).unwrap();
        assert!(close(p.alpha_prob(), 0.028) && close(p.beta_prob(), 0.028));

        let p = enumerate_step(pair(0.1, 0.1), 1, &VectorRule::identity()).unwrap();
        assert!(close(p.alpha_prob(), 0.1) && close(p.beta_prob(), 0.1));

        let p = enumerate_step(pair(0.1, 0.1), 4, &VectorRule::majority(4, 0.5)).unwrap();
        assert!(close(p.alpha_prob(), 0.028) && close(p.beta_prob(), 0.028));
    }

    #[test]
    fn optimal_examples() {
        let eq = Priors::equal();
        let p = optimal_step(pair(0.01, 0.3), eq, 3).unwrap();
        assert!(close(p.alpha_prob(), 0.029701) && close(p.beta_prob(), 0.027));

        let p = optimal_step(pair(0.1, 0.1), eq, 3).unwrap();
        assert!(close(p.alpha_prob(), 0.028) && close(p.beta_prob(), 0.028));

        let skewed = Priors::new(0.9, 0.1).unwrap();
        let p = optimal_step(pair(0.5, 0.5), skewed, 2).unwrap();
        assert_eq!(p.alpha_prob(), 0.0);
        assert_eq!(p.beta_prob(), 1.0);
    }

    #[test]
    fn arity_cap() {
        let rule = VectorRule::majority(21, 0.5);
        assert!(enumerate_step(pair(0.1, 0.1), 21, &rule).is_err());
        assert!(enumerate_step(pair(0.1, 0.1), 0, &rule).is_err());
    }

    #[test]
    fn rejects_out_of_range_rule_output() {
        let bad = VectorRule::from_fn(|_| 1.5);
        assert!(enumerate_step(pair(0.1, 0.1), 2, &bad).is_err());
    }

    #[test]
    fn permuting_children_changes_nothing() {
        let p = pair(0.17, 0.33);
        let base = enumerate_step(p, 5, &VectorRule::majority(5, 0.5)).unwrap();
        let shuffled = VectorRule::majority(5, 0.5).permuted(vec![3, 0, 4, 1, 2]);
        let other = enumerate_step(p, 5, &shuffled).unwrap();
        assert!(close(other.alpha_prob(), base.alpha_prob()));
        assert!(close(other.beta_prob(), base.beta_prob()));

        // A rule that is not symmetric in its children: child 0 is a dictator.
        let dictator = VectorRule::from_fn(|v| (v & 1) as f64);
        let d0 = enumerate_step(p, 4, &dictator).unwrap();
        let d1 = enumerate_step(p, 4, &VectorRule::from_fn(|v| (v & 1) as f64).permuted(vec![2, 0, 1, 3])).unwrap();
        assert!(close(d0.alpha_prob(), 0.17) && close(d1.alpha_prob(), 0.17));
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1.0);
        for _ in 0..1000 {
            s.add(1e-17);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-14).abs() < 1e-26);
    }
}
