//! Exact evolution of Type I / Type II error pairs through fusion levels.
//!
//! Every agent at a level sees `M` i.i.d. binary messages with the same
//! `(α, β)`, so the number `s` of "1" messages is `Binomial(M, α)` under H0
//! and `Binomial(M, 1 − β)` under H1. Each rule below is a function of `s`
//! alone and every output probability is a binomial tail sum, evaluated in
//! log domain.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::logprob::{ln_choose, log_sum_exp, log_sum_exp_probs, LogProb};

/// Relative tolerance under which a likelihood-ratio comparison counts as an
/// exact tie.
const LRT_TIE_RTOL: f64 = 1e-12;

/// Type I (`alpha`, false alarm) and Type II (`beta`, missed detection) error
/// probabilities shared by every message at one level.
#[derive(Clone, Copy, PartialEq)]
pub struct ErrorPair {
    pub alpha: LogProb,
    pub beta: LogProb,
}

impl ErrorPair {
    pub fn new(alpha: LogProb, beta: LogProb) -> Self {
        ErrorPair { alpha, beta }
    }

    pub fn from_probs(alpha: f64, beta: f64) -> Result<Self> {
        Ok(ErrorPair {
            alpha: LogProb::from_prob(alpha)?,
            beta: LogProb::from_prob(beta)?,
        })
    }

    pub fn symmetric(p: f64) -> Result<Self> {
        Self::from_probs(p, p)
    }

    pub fn alpha_prob(&self) -> f64 {
        self.alpha.prob()
    }

    pub fn beta_prob(&self) -> f64 {
        self.beta.prob()
    }

    /// `α + β < 1`: the message carries information about the hypothesis.
    pub fn is_informative(&self) -> bool {
        self.alpha_prob() + self.beta_prob() < 1.0
    }

    fn is_interior(&self) -> bool {
        let inside = |p: LogProb| !p.is_zero() && !p.is_one();
        inside(self.alpha) && inside(self.beta)
    }
}

impl fmt::Debug for ErrorPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ErrorPair(α={:e}, β={:e})",
            self.alpha_prob(),
            self.beta_prob()
        )
    }
}

/// Prior probabilities of H0 and H1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Priors {
    pub pi0: f64,
    pub pi1: f64,
}

impl Priors {
    /// Accepts degenerate priors (one of them zero); the likelihood-ratio
    /// test and its bound additionally require both to be positive.
    pub fn new(pi0: f64, pi1: f64) -> Result<Self> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if !ok(pi0) || !ok(pi1) || (pi0 + pi1 - 1.0).abs() > 1e-12 {
            return Err(Error::arg(format!(
                "priors must be probabilities summing to one, got ({pi0}, {pi1})"
            )));
        }
        Ok(Priors { pi0, pi1 })
    }

    pub fn from_pi0(pi0: f64) -> Result<Self> {
        Self::new(pi0, 1.0 - pi0)
    }

    pub fn equal() -> Self {
        Priors { pi0: 0.5, pi1: 0.5 }
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.pi0 > 0.0 && self.pi1 > 0.0
    }

    pub(crate) fn require_nondegenerate(&self) -> Result<()> {
        if self.is_nondegenerate() {
            Ok(())
        } else {
            Err(Error::arg(format!(
                "priors must both be strictly positive, got ({}, {})",
                self.pi0, self.pi1
            )))
        }
    }

    pub fn min(&self) -> f64 {
        self.pi0.min(self.pi1)
    }

    pub fn max(&self) -> f64 {
        self.pi0.max(self.pi1)
    }
}

/// Which way an even-`M` tie is resolved at one level of the alternating
/// strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum TiePhase {
    TiesToOne,
    TiesToZero,
}

impl TiePhase {
    pub fn flip(self) -> Self {
        match self {
            TiePhase::TiesToOne => TiePhase::TiesToZero,
            TiePhase::TiesToZero => TiePhase::TiesToOne,
        }
    }
}

/// Aggregation rule used by every agent at one level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FusionRule {
    /// Strict majority, odd `M`.
    MajorityOdd,
    /// Majority with a Bernoulli(`tie_prob`) coin deciding "1" on ties.
    MajorityEven { tie_prob: f64 },
    /// Majority with a deterministic tie decision for this level.
    Alternating(TiePhase),
    /// Likelihood-ratio test against the threshold `π0 / π1`.
    BayesianLrt(Priors),
    /// Forward the count of "1" leaves; never a binary-output rule.
    Summation,
}

impl FusionRule {
    /// Majority rule appropriate to the parity of `m` (fair coin for even `m`).
    pub fn majority_for(m: u32) -> Self {
        if m % 2 == 1 {
            FusionRule::MajorityOdd
        } else {
            FusionRule::MajorityEven { tie_prob: 0.5 }
        }
    }

    pub fn validate(&self, m: u32) -> Result<()> {
        match *self {
            FusionRule::MajorityOdd => {
                if m < 3 || m % 2 == 0 {
                    return Err(Error::arg(format!("MajorityOdd needs odd M >= 3, got {m}")));
                }
            }
            FusionRule::MajorityEven { tie_prob } => {
                if m < 2 || m % 2 == 1 {
                    return Err(Error::arg(format!("MajorityEven needs even M >= 2, got {m}")));
                }
                if !(tie_prob > 0.0 && tie_prob < 1.0) {
                    return Err(Error::arg(format!(
                        "tie probability must lie in (0, 1), got {tie_prob}"
                    )));
                }
            }
            FusionRule::Alternating(_) => {
                if m < 2 || m % 2 == 1 {
                    return Err(Error::arg(format!("Alternating needs even M >= 2, got {m}")));
                }
            }
            FusionRule::BayesianLrt(priors) => {
                if m < 1 {
                    return Err(Error::arg("LRT needs M >= 1"));
                }
                priors.require_nondegenerate()?;
            }
            FusionRule::Summation => {
                return Err(Error::arg("Summation does not produce a binary message"));
            }
        }
        Ok(())
    }

    /// One fusion step over `m` children.
    pub fn apply(&self, pair: ErrorPair, m: u32) -> Result<ErrorPair> {
        self.validate(m)?;
        match *self {
            FusionRule::MajorityOdd => majority_step_odd(pair, m),
            FusionRule::MajorityEven { tie_prob } => majority_step_even(pair, m, tie_prob),
            FusionRule::Alternating(phase) => alternating_step(pair, m, phase),
            FusionRule::BayesianLrt(priors) => lrt_step(pair, priors, m),
            FusionRule::Summation => unreachable!("rejected by validate"),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FusionRule::MajorityOdd => "majority-odd",
            FusionRule::MajorityEven { .. } => "majority-even",
            FusionRule::Alternating(TiePhase::TiesToOne) => "alternating-one",
            FusionRule::Alternating(TiePhase::TiesToZero) => "alternating-zero",
            FusionRule::BayesianLrt(_) => "lrt",
            FusionRule::Summation => "summation",
        }
    }
}

/// A fusion level: the rule and the number of children each agent fuses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stage {
    pub arity: u32,
    pub rule: FusionRule,
}

impl Stage {
    pub fn new(arity: u32, rule: FusionRule) -> Self {
        Stage { arity, rule }
    }

    pub fn repeat(arity: u32, rule: FusionRule, levels: usize) -> Vec<Stage> {
        vec![Stage::new(arity, rule); levels]
    }

    /// Ties resolved alternately, starting with `first` at level 1.
    pub fn alternating(arity: u32, levels: usize, first: TiePhase) -> Vec<Stage> {
        let mut phase = first;
        (0..levels)
            .map(|_| {
                let s = Stage::new(arity, FusionRule::Alternating(phase));
                phase = phase.flip();
                s
            })
            .collect()
    }
}

/// Error pairs from the leaves (`k = 0`) to the root, with the total error
/// `L_k = π0 α_k + π1 β_k` at every level.
#[derive(Clone, Debug)]
pub struct LevelTrace {
    pub pairs: Vec<ErrorPair>,
    pub rules: Vec<Stage>,
    pub total: Vec<LogProb>,
    pub priors: Priors,
}

impl LevelTrace {
    pub fn height(&self) -> usize {
        self.rules.len()
    }

    pub fn root(&self) -> ErrorPair {
        *self.pairs.last().expect("trace always holds the leaf pair")
    }

    pub fn root_total(&self) -> LogProb {
        *self.total.last().expect("trace always holds the leaf total")
    }
}

/// Log of the Binomial(`m`, `p`) probability mass at `s`.
fn ln_binom_pmf(m: u32, s: u32, p: LogProb, q: LogProb) -> f64 {
    let m64 = m as u64;
    let s64 = s as u64;
    (p.powi(s64) * q.powi(m64 - s64)).ln() + ln_choose(m64, s64)
}

/// `ln Σ_{s=lo}^{hi} C(m, s) p^s (1 − p)^{m−s}`.
pub fn binom_tail(m: u32, s_lo: u32, s_hi: u32, p: LogProb) -> Result<LogProb> {
    if m < 1 || s_lo > s_hi || s_hi > m {
        return Err(Error::arg(format!(
            "binomial tail needs 0 <= s_lo <= s_hi <= M, M >= 1; got M={m}, [{s_lo}, {s_hi}]"
        )));
    }
    let q = p.complement();
    Ok(LogProb::clamped(log_sum_exp(
        (s_lo..=s_hi).map(|s| ln_binom_pmf(m, s, p, q)),
    )))
}

fn require_parity(m: u32, odd: bool) -> Result<()> {
    if odd && (m < 3 || m % 2 == 0) {
        return Err(Error::arg(format!("expected odd M >= 3, got {m}")));
    }
    if !odd && (m < 2 || m % 2 == 1) {
        return Err(Error::arg(format!("expected even M >= 2, got {m}")));
    }
    Ok(())
}

/// `α' = f(α)`, `β' = f(β)` with `f` the upper tail from `(M+1)/2`.
pub fn majority_step_odd(pair: ErrorPair, m: u32) -> Result<ErrorPair> {
    require_parity(m, true)?;
    let lo = m.div_ceil(2);
    Ok(ErrorPair {
        alpha: binom_tail(m, lo, m, pair.alpha)?,
        beta: binom_tail(m, lo, m, pair.beta)?,
    })
}

fn tie_mass(m: u32, p: LogProb) -> LogProb {
    let h = m / 2;
    LogProb::clamped(ln_binom_pmf(m, h, p, p.complement()))
}

/// Even-`M` majority where ties output "1" with probability `tie_prob`.
///
/// A tie resolved to "1" is a false alarm under H0 and a correct decision
/// under H1, so the tie mass enters α with weight `tie_prob` and β with
/// `1 − tie_prob`. `tie_prob ∈ {0, 1}` reproduces the alternating phases.
pub fn majority_step_even(pair: ErrorPair, m: u32, tie_prob: f64) -> Result<ErrorPair> {
    require_parity(m, false)?;
    if !(0.0..=1.0).contains(&tie_prob) {
        return Err(Error::arg(format!("tie probability must lie in [0, 1], got {tie_prob}")));
    }
    if m == 2 && tie_prob == 0.5 {
        // p² + p(1 − p) = p; returned as is rather than up to rounding.
        return Ok(pair);
    }
    let h = m / 2;
    let strict = |p: LogProb| binom_tail(m, h + 1, m, p);
    let alpha = log_sum_exp_probs([
        strict(pair.alpha)?,
        tie_mass(m, pair.alpha).scale(tie_prob)?,
    ]);
    let beta = log_sum_exp_probs([
        strict(pair.beta)?,
        tie_mass(m, pair.beta).scale(1.0 - tie_prob)?,
    ]);
    Ok(ErrorPair { alpha, beta })
}

/// One level of the alternating strategy. `TiesToOne` includes the tie in
/// α's tail (from `M/2`) and excludes it from β's (from `M/2 + 1`);
/// `TiesToZero` mirrors that.
pub fn alternating_step(pair: ErrorPair, m: u32, phase: TiePhase) -> Result<ErrorPair> {
    require_parity(m, false)?;
    let h = m / 2;
    let (lo_alpha, lo_beta) = match phase {
        TiePhase::TiesToOne => (h, h + 1),
        TiePhase::TiesToZero => (h + 1, h),
    };
    Ok(ErrorPair {
        alpha: binom_tail(m, lo_alpha, m, pair.alpha)?,
        beta: binom_tail(m, lo_beta, m, pair.beta)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Hypothesis {
    H0,
    H1,
}

/// LRT decision for each count `s = 0..=M` of "1" messages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecisionTable(pub Vec<Hypothesis>);

impl DecisionTable {
    pub fn decide(&self, s: usize) -> Hypothesis {
        self.0[s]
    }

    pub fn arity(&self) -> usize {
        self.0.len() - 1
    }

    /// `Some(s*)` when the table is "H1 iff s >= s*" (`s* = M + 1` means
    /// always H0).
    pub fn threshold(&self) -> Option<usize> {
        let first = self
            .0
            .iter()
            .position(|&d| d == Hypothesis::H1)
            .unwrap_or(self.0.len());
        self.0[first..]
            .iter()
            .all(|&d| d == Hypothesis::H1)
            .then_some(first)
    }
}

/// Decide H1 at count `s` iff `(1−β)^s β^{M−s} π1 >= α^s (1−α)^{M−s} π0`.
///
/// Evaluated per count without assuming monotonicity, so inverted messages
/// (`α + β >= 1`) are handled too. Exact ties decide H1.
pub fn lrt_decision_rule(pair: ErrorPair, priors: Priors, m: u32) -> Result<DecisionTable> {
    if m < 1 {
        return Err(Error::arg("LRT needs M >= 1"));
    }
    if !pair.is_interior() {
        return Err(Error::arg(format!(
            "likelihood ratio undefined for boundary error probabilities {pair:?}"
        )));
    }
    priors.require_nondegenerate()?;

    // Per-message log-likelihood ratios for a "1" and for a "0".
    let llr_one = pair.beta.complement().ln() - pair.alpha.ln();
    let llr_zero = pair.alpha.complement().ln() - pair.beta.ln();
    let threshold = priors.pi0.ln() - priors.pi1.ln();

    let table = (0..=m)
        .map(|s| {
            let up = s as f64 * llr_one;
            let down = (m - s) as f64 * llr_zero;
            let diff = up - down - threshold;
            let scale = up.abs() + down.abs() + threshold.abs();
            if diff >= 0.0 || diff.abs() <= LRT_TIE_RTOL * scale {
                Hypothesis::H1
            } else {
                Hypothesis::H0
            }
        })
        .collect();
    Ok(DecisionTable(table))
}

/// Error pair after fusing with an arbitrary per-count decision table.
pub fn apply_decision_table(pair: ErrorPair, table: &DecisionTable) -> Result<ErrorPair> {
    let m = table.arity() as u32;
    if m < 1 {
        return Err(Error::arg("decision table needs at least one child"));
    }
    let a = pair.alpha;
    let not_a = a.complement();
    let not_b = pair.beta.complement();
    let b = pair.beta;
    let alpha = log_sum_exp(
        (0..=m)
            .filter(|&s| table.decide(s as usize) == Hypothesis::H1)
            .map(|s| ln_binom_pmf(m, s, a, not_a)),
    );
    let beta = log_sum_exp(
        (0..=m)
            .filter(|&s| table.decide(s as usize) == Hypothesis::H0)
            .map(|s| ln_binom_pmf(m, s, not_b, b)),
    );
    Ok(ErrorPair {
        alpha: LogProb::clamped(alpha),
        beta: LogProb::clamped(beta),
    })
}

/// Bayesian LRT fusion: minimizes `π0 α' + π1 β'` over per-count rules.
pub fn lrt_step(pair: ErrorPair, priors: Priors, m: u32) -> Result<ErrorPair> {
    let table = lrt_decision_rule(pair, priors, m)?;
    apply_decision_table(pair, &table)
}

/// `ln(π0 α + π1 β)`.
pub fn total_error(pair: ErrorPair, priors: Priors) -> LogProb {
    let w0 = LogProb::clamped(priors.pi0.ln());
    let w1 = LogProb::clamped(priors.pi1.ln());
    log_sum_exp_probs([w0 * pair.alpha, w1 * pair.beta])
}

/// Runs `schedule` from the leaf pair upward.
pub fn propagate(pair0: ErrorPair, schedule: &[Stage], priors: Priors) -> Result<LevelTrace> {
    if schedule.is_empty() {
        return Err(Error::arg("schedule must contain at least one level"));
    }
    let mut pairs = Vec::with_capacity(schedule.len() + 1);
    let mut total = Vec::with_capacity(schedule.len() + 1);
    pairs.push(pair0);
    total.push(total_error(pair0, priors));
    let mut current = pair0;
    for (i, stage) in schedule.iter().enumerate() {
        current = stage
            .rule
            .apply(current, stage.arity)
            .map_err(|e| e.at_level(i + 1))?;
        pairs.push(current);
        total.push(total_error(current, priors));
    }
    Ok(LevelTrace {
        pairs,
        rules: schedule.to_vec(),
        total,
        priors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(p: f64) -> LogProb {
        LogProb::from_prob(p).unwrap()
    }

    fn pair(a: f64, b: f64) -> ErrorPair {
        ErrorPair::from_probs(a, b).unwrap()
    }

    fn close(actual: f64, expected: f64, rtol: f64) -> bool {
        if expected == 0.0 {
            actual == 0.0
        } else {
            ((actual - expected) / expected).abs() <= rtol
        }
    }

    #[track_caller]
    fn assert_pair(p: ErrorPair, a: f64, b: f64) {
        assert!(
            close(p.alpha_prob(), a, 1e-12) && close(p.beta_prob(), b, 1e-12),
            "{p:?} != ({a}, {b})"
        );
    }

    #[test]
    fn binom_tail_examples() {
        assert!(binom_tail(4, 0, 4, lp(0.1)).unwrap().ln().abs() < 1e-15);
        assert!(close(binom_tail(4, 2, 4, lp(0.1)).unwrap().prob(), 0.0523, 1e-12));
        assert!(close(binom_tail(3, 2, 3, lp(0.1)).unwrap().prob(), 0.028, 1e-12));
    }

    #[test]
    fn binom_tail_rejects_bad_ranges() {
        assert!(binom_tail(4, 3, 2, lp(0.1)).is_err());
        assert!(binom_tail(4, 0, 5, lp(0.1)).is_err());
        assert!(binom_tail(0, 0, 0, lp(0.1)).is_err());
    }

    #[test]
    fn binom_tail_at_boundaries() {
        assert!(binom_tail(5, 3, 5, LogProb::ZERO).unwrap().is_zero());
        assert!(binom_tail(5, 0, 0, LogProb::ZERO).unwrap().is_one());
        assert!(binom_tail(5, 5, 5, LogProb::ONE).unwrap().is_one());
        assert!(binom_tail(5, 0, 4, LogProb::ONE).unwrap().is_zero());
    }

    #[test]
    fn majority_odd_examples() {
        assert_pair(majority_step_odd(pair(0.1, 0.1), 3).unwrap(), 0.028, 0.028);
        assert_pair(majority_step_odd(pair(0.1, 0.1), 5).unwrap(), 0.00856, 0.00856);
        let perfect = majority_step_odd(pair(0.0, 0.0), 3).unwrap();
        assert!(perfect.alpha.is_zero() && perfect.beta.is_zero());
        assert!(majority_step_odd(pair(0.1, 0.1), 4).is_err());
    }

    #[test]
    fn majority_even_examples() {
        assert_pair(majority_step_even(pair(0.1, 0.1), 2, 0.5).unwrap(), 0.1, 0.1);
        assert_pair(majority_step_even(pair(0.1, 0.1), 4, 0.5).unwrap(), 0.028, 0.028);
        assert_pair(majority_step_even(pair(0.1, 0.1), 2, 0.0).unwrap(), 0.01, 0.19);
        assert!(majority_step_even(pair(0.1, 0.1), 3, 0.5).is_err());
        assert!(majority_step_even(pair(0.1, 0.1), 4, 1.5).is_err());
    }

    #[test]
    fn alternating_examples() {
        let one = alternating_step(pair(0.1, 0.1), 4, TiePhase::TiesToOne).unwrap();
        assert_pair(one, 0.0523, 0.0037);
        let zero = alternating_step(pair(0.1, 0.1), 4, TiePhase::TiesToZero).unwrap();
        assert_pair(zero, 0.0037, 0.0523);
        let two = alternating_step(
            alternating_step(pair(0.1, 0.1), 2, TiePhase::TiesToOne).unwrap(),
            2,
            TiePhase::TiesToZero,
        )
        .unwrap();
        assert_pair(two, 0.0361, 0.0199);
        assert!(alternating_step(pair(0.1, 0.1), 5, TiePhase::TiesToOne).is_err());
    }

    #[test]
    fn alternating_matches_extreme_tie_probabilities() {
        let p = pair(0.23, 0.07);
        for m in [2, 4, 6] {
            let a = alternating_step(p, m, TiePhase::TiesToOne).unwrap();
            let b = majority_step_even(p, m, 1.0).unwrap();
            assert!(close(a.alpha_prob(), b.alpha_prob(), 1e-13));
            assert!(close(a.beta_prob(), b.beta_prob(), 1e-13));
        }
    }

    #[test]
    fn lrt_decision_examples() {
        use Hypothesis::*;
        let t = lrt_decision_rule(pair(0.1, 0.1), Priors::equal(), 3).unwrap();
        assert_eq!(t.0, vec![H0, H0, H1, H1]);
        assert_eq!(t.threshold(), Some(2));

        let t = lrt_decision_rule(pair(0.01, 0.3), Priors::equal(), 3).unwrap();
        assert_eq!(t.threshold(), Some(1));

        let skewed = Priors::new(0.9, 0.1).unwrap();
        for m in 1..8 {
            let t = lrt_decision_rule(pair(0.5, 0.5), skewed, m).unwrap();
            assert!(t.0.iter().all(|&d| d == H0));
            assert_eq!(t.threshold(), Some(m as usize + 1));
        }
    }

    #[test]
    fn lrt_exact_tie_goes_to_h1() {
        // α = β with equal priors ties exactly at s = M/2.
        let t = lrt_decision_rule(pair(0.3, 0.3), Priors::equal(), 4).unwrap();
        assert_eq!(t.threshold(), Some(2));
    }

    #[test]
    fn lrt_inverted_messages_flip_the_table() {
        let t = lrt_decision_rule(pair(0.8, 0.7), Priors::equal(), 3).unwrap();
        assert_eq!(t.0[0], Hypothesis::H1);
        assert_eq!(t.0[3], Hypothesis::H0);
        assert_eq!(t.threshold(), None);
    }

    #[test]
    fn lrt_rejects_boundaries() {
        assert!(lrt_decision_rule(pair(0.0, 0.1), Priors::equal(), 3).is_err());
        assert!(lrt_decision_rule(pair(0.1, 1.0), Priors::equal(), 3).is_err());
        let degenerate = Priors::new(1.0, 0.0).unwrap();
        assert!(lrt_step(pair(0.1, 0.1), degenerate, 3).is_err());
    }

    #[test]
    fn lrt_step_examples() {
        let eq = Priors::equal();
        assert_pair(lrt_step(pair(0.1, 0.1), eq, 3).unwrap(), 0.028, 0.028);
        assert_pair(lrt_step(pair(0.01, 0.3), eq, 3).unwrap(), 0.029701, 0.027);
        assert_pair(lrt_step(pair(0.05, 0.05), eq, 3).unwrap(), 0.00725, 0.00725);
    }

    #[test]
    fn total_error_examples() {
        let degenerate = Priors::new(1.0, 0.0).unwrap();
        assert!(close(total_error(pair(0.2, 0.4), degenerate).prob(), 0.2, 1e-15));
        assert!(close(total_error(pair(0.1, 0.1), Priors::equal()).prob(), 0.1, 1e-15));
        assert!(close(
            total_error(pair(0.029701, 0.027), Priors::equal()).prob(),
            0.0283505,
            1e-12
        ));
    }

    #[test]
    fn propagate_odd_majority_trace() {
        let trace = propagate(
            pair(0.1, 0.1),
            &Stage::repeat(3, FusionRule::MajorityOdd, 4),
            Priors::equal(),
        )
        .unwrap();
        // Iterating f(α) = 3α² − 2α³ in exact rationals.
        let expected = [
            0.1,
            0.028,
            0.002308096,
            1.5957329563022711e-5,
            7.639009737159088e-10,
        ];
        for (p, e) in trace.pairs.iter().zip(expected) {
            assert!(close(p.alpha_prob(), e, 1e-12), "{p:?} vs {e}");
        }
        assert_eq!(trace.height(), 4);
        assert!((trace.root_total().bits() - 30.285895318450979).abs() < 1e-9);
    }

    #[test]
    fn propagate_binary_majority_is_a_fixed_point() {
        let trace = propagate(
            pair(0.1, 0.1),
            &Stage::repeat(2, FusionRule::MajorityEven { tie_prob: 0.5 }, 12),
            Priors::equal(),
        )
        .unwrap();
        for p in &trace.pairs {
            assert!(close(p.alpha_prob(), 0.1, 1e-14));
        }
    }

    #[test]
    fn propagate_alternating_pair() {
        let trace = propagate(
            pair(0.1, 0.1),
            &Stage::alternating(2, 2, TiePhase::TiesToOne),
            Priors::equal(),
        )
        .unwrap();
        assert_pair(trace.root(), 0.0361, 0.0199);
    }

    #[test]
    fn propagate_reports_failing_level() {
        let schedule = vec![
            Stage::new(3, FusionRule::MajorityOdd),
            Stage::new(4, FusionRule::MajorityOdd),
        ];
        match propagate(pair(0.1, 0.1), &schedule, Priors::equal()) {
            Err(Error::AtLevel { level, .. }) => assert_eq!(level, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(propagate(pair(0.1, 0.1), &[], Priors::equal()).is_err());
    }

    #[test]
    fn deep_traces_do_not_underflow() {
        let trace = propagate(
            pair(0.1, 0.2),
            &Stage::repeat(3, FusionRule::MajorityOdd, 30),
            Priors::equal(),
        )
        .unwrap();
        let root = trace.root();
        assert!(root.alpha_prob() == 0.0 && root.alpha.ln().is_finite());
        assert!(root.alpha.bits() > 1e6);
        for w in trace.pairs.windows(2) {
            assert!(w[1].alpha.ln() < w[0].alpha.ln());
        }
    }

    #[test]
    fn rule_validation() {
        assert!(FusionRule::MajorityOdd.validate(3).is_ok());
        assert!(FusionRule::MajorityOdd.validate(1).is_err());
        assert!(FusionRule::MajorityEven { tie_prob: 0.0 }.validate(4).is_err());
        assert!(FusionRule::Alternating(TiePhase::TiesToOne).validate(3).is_err());
        assert!(FusionRule::Summation.validate(3).is_err());
        assert_eq!(FusionRule::majority_for(5), FusionRule::MajorityOdd);
    }

    #[test]
    fn priors_validation() {
        assert!(Priors::new(0.3, 0.7).is_ok());
        assert!(Priors::new(0.3, 0.6).is_err());
        assert!(Priors::new(-0.1, 1.1).is_err());
        assert!(!Priors::new(1.0, 0.0).unwrap().is_nondegenerate());
    }
}
