//! Closed-form bounds on `log₂ α_k⁻¹` and `log₂ P_N⁻¹`, convergence-rate
//! exponents, and the sample-size planner.
//!
//! All bounds are in bits. Lower bounds that come out negative (leaf error
//! too large for the bound to say anything) are returned unchanged.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::Priors;
use crate::logprob::{choose_exact, log2_choose};

/// Per-level exponent base `λ_M = ⌊(M + 1) / 2⌋`.
pub fn lambda(m: u32) -> u32 {
    m.div_ceil(2)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundSandwich {
    pub lower: f64,
    pub upper: f64,
    pub quantity: String,
}

impl BoundSandwich {
    pub fn contains(&self, bits: f64) -> bool {
        self.lower <= bits && bits <= self.upper
    }

    /// Containment with a relative slack for comparing against values that
    /// carry floating-point error.
    pub fn contains_within(&self, bits: f64, rtol: f64) -> bool {
        let slack = |v: f64| rtol * v.abs().max(1.0);
        self.lower - slack(self.lower) <= bits && bits <= self.upper + slack(self.upper)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Strategy {
    MajorityRandom,
    Alternating,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ExponentKind {
    MajorityRandom,
    Alternating,
    UpperBound,
    LrtLower,
}

fn check_open_unit(name: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::arg(format!("{name} must lie in (0, 1), got {p}")))
    }
}

fn check_branching(m: u32) -> Result<()> {
    if m < 2 {
        return Err(Error::arg(format!("branching factor must be >= 2, got {m}")));
    }
    Ok(())
}

/// `k` such that `n = m^k`, if any.
pub fn exact_log(m: u32, n: u128) -> Option<u32> {
    if m < 2 || n == 0 {
        return None;
    }
    let mut k = 0;
    let mut acc: u128 = 1;
    while acc < n {
        acc = acc.checked_mul(m as u128)?;
        k += 1;
    }
    (acc == n).then_some(k)
}

fn height_of(m: u32, n: u128) -> Result<u32> {
    exact_log(m, n).ok_or_else(|| Error::arg(format!("N = {n} is not a power of M = {m}")))
}

/// `h(x) = x^k + C(M,1) x^{k−1}(1−x) + … + C(M,k)(1−x)^k`.
pub fn h_poly(m: u32, k: u32, x: f64) -> Result<f64> {
    if k == 0 || k >= m {
        return Err(Error::arg(format!("h_poly needs 0 < k < M, got k={k}, M={m}")));
    }
    check_open_unit("x", x)?;
    let y = 1.0 - x;
    Ok((0..=k)
        .map(|j| {
            let c = choose_exact(m as u64, j as u64).expect("small binomial") as f64;
            c * x.powi((k - j) as i32) * y.powi(j as i32)
        })
        .sum())
}

/// Sandwich on `log₂ α_k⁻¹` after `k` levels of majority fusion (random
/// tie-breaking with a fair coin for even `M`) or of the alternating
/// strategy (even `M` and even `k` only).
pub fn level_bounds(alpha0: f64, m: u32, k: u32, strategy: Strategy) -> Result<BoundSandwich> {
    check_open_unit("alpha0", alpha0)?;
    check_branching(m)?;
    let lam = lambda(m);
    let bits0 = -alpha0.log2();
    let penalty = log2_choose(m as u64, lam as u64);
    let growth = match strategy {
        Strategy::MajorityRandom => (lam as f64).powi(k as i32),
        Strategy::Alternating => {
            if m % 2 == 1 {
                return Err(Error::arg(format!("alternating strategy needs even M, got {m}")));
            }
            if k % 2 == 1 {
                return Err(Error::arg(format!(
                    "alternating bound holds at even levels only, got k={k}"
                )));
            }
            ((lam * (lam + 1)) as f64).powi((k / 2) as i32)
        }
    };
    Ok(BoundSandwich {
        lower: growth * (bits0 - penalty),
        upper: growth * bits0,
        quantity: format!("log2 1/alpha_{k}"),
    })
}

/// Sandwich on `log₂ P_N⁻¹` at the root of an `M`-ary majority tree with
/// `N = M^k` leaves.
pub fn total_bounds(
    alpha0: f64,
    beta0: f64,
    priors: Priors,
    m: u32,
    n: u128,
) -> Result<BoundSandwich> {
    check_open_unit("alpha0", alpha0)?;
    check_open_unit("beta0", beta0)?;
    check_branching(m)?;
    let k = height_of(m, n)?;
    let lam = lambda(m);
    // N^{log_M λ} = λ^k exactly.
    let growth = (lam as f64).powi(k as i32);
    let worst = -alpha0.max(beta0).log2();
    Ok(BoundSandwich {
        lower: growth * (worst - log2_choose(m as u64, lam as u64)),
        upper: growth * (priors.pi0 * -alpha0.log2() + priors.pi1 * -beta0.log2()),
        quantity: format!("log2 1/P_N, N={n}"),
    })
}

/// Sandwich on `log₂ P_N⁻¹` for the alternating strategy at an even height
/// `k`: the majority form with `λ^k` replaced by `(λ(λ+1))^{k/2}`.
pub fn alternating_total_bounds(
    alpha0: f64,
    beta0: f64,
    priors: Priors,
    m: u32,
    k: u32,
) -> Result<BoundSandwich> {
    check_open_unit("beta0", beta0)?;
    let a = level_bounds(alpha0, m, k, Strategy::Alternating)?;
    let worst = level_bounds(alpha0.max(beta0), m, k, Strategy::Alternating)?;
    let b = level_bounds(beta0, m, k, Strategy::Alternating)?;
    Ok(BoundSandwich {
        lower: worst.lower,
        upper: priors.pi0 * a.upper + priors.pi1 * b.upper,
        quantity: format!("log2 1/P_N, alternating, k={k}"),
    })
}

/// Per-level constant `2 C(M, λ) max(π) / min(π)^λ` of the LRT bound.
pub fn lrt_constant(priors: Priors, m: u32) -> Result<f64> {
    priors.require_nondegenerate()?;
    let lam = lambda(m);
    let c = choose_exact(m as u64, lam as u64)
        .ok_or_else(|| Error::arg(format!("C({m}, {lam}) too large")))? as f64;
    Ok(2.0 * c * priors.max() / priors.min().powi(lam as i32))
}

/// Lower bound on `log₂ P_N⁻¹` when every agent fuses with the Bayesian LRT,
/// starting from leaf total error `l0`.
pub fn lrt_lower_bound(l0: f64, priors: Priors, m: u32, n: u128) -> Result<f64> {
    check_open_unit("L0", l0)?;
    check_branching(m)?;
    let k = height_of(m, n)?;
    let growth = (lambda(m) as f64).powi(k as i32);
    Ok(growth * (-l0.log2() - lrt_constant(priors, m)?.log2()))
}

/// Convergence-rate exponent `γ` in `log₂ P_N⁻¹ = Θ(N^γ)`.
pub fn exponent(m: u32, which: ExponentKind) -> Result<f64> {
    check_branching(m)?;
    let ln_m = (m as f64).ln();
    let mf = m as f64;
    Ok(match which {
        ExponentKind::MajorityRandom | ExponentKind::LrtLower => (lambda(m) as f64).ln() / ln_m,
        ExponentKind::UpperBound => ((mf + 1.0) / 2.0).ln() / ln_m,
        ExponentKind::Alternating => {
            if m % 2 == 1 {
                return Err(Error::arg(format!("alternating exponent needs even M, got {m}")));
            }
            (0.5 * (mf * (mf + 2.0)).ln() - std::f64::consts::LN_2) / ln_m
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SampleSize {
    pub n_real: f64,
    pub k: u32,
    pub n_tree: u128,
}

/// Smallest tree guaranteed by the majority-rule total-error lower bound to
/// reach `P_N <= epsilon`, both as the real-valued bound and rounded up to
/// the next power of `M`.
pub fn sample_size(m: u32, alpha0: f64, beta0: f64, epsilon: f64) -> Result<SampleSize> {
    check_branching(m)?;
    check_open_unit("alpha0", alpha0)?;
    check_open_unit("beta0", beta0)?;
    check_open_unit("epsilon", epsilon)?;
    let worst = alpha0.max(beta0);
    if worst <= epsilon {
        return Ok(SampleSize {
            n_real: 1.0,
            k: 0,
            n_tree: 1,
        });
    }
    let lam = lambda(m);
    let margin = -worst.log2() - log2_choose(m as u64, lam as u64);
    if margin <= 0.0 {
        return Err(Error::BoundInapplicable(format!(
            "log2 1/max(alpha0, beta0) = {:.6} does not exceed log2 C({m},{lam}) = {:.6}",
            -worst.log2(),
            log2_choose(m as u64, lam as u64)
        )));
    }
    if lam < 2 {
        return Err(Error::BoundInapplicable(format!(
            "lambda_M = 1 for M = {m}: majority fusion does not reduce the error"
        )));
    }
    let ratio = -epsilon.log2() / margin;
    let n_real = ratio.powf((m as f64).ln() / (lam as f64).ln());
    let mut k = 0u32;
    let mut n_tree: u128 = 1;
    while (n_tree as f64) < n_real {
        n_tree = n_tree
            .checked_mul(m as u128)
            .ok_or_else(|| Error::arg(format!("required tree size {n_real:e} overflows")))?;
        k += 1;
    }
    Ok(SampleSize { n_real, k, n_tree })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    pub m: u32,
    pub majority_random: f64,
    pub alternating: Option<f64>,
    pub upper_bound: f64,
    pub lrt_lower: f64,
}

pub fn rate_report(m: u32) -> Result<RateReport> {
    Ok(RateReport {
        m,
        majority_random: exponent(m, ExponentKind::MajorityRandom)?,
        alternating: if m % 2 == 0 {
            Some(exponent(m, ExponentKind::Alternating)?)
        } else {
            None
        },
        upper_bound: exponent(m, ExponentKind::UpperBound)?,
        lrt_lower: exponent(m, ExponentKind::LrtLower)?,
    })
}

/// Exponents for every `M` in `m_min..=m_max` (within `[2, 64]`).
pub fn fig2_table(m_min: u32, m_max: u32) -> Result<Vec<RateReport>> {
    if m_min < 2 || m_max > 64 || m_min > m_max {
        return Err(Error::arg(format!(
            "M range must satisfy 2 <= m_min <= m_max <= 64, got [{m_min}, {m_max}]"
        )));
    }
    (m_min..=m_max).map(rate_report).collect()
}
