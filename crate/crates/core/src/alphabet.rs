//! `(M, D)`-trees: relay trees whose messages come from an alphabet of size
//! `D`. Agents forward the count of "1" leaves below them for `k₀ − 1`
//! levels and compress to one bit every `k₀` levels, which makes the tree
//! behave like an `(M^{k₀}, 2)`-tree.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{FusionRule, Stage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TreeSpec {
    pub m: u32,
    pub height: u32,
    pub d: u64,
}

impl TreeSpec {
    pub fn new(m: u32, height: u32, d: u64) -> Result<Self> {
        if m < 2 {
            return Err(Error::arg(format!("branching factor must be >= 2, got {m}")));
        }
        if height < 1 {
            return Err(Error::arg("tree height must be >= 1"));
        }
        if d < 2 {
            return Err(Error::arg(format!("alphabet size must be >= 2, got {d}")));
        }
        let spec = TreeSpec { m, height, d };
        spec.checked_leaves()?;
        Ok(spec)
    }

    pub fn binary(m: u32, height: u32) -> Result<Self> {
        Self::new(m, height, 2)
    }

    pub fn k0(&self) -> u32 {
        k0_of(self.m, self.d)
    }

    /// Number of leaves, `M^height`.
    pub fn leaves(&self) -> u128 {
        self.checked_leaves().expect("validated at construction")
    }

    fn checked_leaves(&self) -> Result<u128> {
        (self.m as u128)
            .checked_pow(self.height)
            .ok_or_else(|| Error::arg(format!("M^height overflows for M={}, height={}", self.m, self.height)))
    }

    /// Levels `ℓ` (1-based) at which agents compress to a binary message.
    pub fn is_boundary(&self, level: u32) -> bool {
        level % self.k0() == 0
    }
}

/// `k₀ = ⌊log_M(D − 1)⌋ + 1`, the smallest `k₀ >= 1` with `D − 1 < M^{k₀}`.
pub fn k0_of(m: u32, d: u64) -> u32 {
    assert!(m >= 2 && d >= 2, "k0 needs M >= 2 and D >= 2");
    let target = (d - 1) as u128;
    let mut k0 = 1;
    let mut power = m as u128;
    while power <= target {
        power *= m as u128;
        k0 += 1;
    }
    k0
}

/// `M^{k₀}` as a fusion arity.
pub fn block_arity(m: u32, k0: u32) -> Result<u32> {
    (m as u64)
        .checked_pow(k0)
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| Error::arg(format!("M^k0 = {m}^{k0} does not fit a fusion arity")))
}

/// The `(M^{k₀}, 2)`-tree with the same leaves.
pub fn equivalent_tree(spec: &TreeSpec) -> Result<TreeSpec> {
    let k0 = spec.k0();
    let rem = spec.height % k0;
    if rem != 0 {
        return Err(Error::arg(format!(
            "height {} is not a multiple of k0 = {k0} (remainder {rem})",
            spec.height
        )));
    }
    TreeSpec::new(block_arity(spec.m, k0)?, spec.height / k0, 2)
}

/// Per-level rules for an `(M, D)`-tree: summation between boundaries and
/// `boundary` at every `k₀`-th level. An alternating boundary rule flips its
/// tie phase from one boundary to the next.
pub fn alphabet_schedule(spec: &TreeSpec, boundary: FusionRule) -> Result<Vec<FusionRule>> {
    let reduced = equivalent_tree(spec)?;
    boundary.validate(reduced.m)?;
    let mut next = boundary;
    Ok((1..=spec.height)
        .map(|level| {
            if spec.is_boundary(level) {
                let rule = next;
                if let FusionRule::Alternating(phase) = next {
                    next = FusionRule::Alternating(phase.flip());
                }
                rule
            } else {
                FusionRule::Summation
            }
        })
        .collect())
}

/// Binary-level stages of the reduced tree: the boundary rules of
/// `schedule`, each fusing `M^{k₀}` inputs.
pub fn reduced_stages(spec: &TreeSpec, schedule: &[FusionRule]) -> Result<Vec<Stage>> {
    let reduced = equivalent_tree(spec)?;
    if schedule.len() != spec.height as usize {
        return Err(Error::arg(format!(
            "schedule has {} levels, tree height is {}",
            schedule.len(),
            spec.height
        )));
    }
    let mut stages = Vec::with_capacity(reduced.height as usize);
    for (i, rule) in schedule.iter().enumerate() {
        let level = i as u32 + 1;
        let boundary = spec.is_boundary(level);
        match (boundary, rule) {
            (false, FusionRule::Summation) => {}
            (false, other) => {
                return Err(Error::arg(format!(
                    "level {level} lies inside a k0 block and must use Summation, got {}",
                    other.name()
                )))
            }
            (true, FusionRule::Summation) => {
                return Err(Error::arg(format!(
                    "level {level} is a k0 boundary and needs a binary rule"
                )))
            }
            (true, rule) => {
                rule.validate(reduced.m)
                    .map_err(|e| e.at_level(level as usize))?;
                stages.push(Stage::new(reduced.m, *rule));
            }
        }
    }
    Ok(stages)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AlphabetRates {
    pub k0: u32,
    /// Upper bound over any combination of boundary rules.
    pub rho: f64,
    /// Majority at every boundary.
    pub varrho: f64,
    /// Alternating majority, even `M` only.
    pub sigma: Option<f64>,
}

pub fn rates_for_k0(m: u32, k0: u32) -> AlphabetRates {
    assert!(m >= 2 && k0 >= 1);
    let ln_block = k0 as f64 * (m as f64).ln();
    // M^{-k0}, possibly subnormal or zero for huge blocks.
    let inv_block = (-ln_block).exp();
    let penalty = LN_2 / ln_block;
    let rho = (ln_block + inv_block.ln_1p()) / ln_block - penalty;
    let (varrho, sigma) = if m % 2 == 1 {
        (rho, None)
    } else {
        let sigma = 0.5 * (1.0 + (ln_block + (2.0 * inv_block).ln_1p()) / ln_block) - penalty;
        (1.0 - penalty, Some(sigma))
    };
    AlphabetRates {
        k0,
        rho,
        varrho,
        sigma,
    }
}

pub fn rates(m: u32, d: u64) -> Result<AlphabetRates> {
    if m < 2 || d < 2 {
        return Err(Error::arg(format!("rates need M >= 2 and D >= 2, got M={m}, D={d}")));
    }
    Ok(rates_for_k0(m, k0_of(m, d)))
}

/// Average message size in bits over one `k₀`-block:
/// `Σ_t M^{k₀−t} log₂(M^t + 1) / Σ_t M^{t+1}` for `t = 0..k₀`.
pub fn avg_bits(m: u32, k0: u32) -> f64 {
    assert!(m >= 2 && k0 >= 1);
    let mf = m as f64;
    let log2_m = mf.log2();
    // Numerator and denominator both divided by M^{k₀}.
    let (num, den) = (0..k0).fold((0.0, 0.0), |(num, den), t| {
        let msg_bits = t as f64 * log2_m + (mf.powi(-(t as i32))).ln_1p() / LN_2;
        (
            num + mf.powi(-(t as i32)) * msg_bits,
            den + mf.powi(t as i32 + 1 - k0 as i32),
        )
    });
    num / den
}

/// Band `[1 + log₂M/(M−1) − 1/M, 1 + log₂M/(M−1)]` that `avg_bits` enters
/// for large `k₀`.
pub fn bits_bounds(m: u32) -> (f64, f64) {
    assert!(m >= 2);
    let mf = m as f64;
    let upper = 1.0 + mf.log2() / (mf - 1.0);
    (upper - 1.0 / mf, upper)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Fig3Row {
    pub k0: u32,
    pub avg_bits: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn fig3_table(m: u32, k0_min: u32, k0_max: u32) -> Result<Vec<Fig3Row>> {
    if m < 2 || k0_min < 1 || k0_min > k0_max {
        return Err(Error::arg(format!(
            "fig3 table needs M >= 2 and 1 <= k0_min <= k0_max, got M={m}, [{k0_min}, {k0_max}]"
        )));
    }
    let (lower, upper) = bits_bounds(m);
    Ok((k0_min..=k0_max)
        .map(|k0| Fig3Row {
            k0,
            avg_bits: avg_bits(m, k0),
            lower,
            upper,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::TiePhase;

    fn near(x: f64, y: f64, tol: f64) -> bool {
        (x - y).abs() <= tol
    }

    #[test]
    fn k0_examples() {
        for m in 2..30 {
            assert_eq!(k0_of(m, 2), 1);
        }
        assert_eq!(k0_of(2, 5), 3);
        assert_eq!(k0_of(10, 11), 2);
        assert_eq!(k0_of(10, 10), 1);
        assert_eq!(k0_of(3, 10), 3);
        assert_eq!(k0_of(3, 4), 2);
    }

    #[test]
    fn equivalent_tree_examples() {
        let t = equivalent_tree(&TreeSpec::new(3, 6, 10).unwrap()).unwrap();
        assert_eq!((t.m, t.d, t.height), (27, 2, 2));
        let t = equivalent_tree(&TreeSpec::new(4, 5, 2).unwrap()).unwrap();
        assert_eq!((t.m, t.d, t.height), (4, 2, 5));
        let err = equivalent_tree(&TreeSpec::new(3, 4, 10).unwrap()).unwrap_err();
        assert!(err.to_string().contains("remainder 1"), "{err}");
    }

    #[test]
    fn leaf_count_preserved() {
        let spec = TreeSpec::new(3, 6, 10).unwrap();
        let reduced = equivalent_tree(&spec).unwrap();
        assert_eq!(spec.leaves(), reduced.leaves());
        assert_eq!(spec.leaves(), 729);
    }

    #[test]
    fn tree_spec_validation() {
        assert!(TreeSpec::new(1, 3, 2).is_err());
        assert!(TreeSpec::new(3, 0, 2).is_err());
        assert!(TreeSpec::new(3, 3, 1).is_err());
        assert!(TreeSpec::new(10, 60, 2).is_err());
    }

    #[test]
    fn rates_examples() {
        let r = rates(3, 4).unwrap();
        assert_eq!(r.k0, 2);
        assert!(near(r.rho, 0.7324867603589636, 1e-15));
        assert_eq!(r.varrho, r.rho);
        assert!(r.sigma.is_none());

        let r = rates(10, 11).unwrap();
        assert!(near(r.varrho, 0.8494850021680094, 1e-15));

        let r = rates(4, 2).unwrap();
        assert!(near(r.sigma.unwrap(), 0.6462406251802890, 1e-15));
    }

    #[test]
    fn avg_bits_examples() {
        for m in [2, 5, 20] {
            assert_eq!(avg_bits(m, 1), 1.0);
        }
        assert!(near(avg_bits(10, 3), 1.2725452943164393, 1e-14));
        let direct = (1000.0 + 100.0 * 11f64.log2() + 10.0 * 101f64.log2()) / 1110.0;
        assert!(near(avg_bits(10, 3), direct, 1e-14));
        assert!(near(avg_bits(2, 10), 1.6916709959845239, 1e-14));
    }

    #[test]
    fn bits_bounds_examples() {
        let (lo, hi) = bits_bounds(10);
        assert!(near(hi, 1.3691031216541514, 1e-15));
        assert!(near(lo, 1.2691031216541514, 1e-15));
        assert_eq!(bits_bounds(2), (1.5, 2.0));
        let (lo, hi) = bits_bounds(1 << 20);
        assert!(hi - 1.0 < 1e-4 && near(hi - lo, 1.0 / (1u32 << 20) as f64, 1e-18));
    }

    #[test]
    fn fig3_rows() {
        let rows = fig3_table(10, 3, 3).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].lower <= rows[0].avg_bits && rows[0].avg_bits <= rows[0].upper);
        let rows = fig3_table(2, 10, 10).unwrap();
        assert_eq!((rows[0].lower, rows[0].upper), (1.5, 2.0));
        assert!(rows[0].avg_bits > 1.5 && rows[0].avg_bits < 2.0);
        let rows = fig3_table(20, 1, 1).unwrap();
        assert_eq!(rows[0].avg_bits, 1.0);
        assert!(fig3_table(20, 3, 1).is_err());
    }

    #[test]
    fn schedule_places_rules_at_boundaries() {
        let spec = TreeSpec::new(2, 6, 5).unwrap();
        let sched =
            alphabet_schedule(&spec, FusionRule::Alternating(TiePhase::TiesToOne)).unwrap();
        use FusionRule::*;
        assert_eq!(
            sched,
            vec![
                Summation,
                Summation,
                Alternating(TiePhase::TiesToOne),
                Summation,
                Summation,
                Alternating(TiePhase::TiesToZero)
            ]
        );
        let stages = reduced_stages(&spec, &sched).unwrap();
        assert_eq!(stages.len(), 2);
        assert!(stages.iter().all(|s| s.arity == 8));
        assert!(alphabet_schedule(&spec, FusionRule::MajorityOdd).is_err());
    }

    #[test]
    fn reduced_stages_reject_misplaced_rules() {
        let spec = TreeSpec::new(2, 3, 5).unwrap();
        let bad = vec![FusionRule::MajorityOdd, FusionRule::Summation, FusionRule::Summation];
        assert!(reduced_stages(&spec, &bad).is_err());
        assert!(reduced_stages(&spec, &[FusionRule::Summation]).is_err());
    }
}
