//! Invariant checks behind the `verify` subcommand.
//!
//! Each check sweeps a grid of inputs and stops at the first violation,
//! reporting the offending inputs.

use std::fmt;
use std::time::Instant;

use crate::alphabet::{
    alphabet_schedule, avg_bits, bits_bounds, equivalent_tree, k0_of, rates, TreeSpec,
};
use crate::bounds::{
    exponent, h_poly, lambda, level_bounds, lrt_constant, lrt_lower_bound, ExponentKind, Strategy,
};
use crate::error::Result;
use crate::kernel::{
    alternating_step, apply_decision_table, lrt_step, majority_step_even, majority_step_odd,
    propagate, total_error, DecisionTable, ErrorPair, FusionRule, Hypothesis, Priors, Stage,
    TiePhase,
};
use crate::logprob::{ln_choose, LogProb};
use crate::oracle::{enumerate_step, optimal_step, VectorRule};
use crate::sim::{compare_with, simulate, simulate_alphabet, simulate_serial, SimConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Kernel,
    Oracle,
    Bounds,
    Alphabet,
    Sim,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Option<Suite> {
        Some(match s {
            "kernel" => Suite::Kernel,
            "oracle" => Suite::Oracle,
            "bounds" => Suite::Bounds,
            "alphabet" => Suite::Alphabet,
            "sim" => Suite::Sim,
            "all" => Suite::All,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub cases: u64,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub outcomes: Vec<CheckOutcome>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.outcomes.iter().filter(|o| !o.passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for o in &self.outcomes {
            let tag = if o.passed { "PASS" } else { "FAIL" };
            write!(f, "{tag}  {:<34} {:>9} cases  {:>7.2}s", o.name, o.cases, o.seconds)?;
            if !o.detail.is_empty() {
                write!(f, "  {}", o.detail)?;
            }
            writeln!(f)?;
        }
        let failed = self.failures().count();
        writeln!(
            f,
            "{} checks, {} passed, {} failed",
            self.outcomes.len(),
            self.outcomes.len() - failed,
            failed
        )
    }
}

/// Sweeps cases until the first failure; `Err` carries the violation.
struct Check {
    cases: u64,
}

impl Check {
    fn case(&mut self, ok: bool, detail: impl FnOnce() -> String) -> std::result::Result<(), String> {
        self.cases += 1;
        if ok {
            Ok(())
        } else {
            Err(detail())
        }
    }
}

fn run_check<F>(name: &'static str, body: F) -> CheckOutcome
where
    F: FnOnce(&mut Check) -> std::result::Result<String, String>,
{
    let start = Instant::now();
    let mut check = Check { cases: 0 };
    let (passed, detail) = match body(&mut check) {
        Ok(note) => (true, note),
        Err(why) => (false, why),
    };
    CheckOutcome {
        name,
        passed,
        cases: check.cases,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn lift<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// `{0.01, 0.02, …, 0.49}`.
pub fn probability_grid() -> Vec<f64> {
    (1..=49).map(|i| i as f64 / 100.0).collect()
}

/// `|a − b| / max(|b|, 1)` on log-probabilities.
pub fn log_rel_err(a: LogProb, b: LogProb) -> f64 {
    if a.ln() == b.ln() {
        return 0.0;
    }
    (a.ln() - b.ln()).abs() / b.ln().abs().max(1.0)
}

/// Every binary rule applicable to `m` children, paired with its vector-form
/// equivalent for enumeration.
pub fn rules_for(m: u32) -> Vec<FusionRule> {
    let mut rules = Vec::new();
    if m % 2 == 1 {
        if m >= 3 {
            rules.push(FusionRule::MajorityOdd);
        }
    } else {
        for tie_prob in [0.5, 0.1, 0.9] {
            rules.push(FusionRule::MajorityEven { tie_prob });
        }
        rules.push(FusionRule::Alternating(TiePhase::TiesToOne));
        rules.push(FusionRule::Alternating(TiePhase::TiesToZero));
    }
    rules.push(FusionRule::BayesianLrt(Priors::equal()));
    rules.push(FusionRule::BayesianLrt(Priors::new(0.3, 0.7).expect("valid priors")));
    rules
}

/// Brute-force counterpart of `kernel_rule` applied to `pair`.
pub fn oracle_step(rule: FusionRule, pair: ErrorPair, m: u32) -> Result<ErrorPair> {
    match rule {
        FusionRule::MajorityOdd => enumerate_step(pair, m, &VectorRule::majority(m, 0.0)),
        FusionRule::MajorityEven { tie_prob } => {
            enumerate_step(pair, m, &VectorRule::majority(m, tie_prob))
        }
        FusionRule::Alternating(phase) => enumerate_step(pair, m, &VectorRule::alternating(m, phase)),
        FusionRule::BayesianLrt(priors) => optimal_step(pair, priors, m),
        FusionRule::Summation => Err(crate::Error::arg("Summation has no binary oracle")),
    }
}

fn ln_ratio(out: LogProb, base: LogProb, power: u32) -> f64 {
    out.ln() - power as f64 * base.ln()
}

const RATIO_TOL: f64 = 1e-12;

fn within(x: f64, lo: f64, hi: f64) -> bool {
    let tol = RATIO_TOL * lo.abs().max(hi.abs()).max(1.0);
    x >= lo - tol && x <= hi + tol
}

fn kernel_checks() -> Vec<CheckOutcome> {
    let grid = probability_grid();
    let mut out = Vec::new();

    out.push(run_check("kernel.odd_majority_sandwich", |c| {
        for m in [3u32, 5, 7, 9] {
            let cap = ln_choose(m as u64, (m as u64 - 1) / 2);
            for &a in &grid {
                let p = lift(ErrorPair::symmetric(a))?;
                let next = lift(majority_step_odd(p, m))?;
                let r = ln_ratio(next.alpha, p.alpha, m.div_ceil(2));
                c.case(within(r, 0.0, cap), || {
                    format!("M={m} alpha={a}: ratio {:.6} outside [1, {:.1}]", r.exp(), cap.exp())
                })?;
            }
        }
        Ok(String::new())
    }));

    out.push(run_check("kernel.even_majority_sandwich", |c| {
        for m in [4u32, 6, 8, 10] {
            let cap = ln_choose(m as u64, m as u64 / 2) - std::f64::consts::LN_2;
            for &a in &grid {
                let p = lift(ErrorPair::symmetric(a))?;
                let next = lift(majority_step_even(p, m, 0.5))?;
                let r = ln_ratio(next.alpha, p.alpha, m / 2);
                c.case(within(r, 0.0, cap), || {
                    format!("M={m} alpha={a}: ratio {:.6} outside [1, {:.1}]", r.exp(), cap.exp())
                })?;
            }
        }
        Ok(String::new())
    }));

    out.push(run_check("kernel.tie_break_sandwich", |c| {
        for m in [2u32, 4, 6, 8, 10] {
            for pb in [0.1, 0.3, 0.7, 0.9] {
                let hi = m as f64 * std::f64::consts::LN_2;
                for &a in &grid {
                    let p = lift(ErrorPair::symmetric(a))?;
                    let next = lift(majority_step_even(p, m, pb))?;
                    let r = ln_ratio(next.alpha, p.alpha, m / 2);
                    c.case(within(r, pb.ln(), hi), || {
                        format!("M={m} P_b={pb} alpha={a}: ratio {:.6}", r.exp())
                    })?;
                }
            }
        }
        Ok(String::new())
    }));

    out.push(run_check("kernel.alternating_sandwich", |c| {
        for m in [2u32, 4, 6, 8, 10] {
            let h = m as u64 / 2;
            let cap_one = ln_choose(m as u64, h);
            let cap_zero = ln_choose(m as u64, h - 1);
            for &a in &grid {
                let p = lift(ErrorPair::symmetric(a))?;
                let one = lift(alternating_step(p, m, TiePhase::TiesToOne))?;
                let r1 = ln_ratio(one.alpha, p.alpha, m / 2);
                c.case(within(r1, 0.0, cap_one), || {
                    format!("M={m} alpha={a} ties-to-one: ratio {:.6}", r1.exp())
                })?;
                let zero = lift(alternating_step(p, m, TiePhase::TiesToZero))?;
                let r0 = ln_ratio(zero.alpha, p.alpha, m / 2 + 1);
                c.case(within(r0, 0.0, cap_zero), || {
                    format!("M={m} alpha={a} ties-to-zero: ratio {:.6}", r0.exp())
                })?;
            }
        }
        Ok(String::new())
    }));

    out.push(run_check("kernel.lrt_local_optimality", |c| {
        let priors = [Priors::equal(), Priors::new(0.3, 0.7).unwrap(), Priors::new(0.8, 0.2).unwrap()];
        for m in 1u32..=6 {
            let tables: Vec<DecisionTable> = (0u32..(1 << (m + 1)))
                .map(|mask| {
                    DecisionTable(
                        (0..=m)
                            .map(|s| if mask >> s & 1 == 1 { Hypothesis::H1 } else { Hypothesis::H0 })
                            .collect(),
                    )
                })
                .collect();
            for &pr in &priors {
                for &a in &grid {
                    for &b in &grid {
                        let p = lift(ErrorPair::from_probs(a, b))?;
                        let best = total_error(lift(lrt_step(p, pr, m))?, pr).prob();
                        let worst_gap = tables
                            .iter()
                            .map(|t| {
                                apply_decision_table(p, t)
                                    .map(|q| total_error(q, pr).prob() - best)
                                    .unwrap_or(f64::INFINITY)
                            })
                            .fold(f64::INFINITY, f64::min);
                        c.case(worst_gap >= -1e-15 * best.max(1e-300), || {
                            format!("M={m} alpha={a} beta={b} pi0={}: a per-count rule beats LRT by {:e}", pr.pi0, -worst_gap)
                        })?;
                    }
                }
            }
        }
        Ok(String::new())
    }));

    out.push(run_check("kernel.lrt_symmetry", |c| {
        for m in [3u32, 5, 7, 9] {
            for &a in &grid {
                let p = lift(ErrorPair::symmetric(a))?;
                let l = lift(lrt_step(p, Priors::equal(), m))?;
                let maj = lift(majority_step_odd(p, m))?;
                c.case(
                    log_rel_err(l.alpha, l.beta) <= 1e-12 && log_rel_err(l.alpha, maj.alpha) <= 1e-12,
                    || format!("M={m} alpha=beta={a}: lrt {l:?} vs majority {maj:?}"),
                )?;
            }
        }
        Ok(String::new())
    }));

    out.push(run_check("kernel.deep_trace_no_underflow", |c| {
        let trace = lift(propagate(
            lift(ErrorPair::symmetric(0.1))?,
            &Stage::repeat(3, FusionRule::MajorityOdd, 4),
            Priors::equal(),
        ))?;
        let a4 = trace.root().alpha_prob();
        let exact = 7.639009737159088e-10;
        c.case(((a4 - exact) / exact).abs() <= 1e-13, || format!("alpha_4 = {a4:e}"))?;
        let deep = lift(propagate(
            lift(ErrorPair::symmetric(0.1))?,
            &Stage::repeat(3, FusionRule::MajorityOdd, 40),
            Priors::equal(),
        ))?;
        for p in &deep.pairs {
            c.case(p.alpha.ln().is_finite() && p.alpha.ln() <= 0.0, || format!("{p:?} left the unit interval"))?;
        }
        Ok(format!("alpha_4 = {a4:.10e}"))
    }));

    out.push(run_check("kernel.binary_majority_fixed_point", |c| {
        for &a in &grid {
            let p = lift(ErrorPair::from_probs(a, 0.5 - a / 2.0))?;
            let trace = lift(propagate(
                p,
                &Stage::repeat(2, FusionRule::MajorityEven { tie_prob: 0.5 }, 20),
                Priors::equal(),
            ))?;
            for q in &trace.pairs {
                c.case(
                    log_rel_err(q.alpha, p.alpha) <= 1e-14 && log_rel_err(q.beta, p.beta) <= 1e-14,
                    || format!("alpha0={a}: drifted to {q:?}"),
                )?;
            }
        }
        Ok(String::new())
    }));

    out
}

fn oracle_checks() -> Vec<CheckOutcome> {
    let grid = probability_grid();
    let mut out = Vec::new();

    out.push(run_check("oracle.kernel_equivalence", |c| {
        let mut worst = 0.0f64;
        for m in 2u32..=10 {
            for rule in rules_for(m) {
                for &a in &grid {
                    for &b in &grid {
                        let p = lift(ErrorPair::from_probs(a, b))?;
                        let k = lift(rule.apply(p, m))?;
                        let o = lift(oracle_step(rule, p, m))?;
                        let e = log_rel_err(k.alpha, o.alpha).max(log_rel_err(k.beta, o.beta));
                        worst = worst.max(e);
                        c.case(e <= 1e-12, || {
                            format!("M={m} {} alpha={a} beta={b}: kernel {k:?} oracle {o:?} (rel {e:e})", rule.name())
                        })?;
                    }
                }
            }
        }
        Ok(format!("max rel log err {worst:.2e}"))
    }));

    out.push(run_check("oracle.optimal_equals_lrt", |c| {
        for m in 1u32..=6 {
            for pr in [Priors::equal(), Priors::new(0.3, 0.7).unwrap(), Priors::new(0.8, 0.2).unwrap()] {
                for &a in &grid {
                    for &b in &grid {
                        let p = lift(ErrorPair::from_probs(a, b))?;
                        let k = lift(lrt_step(p, pr, m))?;
                        let o = lift(optimal_step(p, pr, m))?;
                        let e = log_rel_err(k.alpha, o.alpha).max(log_rel_err(k.beta, o.beta));
                        c.case(e <= 1e-12, || {
                            format!("M={m} pi0={} alpha={a} beta={b}: lrt {k:?} optimal {o:?}", pr.pi0)
                        })?;
                    }
                }
            }
        }
        Ok(String::new())
    }));

    out.push(run_check("oracle.permutation_invariance", |c| {
        for m in 2u32..=8 {
            // Rotation by one and reversal.
            let rot: Vec<u32> = (0..m).map(|t| (t + 1) % m).collect();
            let rev: Vec<u32> = (0..m).rev().collect();
            for &a in grid.iter().step_by(6) {
                let p = lift(ErrorPair::from_probs(a, 0.5 - a / 2.0))?;
                let base = lift(enumerate_step(p, m, &VectorRule::majority(m, 0.3)))?;
                for perm in [rot.clone(), rev.clone()] {
                    let q = lift(enumerate_step(p, m, &VectorRule::majority(m, 0.3).permuted(perm)))?;
                    c.case(
                        log_rel_err(q.alpha, base.alpha) <= 1e-13 && log_rel_err(q.beta, base.beta) <= 1e-13,
                        || format!("M={m} alpha={a}: permuted {q:?} vs {base:?}"),
                    )?;
                }
            }
        }
        Ok(String::new())
    }));

    out
}

fn majority_schedule(m: u32, levels: usize) -> Vec<Stage> {
    Stage::repeat(m, FusionRule::majority_for(m), levels)
}

fn bounds_checks() -> Vec<CheckOutcome> {
    let grid = probability_grid();
    let mut out = Vec::new();

    out.push(run_check("bounds.level_sandwich", |c| {
        for m in 2u32..=10 {
            let lam = lambda(m);
            let limit = 1.0 / crate::logprob::choose_exact(m as u64, lam as u64).unwrap() as f64;
            for &a in grid.iter().filter(|&&a| a < limit) {
                let p = lift(ErrorPair::symmetric(a))?;
                let trace = lift(propagate(p, &majority_schedule(m, 12), Priors::equal()))?;
                for (k, q) in trace.pairs.iter().enumerate() {
                    let b = lift(level_bounds(a, m, k as u32, Strategy::MajorityRandom))?;
                    c.case(b.contains_within(q.alpha.bits(), 1e-12), || {
                        format!("majority M={m} alpha0={a} k={k}: {} not in [{}, {}]", q.alpha.bits(), b.lower, b.upper)
                    })?;
                }
                // The alternating lower bound needs λ >= 2; M = 2 is only asserted at k = 2.
                if m % 2 == 0 {
                    let trace = lift(propagate(p, &Stage::alternating(m, 12, TiePhase::TiesToOne), Priors::equal()))?;
                    let max_k = if m == 2 { 2 } else { 12 };
                    for k in (0..=max_k).step_by(2) {
                        let q = trace.pairs[k];
                        let b = lift(level_bounds(a, m, k as u32, Strategy::Alternating))?;
                        for (name, bits) in [("alpha", q.alpha.bits()), ("beta", q.beta.bits())] {
                            c.case(b.contains_within(bits, 1e-12), || {
                                format!("alternating M={m} alpha0={a} k={k} {name}: {bits} not in [{}, {}]", b.lower, b.upper)
                            })?;
                        }
                    }
                }
            }
        }
        Ok(String::new())
    }));

    out.push(run_check("bounds.lrt_total_error_bound", |c| {
        for m in 2u32..=10 {
            for pr in [Priors::equal(), Priors::new(0.3, 0.7).unwrap()] {
                let konst = lift(lrt_constant(pr, m))?;
                for &a in &grid {
                    for &b in &grid {
                        let p = lift(ErrorPair::from_probs(a, b))?;
                        let l0 = total_error(p, pr).prob();
                        if l0 >= 1.0 / konst {
                            continue;
                        }
                        let trace = lift(propagate(p, &Stage::repeat(m, FusionRule::BayesianLrt(pr), 8), pr))?;
                        let mut n: u128 = 1;
                        for (k, total) in trace.total.iter().enumerate() {
                            let bound = lift(lrt_lower_bound(l0, pr, m, n))?;
                            c.case(total.bits() >= bound - 1e-12 * bound.abs().max(1.0), || {
                                format!("M={m} pi0={} alpha0={a} beta0={b} k={k}: {} < {bound}", pr.pi0, total.bits())
                            })?;
                            n *= m as u128;
                        }
                    }
                }
            }
        }
        Ok(String::new())
    }));

    out.push(run_check("bounds.h_poly_monotone", |c| {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64 / 1001.0).collect();
        for m in 2u32..=10 {
            for k in 1..m {
                let mut prev = f64::INFINITY;
                for &x in &xs {
                    let h = lift(h_poly(m, k, x))?;
                    c.case(h < prev, || format!("M={m} k={k}: h({x}) = {h} >= {prev}"))?;
                    prev = h;
                }
            }
        }
        Ok(String::new())
    }));

    out.push(run_check("bounds.exponent_ordering", |c| {
        for m in 2u32..=64 {
            let maj = lift(exponent(m, ExponentKind::MajorityRandom))?;
            let up = lift(exponent(m, ExponentKind::UpperBound))?;
            if m % 2 == 1 {
                c.case((maj - up).abs() <= 1e-12, || format!("M={m}: {maj} != {up}"))?;
            } else if m >= 4 {
                let alt = lift(exponent(m, ExponentKind::Alternating))?;
                c.case(maj <= alt && alt <= up, || format!("M={m}: {maj}, {alt}, {up} out of order"))?;
            }
        }
        Ok(String::new())
    }));

    out.push(run_check("bounds.normalized_exponent_converges", |c| {
        for m in 2u32..=10 {
            let lam = lambda(m) as f64;
            let penalty = crate::logprob::log2_choose(m as u64, lambda(m) as u64);
            let limit = (-penalty).exp2();
            for &a in grid.iter().filter(|&&a| a < limit) {
                let trace = lift(propagate(lift(ErrorPair::symmetric(a))?, &majority_schedule(m, 12), Priors::equal()))?;
                let bits0 = -a.log2();
                let mut prev = f64::INFINITY;
                for (k, q) in trace.pairs.iter().enumerate() {
                    let r = q.alpha.bits() / lam.powi(k as i32);
                    let tol = 1e-12 * bits0;
                    c.case(r <= prev + tol && r >= bits0 - penalty - tol && r <= bits0 + tol, || {
                        format!("M={m} alpha0={a} k={k}: normalized {r} (prev {prev})")
                    })?;
                    prev = r;
                }
            }
        }
        Ok(String::new())
    }));

    out.push(run_check("bounds.lrt_dominates_majority", |c| {
        for m in 2u32..=10 {
            for pr in [Priors::equal(), Priors::new(0.3, 0.7).unwrap()] {
                for &a in &grid {
                    for &b in &grid {
                        let p = lift(ErrorPair::from_probs(a, b))?;
                        let l = total_error(lift(lrt_step(p, pr, m))?, pr).prob();
                        let maj = total_error(lift(FusionRule::majority_for(m).apply(p, m))?, pr).prob();
                        c.case(l <= maj * (1.0 + 1e-12), || {
                            format!("M={m} pi0={} alpha={a} beta={b}: lrt {l} > majority {maj}", pr.pi0)
                        })?;
                    }
                }
            }
        }
        Ok(String::new())
    }));

    out
}

fn alphabet_checks() -> Vec<CheckOutcome> {
    let mut out = Vec::new();

    out.push(run_check("alphabet.k0_bracket", |c| {
        for m in 2u32..=20 {
            let mut power: u64 = 1;
            let mut k0 = 1;
            for d in 2u64..=1_000_000 {
                // Reference bracket maintained incrementally: M^{k0-1} <= D-1 < M^{k0}.
                while d > power * m as u64 {
                    power *= m as u64;
                    k0 += 1;
                }
                let got = k0_of(m, d);
                c.case(got == k0, || format!("M={m} D={d}: k0_of = {got}, expected {k0}"))?;
            }
        }
        Ok(String::new())
    }));

    out.push(run_check("alphabet.binary_rate_collapse", |c| {
        for m in 2u32..=20 {
            let r = lift(rates(m, 2))?;
            let up = lift(exponent(m, ExponentKind::UpperBound))?;
            let maj = lift(exponent(m, ExponentKind::MajorityRandom))?;
            c.case((r.rho - up).abs() <= 1e-12, || format!("M={m}: rho {} vs {up}", r.rho))?;
            c.case((r.varrho - maj).abs() <= 1e-12, || format!("M={m}: varrho {} vs {maj}", r.varrho))?;
            if m % 2 == 0 {
                let alt = lift(exponent(m, ExponentKind::Alternating))?;
                let s = r.sigma.unwrap_or(f64::NAN);
                c.case((s - alt).abs() <= 1e-12, || format!("M={m}: sigma {s} vs {alt}"))?;
            }
        }
        Ok(String::new())
    }));

    out.push(run_check("alphabet.avg_bits_band", |c| {
        for m in 2u32..=20 {
            let (lo, hi) = bits_bounds(m);
            for k0 in 8..=14 {
                let b = avg_bits(m, k0);
                c.case(lo <= b && b <= hi, || format!("M={m} k0={k0}: {b} outside [{lo}, {hi}]"))?;
            }
        }
        let v = avg_bits(10, 3);
        c.case((v - 1.27255).abs() <= 1e-5, || format!("avg_bits(10, 3) = {v}"))?;
        Ok(String::new())
    }));

    out.push(run_check("alphabet.rate_ordering", |c| {
        for m in 2u32..=20 {
            for d in [2u64, 3, 5, 10, 100, 1000, 100_000] {
                let r = lift(rates(m, d))?;
                match r.sigma {
                    Some(s) => c.case(r.varrho <= s && s <= r.rho, || format!("M={m} D={d}: {r:?}"))?,
                    None => c.case(r.varrho == r.rho, || format!("M={m} D={d}: {r:?}"))?,
                }
            }
        }
        Ok(String::new())
    }));

    out
}

type ScheduleFn = Box<dyn Fn(usize) -> Vec<FusionRule>>;

/// Monte Carlo checks; `trials` per configuration.
pub fn sim_checks(trials: u64) -> Vec<CheckOutcome> {
    let mut out = Vec::new();

    out.push(run_check("sim.determinism", |c| {
        let cfg = lift(SimConfig::new(
            lift(TreeSpec::binary(4, 3))?,
            vec![FusionRule::MajorityEven { tie_prob: 0.4 }; 3],
            lift(ErrorPair::from_probs(0.2, 0.25))?,
            20_000,
            2024,
            Hypothesis::H1,
        ))?;
        let a = lift(simulate(&cfg))?;
        let b = lift(simulate_serial(&cfg))?;
        c.case(a == b, || format!("parallel {a:?} vs serial {b:?}"))?;
        Ok(String::new())
    }));

    out.push(run_check("sim.analytic_agreement", |c| {
        let mut worst = 0.0f64;
        for m in 2u32..=5 {
            let mut schedules: Vec<(&str, ScheduleFn)> = Vec::new();
            if m % 2 == 1 {
                schedules.push(("majority", Box::new(|h| vec![FusionRule::MajorityOdd; h])));
            } else {
                schedules.push(("majority-even", Box::new(|h| vec![FusionRule::MajorityEven { tie_prob: 0.5 }; h])));
                schedules.push(("majority-pb0.3", Box::new(|h| vec![FusionRule::MajorityEven { tie_prob: 0.3 }; h])));
                schedules.push((
                    "alternating",
                    Box::new(move |h| Stage::alternating(m, h, TiePhase::TiesToOne).into_iter().map(|s| s.rule).collect()),
                ));
            }
            schedules.push(("lrt", Box::new(|h| vec![FusionRule::BayesianLrt(Priors::equal()); h])));
            for height in 1u32..=3 {
                for a in [0.1, 0.3] {
                    for (name, make) in &schedules {
                        for hyp in [Hypothesis::H0, Hypothesis::H1] {
                            let cfg = lift(SimConfig::new(
                                lift(TreeSpec::binary(m, height))?,
                                make(height as usize),
                                lift(ErrorPair::symmetric(a))?,
                                trials,
                                0x5eed ^ (m as u64) << 8 ^ (height as u64) << 16,
                                hyp,
                            ))?;
                            let cmp = compare_with(lift(simulate(&cfg))?, lift(crate::sim::analytic_error(&cfg))?);
                            worst = worst.max(cmp.zscore.abs());
                            c.case(!cmp.flagged, || {
                                format!(
                                    "M={m} height={height} {name} alpha0={a} {hyp:?}: estimate {} analytic {} z={:.2}",
                                    cmp.estimate, cmp.analytic, cmp.zscore
                                )
                            })?;
                        }
                    }
                }
            }
        }
        Ok(format!("max |z| = {worst:.2}"))
    }));

    out.push(run_check("sim.alphabet_equivalence", |c| {
        for (m, d, height, boundary) in [
            (2u32, 5u64, 3u32, FusionRule::Alternating(TiePhase::TiesToOne)),
            (3, 10, 3, FusionRule::MajorityOdd),
            (2, 3, 4, FusionRule::MajorityEven { tie_prob: 0.5 }),
            (3, 4, 4, FusionRule::BayesianLrt(Priors::equal())),
        ] {
            let spec = lift(TreeSpec::new(m, height, d))?;
            let pair = lift(ErrorPair::symmetric(0.1))?;
            let sched = lift(alphabet_schedule(&spec, boundary))?;
            let cfg = lift(SimConfig::new(spec, sched, pair, trials, 99, Hypothesis::H0))?;
            let alpha_run = lift(simulate_alphabet(&cfg))?;

            let reduced = lift(equivalent_tree(&spec))?;
            let reduced_sched: Vec<FusionRule> = cfg
                .schedule
                .iter()
                .copied()
                .filter(|r| *r != FusionRule::Summation)
                .collect();
            let rcfg = lift(SimConfig::new(reduced, reduced_sched, pair, trials, 99, Hypothesis::H0))?;
            let reduced_run = lift(simulate(&rcfg))?;
            let combined = 3.0 * (alpha_run.sigma().powi(2) + reduced_run.sigma().powi(2)).sqrt();
            let diff = (alpha_run.estimate - reduced_run.estimate).abs();
            c.case(diff <= combined, || {
                format!("M={m} D={d} height={height}: {} vs reduced {} (3 sigma {combined:e})", alpha_run.estimate, reduced_run.estimate)
            })?;
            let cmp = compare_with(alpha_run, lift(crate::sim::analytic_error(&cfg))?);
            c.case(!cmp.flagged, || {
                format!("M={m} D={d} height={height}: estimate {} analytic {} z={:.2}", cmp.estimate, cmp.analytic, cmp.zscore)
            })?;
        }
        Ok(String::new())
    }));

    out
}

pub const DEFAULT_SIM_TRIALS: u64 = 1_000_000;

/// Runs `suite`; Monte Carlo checks use `sim_trials` trials per configuration.
pub fn run_suite(suite: Suite, sim_trials: u64) -> Report {
    let mut outcomes = Vec::new();
    let all = suite == Suite::All;
    if all || suite == Suite::Kernel {
        outcomes.extend(kernel_checks());
    }
    if all || suite == Suite::Oracle {
        outcomes.extend(oracle_checks());
    }
    if all || suite == Suite::Bounds {
        outcomes.extend(bounds_checks());
    }
    if all || suite == Suite::Alphabet {
        outcomes.extend(alphabet_checks());
    }
    if all || suite == Suite::Sim {
        outcomes.extend(sim_checks(sim_trials));
    }
    Report { outcomes }
}
