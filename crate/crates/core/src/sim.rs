//! Monte Carlo simulation of whole relay trees.
//!
//! Leaves emit Bernoulli messages, every agent fuses its children exactly as
//! the configured rule says, and the root decision is compared with the true
//! hypothesis. Randomness is addressed by position: trial `i` reads ChaCha8
//! stream `i` of the seed, leaf `j` owns words `2j, 2j+1` of that stream and
//! internal node `n` owns words `2(N + n), 2(N + n) + 1`. Results therefore
//! do not depend on how trials are split across threads.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::alphabet::{reduced_stages, TreeSpec};
use crate::error::{Error, Result};
use crate::kernel::{lrt_decision_rule, propagate, ErrorPair, FusionRule, Hypothesis, Priors};

pub const DEFAULT_LEAF_BUDGET: u128 = 10_000_000_000;

const CHUNK_TRIALS: u64 = 4096;

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub spec: TreeSpec,
    pub schedule: Vec<FusionRule>,
    pub leaf_pair: ErrorPair,
    pub trials: u64,
    pub seed: u64,
    pub hypothesis: Hypothesis,
    /// Upper limit on `leaves × trials`.
    pub budget: u128,
}

impl SimConfig {
    pub fn new(
        spec: TreeSpec,
        schedule: Vec<FusionRule>,
        leaf_pair: ErrorPair,
        trials: u64,
        seed: u64,
        hypothesis: Hypothesis,
    ) -> Result<Self> {
        let config = SimConfig {
            spec,
            schedule,
            leaf_pair,
            trials,
            seed,
            hypothesis,
            budget: DEFAULT_LEAF_BUDGET,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_budget(mut self, budget: u128) -> Self {
        self.budget = budget;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::arg("at least one trial is required"));
        }
        reduced_stages(&self.spec, &self.schedule)?;
        Ok(())
    }

    fn required_samples(&self) -> u128 {
        self.spec.leaves().saturating_mul(self.trials as u128)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimResult {
    pub error_count: u64,
    pub trials: u64,
    pub estimate: f64,
    pub ci_halfwidth_3sigma: f64,
}

impl SimResult {
    fn from_count(error_count: u64, trials: u64) -> Self {
        let p = error_count as f64 / trials as f64;
        SimResult {
            error_count,
            trials,
            estimate: p,
            ci_halfwidth_3sigma: 3.0 * (p * (1.0 - p) / trials as f64).sqrt(),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.ci_halfwidth_3sigma / 3.0
    }
}

/// Output of a binary agent for a given count of affirmative inputs.
#[derive(Clone, Copy, Debug)]
enum Output {
    Zero,
    One,
    /// "1" with the given probability, drawn from the node's own slot.
    Coin(f64),
}

#[derive(Clone, Debug)]
enum LevelPlan {
    Sum,
    Binary(Vec<Output>),
}

fn majority_table(arity: u32, tie: Output) -> Vec<Output> {
    (0..=arity)
        .map(|s| {
            if 2 * s > arity {
                Output::One
            } else if 2 * s == arity {
                tie
            } else {
                Output::Zero
            }
        })
        .collect()
}

/// Per-level fusion tables. LRT agents use the exact error pair of the
/// messages they receive.
fn build_plan(config: &SimConfig) -> Result<Vec<LevelPlan>> {
    let stages = reduced_stages(&config.spec, &config.schedule)?;
    let needs_pairs = stages
        .iter()
        .any(|s| matches!(s.rule, FusionRule::BayesianLrt(_)));
    let pairs = if needs_pairs {
        propagate(config.leaf_pair, &stages, Priors::equal())?.pairs
    } else {
        Vec::new()
    };

    let mut boundary = 0usize;
    config
        .schedule
        .iter()
        .map(|rule| {
            let plan = match *rule {
                FusionRule::Summation => return Ok(LevelPlan::Sum),
                _ => {
                    let arity = stages[boundary].arity;
                    let table = match *rule {
                        FusionRule::MajorityOdd => majority_table(arity, Output::Zero),
                        FusionRule::MajorityEven { tie_prob } => {
                            majority_table(arity, Output::Coin(tie_prob))
                        }
                        FusionRule::Alternating(crate::kernel::TiePhase::TiesToOne) => {
                            majority_table(arity, Output::One)
                        }
                        FusionRule::Alternating(crate::kernel::TiePhase::TiesToZero) => {
                            majority_table(arity, Output::Zero)
                        }
                        FusionRule::BayesianLrt(priors) => {
                            lrt_decision_rule(pairs[boundary], priors, arity)?
                                .0
                                .into_iter()
                                .map(|h| match h {
                                    Hypothesis::H0 => Output::Zero,
                                    Hypothesis::H1 => Output::One,
                                })
                                .collect()
                        }
                        FusionRule::Summation => unreachable!(),
                    };
                    LevelPlan::Binary(table)
                }
            };
            boundary += 1;
            Ok(plan)
        })
        .collect()
}

#[inline]
fn unit_draw(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

struct TrialRunner<'a> {
    plan: &'a [LevelPlan],
    m: usize,
    leaves: usize,
    p_one: f64,
    base: ChaCha8Rng,
    cur: Vec<u32>,
    next: Vec<u32>,
}

impl<'a> TrialRunner<'a> {
    fn new(plan: &'a [LevelPlan], config: &SimConfig) -> Self {
        let leaves = config.spec.leaves() as usize;
        let p_one = match config.hypothesis {
            Hypothesis::H0 => config.leaf_pair.alpha_prob(),
            Hypothesis::H1 => 1.0 - config.leaf_pair.beta_prob(),
        };
        TrialRunner {
            plan,
            m: config.spec.m as usize,
            leaves,
            p_one,
            base: ChaCha8Rng::seed_from_u64(config.seed),
            cur: Vec::with_capacity(leaves),
            next: Vec::with_capacity(leaves / 2 + 1),
        }
    }

    /// Root output of trial `trial` (0 or 1).
    fn run(&mut self, trial: u64) -> u32 {
        let mut rng = self.base.clone();
        rng.set_stream(trial);
        rng.set_word_pos(0);
        let mut node_rng = rng.clone();

        self.cur.clear();
        for _ in 0..self.leaves {
            self.cur.push((unit_draw(&mut rng) < self.p_one) as u32);
        }

        let mut node_id = 0u128;
        for level in self.plan {
            self.next.clear();
            for children in self.cur.chunks_exact(self.m) {
                let s: u32 = children.iter().sum();
                let out = match level {
                    LevelPlan::Sum => s,
                    LevelPlan::Binary(table) => match table[s as usize] {
                        Output::Zero => 0,
                        Output::One => 1,
                        Output::Coin(p) => {
                            node_rng.set_word_pos(2 * (self.leaves as u128 + node_id));
                            (unit_draw(&mut node_rng) < p) as u32
                        }
                    },
                };
                self.next.push(out);
                node_id += 1;
            }
            std::mem::swap(&mut self.cur, &mut self.next);
        }
        debug_assert_eq!(self.cur.len(), 1);
        self.cur[0]
    }
}

fn is_error(hypothesis: Hypothesis, root: u32) -> bool {
    match hypothesis {
        Hypothesis::H0 => root == 1,
        Hypothesis::H1 => root == 0,
    }
}

fn prepare(config: &SimConfig) -> Result<Vec<LevelPlan>> {
    config.validate()?;
    let required = config.required_samples();
    if required > config.budget {
        return Err(Error::BudgetExceeded {
            required,
            budget: config.budget,
        });
    }
    build_plan(config)
}

fn count_errors(config: &SimConfig, plan: &[LevelPlan], trials: std::ops::Range<u64>) -> u64 {
    let mut runner = TrialRunner::new(plan, config);
    trials
        .filter(|&t| is_error(config.hypothesis, runner.run(t)))
        .count() as u64
}

/// Estimates the root Type I (under H0) or Type II (under H1) error.
pub fn simulate(config: &SimConfig) -> Result<SimResult> {
    let plan = prepare(config)?;
    let chunks = config.trials.div_ceil(CHUNK_TRIALS);
    let errors: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK_TRIALS;
            let end = (start + CHUNK_TRIALS).min(config.trials);
            count_errors(config, &plan, start..end)
        })
        .sum();
    Ok(SimResult::from_count(errors, config.trials))
}

/// Single-threaded run over all trials in order.
pub fn simulate_serial(config: &SimConfig) -> Result<SimResult> {
    let plan = prepare(config)?;
    let errors = count_errors(config, &plan, 0..config.trials);
    Ok(SimResult::from_count(errors, config.trials))
}

/// Simulation of an `(M, D)`-tree with summation between `k₀` boundaries.
pub fn simulate_alphabet(config: &SimConfig) -> Result<SimResult> {
    let k0 = config.spec.k0();
    if config.spec.height % k0 != 0 {
        return Err(Error::arg(format!(
            "height {} is not a multiple of k0 = {k0}",
            config.spec.height
        )));
    }
    simulate(config)
}

/// Root error predicted by propagating the reduced `(M^{k₀}, 2)` tree.
pub fn analytic_error(config: &SimConfig) -> Result<f64> {
    let stages = reduced_stages(&config.spec, &config.schedule)?;
    let root = propagate(config.leaf_pair, &stages, Priors::equal())?.root();
    Ok(match config.hypothesis {
        Hypothesis::H0 => root.alpha_prob(),
        Hypothesis::H1 => root.beta_prob(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub result: SimResult,
    pub estimate: f64,
    pub analytic: f64,
    pub zscore: f64,
    pub flagged: bool,
}

/// `z = (estimate − analytic) / σ̂`. When the estimate is 0 or 1 its own
/// standard error vanishes and the analytic value's standard error is used.
pub fn zscore(estimate: f64, analytic: f64, trials: u64) -> f64 {
    let n = trials as f64;
    let mut sigma = (estimate * (1.0 - estimate) / n).sqrt();
    if sigma == 0.0 {
        sigma = (analytic * (1.0 - analytic) / n).sqrt();
    }
    let diff = estimate - analytic;
    if diff == 0.0 {
        0.0
    } else if sigma == 0.0 {
        diff.signum() * f64::INFINITY
    } else {
        diff / sigma
    }
}

pub fn compare_with(result: SimResult, analytic: f64) -> Comparison {
    let z = zscore(result.estimate, analytic, result.trials);
    Comparison {
        result,
        estimate: result.estimate,
        analytic,
        zscore: z,
        flagged: z.abs() > 4.0,
    }
}

pub fn compare_to_analytic(config: &SimConfig) -> Result<Comparison> {
    let analytic = analytic_error(config)?;
    Ok(compare_with(simulate(config)?, analytic))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::alphabet_schedule;
    use crate::kernel::TiePhase;

    fn config(m: u32, height: u32, rule: FusionRule, a: f64, trials: u64, h: Hypothesis) -> SimConfig {
        SimConfig::new(
            TreeSpec::binary(m, height).unwrap(),
            vec![rule; height as usize],
            ErrorPair::symmetric(a).unwrap(),
            trials,
            7,
            h,
        )
        .unwrap()
    }

    #[test]
    fn perfect_leaves_never_err() {
        for (m, rule) in [
            (3, FusionRule::MajorityOdd),
            (2, FusionRule::MajorityEven { tie_prob: 0.5 }),
            (4, FusionRule::Alternating(TiePhase::TiesToOne)),
        ] {
            let c = config(m, 3, rule, 0.0, 2000, Hypothesis::H0);
            assert_eq!(simulate(&c).unwrap().error_count, 0);
        }
    }

    #[test]
    fn parallel_and_serial_agree() {
        let c = config(2, 4, FusionRule::MajorityEven { tie_prob: 0.3 }, 0.2, 20_000, Hypothesis::H1);
        let a = simulate(&c).unwrap();
        let b = simulate_serial(&c).unwrap();
        assert_eq!(a, b);
        let again = simulate(&c).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn different_seeds_differ() {
        let mut c = config(3, 2, FusionRule::MajorityOdd, 0.3, 20_000, Hypothesis::H0);
        let a = simulate(&c).unwrap();
        c.seed = 8;
        let b = simulate(&c).unwrap();
        assert_ne!(a.error_count, b.error_count);
    }

    #[test]
    fn budget_is_enforced() {
        let c = config(3, 2, FusionRule::MajorityOdd, 0.1, 1000, Hypothesis::H0).with_budget(8999);
        match simulate(&c) {
            Err(Error::BudgetExceeded { required, budget }) => {
                assert_eq!((required, budget), (9000, 8999));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let spec = TreeSpec::binary(3, 2).unwrap();
        let pair = ErrorPair::symmetric(0.1).unwrap();
        assert!(SimConfig::new(spec, vec![FusionRule::MajorityOdd], pair, 10, 0, Hypothesis::H0).is_err());
        assert!(SimConfig::new(spec, vec![FusionRule::MajorityOdd; 2], pair, 0, 0, Hypothesis::H0).is_err());
        let even = vec![FusionRule::MajorityEven { tie_prob: 0.5 }; 2];
        assert!(SimConfig::new(spec, even, pair, 10, 0, Hypothesis::H0).is_err());
    }

    #[test]
    fn alphabet_divisibility_guard() {
        let spec = TreeSpec::new(2, 4, 5).unwrap();
        let pair = ErrorPair::symmetric(0.1).unwrap();
        let sched = vec![FusionRule::Summation; 4];
        assert!(SimConfig::new(spec, sched, pair, 10, 0, Hypothesis::H0).is_err());
        let ok = TreeSpec::new(2, 3, 5).unwrap();
        let sched = alphabet_schedule(&ok, FusionRule::Alternating(TiePhase::TiesToOne)).unwrap();
        let c = SimConfig::new(ok, sched, pair, 10, 0, Hypothesis::H0).unwrap();
        assert!(simulate_alphabet(&c).is_ok());
    }

    #[test]
    fn zscore_conventions() {
        assert_eq!(zscore(0.0, 0.0, 100), 0.0);
        assert!(zscore(0.5, 0.0023, 10_000) > 90.0);
        let z = zscore(0.0, 1e-4, 1000);
        assert!(z < 0.0 && z.is_finite());
        let flagged = compare_with(SimResult::from_count(5000, 10_000), 0.0023);
        assert!(flagged.flagged);
    }

    #[test]
    fn analytic_matches_kernel_trace() {
        let c = config(3, 2, FusionRule::MajorityOdd, 0.1, 1, Hypothesis::H0);
        assert!((analytic_error(&c).unwrap() - 0.002308096).abs() < 1e-15);
    }
}
