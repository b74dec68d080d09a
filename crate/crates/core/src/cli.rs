//! Command-line front end. Tables go to stdout as CSV, diagnostics to stderr.
//!
//! Exit codes: 0 success, 1 failed verification or computation, 2 usage error.

use std::ffi::OsString;
use std::io::{self, Write};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::alphabet::{alphabet_schedule, bits_bounds, fig3_table, k0_of, rates, rates_for_k0, TreeSpec};
use crate::bounds::{alternating_total_bounds, fig2_table, lrt_lower_bound, sample_size, total_bounds};
use crate::error::{Error, Result};
use crate::kernel::{propagate, total_error, ErrorPair, FusionRule, Hypothesis, Priors, Stage, TiePhase};
use crate::sim::{analytic_error, compare_with, simulate, simulate_alphabet, SimConfig};
use crate::verify::{run_suite, Suite, DEFAULT_SIM_TRIALS};

#[derive(Parser, Debug)]
#[command(name = "relaytree", version, about = "Error evolution in M-ary relay trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-level error probabilities with their closed-form bounds.
    Recurse(RecurseArgs),
    /// Monte Carlo estimate of the root error.
    Simulate(SimulateArgs),
    /// Rate exponents for a range of branching factors.
    Exponents(ExponentsArgs),
    /// Rates and average message size for non-binary alphabets.
    Alphabet(AlphabetArgs),
    /// Leaves needed to reach a target total error under majority fusion.
    Samplesize(SampleSizeArgs),
    /// Run the invariant checks.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RuleArg {
    Majority,
    Alternating,
    Lrt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PhaseArg {
    One,
    Zero,
}

impl From<PhaseArg> for TiePhase {
    fn from(p: PhaseArg) -> Self {
        match p {
            PhaseArg::One => TiePhase::TiesToOne,
            PhaseArg::Zero => TiePhase::TiesToZero,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum HypothesisArg {
    H0,
    H1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SuiteArg {
    Kernel,
    Oracle,
    Bounds,
    Alphabet,
    Sim,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Kernel => Suite::Kernel,
            SuiteArg::Oracle => Suite::Oracle,
            SuiteArg::Bounds => Suite::Bounds,
            SuiteArg::Alphabet => Suite::Alphabet,
            SuiteArg::Sim => Suite::Sim,
            SuiteArg::All => Suite::All,
        }
    }
}

/// Flags shared by `recurse` and `simulate` that pick the fusion rule.
#[derive(Args, Debug)]
struct RuleFlags {
    #[arg(long, value_enum, default_value = "majority")]
    rule: RuleArg,
    /// Tie-break probability for majority with even M (default 0.5).
    #[arg(long)]
    pb: Option<f64>,
    /// Tie direction at the first level of the alternating rule (default one).
    #[arg(long, value_enum)]
    phase: Option<PhaseArg>,
    /// Prior of H0; the LRT rule and total error use (pi0, 1 - pi0).
    #[arg(long, default_value_t = 0.5)]
    pi0: f64,
}

impl RuleFlags {
    fn priors(&self) -> Result<Priors> {
        Priors::from_pi0(self.pi0)
    }

    fn check_conflicts(&self, m: u32) -> std::result::Result<(), String> {
        if self.pb.is_some() && self.rule != RuleArg::Majority {
            return Err(format!("--pb conflicts with --rule {}", rule_name(self.rule)));
        }
        if self.pb.is_some() && m % 2 == 1 {
            return Err(format!("--pb conflicts with odd --m {m}: there are no ties"));
        }
        if self.phase.is_some() && self.rule != RuleArg::Alternating {
            return Err(format!("--phase conflicts with --rule {}", rule_name(self.rule)));
        }
        if self.rule == RuleArg::Alternating && m % 2 == 1 {
            return Err(format!("--rule alternating conflicts with odd --m {m}"));
        }
        Ok(())
    }

    fn first_phase(&self) -> TiePhase {
        self.phase.unwrap_or(PhaseArg::One).into()
    }

    /// Rule used at a single fusion level (the first, for alternating).
    fn fusion_rule(&self, m: u32) -> Result<FusionRule> {
        Ok(match self.rule {
            RuleArg::Majority if m % 2 == 0 => FusionRule::MajorityEven {
                tie_prob: self.pb.unwrap_or(0.5),
            },
            RuleArg::Majority => FusionRule::MajorityOdd,
            RuleArg::Alternating => FusionRule::Alternating(self.first_phase()),
            RuleArg::Lrt => FusionRule::BayesianLrt(self.priors()?),
        })
    }

    fn stages(&self, m: u32, levels: usize) -> Result<Vec<Stage>> {
        Ok(match self.rule {
            RuleArg::Alternating => Stage::alternating(m, levels, self.first_phase()),
            _ => Stage::repeat(m, self.fusion_rule(m)?, levels),
        })
    }
}

fn rule_name(r: RuleArg) -> &'static str {
    match r {
        RuleArg::Majority => "majority",
        RuleArg::Alternating => "alternating",
        RuleArg::Lrt => "lrt",
    }
}

#[derive(Args, Debug)]
struct RecurseArgs {
    /// Branching factor M.
    #[arg(long)]
    m: u32,
    #[command(flatten)]
    rule: RuleFlags,
    /// Leaf Type I error.
    #[arg(long)]
    alpha0: f64,
    /// Leaf Type II error (defaults to alpha0).
    #[arg(long)]
    beta0: Option<f64>,
    /// Number of fusion levels.
    #[arg(long, default_value_t = 10)]
    levels: usize,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    m: u32,
    #[arg(long)]
    height: u32,
    /// Message alphabet size; above 2, agents sum between k0-level boundaries.
    #[arg(long, default_value_t = 2)]
    d: u64,
    #[command(flatten)]
    rule: RuleFlags,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "h0")]
    hypothesis: HypothesisArg,
    #[arg(long, default_value_t = 0.1)]
    alpha0: f64,
    #[arg(long)]
    beta0: Option<f64>,
}

#[derive(Args, Debug)]
struct ExponentsArgs {
    #[arg(long, default_value_t = 2)]
    m_min: u32,
    #[arg(long, default_value_t = 64)]
    m_max: u32,
}

#[derive(Args, Debug)]
struct AlphabetArgs {
    #[arg(long)]
    m: u32,
    /// Alphabet size; prints the single row for k0(M, D).
    #[arg(long, required_unless_present = "k0_max")]
    d: Option<u64>,
    /// Print rows for k0 = 1..=k0_max instead.
    #[arg(long, conflicts_with = "d")]
    k0_max: Option<u32>,
}

#[derive(Args, Debug)]
struct SampleSizeArgs {
    #[arg(long)]
    m: u32,
    #[arg(long)]
    alpha0: f64,
    #[arg(long)]
    beta0: Option<f64>,
    /// Target total error.
    #[arg(long)]
    epsilon: f64,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: SuiteArg,
    /// Monte Carlo trials per configuration in the sim suite.
    #[arg(long, default_value_t = DEFAULT_SIM_TRIALS)]
    trials: u64,
}

/// Formats like C's `%.12g`.
pub fn fmt_g(x: f64) -> String {
    const SIG: i32 = 12;
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", (SIG - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= SIG {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (SIG - 1 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt_g(x: Option<f64>) -> String {
    x.map(fmt_g).unwrap_or_default()
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            _ => Failure::Run(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Parses `args` (program name first) and runs the command against the
/// process's stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Recurse(a) => recurse(&a, out),
        Command::Simulate(a) => simulate_cmd(&a, out, err),
        Command::Exponents(a) => exponents(&a, out),
        Command::Alphabet(a) => alphabet(&a, out),
        Command::Samplesize(a) => samplesize(&a, out),
        Command::Verify(a) => verify(&a, out),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
        Err(Failure::Run(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}

fn recurse(a: &RecurseArgs, out: &mut dyn Write) -> CliResult {
    a.rule.check_conflicts(a.m).map_err(Failure::Usage)?;
    let beta0 = a.beta0.unwrap_or(a.alpha0);
    let priors = a.rule.priors()?;
    let pair = ErrorPair::from_probs(a.alpha0, beta0)?;
    let stages = a.rule.stages(a.m, a.levels)?;
    let trace = propagate(pair, &stages, priors)?;
    let l0 = total_error(pair, priors).prob();

    writeln!(out, "level,alpha,beta,alpha_log2inv,beta_log2inv,total_log2inv,thm_lower,thm_upper")?;
    let mut n: Option<u128> = Some(1);
    for (k, (p, total)) in trace.pairs.iter().zip(&trace.total).enumerate() {
        // Bounds that do not apply at this level (or to these inputs) are left blank.
        let (lower, upper) = match (a.rule.rule, n) {
            (RuleArg::Majority, Some(n)) => match total_bounds(a.alpha0, beta0, priors, a.m, n) {
                Ok(b) => (Some(b.lower), Some(b.upper)),
                Err(_) => (None, None),
            },
            (RuleArg::Alternating, _) if k % 2 == 0 => {
                match alternating_total_bounds(a.alpha0, beta0, priors, a.m, k as u32) {
                    Ok(b) => (Some(b.lower), Some(b.upper)),
                    Err(_) => (None, None),
                }
            }
            (RuleArg::Lrt, Some(n)) => (lrt_lower_bound(l0, priors, a.m, n).ok(), None),
            _ => (None, None),
        };
        writeln!(
            out,
            "{k},{},{},{},{},{},{},{}",
            fmt_g(p.alpha_prob()),
            fmt_g(p.beta_prob()),
            fmt_g(p.alpha.bits()),
            fmt_g(p.beta.bits()),
            fmt_g(total.bits()),
            opt_g(lower),
            opt_g(upper),
        )?;
        n = n.and_then(|n| n.checked_mul(a.m as u128));
    }
    Ok(())
}

fn simulate_cmd(a: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    a.rule.check_conflicts(a.m).map_err(Failure::Usage)?;
    let pair = ErrorPair::from_probs(a.alpha0, a.beta0.unwrap_or(a.alpha0))?;
    let spec = TreeSpec::new(a.m, a.height, a.d)?;
    let hypothesis = match a.hypothesis {
        HypothesisArg::H0 => Hypothesis::H0,
        HypothesisArg::H1 => Hypothesis::H1,
    };
    let schedule = if a.d == 2 {
        a.rule.stages(a.m, a.height as usize)?.into_iter().map(|s| s.rule).collect()
    } else {
        alphabet_schedule(&spec, a.rule.fusion_rule(a.m)?)?
    };
    let config = SimConfig::new(spec, schedule, pair, a.trials, a.seed, hypothesis)?;
    let result = if a.d == 2 {
        simulate(&config)?
    } else {
        simulate_alphabet(&config)?
    };
    let cmp = compare_with(result, analytic_error(&config)?);
    writeln!(out, "estimate,ci3sigma,analytic,zscore")?;
    writeln!(
        out,
        "{},{},{},{}",
        fmt_g(cmp.estimate),
        fmt_g(result.ci_halfwidth_3sigma),
        fmt_g(cmp.analytic),
        fmt_g(cmp.zscore)
    )?;
    if cmp.flagged {
        writeln!(
            err,
            "warning: estimate differs from the analytic value by {} standard errors",
            fmt_g(cmp.zscore)
        )?;
    }
    Ok(())
}

fn exponents(a: &ExponentsArgs, out: &mut dyn Write) -> CliResult {
    writeln!(out, "m,majority_random,alternating,upper_bound")?;
    for r in fig2_table(a.m_min, a.m_max)? {
        // The alternating exponent is only meaningful once λ >= 2.
        let alt = r.alternating.filter(|_| r.m >= 4);
        writeln!(
            out,
            "{},{},{},{}",
            r.m,
            fmt_g(r.majority_random),
            opt_g(alt),
            fmt_g(r.upper_bound)
        )?;
    }
    Ok(())
}

fn alphabet(a: &AlphabetArgs, out: &mut dyn Write) -> CliResult {
    if a.m < 2 {
        return Err(Failure::Usage(format!("--m must be at least 2, got {}", a.m)));
    }
    let (k0_min, k0_max) = match (a.d, a.k0_max) {
        (Some(d), _) => {
            rates(a.m, d)?;
            let k0 = k0_of(a.m, d);
            (k0, k0)
        }
        (None, Some(k)) => (1, k),
        (None, None) => unreachable!("clap requires --d or --k0-max"),
    };
    let (band_lower, band_upper) = bits_bounds(a.m);
    writeln!(out, "k0,rho,varrho,sigma,avg_bits,band_lower,band_upper")?;
    for row in fig3_table(a.m, k0_min, k0_max)? {
        let r = rates_for_k0(a.m, row.k0);
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.k0,
            fmt_g(r.rho),
            fmt_g(r.varrho),
            opt_g(r.sigma),
            fmt_g(row.avg_bits),
            fmt_g(band_lower),
            fmt_g(band_upper)
        )?;
    }
    Ok(())
}

fn samplesize(a: &SampleSizeArgs, out: &mut dyn Write) -> CliResult {
    let s = sample_size(a.m, a.alpha0, a.beta0.unwrap_or(a.alpha0), a.epsilon)?;
    let json = serde_json::to_string(&s).map_err(|e| Failure::Run(e.to_string()))?;
    writeln!(out, "{json}")?;
    Ok(())
}

fn verify(a: &VerifyArgs, out: &mut dyn Write) -> CliResult {
    let report = run_suite(a.suite.into(), a.trials);
    write!(out, "{report}")?;
    if report.all_passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|o| o.name).collect();
        Err(Failure::Run(format!("failed: {}", names.join(", "))))
    }
}
