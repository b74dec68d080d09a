//! Error-probability evolution, bounds, rate exponents and Monte Carlo
//! corroboration for binary hypothesis testing over `M`-ary relay trees.
//!
//! Leaves observe i.i.d. binary messages with Type I error `α₀` and Type II
//! error `β₀`; every nonleaf agent fuses its `M` children into one message
//! and the root decides. [`kernel`] evolves `(α_k, β_k)` exactly in log
//! domain, [`oracle`] recomputes single steps by brute-force enumeration,
//! [`bounds`] evaluates closed-form sandwiches and exponents, [`alphabet`]
//! covers non-binary message alphabets and [`sim`] simulates whole trees.

pub mod alphabet;
pub mod bounds;
pub mod cli;
pub mod error;
pub mod kernel;
pub mod logprob;
pub mod oracle;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use kernel::{ErrorPair, FusionRule, Hypothesis, LevelTrace, Priors, Stage, TiePhase};
pub use logprob::LogProb;
