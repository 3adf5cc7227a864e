//! Generators, stopping rules, closed-form bounds, an exact enumeration oracle
//! and asymptotic diagnostics for demimartingales and partial sums of
//! positively associated sequences.
//!
//! Every inequality in the registry is checked the same way: a left-hand side
//! is estimated (Monte Carlo) or computed exactly (enumeration over a finite
//! chain), compared against its right-hand side, and summarised in a
//! [`VerificationReport`].

pub mod asymptotics;
pub mod bounds;
pub mod error;
pub mod expect;
pub mod experiment;
pub mod generators;
pub mod mc;
pub mod monotone;
pub mod oracle;
pub mod process;
pub mod registry;
pub mod report;
pub mod rng;
pub mod stats;
pub mod stopping;

pub use error::{Error, Result};
pub use expect::{Estimate, Mode};
pub use generators::{Family, GeneratorSpec, Law};
pub use process::{ProcessEnsemble, ProcessPath};
pub use report::{Check, Direction, Tolerance, Verdict, VerificationReport};
pub use stats::{summarize, SummaryStats};
