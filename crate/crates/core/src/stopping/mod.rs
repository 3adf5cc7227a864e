//! Stopping rules, stopped paths and the optional-sampling registry entries.

mod rule;
pub(crate) mod verify;

pub use rule::{apply_stop, CustomPredicate, DeclaredDirection, RuleKind, StoppedView, StoppingRule, UserPredicate};
