//! Stopping rules and stopped views of paths.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::monotone::{IndicatorTarget, Monotonicity};
use crate::process::ProcessPath;

/// Prefix predicate for user rules: `tau` is the first `k` with
/// `predicate(S_1..S_k)`.
#[derive(Clone)]
pub struct CustomPredicate {
    pub name: String,
    pub predicate: Arc<dyn Fn(&[f64]) -> bool + Send + Sync>,
}

impl fmt::Debug for CustomPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomPredicate({})", self.name)
    }
}

impl PartialEq for CustomPredicate {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && Arc::ptr_eq(&self.predicate, &other.predicate)
    }
}

/// User rules expressible in a config file, plus library closures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "predicate", rename_all = "snake_case")]
pub enum UserPredicate {
    /// Stop when `|S_k| >= lambda` (two-sided exit).
    AbsAtLeast { lambda: f64 },
    /// Stop when the increment `X_k >= lambda`.
    IncrementAtLeast { lambda: f64 },
    /// Stop when the increment `X_k <= lambda`.
    IncrementAtMost { lambda: f64 },
    #[serde(skip)]
    Custom(CustomPredicate),
}

impl UserPredicate {
    fn holds(&self, prefix: &[f64]) -> bool {
        let k = prefix.len();
        let last = prefix[k - 1];
        let increment = || if k == 1 { last } else { last - prefix[k - 2] };
        match self {
            UserPredicate::AbsAtLeast { lambda } => last.abs() >= *lambda,
            UserPredicate::IncrementAtLeast { lambda } => increment() >= *lambda,
            UserPredicate::IncrementAtMost { lambda } => increment() <= *lambda,
            UserPredicate::Custom(c) => (c.predicate)(prefix),
        }
    }

    fn lambda(&self) -> Option<f64> {
        match self {
            UserPredicate::AbsAtLeast { lambda }
            | UserPredicate::IncrementAtLeast { lambda }
            | UserPredicate::IncrementAtMost { lambda } => Some(*lambda),
            UserPredicate::Custom(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleKind {
    /// `min{k : S_k >= lambda}`.
    FirstPassageUp { lambda: f64 },
    /// `min{k : S_k <= lambda}`.
    FirstPassageDown { lambda: f64 },
    /// `tau = m`.
    Deterministic { m: usize },
    /// `min(tau_inner, cap)`.
    Capped { inner: Box<RuleKind>, cap: usize },
    User(UserPredicate),
}

impl RuleKind {
    fn validate(&self) -> Result<()> {
        match self {
            RuleKind::FirstPassageUp { lambda } | RuleKind::FirstPassageDown { lambda } => {
                if !lambda.is_finite() {
                    return Err(Error::config("stopping.lambda", "must be finite"));
                }
            }
            RuleKind::Deterministic { m } => {
                if *m == 0 {
                    return Err(Error::config("stopping.m", "must be at least 1"));
                }
            }
            RuleKind::Capped { inner, cap } => {
                if *cap == 0 {
                    return Err(Error::config("stopping.cap", "must be at least 1"));
                }
                inner.validate()?;
            }
            RuleKind::User(p) => {
                if p.lambda().is_some_and(|l| !l.is_finite()) {
                    return Err(Error::config("stopping.lambda", "must be finite"));
                }
            }
        }
        Ok(())
    }

    fn tau(&self, path: &[f64]) -> Option<usize> {
        match self {
            RuleKind::FirstPassageUp { lambda } => path.iter().position(|&s| s >= *lambda).map(|k| k + 1),
            RuleKind::FirstPassageDown { lambda } => path.iter().position(|&s| s <= *lambda).map(|k| k + 1),
            RuleKind::Deterministic { m } => (*m <= path.len()).then_some(*m),
            RuleKind::Capped { inner, cap } => match inner.tau(path) {
                Some(t) => Some(t.min(*cap)),
                None => (*cap <= path.len()).then_some(*cap),
            },
            RuleKind::User(p) => (1..=path.len()).find(|&k| p.holds(&path[..k])),
        }
    }

    fn bound(&self) -> Option<usize> {
        match self {
            RuleKind::Deterministic { m } => Some(*m),
            RuleKind::Capped { inner, cap } => Some(inner.bound().map_or(*cap, |b| b.min(*cap))),
            _ => None,
        }
    }

    fn certified(&self, dir: Monotonicity, target: IndicatorTarget) -> bool {
        match (self, target) {
            (_, IndicatorTarget::Equals { max_k: 0 }) => true,
            (RuleKind::Deterministic { .. }, _) => true,
            (RuleKind::FirstPassageUp { .. }, IndicatorTarget::AtMost) => dir == Monotonicity::Nondecreasing,
            (RuleKind::FirstPassageDown { .. }, IndicatorTarget::AtMost) => dir == Monotonicity::Nonincreasing,
            // I{tau = 1} = I{tau <= 1}
            (RuleKind::FirstPassageUp { .. } | RuleKind::FirstPassageDown { .. }, IndicatorTarget::Equals { max_k }) => {
                max_k <= 1 && self.certified(dir, IndicatorTarget::AtMost)
            }
            (RuleKind::Capped { inner, .. }, IndicatorTarget::AtMost) => inner.certified(dir, target),
            // I{min(tau, c) = k} is I{tau = k} below c and 1 - I{tau <= c - 1} at c.
            (RuleKind::Capped { inner, cap }, IndicatorTarget::Equals { max_k }) => {
                inner.certified(dir, IndicatorTarget::Equals { max_k: max_k.min(cap - 1) })
                    && (max_k < *cap || inner.certified(dir.reversed(), IndicatorTarget::AtMost))
            }
            (RuleKind::User(_), _) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeclaredDirection {
    Nondecreasing,
    Nonincreasing,
    #[default]
    None,
}

impl DeclaredDirection {
    pub fn monotonicity(self) -> Option<Monotonicity> {
        match self {
            DeclaredDirection::Nondecreasing => Some(Monotonicity::Nondecreasing),
            DeclaredDirection::Nonincreasing => Some(Monotonicity::Nonincreasing),
            DeclaredDirection::None => None,
        }
    }
}

/// A stopping rule with the direction its user claims for the indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    #[serde(flatten)]
    pub kind: RuleKind,
    #[serde(default)]
    pub declared_direction: DeclaredDirection,
}

impl StoppingRule {
    pub fn new(kind: RuleKind) -> Self {
        Self {
            kind,
            declared_direction: DeclaredDirection::None,
        }
    }

    pub fn first_passage_up(lambda: f64) -> Self {
        Self::new(RuleKind::FirstPassageUp { lambda })
    }

    pub fn first_passage_down(lambda: f64) -> Self {
        Self::new(RuleKind::FirstPassageDown { lambda })
    }

    pub fn deterministic(m: usize) -> Self {
        Self::new(RuleKind::Deterministic { m })
    }

    pub fn user(name: impl Into<String>, predicate: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        Self::new(RuleKind::User(UserPredicate::Custom(CustomPredicate {
            name: name.into(),
            predicate: Arc::new(predicate),
        })))
    }

    pub fn capped(self, cap: usize) -> Self {
        Self {
            kind: RuleKind::Capped {
                inner: Box::new(self.kind),
                cap,
            },
            declared_direction: self.declared_direction,
        }
    }

    pub fn declared(mut self, direction: DeclaredDirection) -> Self {
        self.declared_direction = direction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()
    }

    /// First stopping index (1-based) on `path = S_1..S_n`, `None` when the
    /// rule has not fired by `n`.
    pub fn tau(&self, path: &[f64]) -> Option<usize> {
        self.kind.tau(path)
    }

    /// Deterministic upper bound on `tau`, if the rule has one.
    pub fn bound(&self) -> Option<usize> {
        self.kind.bound()
    }

    /// Whether `direction` holds for `target` analytically.
    pub fn certified(&self, direction: Monotonicity, target: IndicatorTarget) -> bool {
        self.kind.certified(direction, target)
    }
}

/// `tau`, `S_tau` and `S_{tau ^ 1}..S_{tau ^ n}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppedView {
    pub tau: Option<usize>,
    pub s_tau: Option<f64>,
    pub stopped_sequence: Vec<f64>,
}

pub fn apply_stop(path: &ProcessPath, rule: &StoppingRule) -> StoppedView {
    let s = path.values();
    let tau = rule.tau(s);
    let stopped_sequence = match tau {
        Some(t) => (1..=s.len()).map(|j| s[j.min(t) - 1]).collect(),
        None => s.to_vec(),
    };
    StoppedView {
        tau,
        s_tau: tau.map(|t| s[t - 1]),
        stopped_sequence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path(v: &[f64]) -> ProcessPath {
        ProcessPath::new(v.to_vec()).unwrap()
    }

    #[test]
    fn apply_stop_examples() {
        let v = apply_stop(&path(&[1.0, 2.0, 3.0]), &StoppingRule::first_passage_up(2.0));
        assert_eq!((v.tau, v.s_tau), (Some(2), Some(2.0)));
        assert_eq!(v.stopped_sequence, vec![1.0, 2.0, 2.0]);
        let v = apply_stop(&path(&[1.0, 2.0, 3.0]), &StoppingRule::first_passage_up(5.0));
        assert_eq!((v.tau, v.s_tau), (None, None));
        assert_eq!(v.stopped_sequence, vec![1.0, 2.0, 3.0]);
        let v = apply_stop(&path(&[-1.0, 0.0, 1.0]), &StoppingRule::first_passage_up(1.0));
        assert_eq!(v.tau, Some(3));
    }

    #[test]
    fn deterministic_and_capped() {
        let p = [0.0, 1.0, 2.0];
        assert_eq!(StoppingRule::deterministic(2).tau(&p), Some(2));
        assert_eq!(StoppingRule::deterministic(4).tau(&p), None);
        assert_eq!(StoppingRule::first_passage_up(9.0).capped(3).tau(&p), Some(3));
        assert_eq!(StoppingRule::first_passage_up(9.0).capped(5).tau(&p), None);
        assert_eq!(StoppingRule::first_passage_up(1.0).capped(3).tau(&p), Some(2));
        assert_eq!(StoppingRule::first_passage_up(9.0).capped(3).bound(), Some(3));
        assert_eq!(StoppingRule::first_passage_up(9.0).bound(), None);
    }

    #[test]
    fn user_predicates() {
        let p = [0.5, -1.5, 0.0];
        let abs = StoppingRule::new(RuleKind::User(UserPredicate::AbsAtLeast { lambda: 1.0 }));
        assert_eq!(abs.tau(&p), Some(2));
        let inc = StoppingRule::new(RuleKind::User(UserPredicate::IncrementAtLeast { lambda: 1.0 }));
        assert_eq!(inc.tau(&p), Some(3));
        let custom = StoppingRule::user("second", |s| s.len() == 2);
        assert_eq!(custom.tau(&p), Some(2));
    }

    #[test]
    fn certificates_follow_structure() {
        use IndicatorTarget::*;
        use Monotonicity::*;
        let up = StoppingRule::first_passage_up(1.0);
        let down = StoppingRule::first_passage_down(1.0);
        assert!(up.certified(Nondecreasing, AtMost) && !up.certified(Nonincreasing, AtMost));
        assert!(down.certified(Nonincreasing, AtMost) && !down.certified(Nondecreasing, AtMost));
        assert!(up.certified(Nondecreasing, Equals { max_k: 1 }));
        assert!(!up.certified(Nondecreasing, Equals { max_k: 2 }));
        let det = StoppingRule::deterministic(3).capped(2);
        for d in [Nondecreasing, Nonincreasing] {
            assert!(det.certified(d, AtMost) && det.certified(d, Equals { max_k: 5 }));
        }
        // capped at 2: I{tau' = 1} = I{S_1 >= 1}, I{tau' = 2} = I{S_1 < 1}
        let cap = up.clone().capped(2);
        assert!(cap.certified(Nondecreasing, Equals { max_k: 1 }));
        assert!(!cap.certified(Nondecreasing, Equals { max_k: 2 }));
        assert!(down.clone().capped(2).certified(Nonincreasing, Equals { max_k: 1 }));
        assert!(!StoppingRule::user("x", |_| true).certified(Nondecreasing, AtMost));
    }

    #[test]
    fn config_round_trip() {
        let src = r#"
kind = "capped"
cap = 3
declared_direction = "nondecreasing"
inner.kind = "first_passage_up"
inner.lambda = 1.0
"#;
        let rule: StoppingRule = toml::from_str(src).unwrap();
        assert_eq!(
            rule,
            StoppingRule::first_passage_up(1.0)
                .capped(3)
                .declared(DeclaredDirection::Nondecreasing)
        );
        let user: StoppingRule = toml::from_str("kind = \"user\"\npredicate = \"abs_at_least\"\nlambda = 2.0").unwrap();
        assert_eq!(user.kind, RuleKind::User(UserPredicate::AbsAtLeast { lambda: 2.0 }));
    }

    proptest! {
        #[test]
        fn prefix_measurable_and_capping_commutes(
            steps in proptest::collection::vec(-2.0f64..2.0, 1..12),
            suffix in proptest::collection::vec(-2.0f64..2.0, 12),
            lambda in -3.0f64..3.0,
            cap in 1usize..14,
            up in any::<bool>(),
        ) {
            let mut s = Vec::new();
            let mut acc = 0.0;
            for x in &steps {
                acc += x;
                s.push(acc);
            }
            let rule = if up { StoppingRule::first_passage_up(lambda) } else { StoppingRule::first_passage_down(lambda) };
            let tau = rule.tau(&s);
            if let Some(t) = tau {
                let mut other = s[..t].to_vec();
                let mut acc = s[t - 1];
                for x in &suffix[..s.len() - t] {
                    acc += x;
                    other.push(acc);
                }
                prop_assert_eq!(rule.tau(&other), Some(t));
            }
            let capped = rule.clone().capped(cap).tau(&s);
            let expected = match tau {
                Some(t) => Some(t.min(cap)),
                None => (cap <= s.len()).then_some(cap),
            };
            prop_assert_eq!(capped, expected);
        }
    }
}
