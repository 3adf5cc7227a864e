//! Verdicts and verification reports.

use std::fmt;

use serde::Serialize;

use crate::stats::SummaryStats;

/// Minimum expected hit count (`paths * bound`) for a Monte-Carlo tail check
/// to be conclusive.
pub const MIN_EXPECTED_HITS: f64 = 100.0;

/// An expectation that is either computed exactly (oracle) or estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Estimate {
    Exact(f64),
    Sampled(SummaryStats),
}

impl Estimate {
    pub fn mean(&self) -> f64 {
        match self {
            Estimate::Exact(v) => *v,
            Estimate::Sampled(s) => s.mean,
        }
    }

    pub fn stderr(&self) -> f64 {
        match self {
            Estimate::Exact(_) => 0.0,
            Estimate::Sampled(s) => s.stderr,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Estimate::Exact(_))
    }

    /// Number of sampled paths, `None` for exact values.
    pub fn count(&self) -> Option<u64> {
        match self {
            Estimate::Exact(_) => None,
            Estimate::Sampled(s) => Some(s.count),
        }
    }

    /// Same kind of estimate with a new mean (and unchanged stderr).
    pub fn with_mean(&self, mean: f64) -> Estimate {
        match self {
            Estimate::Exact(_) => Estimate::Exact(mean),
            Estimate::Sampled(s) => Estimate::Sampled(SummaryStats { mean, ..*s }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Le => "<=",
            Direction::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Inconclusive => "INCONCLUSIVE",
            Verdict::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    /// One-sided Monte-Carlo margin in standard errors.
    pub z: f64,
    /// Relative epsilon for exact comparisons, scaled by `max(1, |lhs|, |rhs|)`.
    pub exact_rel_eps: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            z: 3.0,
            exact_rel_eps: 1e-12,
        }
    }
}

/// One inequality `lhs (<=|>=) rhs`.
///
/// `z_margin` is the oriented slack in standard errors (positive: the
/// inequality holds). When the slack is known without sampling error (exact
/// oracle, or a degenerate sample) it is the raw slack instead.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub label: String,
    pub lhs: Estimate,
    pub rhs: f64,
    pub direction: Direction,
    pub z_margin: f64,
    pub verdict: Verdict,
}

impl Check {
    /// `lhs` against a right-hand side known without error.
    pub fn against_constant(
        label: impl Into<String>,
        lhs: Estimate,
        rhs: f64,
        direction: Direction,
        tol: &Tolerance,
    ) -> Check {
        let difference = lhs.with_mean(lhs.mean() - rhs);
        Check::paired(label, lhs, rhs, direction, difference, tol)
    }

    /// `lhs` against an estimated right-hand side; `difference` estimates
    /// `E[L - R]` on the same paths so its stderr accounts for both sides.
    pub fn paired(
        label: impl Into<String>,
        lhs: Estimate,
        rhs: f64,
        direction: Direction,
        difference: Estimate,
        tol: &Tolerance,
    ) -> Check {
        let slack = match direction {
            Direction::Le => -difference.mean(),
            Direction::Ge => difference.mean(),
        };
        let scale = 1f64.max(lhs.mean().abs()).max(rhs.abs());
        let within_eps = slack >= -tol.exact_rel_eps * scale;
        let stderr = difference.stderr();
        let (z_margin, verdict) = if stderr == 0.0 {
            (slack, if within_eps { Verdict::Pass } else { Verdict::Fail })
        } else if !stderr.is_finite() {
            (0.0, Verdict::Inconclusive)
        } else {
            let z = slack / stderr;
            let verdict = if z < -tol.z && !within_eps {
                Verdict::Fail
            } else {
                Verdict::Pass
            };
            (z, verdict)
        };
        Check {
            label: label.into(),
            lhs,
            rhs,
            direction,
            z_margin,
            verdict,
        }
    }

    /// Upper-tail probability check `P(...) <= bound` with the rare-event
    /// rule: a sampled estimate needs `paths * bound >= 100` expected hits.
    pub fn tail(label: impl Into<String>, probability: Estimate, bound: f64, tol: &Tolerance) -> Check {
        let check = Check::against_constant(label, probability, bound, Direction::Le, tol);
        match probability.count() {
            Some(paths) if (paths as f64) * bound < MIN_EXPECTED_HITS => Check {
                verdict: Verdict::Inconclusive,
                ..check
            },
            _ => check,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.lhs.is_exact()
    }
}

/// Outcome of one registry verification. The headline fields describe the
/// binding check; `checks` holds every individual comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub theorem_id: String,
    pub lhs: Estimate,
    pub rhs: f64,
    pub direction: Direction,
    pub z_margin: f64,
    pub verdict: Verdict,
    pub exact: bool,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl VerificationReport {
    /// Aggregates checks: any FAIL fails the report, otherwise any
    /// INCONCLUSIVE makes it inconclusive. The headline is the worst check.
    ///
    /// Panics if `checks` is empty.
    pub fn from_checks(theorem_id: impl Into<String>, checks: Vec<Check>, notes: Vec<String>) -> Self {
        assert!(!checks.is_empty(), "a report needs at least one check");
        let worst = checks
            .iter()
            .max_by(|a, b| {
                a.verdict
                    .cmp(&b.verdict)
                    .then(b.z_margin.partial_cmp(&a.z_margin).unwrap_or(std::cmp::Ordering::Equal))
            })
            .expect("nonempty")
            .clone();
        let exact = checks.iter().all(Check::is_exact);
        Self {
            theorem_id: theorem_id.into(),
            lhs: worst.lhs,
            rhs: worst.rhs,
            direction: worst.direction,
            z_margin: worst.z_margin,
            verdict: worst.verdict,
            exact,
            checks,
            notes,
        }
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.verdict == Verdict::Fail)
    }
}
