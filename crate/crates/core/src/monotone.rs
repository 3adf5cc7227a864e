//! Componentwise-nondecreasing test functions and indicator-monotonicity
//! probing for stopping rules.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::ProcessEnsemble;
use crate::rng::{derive_stream, BATTERY_STREAM, PROBE_STREAM};
use crate::stopping::StoppingRule;

/// Weight vectors are drawn with this many entries; prefix coordinates past
/// the end get weight 0.
pub const BATTERY_DIM: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunctionKind {
    LinearNonneg,
    ClippedLinear,
    CoordinateMaxThreshold,
    LastCoordinate,
    ConstantOne,
}

/// A componentwise-nondecreasing functional of a prefix `(s_1..s_j)`.
///
/// * `linear_nonneg`: `sum w_i s_i`
/// * `clipped_linear`: `clamp(sum w_i (s_i - c_i), floor, ceiling)`
/// * `coordinate_max_threshold`: `1{max_i s_i >= c_1}`
/// * `last_coordinate`: `s_j`
/// * `constant_one`: `1`
///
/// Weights and shifts are indexed from `s_1`; missing entries are 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneTestFunction {
    pub kind: TestFunctionKind,
    #[serde(default)]
    pub weights: Vec<f64>,
    #[serde(default)]
    pub shifts: Vec<f64>,
    #[serde(default)]
    pub floor: f64,
    #[serde(default)]
    pub ceiling: f64,
}

impl MonotoneTestFunction {
    fn bare(kind: TestFunctionKind) -> Self {
        Self {
            kind,
            weights: Vec::new(),
            shifts: Vec::new(),
            floor: 0.0,
            ceiling: 0.0,
        }
    }

    pub fn constant_one() -> Self {
        Self::bare(TestFunctionKind::ConstantOne)
    }

    pub fn last_coordinate() -> Self {
        Self::bare(TestFunctionKind::LastCoordinate)
    }

    pub fn linear(weights: Vec<f64>) -> Self {
        Self {
            weights,
            ..Self::bare(TestFunctionKind::LinearNonneg)
        }
    }

    pub fn clipped(weights: Vec<f64>, shifts: Vec<f64>, floor: f64, ceiling: f64) -> Self {
        Self {
            weights,
            shifts,
            floor,
            ceiling,
            ..Self::bare(TestFunctionKind::ClippedLinear)
        }
    }

    pub fn threshold(c: f64) -> Self {
        Self {
            shifts: vec![c],
            ..Self::bare(TestFunctionKind::CoordinateMaxThreshold)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::domain("test-function weights must be finite and nonnegative"));
        }
        if self.shifts.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("test-function shifts must be finite"));
        }
        if self.kind == TestFunctionKind::ClippedLinear && !(self.floor <= self.ceiling) {
            return Err(Error::domain("clip floor must not exceed ceiling"));
        }
        if self.kind == TestFunctionKind::CoordinateMaxThreshold && self.shifts.is_empty() {
            return Err(Error::domain("threshold function needs c_1"));
        }
        Ok(())
    }

    /// True when the function is nonnegative everywhere.
    pub fn is_nonnegative(&self) -> bool {
        match self.kind {
            TestFunctionKind::ClippedLinear => self.floor >= 0.0,
            TestFunctionKind::CoordinateMaxThreshold | TestFunctionKind::ConstantOne => true,
            TestFunctionKind::LinearNonneg | TestFunctionKind::LastCoordinate => false,
        }
    }

    pub fn evaluate(&self, prefix: &[f64]) -> Result<f64> {
        if prefix.is_empty() {
            return Err(Error::domain("empty prefix"));
        }
        if prefix.iter().any(|v| v.is_nan()) {
            return Err(Error::domain("NaN in prefix"));
        }
        Ok(self.eval(prefix))
    }

    /// [`evaluate`](Self::evaluate) without input checks.
    pub(crate) fn eval(&self, s: &[f64]) -> f64 {
        match self.kind {
            TestFunctionKind::ConstantOne => 1.0,
            TestFunctionKind::LastCoordinate => s[s.len() - 1],
            TestFunctionKind::LinearNonneg => s.iter().zip(&self.weights).map(|(x, w)| w * x).sum(),
            TestFunctionKind::ClippedLinear => {
                let v: f64 = s
                    .iter()
                    .zip(&self.weights)
                    .enumerate()
                    .map(|(i, (x, w))| w * (x - self.shifts.get(i).copied().unwrap_or(0.0)))
                    .sum();
                v.clamp(self.floor, self.ceiling)
            }
            TestFunctionKind::CoordinateMaxThreshold => {
                let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                f64::from(u8::from(m >= self.shifts[0]))
            }
        }
    }
}

fn random_weights<R: Rng>(rng: &mut R) -> Vec<f64> {
    (0..BATTERY_DIM)
        .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..1.0) })
        .collect()
}

/// Deterministic battery of `count` functions (at least the fixed members).
///
/// Fixed members come first: `constant_one`, plus `last_coordinate` unless
/// `require_nonnegative`. The rest cycle through the remaining kinds, keeping
/// only nonnegative kinds when `require_nonnegative`.
pub fn sample_battery(seed: u64, count: usize, require_nonnegative: bool) -> Vec<MonotoneTestFunction> {
    let mut out = vec![MonotoneTestFunction::constant_one()];
    if !require_nonnegative {
        out.push(MonotoneTestFunction::last_coordinate());
    }
    let kinds: &[TestFunctionKind] = if require_nonnegative {
        &[TestFunctionKind::ClippedLinear, TestFunctionKind::CoordinateMaxThreshold]
    } else {
        &[
            TestFunctionKind::LinearNonneg,
            TestFunctionKind::ClippedLinear,
            TestFunctionKind::CoordinateMaxThreshold,
        ]
    };
    let mut rng = derive_stream(seed, BATTERY_STREAM);
    let mut k = 0;
    while out.len() < count {
        let f = match kinds[k % kinds.len()] {
            TestFunctionKind::LinearNonneg => MonotoneTestFunction::linear(random_weights(&mut rng)),
            TestFunctionKind::ClippedLinear => {
                let weights = random_weights(&mut rng);
                let shifts = (0..BATTERY_DIM).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let floor = if require_nonnegative {
                    rng.gen_range(0.0..0.5)
                } else {
                    rng.gen_range(-3.0..0.0)
                };
                let ceiling = floor + rng.gen_range(0.5..4.0);
                MonotoneTestFunction::clipped(weights, shifts, floor, ceiling)
            }
            _ => MonotoneTestFunction::threshold(rng.gen_range(-5.0..5.0)),
        };
        out.push(f);
        k += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Nondecreasing,
    Nonincreasing,
}

impl Monotonicity {
    pub fn reversed(self) -> Self {
        match self {
            Monotonicity::Nondecreasing => Monotonicity::Nonincreasing,
            Monotonicity::Nonincreasing => Monotonicity::Nondecreasing,
        }
    }
}

/// Which indicator must be monotone in `S_1..S_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IndicatorTarget {
    /// `I{tau <= j}` for every `j`.
    AtMost,
    /// `I{tau = k}` for `k <= max_k`.
    Equals { max_k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Certificate {
    CertifiedByConstruction,
    SampledOk { probes: u64 },
    /// Raising `S_coordinate` (and every later value) by `delta` moved the
    /// indicator at index `index` against the declared direction.
    Counterexample {
        path: Vec<f64>,
        coordinate: usize,
        index: usize,
        delta: f64,
    },
}

impl Certificate {
    pub fn is_ok(&self) -> bool {
        !matches!(self, Certificate::Counterexample { .. })
    }
}

/// Analytic certificate when the rule has one, otherwise randomised probing:
/// for each path, pick an index `j` (or `k`), a coordinate `i <= j` and
/// `delta = u * max(1, max_k |S_k|)` with `u` log-uniform in `[1e-6, 1]`,
/// shift `S_i..S_n` by `delta` and compare indicators.
pub fn certify_indicator_monotonicity(
    rule: &StoppingRule,
    direction: Monotonicity,
    target: IndicatorTarget,
    probe_paths: &ProcessEnsemble,
    probes_per_path: usize,
    seed: u64,
) -> Certificate {
    if rule.certified(direction, target) {
        return Certificate::CertifiedByConstruction;
    }
    let n = probe_paths.horizon();
    let top = match target {
        IndicatorTarget::AtMost => n,
        IndicatorTarget::Equals { max_k } => max_k.min(n),
    };
    if top == 0 {
        return Certificate::SampledOk { probes: 0 };
    }
    let indicator = |tau: Option<usize>, j: usize| match target {
        IndicatorTarget::AtMost => tau.is_some_and(|t| t <= j),
        IndicatorTarget::Equals { .. } => tau == Some(j),
    };
    let mut rng = derive_stream(seed, PROBE_STREAM);
    let (ln_lo, ln_hi) = (1e-6f64.ln(), 0.0);
    let mut probes = 0u64;
    let mut shifted = vec![0.0; n];
    for path in probe_paths.paths() {
        let s = path.values();
        let scale = s.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let tau = rule.tau(s);
        for _ in 0..probes_per_path {
            let j = rng.gen_range(1..=top);
            let i = rng.gen_range(1..=j);
            let delta = rng.gen_range(ln_lo..=ln_hi).exp() * scale;
            shifted.copy_from_slice(s);
            for v in &mut shifted[i - 1..] {
                *v += delta;
            }
            let before = indicator(tau, j);
            let after = indicator(rule.tau(&shifted), j);
            probes += 1;
            let violated = match direction {
                Monotonicity::Nondecreasing => before && !after,
                Monotonicity::Nonincreasing => !before && after,
            };
            if violated {
                return Certificate::Counterexample {
                    path: s.to_vec(),
                    coordinate: i,
                    index: j,
                    delta,
                };
            }
        }
    }
    Certificate::SampledOk { probes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::ProcessPath;
    use crate::stopping::{RuleKind, StoppingRule};

    #[test]
    fn evaluate_examples() {
        assert_eq!(MonotoneTestFunction::constant_one().evaluate(&[3.0, -1.0]).unwrap(), 1.0);
        assert_eq!(MonotoneTestFunction::linear(vec![1.0, 1.0]).evaluate(&[2.0, 3.0]).unwrap(), 5.0);
        assert_eq!(MonotoneTestFunction::threshold(2.0).evaluate(&[1.0, 2.5, 0.0]).unwrap(), 1.0);
        assert_eq!(MonotoneTestFunction::threshold(3.0).evaluate(&[1.0, 2.5, 0.0]).unwrap(), 0.0);
        assert_eq!(MonotoneTestFunction::last_coordinate().evaluate(&[1.0, -4.0]).unwrap(), -4.0);
        // missing weights are zero; extra weights are ignored
        assert_eq!(MonotoneTestFunction::linear(vec![2.0]).evaluate(&[1.0, 10.0]).unwrap(), 2.0);
        assert_eq!(MonotoneTestFunction::linear(vec![1.0, 1.0, 1.0]).evaluate(&[1.0]).unwrap(), 1.0);
        let c = MonotoneTestFunction::clipped(vec![1.0, 1.0], vec![1.0, 0.0], 0.0, 2.0);
        assert_eq!(c.evaluate(&[0.0, 0.5]).unwrap(), 0.0);
        assert_eq!(c.evaluate(&[2.0, 0.5]).unwrap(), 1.5);
        assert_eq!(c.evaluate(&[9.0, 9.0]).unwrap(), 2.0);
        assert!(c.evaluate(&[f64::NAN]).is_err());
        assert!(c.evaluate(&[]).is_err());
    }

    #[test]
    fn battery_fixed_members_and_determinism() {
        let b = sample_battery(5, 2, false);
        assert_eq!(b[0], MonotoneTestFunction::constant_one());
        assert_eq!(b[1], MonotoneTestFunction::last_coordinate());
        assert_eq!(sample_battery(7, 40, false), sample_battery(7, 40, false));
        assert_ne!(sample_battery(7, 40, false), sample_battery(8, 40, false));
        let nn = sample_battery(7, 40, true);
        assert_eq!(nn.len(), 40);
        assert!(nn.iter().all(MonotoneTestFunction::is_nonnegative));
        let all = sample_battery(7, 40, false);
        for kind in [
            TestFunctionKind::LinearNonneg,
            TestFunctionKind::ClippedLinear,
            TestFunctionKind::CoordinateMaxThreshold,
        ] {
            assert!(all.iter().any(|f| f.kind == kind));
        }
        assert!(all.iter().all(|f| f.validate().is_ok()));
    }

    #[test]
    fn battery_self_test_monotone_and_nonnegative() {
        let battery = sample_battery(11, 48, false);
        let nonneg = sample_battery(12, 48, true);
        let mut rng = derive_stream(99, 0);
        let mut min_nonneg = f64::INFINITY;
        for probe in 0..100_000 {
            let j = rng.gen_range(1..=12);
            let s: Vec<f64> = (0..j).map(|_| rng.gen_range(-6.0..6.0)).collect();
            let i = rng.gen_range(0..j);
            let delta = rng.gen_range(1e-6f64.ln()..=0.0).exp();
            let mut t = s.clone();
            for v in &mut t[i..] {
                *v += delta;
            }
            let f = &battery[probe % battery.len()];
            assert!(f.evaluate(&t).unwrap() >= f.evaluate(&s).unwrap(), "{f:?} on {s:?}");
            let g = &nonneg[probe % nonneg.len()];
            min_nonneg = min_nonneg.min(g.evaluate(&s).unwrap());
        }
        assert!(min_nonneg >= 0.0);
    }

    fn ensemble(paths: Vec<Vec<f64>>) -> ProcessEnsemble {
        ProcessEnsemble::new(paths.into_iter().map(|p| ProcessPath::new(p).unwrap()).collect(), 0, "test").unwrap()
    }

    #[test]
    fn certificates() {
        let e = ensemble(vec![vec![-2.0, 0.0]]);
        let up = StoppingRule::new(RuleKind::FirstPassageUp { lambda: 1.0 });
        assert_eq!(
            certify_indicator_monotonicity(&up, Monotonicity::Nondecreasing, IndicatorTarget::AtMost, &e, 10, 0),
            Certificate::CertifiedByConstruction
        );
        let det = StoppingRule::new(RuleKind::Deterministic { m: 2 });
        for dir in [Monotonicity::Nondecreasing, Monotonicity::Nonincreasing] {
            assert_eq!(
                certify_indicator_monotonicity(&det, dir, IndicatorTarget::AtMost, &e, 10, 0),
                Certificate::CertifiedByConstruction
            );
        }
        let down = StoppingRule::new(RuleKind::FirstPassageDown { lambda: -1.0 });
        let cert =
            certify_indicator_monotonicity(&down, Monotonicity::Nondecreasing, IndicatorTarget::AtMost, &e, 1000, 3);
        match cert {
            Certificate::Counterexample { path, coordinate, delta, .. } => {
                assert_eq!(path, vec![-2.0, 0.0]);
                assert_eq!(coordinate, 1);
                assert!(delta > 1.0);
            }
            other => panic!("expected a counterexample, got {other:?}"),
        }
    }
}
