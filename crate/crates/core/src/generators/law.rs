//! Bounded (or standard normal) innovation laws.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Law {
    /// ±1 with probability 1/2 each.
    Rademacher,
    /// 1 with probability `p`, else 0.
    Bernoulli { p: f64 },
    /// Continuous uniform on `[a, b]`.
    Uniform { a: f64, b: f64 },
    /// Finite support.
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    /// Internal source for the Gaussian family; not addressable from configs.
    #[serde(skip)]
    StandardNormal,
}

impl Law {
    pub fn validate(&self) -> Result<()> {
        match self {
            Law::Rademacher | Law::StandardNormal => Ok(()),
            Law::Bernoulli { p } => {
                if *p > 0.0 && *p < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidGenerator(format!("bernoulli p must lie in (0, 1), got {p}")))
                }
            }
            Law::Uniform { a, b } => {
                if a.is_finite() && b.is_finite() && a < b {
                    Ok(())
                } else {
                    Err(Error::InvalidGenerator(format!("uniform requires finite a < b, got a={a}, b={b}")))
                }
            }
            Law::Discrete { values, probs } => validate_support(values, probs),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Law::Rademacher => "rademacher",
            Law::Bernoulli { .. } => "bernoulli",
            Law::Uniform { .. } => "uniform",
            Law::Discrete { .. } => "discrete",
            Law::StandardNormal => "standard_normal",
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Law::Rademacher | Law::StandardNormal => 0.0,
            Law::Bernoulli { p } => *p,
            Law::Uniform { a, b } => 0.5 * (a + b),
            Law::Discrete { values, probs } => values.iter().zip(probs).map(|(v, p)| v * p).sum(),
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            Law::Rademacher | Law::StandardNormal => 1.0,
            Law::Bernoulli { p } => *p,
            Law::Uniform { a, b } => (a * a + a * b + b * b) / 3.0,
            Law::Discrete { values, probs } => values.iter().zip(probs).map(|(v, p)| v * v * p).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Law::Rademacher | Law::StandardNormal => 1.0,
            Law::Bernoulli { p } => p * (1.0 - p),
            Law::Uniform { a, b } => (b - a) * (b - a) / 12.0,
            Law::Discrete { .. } => {
                let m = self.mean();
                (self.second_moment() - m * m).max(0.0)
            }
        }
    }

    /// Essential range `[lo, hi]`; infinite for the normal source.
    pub fn range(&self) -> (f64, f64) {
        match self {
            Law::Rademacher => (-1.0, 1.0),
            Law::Bernoulli { .. } => (0.0, 1.0),
            Law::Uniform { a, b } => (*a, *b),
            Law::Discrete { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))),
            Law::StandardNormal => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// `log E exp(theta * Y)`.
    pub fn log_mgf(&self, theta: f64) -> f64 {
        match self {
            Law::Rademacher => log_cosh(theta),
            Law::StandardNormal => 0.5 * theta * theta,
            Law::Bernoulli { p } => {
                // log(1 - p + p e^theta), evaluated around the larger term
                if theta > 0.0 {
                    theta + ((1.0 - p) * (-theta).exp() + p).ln()
                } else {
                    (p * theta.exp_m1()).ln_1p()
                }
            }
            Law::Uniform { a, b } => {
                let w = theta * (b - a);
                if w.abs() < 1e-8 {
                    theta * 0.5 * (a + b) + w * w / 24.0
                } else if w > 0.0 {
                    // e^{theta b} (1 - e^{-w}) / w
                    theta * b + (-(-w).exp_m1() / w).ln()
                } else {
                    theta * a + ((w).exp_m1() / w).ln()
                }
            }
            Law::Discrete { values, probs } => {
                let top = values.iter().map(|v| theta * v).fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = values
                    .iter()
                    .zip(probs)
                    .map(|(v, p)| p * (theta * v - top).exp())
                    .sum();
                top + s.ln()
            }
        }
    }

    /// `(value, probability)` pairs for finite-support laws.
    pub fn support(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Law::Rademacher => Some(vec![(-1.0, 0.5), (1.0, 0.5)]),
            Law::Bernoulli { p } => Some(vec![(0.0, 1.0 - p), (1.0, *p)]),
            Law::Discrete { values, probs } => Some(values.iter().copied().zip(probs.iter().copied()).collect()),
            Law::Uniform { .. } | Law::StandardNormal => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        self.support().is_some()
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Law::Rademacher => {
                if rng.next_u32() & 1 == 1 {
                    1.0
                } else {
                    -1.0
                }
            }
            Law::Bernoulli { p } => {
                if rng.gen::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            Law::Uniform { a, b } => a + (b - a) * rng.gen::<f64>(),
            Law::Discrete { values, probs } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("validated nonempty")
            }
            Law::StandardNormal => rng.sample(StandardNormal),
        }
    }

    /// Fill `out` with independent draws. Rademacher draws consume one bit each.
    pub fn fill<R: RngCore + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Law::Rademacher => {
                for block in out.chunks_mut(64) {
                    let bits = rng.next_u64();
                    for (k, slot) in block.iter_mut().enumerate() {
                        *slot = if (bits >> k) & 1 == 1 { 1.0 } else { -1.0 };
                    }
                }
            }
            _ => {
                for slot in out.iter_mut() {
                    *slot = self.sample(rng);
                }
            }
        }
    }
}

fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

pub(crate) fn validate_support(values: &[f64], probs: &[f64]) -> Result<()> {
    if values.is_empty() || values.len() != probs.len() {
        return Err(Error::InvalidGenerator(format!(
            "discrete law needs matching nonempty values/probs, got {} values and {} probs",
            values.len(),
            probs.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidGenerator(format!("non-finite support value {v}")));
    }
    if let Some(p) = probs.iter().find(|p| !(**p > 0.0)) {
        return Err(Error::InvalidGenerator(format!("probabilities must be positive, got {p}")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROB_EPS {
        return Err(Error::InvalidGenerator(format!("probabilities sum to {total}, expected 1")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn numeric_log_mgf(support: &[(f64, f64)], theta: f64) -> f64 {
        support.iter().map(|(v, p)| p * (theta * v).exp()).sum::<f64>().ln()
    }

    #[test]
    fn rademacher_log_mgf_is_log_cosh() {
        for &t in &[0.0, 0.3, 1.0, -2.0, 40.0] {
            let direct = numeric_log_mgf(&[(-1.0, 0.5), (1.0, 0.5)], t);
            assert!((Law::Rademacher.log_mgf(t) - direct).abs() < 1e-12, "theta={t}");
        }
        assert!((Law::Rademacher.log_mgf(1.0) - 0.433_780_830_483_027).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_and_discrete_log_mgf_match_direct_sum() {
        let b = Law::Bernoulli { p: 0.3 };
        let d = Law::Discrete {
            values: vec![-2.0, 0.5, 1.0],
            probs: vec![0.2, 0.5, 0.3],
        };
        for &t in &[-3.0, -0.1, 0.0, 0.7, 2.5] {
            let sb = b.support().unwrap();
            assert!((b.log_mgf(t) - numeric_log_mgf(&sb, t)).abs() < 1e-12);
            let sd = d.support().unwrap();
            assert!((d.log_mgf(t) - numeric_log_mgf(&sd, t)).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_log_mgf_matches_quadrature() {
        let (a, b) = (-1.0, 2.0);
        let law = Law::Uniform { a, b };
        for &t in &[-1.5, -1e-10, 0.0, 1e-9, 0.8, 3.0] {
            // midpoint rule on 200k cells
            let n = 200_000;
            let h = (b - a) / n as f64;
            let integral: f64 = (0..n).map(|k| (t * (a + (k as f64 + 0.5) * h)).exp() * h).sum();
            let direct = (integral / (b - a)).ln();
            assert!((law.log_mgf(t) - direct).abs() < 1e-9, "theta={t}");
        }
    }

    #[test]
    fn moments() {
        let u = Law::Uniform { a: -1.0, b: 1.0 };
        assert_eq!(u.mean(), 0.0);
        assert!((u.second_moment() - 1.0 / 3.0).abs() < 1e-15);
        assert!((u.variance() - 1.0 / 3.0).abs() < 1e-15);
        let b = Law::Bernoulli { p: 0.25 };
        assert_eq!(b.variance(), 0.1875);
    }

    #[test]
    fn validation() {
        assert!(Law::Bernoulli { p: 0.0 }.validate().is_err());
        assert!(Law::Bernoulli { p: 1.2 }.validate().is_err());
        assert!(Law::Uniform { a: 1.0, b: 1.0 }.validate().is_err());
        let bad = Law::Discrete {
            values: vec![0.0, 1.0],
            probs: vec![0.5, 0.6],
        };
        assert!(bad.validate().is_err());
        let neg = Law::Discrete {
            values: vec![0.0, 1.0],
            probs: vec![-0.5, 1.5],
        };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn rademacher_fill_is_balanced_and_in_support() {
        let mut rng = derive_stream(3, 0);
        let mut buf = vec![0.0; 100_000];
        Law::Rademacher.fill(&mut rng, &mut buf);
        assert!(buf.iter().all(|&x| x == 1.0 || x == -1.0));
        let mean = buf.iter().sum::<f64>() / buf.len() as f64;
        assert!(mean.abs() < 4.0 / (buf.len() as f64).sqrt());
    }

    #[test]
    fn config_form_round_trips() {
        let law: Law = toml::from_str("kind = \"bernoulli\"\np = 0.5").unwrap();
        assert_eq!(law, Law::Bernoulli { p: 0.5 });
        assert!(toml::from_str::<Law>("kind = \"bernoulli\"\nq = 0.5").is_err());
        assert!(toml::from_str::<Law>("kind = \"cauchy\"").is_err());
    }
}
