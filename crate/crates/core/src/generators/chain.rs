//! Finite-support chain specifications for exact enumeration.

use serde::Serialize;

use super::law::{validate_support, Law};
use super::linear::LinearForm;
use crate::error::{Error, Result};

/// Largest product-space size the oracle will enumerate.
pub const ENUMERATION_CAP: u64 = 1 << 24;

/// How innovations become increments.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    /// `X_i = Y_i`.
    Identity,
    /// `X_i = sum_k c_k Y_{i-k}` with `q = coeffs.len() - 1` pre-sample innovations.
    MovingSum { coeffs: Vec<f64> },
    /// `X_{2k-1} = Y_k`, `X_{2k} = -Y_k`.
    SignFlipPairs,
}

impl Kernel {
    pub(crate) fn innovation_count(&self, horizon: usize) -> usize {
        match self {
            Kernel::Identity => horizon,
            Kernel::MovingSum { coeffs } => horizon + coeffs.len().saturating_sub(1),
            Kernel::SignFlipPairs => horizon.div_ceil(2),
        }
    }
}

/// Exact chain: innovations drawn i.i.d. from `increment_support`, mapped
/// through `kernel`, plus an optional shared term `W` added to every
/// increment. `drift[i]` is subtracted from `X_{i+1}` (centering) and
/// `offset` is added to `X_1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteChainSpec {
    pub increment_support: Vec<(f64, f64)>,
    pub shared_component: Option<Vec<(f64, f64)>>,
    pub horizon: usize,
    pub drift: Vec<f64>,
    pub kernel: Kernel,
    pub offset: f64,
}

impl DiscreteChainSpec {
    /// Plain i.i.d. chain with no drift.
    pub fn iid(increment_support: Vec<(f64, f64)>, horizon: usize) -> Self {
        Self {
            increment_support,
            shared_component: None,
            horizon,
            drift: vec![0.0; horizon],
            kernel: Kernel::Identity,
            offset: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidGenerator("horizon must be positive".into()));
        }
        if self.drift.len() != self.horizon {
            return Err(Error::InvalidGenerator(format!(
                "drift has {} entries for horizon {}",
                self.drift.len(),
                self.horizon
            )));
        }
        let (v, p): (Vec<f64>, Vec<f64>) = self.increment_support.iter().copied().unzip();
        validate_support(&v, &p)?;
        if let Some(shared) = &self.shared_component {
            let (v, p): (Vec<f64>, Vec<f64>) = shared.iter().copied().unzip();
            validate_support(&v, &p)?;
        }
        if let Kernel::MovingSum { coeffs } = &self.kernel {
            validate_coeffs(coeffs)?;
        }
        let required = self.outcome_count();
        if required > ENUMERATION_CAP as u128 {
            return Err(Error::CapExceeded {
                required,
                cap: ENUMERATION_CAP,
            });
        }
        Ok(())
    }

    /// `|support|^innovations * |shared|`.
    pub fn outcome_count(&self) -> u128 {
        let k = self.increment_support.len() as u128;
        let m = self.kernel.innovation_count(self.horizon) as u32;
        let shared = self.shared_component.as_ref().map_or(1, |s| s.len() as u128);
        k.checked_pow(m).map_or(u128::MAX, |v| v.saturating_mul(shared))
    }

    pub fn linear_form(&self) -> LinearForm {
        let (values, probs) = self.increment_support.iter().copied().unzip();
        let innovation = Law::Discrete { values, probs };
        let shared = self.shared_component.as_ref().map(|s| {
            let (values, probs) = s.iter().copied().unzip();
            Law::Discrete { values, probs }
        });
        let mut form = structured_form(&innovation, &self.kernel, shared.as_ref(), self.horizon);
        for (b, d) in form.offsets_mut().iter_mut().zip(&self.drift) {
            *b -= d;
        }
        form.offsets_mut()[0] += self.offset;
        form
    }
}

pub(crate) fn validate_coeffs(coeffs: &[f64]) -> Result<()> {
    if coeffs.is_empty() {
        return Err(Error::InvalidGenerator("moving_sum needs at least one coefficient".into()));
    }
    if let Some(c) = coeffs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
        return Err(Error::InvalidGenerator(format!(
            "moving_sum coefficients must be finite and nonnegative, got {c}"
        )));
    }
    Ok(())
}

/// Affine form for innovation/kernel/shared-term structures. The shared term,
/// when present, is source 0.
pub(crate) fn structured_form(innovation: &Law, kernel: &Kernel, shared: Option<&Law>, horizon: usize) -> LinearForm {
    let base = usize::from(shared.is_some());
    let m = kernel.innovation_count(horizon);
    let mut sources = Vec::with_capacity(base + m);
    if let Some(w) = shared {
        sources.push(w.clone());
    }
    sources.extend(std::iter::repeat(innovation.clone()).take(m));
    let rows = (0..horizon)
        .map(|i| {
            let mut row = Vec::new();
            if shared.is_some() {
                row.push((0, 1.0));
            }
            match kernel {
                Kernel::Identity => row.push((base + i, 1.0)),
                Kernel::MovingSum { coeffs } => {
                    let q = coeffs.len() - 1;
                    for (k, &c) in coeffs.iter().enumerate().rev() {
                        if c != 0.0 {
                            row.push((base + i + q - k, c));
                        }
                    }
                }
                Kernel::SignFlipPairs => row.push((base + i / 2, if i % 2 == 0 { 1.0 } else { -1.0 })),
            }
            row
        })
        .collect();
    LinearForm::new(sources, rows, vec![0.0; horizon])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_counts() {
        let rad = vec![(-1.0, 0.5), (1.0, 0.5)];
        assert_eq!(DiscreteChainSpec::iid(rad.clone(), 3).outcome_count(), 8);
        let shared = DiscreteChainSpec {
            shared_component: Some(rad.clone()),
            ..DiscreteChainSpec::iid(rad.clone(), 2)
        };
        assert_eq!(shared.outcome_count(), 8);
        let flip = DiscreteChainSpec {
            kernel: Kernel::SignFlipPairs,
            ..DiscreteChainSpec::iid(rad.clone(), 5)
        };
        assert_eq!(flip.outcome_count(), 8);
        let ma = DiscreteChainSpec {
            kernel: Kernel::MovingSum {
                coeffs: vec![1.0, 0.5],
            },
            ..DiscreteChainSpec::iid(rad, 3)
        };
        assert_eq!(ma.outcome_count(), 16);
    }

    #[test]
    fn cap_is_enforced() {
        let rad = vec![(-1.0, 0.5), (1.0, 0.5)];
        assert!(DiscreteChainSpec::iid(rad.clone(), 24).validate().is_ok());
        match DiscreteChainSpec::iid(rad, 25).validate() {
            Err(Error::CapExceeded { required, .. }) => assert_eq!(required, 1 << 25),
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn probabilities_must_sum_to_one() {
        let chain = DiscreteChainSpec::iid(vec![(-1.0, 0.5), (1.0, 0.4)], 2);
        assert!(chain.validate().is_err());
    }

    #[test]
    fn moving_sum_rows_are_ordered() {
        let form = structured_form(
            &Law::Rademacher,
            &Kernel::MovingSum {
                coeffs: vec![1.0, 0.5, 0.25],
            },
            None,
            4,
        );
        let maxes = form.row_max_source();
        assert_eq!(maxes, vec![Some(2), Some(3), Some(4), Some(5)]);
        // X_1 = Y_1 + 0.5 Y_0 + 0.25 Y_{-1}
        assert_eq!(form.rows()[0], vec![(0, 0.25), (1, 0.5), (2, 1.0)]);
    }
}
