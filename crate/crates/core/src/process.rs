//! Sample paths `S_1..S_n` and ensembles of them. `S_0 = 0` is implicit and
//! never stored.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcessPath {
    values: Vec<f64>,
}

impl ProcessPath {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidPath("horizon must be positive".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidPath(format!(
                "non-finite value {} at step {}",
                values[i],
                i + 1
            )));
        }
        Ok(Self { values })
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    /// `S_1..S_n`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `S_k` for `k >= 1`; `S_0 = 0`.
    pub fn at(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.values[k - 1]
        }
    }

    /// `X_i = S_i - S_{i-1}` with `S_0 = 0`.
    pub fn increments(&self) -> Vec<f64> {
        increments(&self.values)
    }
}

pub(crate) fn increments(values: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    values
        .iter()
        .map(|&v| {
            let x = v - prev;
            prev = v;
            x
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcessEnsemble {
    paths: Vec<ProcessPath>,
    seed: u64,
    generator_id: String,
}

impl ProcessEnsemble {
    pub fn new(paths: Vec<ProcessPath>, seed: u64, generator_id: impl Into<String>) -> Result<Self> {
        let Some(first) = paths.first() else {
            return Err(Error::InvalidEnsemble("ensemble must be nonempty".into()));
        };
        let horizon = first.horizon();
        if let Some(bad) = paths.iter().position(|p| p.horizon() != horizon) {
            return Err(Error::InvalidEnsemble(format!(
                "path {bad} has horizon {} but path 0 has horizon {horizon}",
                paths[bad].horizon()
            )));
        }
        Ok(Self {
            paths,
            seed,
            generator_id: generator_id.into(),
        })
    }

    pub fn paths(&self) -> &[ProcessPath] {
        &self.paths
    }

    pub fn horizon(&self) -> usize {
        self.paths[0].horizon()
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn generator_id(&self) -> &str {
        &self.generator_id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn increments_prepend_zero() {
        let p = ProcessPath::new(vec![1.0, 3.0, 2.0]).unwrap();
        assert_eq!(p.increments(), vec![1.0, 2.0, -1.0]);
        assert_eq!(p.at(0), 0.0);
        assert_eq!(p.at(3), 2.0);
    }

    #[test]
    fn rejects_empty_and_nonfinite_paths() {
        assert!(ProcessPath::new(vec![]).is_err());
        assert!(ProcessPath::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(ProcessPath::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn ensemble_requires_uniform_horizon() {
        let a = ProcessPath::new(vec![1.0, 2.0]).unwrap();
        let b = ProcessPath::new(vec![1.0]).unwrap();
        assert!(ProcessEnsemble::new(vec![a.clone(), b], 1, "x").is_err());
        assert!(ProcessEnsemble::new(vec![], 1, "x").is_err());
        let e = ProcessEnsemble::new(vec![a.clone(), a], 7, "x").unwrap();
        assert_eq!(e.horizon(), 2);
        assert_eq!(e.seed(), 7);
    }
}
