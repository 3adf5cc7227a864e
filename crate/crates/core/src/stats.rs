//! Sample summaries and mergeable accumulators.

use serde::Serialize;

use crate::error::{Error, Result};

/// Mean and standard error of a sample. `stderr` is `+inf` for a single
/// observation; any report built from such a summary is INCONCLUSIVE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub stderr: f64,
    pub count: u64,
}

/// Mean and standard error (unbiased sample standard deviation over
/// `sqrt(count)`).
pub fn summarize(samples: &[f64]) -> Result<SummaryStats> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut m = Moments::default();
    for &x in samples {
        if !x.is_finite() {
            return Err(Error::domain(format!("non-finite sample value {x}")));
        }
        m.push(x);
    }
    m.summary()
}

/// Streaming first and second moments (Welford), mergeable with Chan's
/// pairwise update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n_a = self.count as f64;
        let n_b = other.count as f64;
        let n = n_a + n_b;
        let delta = other.mean - self.mean;
        self.mean += delta * n_b / n;
        self.m2 += other.m2 + delta * delta * n_a * n_b / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn summary(&self) -> Result<SummaryStats> {
        match self.count {
            0 => Err(Error::EmptySample),
            1 => Ok(SummaryStats {
                mean: self.mean,
                stderr: f64::INFINITY,
                count: 1,
            }),
            n => {
                let nf = n as f64;
                let var_of_mean = (self.m2.max(0.0)) / ((nf - 1.0) * nf);
                Ok(SummaryStats {
                    mean: self.mean,
                    stderr: var_of_mean.sqrt(),
                    count: n,
                })
            }
        }
    }
}

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}
