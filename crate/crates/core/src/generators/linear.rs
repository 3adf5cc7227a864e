//! Every generator family is an affine map of independent sources:
//! `X_i = offsets[i] + sum_j c_ij * xi_j`, with `S_k = X_1 + ... + X_k`.
//!
//! The representation gives exact moments, log-MGFs, ranges and outcome
//! counts for every family, and drives both the sampler and the enumerator.
//! Sources are ordered so that the largest source index used by row `i` is
//! nondecreasing in `i`; the enumerator relies on this.

use rand::RngCore;

use super::law::Law;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearForm {
    sources: Vec<Law>,
    rows: Vec<Vec<(usize, f64)>>,
    offsets: Vec<f64>,
}

impl LinearForm {
    pub(crate) fn new(sources: Vec<Law>, rows: Vec<Vec<(usize, f64)>>, offsets: Vec<f64>) -> Self {
        debug_assert_eq!(rows.len(), offsets.len());
        debug_assert!(rows.iter().flatten().all(|&(j, _)| j < sources.len()));
        Self { sources, rows, offsets }
    }

    pub fn horizon(&self) -> usize {
        self.rows.len()
    }

    pub fn sources(&self) -> &[Law] {
        &self.sources
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub(crate) fn offsets_mut(&mut self) -> &mut [f64] {
        &mut self.offsets
    }

    /// `E X_i`.
    pub fn step_means(&self) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.offsets)
            .map(|(row, b)| b + row.iter().map(|&(j, c)| c * self.sources[j].mean()).sum::<f64>())
            .collect()
    }

    /// `E X_i X_k` for `i, k < horizon`.
    pub fn second_moment_matrix(&self) -> Vec<Vec<f64>> {
        let means = self.step_means();
        let n = self.horizon();
        let dense: Vec<Vec<f64>> = self
            .rows
            .iter()
            .map(|row| {
                let mut d = vec![0.0; self.sources.len()];
                for &(j, c) in row {
                    d[j] += c;
                }
                d
            })
            .collect();
        let var: Vec<f64> = self.sources.iter().map(Law::variance).collect();
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in i..n {
                let cov: f64 = self.rows[i].iter().map(|&(j, c)| c * dense[k][j] * var[j]).sum();
                let v = cov + means[i] * means[k];
                out[i][k] = v;
                out[k][i] = v;
            }
        }
        out
    }

    /// `E X_i^2`.
    pub fn step_second_moments(&self) -> Vec<f64> {
        let means = self.step_means();
        self.rows
            .iter()
            .zip(means)
            .map(|(row, m)| {
                let mut coef: Vec<(usize, f64)> = Vec::with_capacity(row.len());
                for &(j, c) in row {
                    match coef.iter_mut().find(|(jj, _)| *jj == j) {
                        Some(e) => e.1 += c,
                        None => coef.push((j, c)),
                    }
                }
                coef.iter().map(|&(j, c)| c * c * self.sources[j].variance()).sum::<f64>() + m * m
            })
            .collect()
    }

    /// `V_n = sum_{i<=n} E X_i^2`.
    pub fn v_n(&self, n: usize) -> f64 {
        self.step_second_moments()[..n].iter().sum()
    }

    /// Coefficients of `S_n` on the sources, and its constant term.
    pub fn partial_sum_coefficients(&self, n: usize) -> (Vec<f64>, f64) {
        let mut d = vec![0.0; self.sources.len()];
        for row in &self.rows[..n] {
            for &(j, c) in row {
                d[j] += c;
            }
        }
        (d, self.offsets[..n].iter().sum())
    }

    /// `E S_n^2`.
    pub fn partial_sum_second_moment(&self, n: usize) -> f64 {
        let (d, b) = self.partial_sum_coefficients(n);
        let mean: f64 = b + d.iter().zip(&self.sources).map(|(c, l)| c * l.mean()).sum::<f64>();
        let var: f64 = d.iter().zip(&self.sources).map(|(c, l)| c * c * l.variance()).sum();
        var + mean * mean
    }

    /// `[lo, hi]` range of each increment.
    pub fn step_ranges(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .zip(&self.offsets)
            .map(|(row, &b)| {
                let mut coef = vec![0.0; self.sources.len()];
                for &(j, c) in row {
                    coef[j] += c;
                }
                affine_range(&coef, b, &self.sources)
            })
            .collect()
    }

    /// Almost-sure bound `C` with `|X_i| <= C` for every step, if finite.
    pub fn increment_bound(&self) -> Option<f64> {
        let c = self
            .step_ranges()
            .into_iter()
            .map(|(lo, hi)| lo.abs().max(hi.abs()))
            .fold(0.0, f64::max);
        c.is_finite().then_some(c)
    }

    /// `[lo, hi]` range of `S_k` for each `k`.
    pub fn partial_sum_ranges(&self) -> Vec<(f64, f64)> {
        let mut coef = vec![0.0; self.sources.len()];
        let mut b = 0.0;
        self.rows
            .iter()
            .zip(&self.offsets)
            .map(|(row, &off)| {
                for &(j, c) in row {
                    coef[j] += c;
                }
                b += off;
                affine_range(&coef, b, &self.sources)
            })
            .collect()
    }

    /// `psi_i(theta) = log E exp(theta X_i)`.
    pub fn step_log_mgf(&self, theta: f64) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.offsets)
            .map(|(row, &b)| {
                let mut coef: Vec<(usize, f64)> = Vec::with_capacity(row.len());
                for &(j, c) in row {
                    match coef.iter_mut().find(|(jj, _)| *jj == j) {
                        Some(e) => e.1 += c,
                        None => coef.push((j, c)),
                    }
                }
                theta * b
                    + coef
                        .iter()
                        .map(|&(j, c)| self.sources[j].log_mgf(theta * c))
                        .sum::<f64>()
            })
            .collect()
    }

    /// Size of the product outcome space, `None` if some source is continuous.
    pub fn outcome_count(&self) -> Option<u128> {
        self.sources.iter().try_fold(1u128, |acc, law| {
            law.support().map(|s| acc.saturating_mul(s.len() as u128))
        })
    }

    pub fn is_discrete(&self) -> bool {
        self.sources.iter().all(Law::is_discrete)
    }

    /// Largest source index read by each row (`None` for constant rows).
    pub(crate) fn row_max_source(&self) -> Vec<Option<usize>> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, _)| j).max())
            .collect()
    }

    /// Partial sums from a full assignment of the sources.
    pub fn evaluate_into(&self, xi: &[f64], out: &mut [f64]) {
        let mut s = 0.0;
        for ((row, b), slot) in self.rows.iter().zip(&self.offsets).zip(out.iter_mut()) {
            let mut x = *b;
            for &(j, c) in row {
                x += c * xi[j];
            }
            s += x;
            *slot = s;
        }
    }
}

fn affine_range(coef: &[f64], constant: f64, sources: &[Law]) -> (f64, f64) {
    let mut lo = constant;
    let mut hi = constant;
    for (&c, law) in coef.iter().zip(sources) {
        if c == 0.0 {
            continue;
        }
        let (a, b) = law.range();
        let (x, y) = (c * a, c * b);
        lo += x.min(y);
        hi += x.max(y);
    }
    (lo, hi)
}

/// Draws paths from a [`LinearForm`]. Immutable and shareable; callers own
/// the scratch buffers.
#[derive(Debug, Clone)]
pub struct PathSampler {
    form: LinearForm,
    runs: Vec<(usize, usize)>,
}

impl PathSampler {
    pub fn new(form: LinearForm) -> Self {
        let mut runs: Vec<(usize, usize)> = Vec::new();
        for j in 0..form.sources.len() {
            match runs.last_mut() {
                Some((start, len)) if form.sources[*start] == form.sources[j] => *len += 1,
                _ => runs.push((j, 1)),
            }
        }
        Self { form, runs }
    }

    pub fn form(&self) -> &LinearForm {
        &self.form
    }

    pub fn horizon(&self) -> usize {
        self.form.horizon()
    }

    pub fn source_count(&self) -> usize {
        self.form.sources.len()
    }

    /// One path into `out` (length = horizon); `xi` is scratch of length
    /// [`source_count`](Self::source_count).
    pub fn sample_into<R: RngCore + ?Sized>(&self, rng: &mut R, xi: &mut [f64], out: &mut [f64]) {
        for &(start, len) in &self.runs {
            self.form.sources[start].fill(rng, &mut xi[start..start + len]);
        }
        self.form.evaluate_into(xi, out);
    }
}
