//! One entry point for "the expectation of a path functional", computed either
//! exactly (enumeration) or by Monte Carlo.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::generators::{GeneratorSpec, LinearForm, PathSampler};
use crate::mc;
use crate::oracle;
use crate::stats::CompensatedSum;

pub use crate::report::Estimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    Exact,
    MonteCarlo { paths: u64, seed: u64 },
}

impl Mode {
    pub fn is_exact(&self) -> bool {
        matches!(self, Mode::Exact)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::MonteCarlo { .. } => "monte_carlo",
        }
    }
}

/// `E[functional(S_1..S_n)]` for each of the `width` outputs.
pub fn expectations<F>(spec: &GeneratorSpec, mode: &Mode, width: usize, functional: F) -> Result<Vec<Estimate>>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    expectations_form(&spec.linear_form()?, mode, width, functional)
}

pub fn expectations_form<F>(form: &LinearForm, mode: &Mode, width: usize, functional: F) -> Result<Vec<Estimate>>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    match *mode {
        Mode::Exact => {
            let sums = oracle::fold_form(
                form,
                || (vec![CompensatedSum::default(); width], vec![0.0; width]),
                |(acc, buf), path, p| {
                    functional(path, buf);
                    for (a, &v) in acc.iter_mut().zip(buf.iter()) {
                        a.add(p * v);
                    }
                },
                |(acc, _), (other, _)| {
                    for (a, o) in acc.iter_mut().zip(&other) {
                        a.merge(o);
                    }
                },
            )?;
            Ok(sums.0.iter().map(|s| Estimate::Exact(s.value())).collect())
        }
        Mode::MonteCarlo { paths, seed } => {
            if paths == 0 {
                return Err(Error::config("paths", "must be at least 1"));
            }
            let sampler = PathSampler::new(form.clone());
            mc::sample_moments(&sampler, paths, seed, width, functional)
                .iter()
                .map(|m| m.summary().map(Estimate::Sampled))
                .collect()
        }
    }
}

/// Expectations of functionals of the terminal value `S_n` alone. Exact mode
/// uses the law of `S_n` (a convolution), which stays feasible far beyond the
/// path-enumeration cap.
pub fn terminal_expectations<F>(
    spec: &GeneratorSpec,
    mode: &Mode,
    width: usize,
    functional: F,
) -> Result<Vec<Estimate>>
where
    F: Fn(f64, &mut [f64]) + Sync,
{
    let form = spec.linear_form()?;
    match mode {
        Mode::Exact => {
            let law = oracle::terminal_law(&form, form.horizon())?;
            let mut acc = vec![CompensatedSum::default(); width];
            let mut buf = vec![0.0; width];
            for &(s, p) in &law {
                functional(s, &mut buf);
                for (a, &v) in acc.iter_mut().zip(&buf) {
                    a.add(p * v);
                }
            }
            Ok(acc.iter().map(|s| Estimate::Exact(s.value())).collect())
        }
        Mode::MonteCarlo { .. } => {
            let n = form.horizon();
            expectations_form(&form, mode, width, |path, out| functional(path[n - 1], out))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{Family, Law};

    #[test]
    fn exact_and_sampled_second_moment() {
        let spec = GeneratorSpec::iid(Law::Rademacher, 3);
        let exact = expectations(&spec, &Mode::Exact, 1, |p, o| o[0] = p[2] * p[2]).unwrap();
        assert_eq!(exact[0], Estimate::Exact(3.0));
        let mc = expectations(&spec, &Mode::MonteCarlo { paths: 100_000, seed: 1 }, 1, |p, o| o[0] = p[2] * p[2])
            .unwrap();
        assert!((mc[0].mean() - 3.0).abs() <= 4.0 * mc[0].stderr());
    }

    #[test]
    fn terminal_route_matches_path_route() {
        let spec = GeneratorSpec::new(
            Family::SharedShock {
                base: Law::Bernoulli { p: 0.3 },
                shared: Law::Rademacher,
            },
            6,
        );
        let f = |s: f64, o: &mut [f64]| {
            o[0] = s * s;
            o[1] = f64::from(u8::from(s >= 2.0));
        };
        let a = terminal_expectations(&spec, &Mode::Exact, 2, f).unwrap();
        let b = expectations(&spec, &Mode::Exact, 2, |p, o| f(p[5], o)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.mean() - y.mean()).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_mode_rejects_continuous_laws() {
        let spec = GeneratorSpec::iid(Law::Uniform { a: 0.0, b: 1.0 }, 2);
        assert!(matches!(
            expectations(&spec, &Mode::Exact, 1, |p, o| o[0] = p[0]),
            Err(Error::NotEnumerable(_))
        ));
    }
}
