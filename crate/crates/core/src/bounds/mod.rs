//! Closed-form bounds: Bernstein-type tails, maximal inequalities, moment
//! bounds and the auxiliary inequalities they rest on.

pub(crate) mod verify;

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// `e^u - u - 1`, accurate near 0.
pub fn phi(u: f64) -> f64 {
    if u.abs() < 1e-5 {
        u * u / 2.0 * (1.0 + u / 3.0 * (1.0 + u / 4.0))
    } else {
        u.exp_m1() - u
    }
}

/// `u^2 / (2 (1 - u/3))` on `(0, 3)`.
pub fn phi_bound(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 3.0) {
        return Err(Error::domain(format!("phi_bound needs 0 < u < 3, got {u}")));
    }
    Ok(u * u / (2.0 * (1.0 - u / 3.0)))
}

/// `lambda^2 E X^2 / (2 (1 - lambda C / 3))` for `0 < lambda < 3/C`.
pub fn mgf_log_bound(lambda: f64, c: f64, ex2: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::domain(format!("C must be positive, got {c}")));
    }
    if !(ex2 >= 0.0) {
        return Err(Error::domain(format!("E X^2 must be nonnegative, got {ex2}")));
    }
    if !(lambda > 0.0 && lambda * c < 3.0) {
        return Err(Error::domain(format!("need 0 < lambda < 3/C = {}, got {lambda}", 3.0 / c)));
    }
    Ok(lambda * lambda * ex2 / (2.0 * (1.0 - lambda * c / 3.0)))
}

/// `1 + u - sqrt(1 + 2u)`, evaluated as `u^2 / (1 + u + sqrt(1 + 2u))` to
/// avoid cancellation.
pub fn h1(u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(Error::domain(format!("h1 needs u >= 0, got {u}")));
    }
    Ok(u * u / (1.0 + u + (1.0 + 2.0 * u).sqrt()))
}

/// `u^2 / (2 (1 + u))`.
pub fn h1_lower(u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(Error::domain(format!("h1_lower needs u >= 0, got {u}")));
    }
    Ok(u * u / (2.0 * (1.0 + u)))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `sup_{0 < lambda < 3/C} (lambda t - lambda^2 V / (2 (1 - lambda C/3)))`
/// in closed form: `(9 V / C^2) h1(C t / (3 V))`.
pub fn psi_sup(t: f64, v_n: f64, c: f64) -> Result<f64> {
    positive("t", t)?;
    positive("V_n", v_n)?;
    positive("C", c)?;
    Ok(9.0 * v_n / (c * c) * h1(c * t / (3.0 * v_n))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernsteinInput {
    pub t: f64,
    pub v_n: f64,
    pub c: f64,
    pub n: usize,
}

impl BernsteinInput {
    pub fn new(t: f64, v_n: f64, c: f64, n: usize) -> Result<Self> {
        positive("t", t)?;
        positive("V_n", v_n)?;
        positive("C", c)?;
        if n == 0 {
            return Err(Error::domain("n must be positive"));
        }
        Ok(Self { t, v_n, c, n })
    }

    pub fn exponent(&self) -> f64 {
        self.t * self.t / (2.0 * (self.v_n + self.t * self.c / 3.0))
    }
}

/// `exp(-t^2 / (2 (V_n + t C / 3)))`.
pub fn bernstein_tail(input: &BernsteinInput) -> f64 {
    (-input.exponent()).exp()
}

/// Twice [`bernstein_tail`], for `P(|S_n| >= t)`.
pub fn bernstein_tail_two_sided(input: &BernsteinInput) -> f64 {
    2.0 * bernstein_tail(input)
}

/// `E S_1 / lambda`.
pub fn doob_max_bound(es1: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::domain(format!("lambda must be positive, got {lambda}")));
    }
    Ok(es1 / lambda)
}

/// `p E S_1 / ((1 - p) M^{1-p})` for `0 < p < 1`, `M > 0`.
pub fn lp_max_bound(p: f64, m: f64, es1: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("p must lie in (0, 1), got {p}")));
    }
    positive("M", m)?;
    Ok(p * es1 / ((1.0 - p) * m.powf(1.0 - p)))
}

/// `2^p p V_n^{p/2} Gamma(p/2)`; the vanishing remainder of the asymptotic
/// statement is dropped.
pub fn moment_bound(p: f64, v_n: f64) -> Result<f64> {
    positive("p", p)?;
    positive("V_n", v_n)?;
    Ok(2f64.powf(p) * p * v_n.powf(p / 2.0) * gamma(p / 2.0))
}
