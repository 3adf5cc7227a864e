//! CLT and complete-convergence diagnostics.
//!
//! Neither limit theorem can be verified from finite samples. The CLT harness
//! reports distances to the standard normal and the hypothesis trend; the
//! complete-convergence harness compares tails with the Bernstein envelope.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bounds::{bernstein_tail_two_sided, BernsteinInput};
use crate::error::{Error, Result};
use crate::expect::{terminal_expectations, Estimate, Mode};
use crate::generators::GeneratorSpec;
use crate::mc;
use crate::registry::{Context, TheoremId};
use crate::report::{Check, Direction, Verdict, VerificationReport};
use crate::stats::SummaryStats;

/// Frequencies for the empirical characteristic function.
pub const ECF_GRID: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

/// Asymptotic two-sided 1% Kolmogorov-Smirnov coefficient.
pub const KS_COEFF_1PCT: f64 = 1.628;

pub fn ks_critical_1pct(samples: usize) -> f64 {
    KS_COEFF_1PCT / (samples as f64).sqrt()
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid parameters")
}

/// Kolmogorov-Smirnov distance between the empirical law of `z` and N(0,1).
pub fn ks_distance(z: &[f64]) -> Result<f64> {
    if z.is_empty() {
        return Err(Error::domain("KS distance of an empty sample"));
    }
    if z.iter().any(|x| x.is_nan()) {
        return Err(Error::domain("KS distance of a sample containing NaN"));
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let normal = std_normal();
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max))
}

/// `max_t |mean(exp(i t z)) - exp(-t^2/2)|` over [`ECF_GRID`].
pub fn ecf_distance(z: &[f64]) -> Result<f64> {
    if z.is_empty() {
        return Err(Error::domain("characteristic function of an empty sample"));
    }
    let n = z.len() as f64;
    Ok(ECF_GRID
        .iter()
        .map(|&t| {
            let (re, im) = z.iter().fold((0.0, 0.0), |(re, im), &x| (re + (t * x).cos(), im + (t * x).sin()));
            (re / n - (-t * t / 2.0).exp()).hypot(im / n)
        })
        .fold(0.0, f64::max))
}

/// KS gate at the 1% level for a sample that should be N(0,1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsCalibration {
    pub samples: usize,
    pub ks_distance: f64,
    pub critical: f64,
    pub pass: bool,
}

/// Runs the gate on injected samples, bypassing the generators.
pub fn calibrate(z: &[f64]) -> Result<KsCalibration> {
    let ks = ks_distance(z)?;
    let critical = ks_critical_1pct(z.len());
    Ok(KsCalibration {
        samples: z.len(),
        ks_distance: ks,
        critical,
        pass: ks <= critical,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CltDiagnostics {
    pub n: usize,
    pub sigma_n: f64,
    pub v_n: f64,
    /// `(sqrt(V_n) / sigma_n)^3`.
    pub ratio_cubed: f64,
    pub ks_distance: f64,
    pub ecf_distance: f64,
}

/// Whether `ratio_cubed` strictly decreases along the rows.
pub fn ratio_decreasing(rows: &[CltDiagnostics]) -> bool {
    rows.windows(2).all(|w| w[1].ratio_cubed < w[0].ratio_cubed)
}

fn check_grid(n_grid: &[usize]) -> Result<()> {
    if n_grid.is_empty() {
        return Err(Error::config("n_grid", "must not be empty"));
    }
    if n_grid[0] == 0 || n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("n_grid", "must be strictly increasing positive horizons"));
    }
    Ok(())
}

/// Per-horizon diagnostics of `Z_n = S_n / sigma_n`. `sigma_n` and `V_n`
/// are exact; the distances come from `paths` sampled values of `S_n`.
pub fn clt_diagnose(spec: &GeneratorSpec, n_grid: &[usize], paths: u64, seed: u64) -> Result<Vec<CltDiagnostics>> {
    check_grid(n_grid)?;
    if paths == 0 {
        return Err(Error::config("paths", "must be positive"));
    }
    n_grid
        .iter()
        .map(|&n| {
            let spec_n = spec.with_horizon(n);
            let form = spec_n.linear_form()?;
            if form.increment_bound().is_none() {
                return Err(Error::precondition("CLT harness needs bounded increments"));
            }
            let v_n = form.v_n(n);
            let sigma_n = form.partial_sum_second_moment(n).sqrt();
            if !(sigma_n > 0.0) {
                return Err(Error::precondition(format!("sigma_n = 0 at n = {n}")));
            }
            let mut z = Vec::with_capacity(paths as usize);
            mc::for_each_path(&spec_n.sampler()?, paths, seed, |_, s| z.push(s[n - 1] / sigma_n));
            Ok(CltDiagnostics {
                n,
                sigma_n,
                v_n,
                ratio_cubed: (v_n.sqrt() / sigma_n).powi(3),
                ks_distance: ks_distance(&z)?,
                ecf_distance: ecf_distance(&z)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailRow {
    pub n: usize,
    /// `P(|S_n| >= n^r epsilon)`.
    pub tail: Estimate,
    /// `2 exp(-n^r eps^2 / (2 (V_n / n^r + eps C / 3)))`.
    pub envelope: f64,
    pub v_over_nr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompleteConvergenceDiagnostics {
    pub r: f64,
    pub epsilon: f64,
    pub rows: Vec<TailRow>,
    /// Running sum of the tail estimates along the grid.
    pub partial_sum: Vec<f64>,
    /// Least-squares slope of `ln tail` against `n^r` over positive tails.
    pub geometric_fit: Option<f64>,
}

fn slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn complete_convergence_diagnose(
    spec: &GeneratorSpec,
    r: f64,
    epsilon: f64,
    n_grid: &[usize],
    mode: &Mode,
) -> Result<CompleteConvergenceDiagnostics> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::domain(format!("r must be positive, got {r}")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::domain(format!("epsilon must be positive, got {epsilon}")));
    }
    check_grid(n_grid)?;
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let spec_n = spec.with_horizon(n);
        let form = spec_n.linear_form()?;
        let c = form
            .increment_bound()
            .ok_or_else(|| Error::precondition("complete convergence harness needs bounded increments"))?;
        let v_n = form.v_n(n);
        let nr = (n as f64).powf(r);
        let t = nr * epsilon;
        let envelope = match BernsteinInput::new(t, v_n, c, n) {
            Ok(input) => bernstein_tail_two_sided(&input),
            // degenerate process: S_n = 0 a.s.
            Err(_) if v_n == 0.0 => 0.0,
            Err(e) => return Err(e),
        };
        let tail = terminal_expectations(&spec_n, mode, 1, |s, out| out[0] = f64::from(u8::from(s.abs() >= t)))?[0];
        rows.push(TailRow {
            n,
            tail,
            envelope,
            v_over_nr: v_n / nr,
        });
    }
    let partial_sum = rows
        .iter()
        .scan(0.0, |acc, row| {
            *acc += row.tail.mean();
            Some(*acc)
        })
        .collect();
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|row| row.tail.mean() > 0.0)
        .map(|row| ((row.n as f64).powf(r), row.tail.mean().ln()))
        .collect();
    Ok(CompleteConvergenceDiagnostics {
        r,
        epsilon,
        rows,
        partial_sum,
        geometric_fit: slope(&points),
    })
}

pub(crate) fn verify_clt(mut cx: Context) -> Result<VerificationReport> {
    let n_grid = cx.params.horizons("n_grid")?;
    let Mode::MonteCarlo { paths, seed } = *cx.mode else {
        return Err(Error::config("mode", "the CLT harness is sample-based; use monte_carlo"));
    };
    if cx.props.increment_bound.is_none() {
        return Err(cx.precondition("needs bounded increments"));
    }
    if !(cx.props.demimartingale && cx.props.mean_zero) {
        return Err(cx.precondition("needs a mean-zero demimartingale"));
    }
    let rows = clt_diagnose(cx.spec, &n_grid, paths, seed)?;
    for row in &rows {
        cx.notes.push(format!(
            "n = {}: sigma_n = {}, V_n = {}, ratio_cubed = {}, ks = {}, ecf = {}",
            row.n, row.sigma_n, row.v_n, row.ratio_cubed, row.ks_distance, row.ecf_distance
        ));
    }
    let last = rows.last().expect("nonempty grid");
    let summary = SummaryStats {
        mean: last.ks_distance,
        stderr: 0.0,
        count: paths,
    };
    let mut check = Check::against_constant(
        format!("KS distance of S_{}/sigma_n to N(0,1) <= 1% critical value", last.n),
        Estimate::Sampled(summary),
        ks_critical_1pct(paths as usize),
        Direction::Le,
        cx.tol(),
    );
    if !ratio_decreasing(&rows) {
        cx.notes.push("condition not satisfied: (sqrt(V_n)/sigma_n)^3 does not decrease along n_grid".into());
        check.verdict = Verdict::Inconclusive;
    }
    cx.report(vec![check])
}

pub(crate) fn verify_complete_convergence(mut cx: Context) -> Result<VerificationReport> {
    let r = cx.params.positive("r")?;
    let epsilon = cx.params.positive("epsilon")?;
    let n_grid = cx.params.horizons("n_grid")?;
    let structural = if cx.id == TheoremId::CompleteConvergenceAssoc {
        cx.props.associated
    } else {
        cx.props.demimartingale
    };
    if !structural || !cx.props.mean_zero {
        return Err(cx.precondition(if cx.id == TheoremId::CompleteConvergenceAssoc {
            "needs mean-zero positively associated steps"
        } else {
            "needs a mean-zero demimartingale"
        }));
    }
    if cx.props.increment_bound.is_none() {
        return Err(cx.precondition("needs bounded increments"));
    }
    let diag = complete_convergence_diagnose(cx.spec, r, epsilon, &n_grid, cx.mode)?;
    let trend: Vec<String> = diag.rows.iter().map(|row| format!("{}: {}", row.n, row.v_over_nr)).collect();
    cx.notes.push(format!("V_n/n^r along n_grid: {}", trend.join(", ")));
    if let Some(s) = diag.geometric_fit {
        cx.notes.push(format!("slope of ln P(|S_n| >= n^r eps) against n^r: {s}"));
    }
    let checks = diag
        .rows
        .iter()
        .map(|row| {
            Check::tail(
                format!("P(|S_{}| >= n^{r} * {epsilon}) <= Bernstein envelope", row.n),
                row.tail,
                row.envelope,
                cx.tol(),
            )
        })
        .collect();
    cx.report(checks)
}
