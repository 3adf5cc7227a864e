//! Registry entries for the maximal, exponential and Wald-type inequalities.

use rand::Rng;

use super::*;
use crate::expect::{expectations, terminal_expectations, Estimate};
use crate::generators::MEAN_EPS;
use crate::monotone::{sample_battery, IndicatorTarget, Monotonicity};
use crate::registry::{Context, Settings, TheoremId};
use crate::report::{Check, Direction, Tolerance, VerificationReport};
use crate::rng::{derive_stream, GRID_STREAM};
use crate::stopping::verify::{capped_tau, direction_of};

const PHI_GRID: usize = 10_000;
const H1_GRID: usize = 10_000;
const H1_MAX: f64 = 1000.0;
const PSI_TRIPLES: usize = 1000;
const PSI_RANGE: (f64, f64) = (1e-3, 1e3);
const DEFAULT_MGF_GRID: usize = 64;

/// Among `(point, lhs, rhs)` rows for `lhs <= rhs`, the one with the smallest
/// relative slack.
fn tightest(rows: impl Iterator<Item = (f64, f64, f64)>) -> (f64, f64, f64) {
    rows.min_by(|a, b| {
        let rel = |(_, l, r): &(f64, f64, f64)| (r - l) / 1f64.max(l.abs()).max(r.abs());
        rel(a).total_cmp(&rel(b))
    })
    .expect("nonempty grid")
}

fn exact_le(label: String, (_, lhs, rhs): (f64, f64, f64), tol: &Tolerance) -> Check {
    Check::against_constant(label, Estimate::Exact(lhs), rhs, Direction::Le, tol)
}

pub(crate) fn lemma_grid(settings: &Settings) -> Result<VerificationReport> {
    let tol = &settings.tolerance;
    let phi_rows = (1..=PHI_GRID).map(|k| {
        let u = 3.0 * k as f64 / (PHI_GRID + 1) as f64;
        (u, phi(u), phi_bound(u).expect("u in (0, 3)"))
    });
    let phi_worst = tightest(phi_rows);
    // h1 >= h1_lower, written as h1_lower <= h1
    let h1_rows = (0..H1_GRID).map(|k| {
        let u = H1_MAX * k as f64 / (H1_GRID - 1) as f64;
        (u, h1_lower(u).expect("u >= 0"), h1(u).expect("u >= 0"))
    });
    let h1_worst = tightest(h1_rows);
    let mut rng = derive_stream(settings.seed, GRID_STREAM);
    let (lo, hi) = (PSI_RANGE.0.ln(), PSI_RANGE.1.ln());
    let mut draw = move || rng.gen_range(lo..hi).exp();
    let psi_rows: Vec<(f64, f64, f64)> = (0..PSI_TRIPLES)
        .map(|k| {
            let (t, v, c) = (draw(), draw(), draw());
            let input = BernsteinInput::new(t, v, c, 1).expect("positive draws");
            (k as f64, input.exponent(), psi_sup(t, v, c).expect("positive draws"))
        })
        .collect();
    let psi_worst = tightest(psi_rows.into_iter());
    let checks = vec![
        exact_le(format!("phi(u) <= u^2/(2(1-u/3)), tightest at u = {}", phi_worst.0), phi_worst, tol),
        exact_le(format!("h1(u) >= u^2/(2(1+u)), tightest at u = {}", h1_worst.0), h1_worst, tol),
        exact_le(
            format!("psi_sup(t,V,C) >= t^2/(2(V+tC/3)), tightest at triple #{}", psi_worst.0),
            psi_worst,
            tol,
        ),
    ];
    let notes = vec![format!(
        "{PHI_GRID} points of (0,3); {H1_GRID} points of [0,{H1_MAX}]; {PSI_TRIPLES} log-uniform triples on [{}, {}]",
        PSI_RANGE.0, PSI_RANGE.1
    )];
    Ok(VerificationReport::from_checks(TheoremId::LemmaGrid.canonical(), checks, notes))
}

/// `max_{i <= j} S_i` with `j` from the params (default: horizon).
fn max_index(cx: &Context) -> Result<usize> {
    let n = cx.horizon();
    let j = cx.params.count("j")?.unwrap_or(n);
    if j > n {
        return Err(Error::config("params.j", format!("must not exceed the horizon {n}")));
    }
    Ok(j)
}

pub(crate) fn doob_max(mut cx: Context) -> Result<VerificationReport> {
    let lambda = cx.params.positive("lambda")?;
    let j = max_index(&cx)?;
    if !(cx.props.demimartingale && cx.props.path_lower_bound >= 0.0) {
        return Err(cx.precondition(
            "outside verified preconditions: needs a nonnegative demimartingale (the bound fails for signed processes)",
        ));
    }
    let es1 = cx.props.step_means[0];
    let bound = doob_max_bound(es1, lambda)?;
    let est = expectations(cx.spec, cx.mode, 1, |s, out| {
        let m = s[..j].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out[0] = f64::from(u8::from(m >= lambda));
    })?;
    cx.notes.push(format!("E S_1 = {es1} (exact)"));
    let check = Check::tail(format!("P(max_(i<={j}) S_i >= {lambda}) <= E S_1 / lambda"), est[0], bound, cx.tol());
    cx.report(vec![check])
}

pub(crate) fn lp_max(mut cx: Context) -> Result<VerificationReport> {
    let p = cx.params.require("p")?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::config("params.p", format!("must lie in (0, 1), got {p}")));
    }
    let j = max_index(&cx)?;
    if !cx.props.demimartingale {
        return Err(cx.precondition("needs a demimartingale"));
    }
    let floor = cx.props.path_lower_bound;
    let m = cx.params.number("m_lower")?.unwrap_or(floor);
    if !(m > 0.0 && m <= floor) {
        return Err(cx.precondition(&format!(
            "needs 0 < M <= min S_k a.s.; M = {m}, path lower bound = {floor}"
        )));
    }
    let es1 = cx.props.step_means[0];
    let bound = lp_max_bound(p, m, es1)?;
    let est = expectations(cx.spec, cx.mode, 1, |s, out| {
        out[0] = s[..j].iter().copied().fold(f64::NEG_INFINITY, f64::max).powf(p);
    })?;
    cx.notes.push(format!("M = {m}, E S_1 = {es1}"));
    let check = Check::against_constant(
        format!("E (max_(i<={j}) S_i)^{p} <= p E S_1 / ((1-p) M^(1-p))"),
        est[0],
        bound,
        Direction::Le,
        cx.tol(),
    );
    cx.report(vec![check])
}

pub(crate) fn mgf(mut cx: Context) -> Result<VerificationReport> {
    if !cx.props.mean_zero {
        return Err(cx.precondition("needs mean-zero steps"));
    }
    if cx.props.increment_bound.is_none() {
        return Err(cx.precondition("needs bounded steps"));
    }
    let grid = cx.params.count("grid_points")?.unwrap_or(DEFAULT_MGF_GRID);
    let form = cx.spec.linear_form()?;
    let mut checks = Vec::new();
    let mut degenerate = 0;
    for (i, &(lo, hi)) in cx.props.step_ranges.iter().enumerate() {
        let c = lo.abs().max(hi.abs());
        if c == 0.0 {
            degenerate += 1;
            continue;
        }
        let ex2 = cx.props.step_second_moments[i];
        let rows: Vec<(f64, f64, f64)> = (1..=grid)
            .map(|k| {
                let lambda = 3.0 / c * k as f64 / (grid + 1) as f64;
                let lhs = form.step_log_mgf(lambda)[i];
                (lambda, lhs, mgf_log_bound(lambda, c, ex2).expect("lambda in (0, 3/C)"))
            })
            .collect();
        let worst = tightest(rows.into_iter());
        checks.push(exact_le(
            format!("log E exp(lambda X_{}) <= lambda^2 E X^2 / (2(1 - lambda C/3)), C = {c}, tightest at lambda = {}", i + 1, worst.0),
            worst,
            cx.tol(),
        ));
    }
    if checks.is_empty() {
        return Err(cx.precondition("every step is identically zero"));
    }
    if degenerate > 0 {
        cx.notes.push(format!("{degenerate} identically zero steps skipped"));
    }
    cx.notes.push(format!("{grid}-point lambda grid on (0, 3/C) per step; log-MGF in closed form"));
    cx.report(checks)
}

pub(crate) fn bernstein(mut cx: Context) -> Result<VerificationReport> {
    let t = cx.params.positive("t")?;
    let structural = if cx.id == TheoremId::BernsteinAssoc {
        cx.props.associated
    } else {
        cx.props.demimartingale
    };
    if !structural || !cx.props.mean_zero {
        return Err(cx.precondition(if cx.id == TheoremId::BernsteinAssoc {
            "needs mean-zero positively associated steps"
        } else {
            "needs a mean-zero demimartingale"
        }));
    }
    let c = cx
        .props
        .increment_bound
        .ok_or_else(|| cx.precondition("needs bounded increments"))?;
    let n = cx.horizon();
    let v_n = cx.props.v_n(n);
    let input = BernsteinInput::new(t, v_n, c, n).map_err(|e| cx.precondition(&e.to_string()))?;
    let est = terminal_expectations(cx.spec, cx.mode, 2, |s, out| {
        out[0] = f64::from(u8::from(s >= t));
        out[1] = f64::from(u8::from(s.abs() >= t));
    })?;
    cx.notes.push(format!("V_n = {v_n} and C = {c} from the step laws (exact)"));
    let checks = vec![
        Check::tail(format!("P(S_{n} >= {t}) <= exp(-t^2/(2(V_n+tC/3)))"), est[0], bernstein_tail(&input), cx.tol()),
        Check::tail(
            format!("P(|S_{n}| >= {t}) <= 2 exp(-t^2/(2(V_n+tC/3)))"),
            est[1],
            bernstein_tail_two_sided(&input),
            cx.tol(),
        ),
    ];
    cx.report(checks)
}

/// Established directions for `I{tau <= j}`, restricted by `params.branch`.
fn branches(cx: &mut Context) -> Result<Vec<Monotonicity>> {
    let rule = cx.rule();
    let dirs = cx.established_directions(rule, IndicatorTarget::AtMost)?;
    if dirs.is_empty() {
        return Err(cx.precondition("I{tau <= j} is not established monotone in either direction"));
    }
    Ok(dirs)
}

pub(crate) fn exp_stopped(mut cx: Context) -> Result<VerificationReport> {
    let theta = cx.params.positive("theta")?;
    let h = cx.params.number("h_slope")?.unwrap_or(0.0);
    if !cx.props.demisubmartingale {
        return Err(cx.precondition("needs a demi(sub)martingale"));
    }
    let dirs = branches(&mut cx)?;
    let rule = cx.rule();
    let n = cx.horizon();
    let battery = sample_battery(cx.settings.seed, cx.params.battery_size()?, true);
    let b = battery.len();
    // columns: P(tau > n), M_tau, then (M_(j+1) - M_j) g(M_1..M_j)
    let est = expectations(cx.spec, cx.mode, 2 + (n - 1) * b, |s, out| {
        let m: Vec<f64> = s.iter().enumerate().map(|(k, &x)| (theta * x - h * (k + 1) as f64).exp()).collect();
        let (t, stopped) = capped_tau(rule, s, n);
        out[0] = f64::from(u8::from(!stopped));
        out[1] = m[t - 1];
        for j in 1..n {
            for (k, g) in battery.iter().enumerate() {
                out[2 + (j - 1) * b + k] = (m[j] - m[j - 1]) * g.eval(&m[..j]);
            }
        }
    })?;
    cx.require_finite(rule, n, est[0].mean(), "tau")?;
    cx.notes.push(format!("H(k) = {h} k; the demisubmartingale property of M_n is checked separately"));
    let mut checks = Vec::new();
    for d in dirs {
        let dir = direction_of(d);
        checks.push(Check::against_constant(
            format!("E exp(theta S_tau - H(tau)) {dir} 1 ({d:?} indicator)"),
            est[1],
            1.0,
            dir,
            cx.tol(),
        ));
    }
    for (idx, e) in est[2..].iter().enumerate() {
        let (j, k) = (idx / b + 1, idx % b);
        checks.push(Check::against_constant(
            format!("M_n battery: E[(M_{} - M_{j}) g{k}(M_1..M_{j})] ({:?})", j + 1, battery[k].kind),
            *e,
            0.0,
            Direction::Ge,
            cx.tol(),
        ));
    }
    cx.report(checks)
}

fn wald_preconditions(cx: &Context) -> Result<()> {
    if !cx.props.associated {
        return Err(cx.precondition("needs positively associated steps"));
    }
    if !cx.props.identically_distributed {
        return Err(cx.precondition("needs identically distributed steps"));
    }
    Ok(())
}

/// Shared shape of the Wald entries: `E[stat(S, tau)]` compared with
/// `E[reference(tau)]` per indicator direction.
fn wald_checks(
    cx: &mut Context,
    label: &str,
    stat: impl Fn(&[f64], usize) -> f64 + Sync,
    reference: impl Fn(usize) -> f64 + Sync,
) -> Result<Vec<Check>> {
    let dirs = branches(cx)?;
    let rule = cx.rule();
    let n = cx.horizon();
    let est = expectations(cx.spec, cx.mode, 4, |s, out| {
        let (t, stopped) = capped_tau(rule, s, n);
        let (a, r) = (stat(s, t), reference(t));
        out.copy_from_slice(&[f64::from(u8::from(!stopped)), a, r, a - r]);
    })?;
    cx.require_finite(rule, n, est[0].mean(), "tau")?;
    Ok(dirs
        .into_iter()
        .map(|d| {
            let dir = direction_of(d);
            Check::paired(format!("{label} ({d:?} indicator)"), est[1], est[2].mean(), dir, est[3], cx.tol())
        })
        .collect())
}

pub(crate) fn wald_first(mut cx: Context) -> Result<VerificationReport> {
    wald_preconditions(&cx)?;
    let mu = cx.props.step_means[0];
    let checks = wald_checks(&mut cx, "E S_tau vs E X_1 E tau", |s, t| s[t - 1], |t| mu * t as f64)?;
    let bounded = cx.props.increment_bound.is_some();
    cx.notes.push(format!(
        "route: bounded stopping time (both directions){}",
        if bounded { "; bounded steps also give the nonincreasing branch for integrable tau" } else { "" }
    ));
    cx.report(checks)
}

pub(crate) fn wald_second(mut cx: Context) -> Result<VerificationReport> {
    wald_preconditions(&cx)?;
    if !cx.props.nonnegative_increments() {
        return Err(cx.precondition("needs nonnegative steps"));
    }
    let m2 = cx.props.step_second_moments[0];
    let checks = wald_checks(&mut cx, "E S_tau^2 vs E X_1^2 E tau", |s, t| s[t - 1].powi(2), |t| m2 * t as f64)?;
    cx.report(checks)
}

pub(crate) fn wald_exp(mut cx: Context) -> Result<VerificationReport> {
    let theta = cx.params.positive("theta")?;
    if !cx.props.associated {
        return Err(cx.precondition("needs positively associated steps"));
    }
    if cx.props.step_means.iter().any(|&m| m < -MEAN_EPS) {
        return Err(cx.precondition("needs E X_i >= 0 for every i"));
    }
    let psi = cx.spec.linear_form()?.step_log_mgf(theta);
    if psi.iter().any(|p| !p.is_finite()) {
        return Err(cx.precondition("log E exp(theta X_i) is not finite"));
    }
    let cumulative: Vec<f64> = psi
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let checks = wald_checks(
        &mut cx,
        "E exp(theta S_tau - sum_(i<=tau) psi_i) vs 1",
        |s, t| (theta * s[t - 1] - cumulative[t - 1]).exp(),
        |_| 1.0,
    )?;
    cx.report(checks)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use crate::error::Error;
    use crate::expect::Mode;
    use crate::generators::{Family, GeneratorSpec, Law};
    use crate::registry::{verify, Instance, Params, Settings};
    use crate::report::{Verdict, VerificationReport};
    use crate::stopping::StoppingRule;

    fn exact(id: &str, inst: &Instance, params: Params) -> crate::error::Result<VerificationReport> {
        verify(id, inst, &params, &Mode::Exact, &Settings::default())
    }

    fn rademacher(n: usize) -> Instance {
        Instance::new(GeneratorSpec::iid(Law::Rademacher, n))
    }

    fn bernoulli(n: usize) -> Instance {
        Instance::new(GeneratorSpec::iid(Law::Bernoulli { p: 0.4 }, n))
    }

    #[test]
    fn lemma_grid_passes() {
        let r = verify("L4.4", &Instance::default(), &Params::new(), &Mode::Exact, &Settings::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.checks.len(), 3);
    }

    #[test]
    fn mgf_lemma_on_bounded_laws() {
        let r = exact("L4.5", &rademacher(3), Params::new()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        let centered = GeneratorSpec::centered(
            Family::Iid { law: Law::Discrete { values: vec![-1.0, 0.0, 3.0], probs: vec![0.5, 0.25, 0.25] } },
            2,
        );
        assert_eq!(exact("L4.5", &Instance::new(centered), Params::new()).unwrap().verdict, Verdict::Pass);
        assert!(matches!(exact("L4.5", &bernoulli(2), Params::new()), Err(Error::Precondition(_))));
    }

    #[test]
    fn bernstein_exact_tails() {
        let r = exact("T4.7", &rademacher(20), Params::new().with("t", 6.0)).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        // P(S_20 >= 6) = P(Bin(20, 1/2) >= 13)
        let hits: f64 = (13..=20u64).map(|k| binomial(20, k)).sum::<f64>() / 2f64.powi(20);
        assert_relative_eq!(r.checks[0].lhs.mean(), hits, max_relative = 1e-12);
        let shock = GeneratorSpec::new(Family::SharedShock { base: Law::Rademacher, shared: Law::Rademacher }, 8);
        assert!(exact("T5.6", &Instance::new(shock), Params::new().with("t", 3.0)).is_ok());
    }

    fn binomial(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn doob_requires_nonnegative_demimartingale() {
        let inst = Instance::new(GeneratorSpec::iid(Law::Rademacher, 4).with_offset(5.0));
        let r = exact("T4.1", &inst, Params::new().with("lambda", 7.0)).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_relative_eq!(r.rhs, 5.0 / 7.0, epsilon = 1e-15);
        assert!(matches!(
            exact("T4.1", &rademacher(4), Params::new().with("lambda", 1.0)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn lp_max_omits_the_floor_term() {
        // S constant at M = 4 plus small noise: E max^p is about M^p, while the
        // bound is p/(1-p) M^p, below it for p < 1/2
        let inst = Instance::new(
            GeneratorSpec::centered(Family::Iid { law: Law::Bernoulli { p: 0.5 } }, 3).with_offset(4.0),
        );
        let r = exact("C4.3", &inst, Params::new().with("p", 0.25)).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        let r = exact("C4.3", &inst, Params::new().with("p", 0.75)).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn exp_stopped_branches() {
        let inst = rademacher(3).with_stopping(StoppingRule::deterministic(1));
        let ge = exact("C4.10", &inst, Params::new().with("theta", 0.5).with_text("branch", "nonincreasing")).unwrap();
        assert_eq!(ge.verdict, Verdict::Pass);
        assert_relative_eq!(ge.checks[0].lhs.mean(), 0.5f64.cosh(), max_relative = 1e-14);
        let le = exact("C4.10", &inst, Params::new().with("theta", 0.5).with_text("branch", "nondecreasing")).unwrap();
        assert_eq!(le.verdict, Verdict::Fail);
    }

    #[test]
    fn wald_entries_on_iid_chains() {
        for n in 1..=6 {
            for lambda in [0.0, 1.0] {
                let inst = bernoulli(n).with_stopping(StoppingRule::first_passage_down(lambda).capped(n));
                for (id, params) in [("C5.2", Params::new()), ("C5.5", Params::new().with("theta", 0.5))] {
                    let r = exact(id, &inst, params).unwrap();
                    assert_eq!(r.verdict, Verdict::Pass, "{id} n={n} lambda={lambda}");
                }
            }
        }
        let r = exact("C5.2", &bernoulli(7).with_stopping(StoppingRule::deterministic(5)), Params::new()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_relative_eq!(r.checks[0].lhs.mean(), 5.0 * 0.4, max_relative = 1e-15);
        assert!(r.checks[0].z_margin.abs() < 1e-14);
    }

    #[test]
    fn wald_second_upper_branch_fails_for_deterministic_tau() {
        let inst = bernoulli(4).with_stopping(StoppingRule::deterministic(3));
        let r = exact("C5.4", &inst, Params::new()).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        let ge = exact("C5.4", &inst, Params::new().with_text("branch", "nonincreasing")).unwrap();
        assert_eq!(ge.verdict, Verdict::Pass);
        // E S_3^2 = 3p + 6p^2
        assert_relative_eq!(ge.checks[0].lhs.mean(), 3.0 * 0.4 + 6.0 * 0.16, max_relative = 1e-14);
    }
}
