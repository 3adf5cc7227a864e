//! Registry entries for the definition battery and optional sampling.

use crate::error::Result;
use crate::expect::{expectations, Estimate};
use crate::monotone::{sample_battery, IndicatorTarget, Monotonicity};
use crate::registry::{Context, TheoremId};
use crate::report::{Check, Direction, VerificationReport};
use crate::stopping::StoppingRule;

/// `tau ^ limit` and whether the rule fired by `limit`.
pub(crate) fn capped_tau(rule: &StoppingRule, s: &[f64], limit: usize) -> (usize, bool) {
    match rule.tau(s) {
        Some(t) if t <= limit => (t, true),
        _ => (limit, false),
    }
}

pub(crate) fn direction_of(m: Monotonicity) -> Direction {
    match m {
        Monotonicity::Nondecreasing => Direction::Le,
        Monotonicity::Nonincreasing => Direction::Ge,
    }
}

fn indicator(b: bool) -> f64 {
    f64::from(u8::from(b))
}

pub(crate) fn definition(mut cx: Context) -> Result<VerificationReport> {
    let nonneg = cx.id == TheoremId::DemisubDefinition;
    let n = cx.horizon();
    if n < 2 {
        return Err(cx.precondition("the defining inequality needs horizon >= 2"));
    }
    let battery = sample_battery(cx.settings.seed, cx.params.battery_size()?, nonneg);
    let b = battery.len();
    let est = expectations(cx.spec, cx.mode, (n - 1) * b, |s, out| {
        for j in 1..n {
            let x = s[j] - s[j - 1];
            for (k, f) in battery.iter().enumerate() {
                out[(j - 1) * b + k] = x * f.eval(&s[..j]);
            }
        }
    })?;
    let checks = est
        .iter()
        .enumerate()
        .map(|(idx, e)| {
            let (j, k) = (idx / b + 1, idx % b);
            Check::against_constant(
                format!("E[(S_{} - S_{j}) f{k}(S_1..S_{j})] ({:?})", j + 1, battery[k].kind),
                *e,
                0.0,
                Direction::Ge,
                cx.tol(),
            )
        })
        .collect();
    cx.notes.push(format!(
        "battery of {b} {} functions; generator associated: {}, demimartingale: {}, demisubmartingale: {}",
        if nonneg { "nonnegative" } else { "nondecreasing" },
        cx.props.associated,
        cx.props.demimartingale,
        cx.props.demisubmartingale
    ));
    cx.report(checks)
}

pub(crate) fn stopped_order(mut cx: Context) -> Result<VerificationReport> {
    let rule = cx.rule();
    let n = cx.horizon();
    let dirs = cx.established_directions(rule, IndicatorTarget::AtMost)?;
    let usable: Vec<Monotonicity> = dirs
        .into_iter()
        .filter(|d| match d {
            Monotonicity::Nonincreasing => cx.props.demisubmartingale,
            Monotonicity::Nondecreasing => cx.props.demimartingale,
        })
        .collect();
    if usable.is_empty() {
        return Err(cx.precondition(
            "needs a demisubmartingale with nonincreasing I{tau<=j} or a demimartingale with nondecreasing I{tau<=j}",
        ));
    }
    // columns: S_{tau^k} (k = 1..n), then adjacent differences, then S_{tau^n} - S_1
    let est = expectations(cx.spec, cx.mode, 2 * n, |s, out| {
        let (t, _) = capped_tau(rule, s, n);
        for k in 1..=n {
            out[k - 1] = s[k.min(t) - 1];
        }
        for k in 1..n {
            out[n + k - 1] = out[k] - out[k - 1];
        }
        out[2 * n - 1] = out[n - 1] - s[0];
    })?;
    let mut checks = Vec::new();
    for d in usable {
        let dir = direction_of(d);
        cx.notes.push(format!("{d:?} indicator: E S_(tau^k) monotone {dir} in k"));
        for k in 1..n {
            checks.push(Check::paired(
                format!("E S_(tau^{}) {dir} E S_(tau^{k})", k + 1),
                est[k],
                est[k - 1].mean(),
                dir,
                est[n + k - 1],
                cx.tol(),
            ));
        }
        checks.push(Check::paired(
            format!("E S_(tau^{n}) {dir} E S_1"),
            est[n - 1],
            est[0].mean(),
            dir,
            est[2 * n - 1],
            cx.tol(),
        ));
    }
    cx.report(checks)
}

pub(crate) fn stopped_pair(mut cx: Context) -> Result<VerificationReport> {
    let rule = cx.rule();
    let n = cx.horizon();
    let m = cx.params.count("m")?.unwrap_or(n);
    if m > n {
        return Err(crate::error::Error::config("params.m", format!("must not exceed the horizon {n}")));
    }
    if !cx.props.demisubmartingale {
        return Err(cx.precondition("needs a demi(sub)martingale"));
    }
    let target = IndicatorTarget::Equals { max_k: m - 1 };
    if !cx.established_directions(rule, target)?.contains(&Monotonicity::Nondecreasing) {
        return Err(cx.precondition("needs I{tau = k} nondecreasing for k <= M - 1"));
    }
    let battery = sample_battery(cx.settings.seed, cx.params.battery_size()?, true);
    let b = battery.len();
    // columns: P(tau > M), S_tau, S_M, S_tau - S_M, battery terms
    let est = expectations(cx.spec, cx.mode, 4 + b, |s, out| {
        let (t, stopped) = capped_tau(rule, s, m);
        let (st, sm) = (s[t - 1], s[m - 1]);
        out[0] = indicator(!stopped);
        out[1] = st;
        out[2] = sm;
        out[3] = st - sm;
        for (k, f) in battery.iter().enumerate() {
            out[4 + k] = (sm - st) * f.eval(&[st]);
        }
    })?;
    cx.require_finite(rule, m, est[0].mean(), "tau")?;
    let mut checks = vec![Check::paired(
        format!("E S_tau <= E S_{m}"),
        est[1],
        est[2].mean(),
        Direction::Le,
        est[3],
        cx.tol(),
    )];
    for (k, f) in battery.iter().enumerate() {
        checks.push(Check::against_constant(
            format!("E[(S_{m} - S_tau) f{k}(S_tau)] ({:?})", f.kind),
            est[4 + k],
            0.0,
            Direction::Ge,
            cx.tol(),
        ));
    }
    cx.report(checks)
}

pub(crate) fn stop_vs_fixed(mut cx: Context) -> Result<VerificationReport> {
    let rule = cx.rule();
    let n = cx.horizon();
    let route_a = cx.props.demisubmartingale
        && cx
            .established_directions(rule, IndicatorTarget::Equals { max_k: n - 1 })?
            .contains(&Monotonicity::Nondecreasing);
    let route_b = !route_a
        && cx.props.demimartingale
        && cx
            .established_directions(rule, IndicatorTarget::AtMost)?
            .contains(&Monotonicity::Nondecreasing);
    if route_a {
        cx.notes.push("route: I{tau = k} nondecreasing, demi(sub)martingale".into());
    } else if route_b {
        cx.notes
            .push("route: I{tau <= j} nondecreasing, demimartingale (E S_(tau^j) <= E S_1 = E S_j)".into());
    } else {
        return Err(cx.precondition(
            "needs I{tau = k} nondecreasing on a demi(sub)martingale, or I{tau <= j} nondecreasing on a demimartingale",
        ));
    }
    // columns: S_{tau^j}, S_j, difference
    let est = expectations(cx.spec, cx.mode, 3 * n, |s, out| {
        let (t, _) = capped_tau(rule, s, n);
        for j in 1..=n {
            let a = s[j.min(t) - 1];
            out[3 * (j - 1)] = a;
            out[3 * (j - 1) + 1] = s[j - 1];
            out[3 * (j - 1) + 2] = a - s[j - 1];
        }
    })?;
    let checks = (1..=n)
        .map(|j| {
            let c = 3 * (j - 1);
            Check::paired(
                format!("E S_(tau^{j}) <= E S_{j}"),
                est[c],
                est[c + 1].mean(),
                Direction::Le,
                est[c + 2],
                cx.tol(),
            )
        })
        .collect();
    cx.report(checks)
}

pub(crate) fn two_stops(mut cx: Context) -> Result<VerificationReport> {
    let tau1 = cx.rule();
    let tau2 = cx
        .instance
        .stopping2
        .as_ref()
        .ok_or_else(|| crate::error::Error::config("stopping2", "required"))?;
    let n = cx.horizon();
    if cx.props.increment_bound.is_none() {
        return Err(cx.precondition("needs bounded increments |S_(k+1) - S_k| <= M"));
    }
    if !cx.props.demisubmartingale {
        return Err(cx.precondition("needs a demi(sub)martingale"));
    }
    if !cx
        .established_directions(tau1, IndicatorTarget::Equals { max_k: n })?
        .contains(&Monotonicity::Nondecreasing)
    {
        return Err(cx.precondition("needs I{tau1 = j} nondecreasing for every j"));
    }
    let battery = sample_battery(cx.settings.seed, cx.params.battery_size()?, true);
    let b = battery.len();
    // columns: P(tau1 > tau2), P(tau1 > n), P(tau2 > n), battery terms
    let est = expectations(cx.spec, cx.mode, 3 + b, |s, out| {
        let (t1, stop1) = capped_tau(tau1, s, n);
        let (t2, stop2) = capped_tau(tau2, s, n);
        out[0] = indicator(stop1 && stop2 && t1 > t2 || !stop1 && stop2);
        out[1] = indicator(!stop1);
        out[2] = indicator(!stop2);
        let (a, z) = (s[t1 - 1], s[t2 - 1]);
        for (k, g) in battery.iter().enumerate() {
            out[3 + k] = (z - a) * g.eval(&[a]);
        }
    })?;
    if est[0].mean() > 0.0 {
        return Err(cx.precondition("tau1 <= tau2 fails on some paths"));
    }
    cx.require_finite(tau1, n, est[1].mean(), "tau1")?;
    cx.require_finite(tau2, n, est[2].mean(), "tau2")?;
    cx.notes.push("bounded increments and tau2 <= n make the moment condition automatic".into());
    let checks = battery
        .iter()
        .enumerate()
        .map(|(k, g)| {
            Check::against_constant(
                format!("E[(S_tau2 - S_tau1) g{k}(S_tau1)] ({:?})", g.kind),
                est[3 + k],
                0.0,
                Direction::Ge,
                cx.tol(),
            )
        })
        .collect();
    cx.report(checks)
}

pub(crate) fn optional_sampling(mut cx: Context) -> Result<VerificationReport> {
    let rule = cx.rule();
    let n = cx.horizon();
    let (need, dir) = match cx.id {
        TheoremId::OptionalSamplingLower => (Monotonicity::Nonincreasing, Direction::Ge),
        _ => (Monotonicity::Nondecreasing, Direction::Le),
    };
    match cx.id {
        TheoremId::OptionalSamplingLower if !cx.props.demisubmartingale => {
            return Err(cx.precondition("needs a demisubmartingale"))
        }
        TheoremId::OptionalSamplingNonneg if !(cx.props.demimartingale && cx.props.path_lower_bound >= 0.0) => {
            return Err(cx.precondition("needs a nonnegative demimartingale"))
        }
        TheoremId::OptionalSamplingUpper if !cx.props.demimartingale => {
            return Err(cx.precondition("needs a demimartingale"))
        }
        _ => {}
    }
    if !cx.established_directions(rule, IndicatorTarget::AtMost)?.contains(&need) {
        return Err(cx.precondition(&format!("needs I{{tau <= j}} {need:?}")));
    }
    // A3 bound on increments from the second step on
    let m = (n > 1 && cx.id != TheoremId::OptionalSamplingNonneg)
        .then(|| {
            cx.props.step_ranges[1..]
                .iter()
                .map(|&(lo, hi)| lo.abs().max(hi.abs()))
                .fold(0.0, f64::max)
        })
        .filter(|m| m.is_finite());
    // columns: P(tau > n), S_tau, S_1, S_tau - S_1, |S_tau - S_1|, M (tau - 1), difference
    let est = expectations(cx.spec, cx.mode, 7, |s, out| {
        let (t, stopped) = capped_tau(rule, s, n);
        let d = s[t - 1] - s[0];
        let bound = m.unwrap_or(0.0) * (t as f64 - 1.0);
        out.copy_from_slice(&[indicator(!stopped), s[t - 1], s[0], d, d.abs(), bound, d.abs() - bound]);
    })?;
    cx.require_finite(rule, n, est[0].mean(), "tau")?;
    let mut checks = vec![Check::paired(
        format!("E S_tau {dir} E S_1"),
        est[1],
        est[2].mean(),
        dir,
        est[3],
        cx.tol(),
    )];
    if let Some(m) = m {
        cx.notes.push(format!("condition A1 (finite horizon) and A3 with M = {m}"));
        checks.push(Check::paired(
            "E|S_tau - S_1| <= M (E tau - 1)",
            est[4],
            est[5].mean(),
            Direction::Le,
            est[6],
            cx.tol(),
        ));
    } else {
        cx.notes.push("condition A1 (finite horizon)".into());
    }
    cx.report(checks)
}

pub(crate) fn ui_proxy(mut cx: Context) -> Result<VerificationReport> {
    let rule = cx.rule();
    let n = cx.horizon();
    let m = cx
        .props
        .increment_bound
        .ok_or_else(|| cx.precondition("needs bounded increments"))?;
    // per k: |S_(tau^k)|, M (tau^k), difference; then P(tau > n)
    let est = expectations(cx.spec, cx.mode, 3 * n + 1, |s, out| {
        let (t, stopped) = capped_tau(rule, s, n);
        for k in 1..=n {
            let tk = k.min(t);
            let a = s[tk - 1].abs();
            let b = m * tk as f64;
            out[3 * (k - 1)..3 * k].copy_from_slice(&[a, b, a - b]);
        }
        out[3 * n] = indicator(!stopped);
    })?;
    let mut checks: Vec<Check> = (1..=n)
        .map(|k| {
            let c = 3 * (k - 1);
            Check::paired(
                format!("E|S_(tau^{k})| <= M E(tau^{k})"),
                est[c],
                est[c + 1].mean(),
                Direction::Le,
                est[c + 2],
                cx.tol(),
            )
        })
        .collect();
    if cx.require_finite(rule, n, est[3 * n].mean(), "tau").is_ok() {
        let top = est[3 * n - 2];
        checks.push(Check::paired(
            format!("M E(tau^{n}) <= M E tau"),
            top,
            top.mean(),
            Direction::Le,
            Estimate::Exact(0.0),
            cx.tol(),
        ));
    } else {
        cx.notes.push("tau not a.s. finite at this horizon: M E tau is not identified, second inequality skipped".into());
    }
    cx.notes.push(format!("M = {m}"));
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

    fn iid(law: Law, n: usize) -> GeneratorSpec {
        GeneratorSpec::iid(law, n)
    }

    fn exact(id: &str, inst: Instance, params: Params) -> crate::error::Result<VerificationReport> {
        verify(id, &inst, &params, &Mode::Exact, &Settings::default())
    }

    fn pass(id: &str, inst: Instance) {
        let r = exact(id, inst, Params::new()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{id}: {:?}", r.failed_checks().collect::<Vec<_>>());
        assert!(r.exact);
    }

    #[test]
    fn optional_sampling_spec_example() {
        let inst = Instance::new(iid(Law::Rademacher, 3)).with_stopping(StoppingRule::first_passage_up(1.0).capped(3));
        let r = exact("T3.1", inst, Params::new()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert_relative_eq!(r.checks[0].lhs.mean(), 0.0, epsilon = 1e-15);
        assert_eq!(r.checks[0].rhs, 0.0);
    }

    #[test]
    fn definition_battery_and_negative_control() {
        pass("D1.2", Instance::new(iid(Law::Rademacher, 6)));
        pass("D1.2-demisub", Instance::new(iid(Law::Bernoulli { p: 0.5 }, 6)));
        let flip = GeneratorSpec::new(Family::AdversarialSignFlip { law: Law::Rademacher }, 4);
        let r = exact("D1.2", Instance::new(flip), Params::new()).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        // f = last coordinate at j = 1: E[(X_2) S_1] = -E X_1^2 = -1
        assert!(r.checks.iter().any(|c| (c.lhs.mean() + 1.0).abs() < 1e-12));
    }

    #[test]
    fn order_and_stop_vs_fixed_exact() {
        for n in 2..=6 {
            for lambda in [1.0, 2.0] {
                let up = StoppingRule::first_passage_up(lambda);
                pass("T1.4", Instance::new(iid(Law::Rademacher, n)).with_stopping(up.clone()));
                pass("C2.2", Instance::new(iid(Law::Rademacher, n)).with_stopping(up));
                let down = StoppingRule::first_passage_down(lambda);
                pass("T1.4", Instance::new(iid(Law::Bernoulli { p: 0.5 }, n)).with_stopping(down));
            }
        }
    }

    #[test]
    fn lower_optional_sampling_on_bernoulli() {
        for n in 1..=6 {
            for lambda in [0.0, 1.0, 2.0] {
                let rule = StoppingRule::first_passage_down(lambda).capped(n);
                pass("T3.3", Instance::new(iid(Law::Bernoulli { p: 0.3 }, n)).with_stopping(rule));
            }
        }
    }

    #[test]
    fn preconditions_are_reported() {
        // uncapped first passage is not a.s. finite at a finite horizon
        let inst = Instance::new(iid(Law::Rademacher, 4)).with_stopping(StoppingRule::first_passage_up(2.0));
        assert!(matches!(exact("T3.1", inst, Params::new()), Err(Error::Precondition(_))));
        // wrong direction for the lower inequality
        let inst = Instance::new(iid(Law::Rademacher, 4)).with_stopping(StoppingRule::first_passage_up(1.0).capped(4));
        assert!(matches!(exact("T3.3", inst, Params::new()), Err(Error::Precondition(_))));
        // bernoulli is not a demimartingale
        let inst = Instance::new(iid(Law::Bernoulli { p: 0.5 }, 3)).with_stopping(StoppingRule::deterministic(2));
        assert!(matches!(exact("T3.1", inst, Params::new()), Err(Error::Precondition(_))));
    }

    #[test]
    fn stopped_pair_and_two_stops() {
        let rule = StoppingRule::first_passage_up(1.0).capped(2);
        let inst = Instance::new(iid(Law::Rademacher, 4)).with_stopping(rule);
        let r = exact("T2.1", inst, Params::new().with("m", 2.0)).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        let inst = Instance::new(iid(Law::Rademacher, 5))
            .with_stopping(StoppingRule::deterministic(1))
            .with_stopping2(StoppingRule::first_passage_up(1.0).capped(5));
        pass("T2.3", inst);
        let swapped = Instance::new(iid(Law::Rademacher, 5))
            .with_stopping(StoppingRule::deterministic(3))
            .with_stopping2(StoppingRule::first_passage_up(1.0).capped(5));
        assert!(matches!(exact("T2.3", swapped, Params::new()), Err(Error::Precondition(_))));
    }

    #[test]
    fn ui_proxy_with_and_without_finite_tau() {
        pass("L5.1", Instance::new(iid(Law::Rademacher, 6)).with_stopping(StoppingRule::first_passage_up(2.0)));
        let r = exact(
            "L5.1",
            Instance::new(iid(Law::Rademacher, 6)).with_stopping(StoppingRule::deterministic(4)),
            Params::new(),
        )
        .unwrap();
        assert_eq!(r.checks.len(), 7);
        // E|S_(tau^k)| for tau = 4 at k = 2: E|X_1 + X_2| = 1
        assert_relative_eq!(r.checks[1].lhs.mean(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn monte_carlo_agrees_with_oracle() {
        let inst = Instance::new(iid(Law::Rademacher, 6)).with_stopping(StoppingRule::first_passage_up(1.0));
        let ex = exact("C2.2", inst.clone(), Params::new()).unwrap();
        let mc = verify("C2.2", &inst, &Params::new(), &Mode::MonteCarlo { paths: 40_000, seed: 3 }, &Settings::default())
            .unwrap();
        assert_eq!(mc.verdict, Verdict::Pass);
        for (a, b) in ex.checks.iter().zip(&mc.checks) {
            assert!((a.lhs.mean() - b.lhs.mean()).abs() <= 4.0 * b.lhs.stderr() + 1e-12, "{}", a.label);
        }
    }
}
