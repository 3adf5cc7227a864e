//! Theorem registry: identifiers, parameter schemas and dispatch.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expect::Mode;
use crate::generators::{generate, GeneratorSpec, ProcessProperties};
use crate::monotone::{certify_indicator_monotonicity, Certificate, IndicatorTarget, Monotonicity};
use crate::report::{Tolerance, VerificationReport};
use crate::rng::PROBE_ENSEMBLE_SALT;
use crate::stopping::StoppingRule;

/// Paths and probes per path used to confirm a declared indicator direction.
pub const PROBE_PATHS: usize = 256;
pub const PROBES_PER_PATH: usize = 16;
pub const DEFAULT_BATTERY_SIZE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TheoremId {
    DemiDefinition,
    DemisubDefinition,
    StoppedOrder,
    StoppedPair,
    StopVsFixed,
    TwoStops,
    OptionalSamplingUpper,
    OptionalSamplingNonneg,
    OptionalSamplingLower,
    UiProxy,
    DoobMax,
    LpMax,
    LemmaGrid,
    MgfBound,
    Bernstein,
    Clt,
    CompleteConvergence,
    ExpStopped,
    WaldFirst,
    WaldSecond,
    WaldExp,
    BernsteinAssoc,
    CompleteConvergenceAssoc,
}

struct Entry {
    id: TheoremId,
    canonical: &'static str,
    aliases: &'static [&'static str],
    owner: &'static str,
    summary: &'static str,
    /// `(name, required)`
    params: &'static [(&'static str, bool)],
}

const BRANCH: (&str, bool) = ("branch", false);
const BATTERY: (&str, bool) = ("battery_size", false);

const ENTRIES: &[Entry] = &[
    Entry {
        id: TheoremId::DemiDefinition,
        canonical: "D1.2-demi",
        aliases: &["D1.2"],
        owner: "monotone",
        summary: "E[(S_{j+1}-S_j) f(S_1..S_j)] >= 0 over the full battery",
        params: &[BATTERY],
    },
    Entry {
        id: TheoremId::DemisubDefinition,
        canonical: "D1.2-demisub",
        aliases: &[],
        owner: "monotone",
        summary: "same statistic over the nonnegative battery",
        params: &[BATTERY],
    },
    Entry {
        id: TheoremId::StoppedOrder,
        canonical: "T1.4-order",
        aliases: &["T1.4"],
        owner: "stopping",
        summary: "E S_{tau^m} >= E S_{tau^n} >= E S_1 (nonincreasing indicator, demisub) or <= (nondecreasing, demimartingale)",
        params: &[BRANCH],
    },
    Entry {
        id: TheoremId::StoppedPair,
        canonical: "T2.1-stopped-pair",
        aliases: &["T2.1"],
        owner: "stopping",
        summary: "E[(S_M - S_tau) f(S_tau)] >= 0 and E S_tau <= E S_M for tau <= M with I{tau=k} nondecreasing",
        params: &[("m", false), BATTERY],
    },
    Entry {
        id: TheoremId::StopVsFixed,
        canonical: "C2.2-stop-vs-fixed",
        aliases: &["C2.2"],
        owner: "stopping",
        summary: "E S_{tau^j} <= E S_j for every j",
        params: &[],
    },
    Entry {
        id: TheoremId::TwoStops,
        canonical: "T2.3-two-stops",
        aliases: &["T2.3"],
        owner: "stopping",
        summary: "E[(S_tau2 - S_tau1) g(S_tau1)] >= 0 for tau1 <= tau2",
        params: &[BATTERY],
    },
    Entry {
        id: TheoremId::OptionalSamplingUpper,
        canonical: "T3.1-OST-upper",
        aliases: &["T3.1"],
        owner: "stopping",
        summary: "E S_tau <= E S_1 for a demimartingale with nondecreasing I{tau<=j}",
        params: &[],
    },
    Entry {
        id: TheoremId::OptionalSamplingNonneg,
        canonical: "T3.2-OST-nonneg",
        aliases: &["T3.2"],
        owner: "stopping",
        summary: "E S_tau <= E S_1 for a nonnegative demimartingale and finite tau",
        params: &[],
    },
    Entry {
        id: TheoremId::OptionalSamplingLower,
        canonical: "T3.3-OST-lower",
        aliases: &["T3.3"],
        owner: "stopping",
        summary: "E S_tau >= E S_1 for a demisubmartingale with nonincreasing I{tau<=j}",
        params: &[],
    },
    Entry {
        id: TheoremId::UiProxy,
        canonical: "L5.1-ui-proxy",
        aliases: &["L5.1"],
        owner: "stopping",
        summary: "E|S_{tau^n}| <= M E(tau^n) <= M E tau",
        params: &[],
    },
    Entry {
        id: TheoremId::DoobMax,
        canonical: "T4.1-doob-max",
        aliases: &["T4.1"],
        owner: "bounds",
        summary: "P(max_{i<=j} S_i >= lambda) <= E S_1 / lambda",
        params: &[("lambda", true), ("j", false)],
    },
    Entry {
        id: TheoremId::LpMax,
        canonical: "C4.3-lp-max",
        aliases: &["C4.3"],
        owner: "bounds",
        summary: "E(max_{i<=j} S_i)^p <= p E S_1 / ((1-p) M^{1-p}) for S >= M > 0",
        params: &[("p", true), ("m_lower", false), ("j", false)],
    },
    Entry {
        id: TheoremId::LemmaGrid,
        canonical: "L4.4-lemma-grid",
        aliases: &["L4.4", "L4.6", "L4.6-lemma-grid", "L4.4/L4.6-lemma-grid"],
        owner: "bounds",
        summary: "phi <= phi_bound on (0,3), h1 >= h1_lower on [0,1000], psi_sup >= Bernstein exponent",
        params: &[],
    },
    Entry {
        id: TheoremId::MgfBound,
        canonical: "L4.5-mgf",
        aliases: &["L4.5"],
        owner: "bounds",
        summary: "log E e^{lambda X_i} <= lambda^2 E X_i^2 / (2 (1 - lambda C/3)) on a lambda grid",
        params: &[("grid_points", false)],
    },
    Entry {
        id: TheoremId::Bernstein,
        canonical: "T4.7-bernstein",
        aliases: &["T4.7"],
        owner: "bounds",
        summary: "P(S_n >= t) <= exp(-t^2 / (2 (V_n + tC/3))) and the two-sided variant",
        params: &[("t", true)],
    },
    Entry {
        id: TheoremId::Clt,
        canonical: "T4.8-clt",
        aliases: &["T4.8"],
        owner: "asymptotics",
        summary: "KS distance of S_n / sigma_n from N(0,1) below the 1% critical value",
        params: &[("n_grid", true)],
    },
    Entry {
        id: TheoremId::CompleteConvergence,
        canonical: "T4.9-slln",
        aliases: &["T4.9"],
        owner: "asymptotics",
        summary: "P(|S_n| >= n^r eps) below the Bernstein envelope along n_grid",
        params: &[("r", true), ("epsilon", true), ("n_grid", true)],
    },
    Entry {
        id: TheoremId::ExpStopped,
        canonical: "C4.10-exp-stopped",
        aliases: &["C4.10"],
        owner: "bounds",
        summary: "E exp(theta S_tau - H(tau)) <= 1 (nondecreasing) or >= 1 (nonincreasing)",
        params: &[("theta", true), ("h_slope", false), BRANCH, BATTERY],
    },
    Entry {
        id: TheoremId::WaldFirst,
        canonical: "C5.2-wald-first",
        aliases: &["C5.2", "C5.3", "C5.3-wald-first", "C5.2/C5.3-wald-first"],
        owner: "bounds",
        summary: "E S_tau >= (<=) E X_1 E tau",
        params: &[BRANCH],
    },
    Entry {
        id: TheoremId::WaldSecond,
        canonical: "C5.4-wald-second",
        aliases: &["C5.4"],
        owner: "bounds",
        summary: "E S_tau^2 >= (<=) E X_1^2 E tau",
        params: &[BRANCH],
    },
    Entry {
        id: TheoremId::WaldExp,
        canonical: "C5.5-wald-exp",
        aliases: &["C5.5"],
        owner: "bounds",
        summary: "E exp(theta S_tau - sum_{i<=tau} psi_i(theta)) >= (<=) 1",
        params: &[("theta", true), BRANCH],
    },
    Entry {
        id: TheoremId::BernsteinAssoc,
        canonical: "T5.6-bernstein-assoc",
        aliases: &["T5.6"],
        owner: "bounds",
        summary: "Bernstein tail for mean-zero associated bounded increments",
        params: &[("t", true)],
    },
    Entry {
        id: TheoremId::CompleteConvergenceAssoc,
        canonical: "C5.7-slln-assoc",
        aliases: &["C5.7"],
        owner: "asymptotics",
        summary: "complete convergence envelope for mean-zero associated bounded increments",
        params: &[("r", true), ("epsilon", true), ("n_grid", true)],
    },
];

impl TheoremId {
    fn entry(self) -> &'static Entry {
        ENTRIES.iter().find(|e| e.id == self).expect("every id has an entry")
    }

    pub fn all() -> impl Iterator<Item = TheoremId> {
        ENTRIES.iter().map(|e| e.id)
    }

    pub fn parse(s: &str) -> Result<TheoremId> {
        let key = s.trim();
        ENTRIES
            .iter()
            .find(|e| e.canonical.eq_ignore_ascii_case(key) || e.aliases.iter().any(|a| a.eq_ignore_ascii_case(key)))
            .map(|e| e.id)
            .ok_or_else(|| Error::UnknownTheorem(s.to_string()))
    }

    pub fn canonical(self) -> &'static str {
        self.entry().canonical
    }

    pub fn aliases(self) -> &'static [&'static str] {
        self.entry().aliases
    }

    pub fn owner(self) -> &'static str {
        self.entry().owner
    }

    pub fn summary(self) -> &'static str {
        self.entry().summary
    }

    /// Accepted parameter names and whether each is required.
    pub fn param_schema(self) -> &'static [(&'static str, bool)] {
        self.entry().params
    }

    pub fn needs_generator(self) -> bool {
        self != TheoremId::LemmaGrid
    }

    pub fn needs_stopping(self) -> bool {
        use TheoremId::*;
        matches!(
            self,
            StoppedOrder
                | StoppedPair
                | StopVsFixed
                | TwoStops
                | OptionalSamplingUpper
                | OptionalSamplingNonneg
                | OptionalSamplingLower
                | UiProxy
                | ExpStopped
                | WaldFirst
                | WaldSecond
                | WaldExp
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    List(Vec<f64>),
    Text(String),
}

/// Theorem parameters (`lambda`, `t`, `theta`, `p`, `r`, `epsilon`, ...).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Params(pub BTreeMap<String, ParamValue>);

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.0.insert(name.to_string(), ParamValue::Number(value));
        self
    }

    pub fn with_list(mut self, name: &str, values: &[f64]) -> Self {
        self.0.insert(name.to_string(), ParamValue::List(values.to_vec()));
        self
    }

    pub fn with_text(mut self, name: &str, value: &str) -> Self {
        self.0.insert(name.to_string(), ParamValue::Text(value.to_string()));
        self
    }

    fn field(name: &str) -> String {
        format!("params.{name}")
    }

    pub fn number(&self, name: &str) -> Result<Option<f64>> {
        match self.0.get(name) {
            None => Ok(None),
            Some(ParamValue::Number(v)) if v.is_finite() => Ok(Some(*v)),
            Some(_) => Err(Error::config(Self::field(name), "must be a finite number")),
        }
    }

    pub fn require(&self, name: &str) -> Result<f64> {
        self.number(name)?
            .ok_or_else(|| Error::config(Self::field(name), "required"))
    }

    pub fn positive(&self, name: &str) -> Result<f64> {
        let v = self.require(name)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::config(Self::field(name), format!("must be positive, got {v}")))
        }
    }

    pub fn count(&self, name: &str) -> Result<Option<usize>> {
        match self.number(name)? {
            None => Ok(None),
            Some(v) if v >= 1.0 && v.fract() == 0.0 => Ok(Some(v as usize)),
            Some(v) => Err(Error::config(Self::field(name), format!("must be a positive integer, got {v}"))),
        }
    }

    pub fn list(&self, name: &str) -> Result<Vec<f64>> {
        match self.0.get(name) {
            Some(ParamValue::List(v)) => Ok(v.clone()),
            Some(ParamValue::Number(v)) => Ok(vec![*v]),
            Some(ParamValue::Text(_)) => Err(Error::config(Self::field(name), "must be a list of numbers")),
            None => Err(Error::config(Self::field(name), "required")),
        }
    }

    /// Increasing list of positive integers.
    pub fn horizons(&self, name: &str) -> Result<Vec<usize>> {
        let raw = self.list(name)?;
        if raw.is_empty() {
            return Err(Error::config(Self::field(name), "must not be empty"));
        }
        let mut out = Vec::with_capacity(raw.len());
        for v in raw {
            if !(v >= 1.0 && v.fract() == 0.0) {
                return Err(Error::config(Self::field(name), format!("entries must be positive integers, got {v}")));
            }
            let n = v as usize;
            if out.last().is_some_and(|&last| n <= last) {
                return Err(Error::config(Self::field(name), "must be strictly increasing"));
            }
            out.push(n);
        }
        Ok(out)
    }

    pub fn text(&self, name: &str) -> Result<Option<&str>> {
        match self.0.get(name) {
            None => Ok(None),
            Some(ParamValue::Text(s)) => Ok(Some(s)),
            Some(_) => Err(Error::config(Self::field(name), "must be a string")),
        }
    }

    /// Rejects names outside `theorem`'s schema and reports missing required ones.
    pub fn validate_for(&self, theorem: TheoremId) -> Result<()> {
        let schema = theorem.param_schema();
        if let Some(name) = self.0.keys().find(|k| !schema.iter().any(|(s, _)| s == k)) {
            return Err(Error::config(
                Self::field(name),
                format!("not a parameter of {}", theorem.canonical()),
            ));
        }
        if let Some((name, _)) = schema.iter().find(|(n, req)| *req && !self.0.contains_key(*n)) {
            return Err(Error::config(Self::field(name), "required"));
        }
        Ok(())
    }

    pub fn battery_size(&self) -> Result<usize> {
        Ok(self.count("battery_size")?.unwrap_or(DEFAULT_BATTERY_SIZE))
    }

    /// Optional restriction to one indicator direction.
    pub fn branch(&self) -> Result<Option<Monotonicity>> {
        match self.text("branch")? {
            None | Some("both") => Ok(None),
            Some("nondecreasing") => Ok(Some(Monotonicity::Nondecreasing)),
            Some("nonincreasing") => Ok(Some(Monotonicity::Nonincreasing)),
            Some(other) => Err(Error::config(
                "params.branch",
                format!("expected nondecreasing, nonincreasing or both, got {other}"),
            )),
        }
    }
}

/// What a theorem is checked on.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Instance {
    pub generator: Option<GeneratorSpec>,
    pub stopping: Option<StoppingRule>,
    /// Second stopping time for the two-stop entry.
    pub stopping2: Option<StoppingRule>,
}

impl Instance {
    pub fn new(generator: GeneratorSpec) -> Self {
        Self {
            generator: Some(generator),
            ..Self::default()
        }
    }

    pub fn with_stopping(mut self, rule: StoppingRule) -> Self {
        self.stopping = Some(rule);
        self
    }

    pub fn with_stopping2(mut self, rule: StoppingRule) -> Self {
        self.stopping2 = Some(rule);
        self
    }
}

/// Verdict tolerance and the seed for auxiliary randomness (battery,
/// monotonicity probes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub tolerance: Tolerance,
    pub seed: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            tolerance: Tolerance::default(),
            seed: 0,
        }
    }
}

/// Runs one registry entry.
pub fn verify(
    theorem_id: &str,
    instance: &Instance,
    params: &Params,
    mode: &Mode,
    settings: &Settings,
) -> Result<VerificationReport> {
    let id = TheoremId::parse(theorem_id)?;
    params.validate_for(id)?;
    if id == TheoremId::LemmaGrid {
        return crate::bounds::verify::lemma_grid(settings);
    }
    let spec = instance
        .generator
        .as_ref()
        .ok_or_else(|| Error::config("generator", "required"))?;
    let cx = Context::new(id, spec, instance, params, mode, settings)?;
    use TheoremId::*;
    match id {
        DemiDefinition | DemisubDefinition => crate::stopping::verify::definition(cx),
        StoppedOrder => crate::stopping::verify::stopped_order(cx),
        StoppedPair => crate::stopping::verify::stopped_pair(cx),
        StopVsFixed => crate::stopping::verify::stop_vs_fixed(cx),
        TwoStops => crate::stopping::verify::two_stops(cx),
        OptionalSamplingUpper | OptionalSamplingNonneg | OptionalSamplingLower => {
            crate::stopping::verify::optional_sampling(cx)
        }
        UiProxy => crate::stopping::verify::ui_proxy(cx),
        DoobMax => crate::bounds::verify::doob_max(cx),
        LpMax => crate::bounds::verify::lp_max(cx),
        MgfBound => crate::bounds::verify::mgf(cx),
        Bernstein | BernsteinAssoc => crate::bounds::verify::bernstein(cx),
        ExpStopped => crate::bounds::verify::exp_stopped(cx),
        WaldFirst => crate::bounds::verify::wald_first(cx),
        WaldSecond => crate::bounds::verify::wald_second(cx),
        WaldExp => crate::bounds::verify::wald_exp(cx),
        Clt => crate::asymptotics::verify_clt(cx),
        CompleteConvergence | CompleteConvergenceAssoc => crate::asymptotics::verify_complete_convergence(cx),
        LemmaGrid => unreachable!("handled above"),
    }
}

/// Everything a registry entry needs, with the generator validated.
pub(crate) struct Context<'a> {
    pub id: TheoremId,
    pub spec: &'a GeneratorSpec,
    pub props: ProcessProperties,
    pub instance: &'a Instance,
    pub params: &'a Params,
    pub mode: &'a Mode,
    pub settings: &'a Settings,
    pub notes: Vec<String>,
}

impl<'a> Context<'a> {
    fn new(
        id: TheoremId,
        spec: &'a GeneratorSpec,
        instance: &'a Instance,
        params: &'a Params,
        mode: &'a Mode,
        settings: &'a Settings,
    ) -> Result<Self> {
        let props = spec.properties()?;
        if id.needs_stopping() && instance.stopping.is_none() {
            return Err(Error::config("stopping", "required"));
        }
        if let Some(rule) = &instance.stopping {
            rule.validate()?;
        }
        if let Some(rule) = &instance.stopping2 {
            rule.validate()?;
        }
        Ok(Self {
            id,
            spec,
            props,
            instance,
            params,
            mode,
            settings,
            notes: Vec::new(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon
    }

    pub fn rule(&self) -> &'a StoppingRule {
        self.instance.stopping.as_ref().expect("checked in Context::new")
    }

    pub fn tol(&self) -> &Tolerance {
        &self.settings.tolerance
    }

    pub fn precondition(&self, what: &str) -> Error {
        Error::precondition(format!("{}: {what}", self.id.canonical()))
    }

    /// Directions in which the indicator for `target` is monotone: analytic
    /// certificates first, then the declared direction if probing confirms
    /// it. A refuted declaration is a precondition error.
    pub fn established_directions(&mut self, rule: &StoppingRule, target: IndicatorTarget) -> Result<Vec<Monotonicity>> {
        let mut dirs = Vec::new();
        for dir in [Monotonicity::Nondecreasing, Monotonicity::Nonincreasing] {
            if rule.certified(dir, target) {
                dirs.push(dir);
            }
        }
        if !dirs.is_empty() {
            self.notes.push(format!("indicator {target:?} certified by construction: {dirs:?}"));
        }
        if let Some(declared) = rule.declared_direction.monotonicity() {
            if !dirs.contains(&declared) {
                let probe_seed = self.settings.seed ^ PROBE_ENSEMBLE_SALT;
                let ensemble = generate(self.spec, PROBE_PATHS, probe_seed)?;
                match certify_indicator_monotonicity(rule, declared, target, &ensemble, PROBES_PER_PATH, probe_seed) {
                    Certificate::Counterexample {
                        path,
                        coordinate,
                        index,
                        delta,
                    } => {
                        return Err(self.precondition(&format!(
                            "declared {declared:?} indicator {target:?} refuted: raising S_{coordinate}.. by {delta:.6e} \
                             on path {path:?} moves the indicator at index {index} the wrong way"
                        )))
                    }
                    Certificate::SampledOk { probes } => {
                        self.notes.push(format!("declared {declared:?} indicator confirmed by {probes} probes"));
                        dirs.push(declared);
                    }
                    Certificate::CertifiedByConstruction => dirs.push(declared),
                }
            }
        }
        if let Some(branch) = self.params.branch()? {
            dirs.retain(|&d| d == branch);
        }
        Ok(dirs)
    }

    /// Fails unless `tau <= limit` almost surely. `not_stopped` is the
    /// estimated probability that the rule has not fired by `limit`.
    pub fn require_finite(&mut self, rule: &StoppingRule, limit: usize, not_stopped: f64, what: &str) -> Result<()> {
        if let Some(b) = rule.bound().filter(|&b| b <= limit) {
            self.notes.push(format!("{what} bounded by {b}"));
            return Ok(());
        }
        if not_stopped == 0.0 {
            let how = if self.mode.is_exact() {
                "P(tau <= limit) = 1 by enumeration"
            } else {
                "every sampled path stopped by the limit"
            };
            self.notes.push(format!("{what}: {how}"));
            return Ok(());
        }
        Err(self.precondition(&format!(
            "{what}: stopping time not a.s. finite at this horizon (P(tau > {limit}) = {not_stopped:.6e})"
        )))
    }

    pub fn report(self, checks: Vec<crate::report::Check>) -> Result<VerificationReport> {
        Ok(VerificationReport::from_checks(self.id.canonical(), checks, self.notes))
    }
}
