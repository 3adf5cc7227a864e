//! Process generators: partial sums of associated sequences (and one
//! deliberately non-associated negative control).
//!
//! Every family except `adversarial_sign_flip` is a vector of nondecreasing
//! functions of independent variables, hence associated; with mean-zero
//! increments the partial sums are demimartingales and with nonnegative means
//! demisubmartingales.

mod chain;
mod law;
mod linear;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub use chain::{DiscreteChainSpec, Kernel, ENUMERATION_CAP};
pub use law::Law;
pub use linear::{LinearForm, PathSampler};

use crate::error::{Error, Result};
use crate::mc;
use crate::process::{ProcessEnsemble, ProcessPath};

/// Means within this distance of zero count as zero.
pub const MEAN_EPS: f64 = 1e-12;

/// Smallest eigenvalue accepted for a covariance matrix.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Partial sums of i.i.d. draws.
    Iid { law: Law },
    /// `X_i = sum_{k=0..q} c_k Y_{i-k}`, `c_k >= 0`.
    MovingSum { law: Law, coeffs: Vec<f64> },
    /// Increments jointly normal with elementwise-nonnegative covariance,
    /// given either as a full matrix or as `variance * rho^|i-j|`.
    GaussianAssoc {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cov: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        variance: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<f64>,
    },
    /// `X_i = B_i + W` with one shared draw `W` per path.
    SharedShock { base: Law, shared: Law },
    /// Wraps another family and subtracts `E X_i` from every increment.
    CenteredPartialSum { inner: Box<Family> },
    /// `X_{2k} = -X_{2k-1}`: violates the demimartingale inequality.
    AdversarialSignFlip { law: Law },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Iid { .. } => "iid",
            Family::MovingSum { .. } => "moving_sum",
            Family::GaussianAssoc { .. } => "gaussian_assoc",
            Family::SharedShock { .. } => "shared_shock",
            Family::CenteredPartialSum { .. } => "centered_partial_sum",
            Family::AdversarialSignFlip { .. } => "adversarial_sign_flip",
        }
    }

    fn validate(&self, horizon: usize) -> Result<()> {
        match self {
            Family::Iid { law } | Family::AdversarialSignFlip { law } => law.validate(),
            Family::MovingSum { law, coeffs } => {
                law.validate()?;
                chain::validate_coeffs(coeffs)
            }
            Family::SharedShock { base, shared } => {
                base.validate()?;
                shared.validate()
            }
            Family::GaussianAssoc { .. } => self.covariance(horizon).map(|_| ()),
            Family::CenteredPartialSum { inner } => inner.validate(horizon),
        }
    }

    fn associated(&self) -> bool {
        match self {
            Family::AdversarialSignFlip { .. } => false,
            Family::CenteredPartialSum { inner } => inner.associated(),
            _ => true,
        }
    }

    fn identically_distributed(&self, horizon: usize) -> bool {
        match self {
            Family::Iid { .. } | Family::MovingSum { .. } | Family::SharedShock { .. } => true,
            Family::CenteredPartialSum { inner } => inner.identically_distributed(horizon),
            Family::GaussianAssoc { .. } => self
                .covariance(horizon)
                .map(|c| (0..horizon).all(|i| c[(i, i)] == c[(0, 0)]))
                .unwrap_or(false),
            Family::AdversarialSignFlip { .. } => false,
        }
    }

    /// Innovation law, kernel, shared term and centering drift, for every
    /// family except the Gaussian one.
    fn structure(&self, horizon: usize) -> Result<(Law, Kernel, Option<Law>, Vec<f64>)> {
        match self {
            Family::Iid { law } => Ok((law.clone(), Kernel::Identity, None, vec![0.0; horizon])),
            Family::MovingSum { law, coeffs } => Ok((
                law.clone(),
                Kernel::MovingSum { coeffs: coeffs.clone() },
                None,
                vec![0.0; horizon],
            )),
            Family::SharedShock { base, shared } => {
                Ok((base.clone(), Kernel::Identity, Some(shared.clone()), vec![0.0; horizon]))
            }
            Family::AdversarialSignFlip { law } => {
                Ok((law.clone(), Kernel::SignFlipPairs, None, vec![0.0; horizon]))
            }
            Family::CenteredPartialSum { inner } => {
                let means = inner.form(horizon)?.step_means();
                let (law, kernel, shared, mut drift) = inner.structure(horizon)?;
                for (d, m) in drift.iter_mut().zip(means) {
                    *d += m;
                }
                Ok((law, kernel, shared, drift))
            }
            Family::GaussianAssoc { .. } => Err(Error::NotEnumerable(
                "gaussian_assoc has a continuous law".into(),
            )),
        }
    }

    fn form(&self, horizon: usize) -> Result<LinearForm> {
        match self {
            Family::GaussianAssoc { .. } => gaussian_form(&self.covariance(horizon)?),
            Family::CenteredPartialSum { inner } => {
                let mut form = inner.form(horizon)?;
                let means = form.step_means();
                for (b, m) in form.offsets_mut().iter_mut().zip(means) {
                    *b -= m;
                }
                Ok(form)
            }
            _ => {
                let (law, kernel, shared, drift) = self.structure(horizon)?;
                let mut form = chain::structured_form(&law, &kernel, shared.as_ref(), horizon);
                for (b, d) in form.offsets_mut().iter_mut().zip(drift) {
                    *b -= d;
                }
                Ok(form)
            }
        }
    }

    /// Validated increment covariance for the Gaussian family.
    fn covariance(&self, horizon: usize) -> Result<DMatrix<f64>> {
        let Family::GaussianAssoc { cov, variance, rho } = self else {
            return Err(Error::InvalidGenerator("not a gaussian family".into()));
        };
        let m = match (cov, variance, rho) {
            (Some(rows), None, None) => {
                if rows.len() != horizon || rows.iter().any(|r| r.len() != horizon) {
                    return Err(Error::InvalidCovariance(format!(
                        "covariance must be {horizon}x{horizon}"
                    )));
                }
                DMatrix::from_fn(horizon, horizon, |i, j| rows[i][j])
            }
            (None, Some(v), Some(r)) => {
                if !(*v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidCovariance(format!("variance must be positive, got {v}")));
                }
                if !(0.0..=1.0).contains(r) {
                    return Err(Error::InvalidCovariance(format!("rho must lie in [0, 1], got {r}")));
                }
                DMatrix::from_fn(horizon, horizon, |i, j| v * r.powi((i as i32 - j as i32).abs()))
            }
            _ => {
                return Err(Error::InvalidCovariance(
                    "give either `cov` or both `variance` and `rho`".into(),
                ))
            }
        };
        validate_covariance(&m)?;
        Ok(m)
    }
}

fn validate_covariance(m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    for i in 0..n {
        for j in 0..n {
            let v = m[(i, j)];
            if !v.is_finite() {
                return Err(Error::InvalidCovariance(format!("entry ({i},{j}) is not finite")));
            }
            if v < 0.0 {
                return Err(Error::InvalidCovariance(format!(
                    "entry ({i},{j}) = {v} is negative; association needs nonnegative covariances"
                )));
            }
            if (v - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidCovariance(format!("not symmetric at ({i},{j})")));
            }
        }
    }
    let min_eig = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &v| a.min(v));
    if min_eig < -PSD_TOL {
        return Err(Error::InvalidCovariance(format!(
            "not positive semidefinite: smallest eigenvalue {min_eig:e}"
        )));
    }
    Ok(())
}

/// Lower Cholesky factor when positive definite, otherwise the symmetric
/// square root `Q diag(sqrt(max(l, 0))) Q^T`.
fn gaussian_form(cov: &DMatrix<f64>) -> Result<LinearForm> {
    let n = cov.nrows();
    let factor = match cov.clone().cholesky() {
        Some(ch) => ch.l(),
        None => {
            let eig = SymmetricEigen::new(cov.clone());
            let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
        }
    };
    let rows = (0..n)
        .map(|i| {
            (0..n)
                .filter_map(|j| {
                    let c = factor[(i, j)];
                    (c != 0.0).then_some((j, c))
                })
                .collect()
        })
        .collect();
    Ok(LinearForm::new(vec![Law::StandardNormal; n], rows, vec![0.0; n]))
}

/// A family, a horizon, and an optional constant added to `X_1` (shifts the
/// whole path, e.g. to make a mean-zero walk nonnegative).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub family: Family,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub offset: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// Structural facts about a generator, all exact.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessProperties {
    pub associated: bool,
    pub identically_distributed: bool,
    pub step_means: Vec<f64>,
    pub step_second_moments: Vec<f64>,
    /// `C` with `|X_i| <= C` a.s., when finite.
    pub increment_bound: Option<f64>,
    pub step_ranges: Vec<(f64, f64)>,
    /// Almost-sure lower bound of `min_k S_k`.
    pub path_lower_bound: f64,
    /// Partial sums of an associated sequence whose increments `X_2..` have
    /// mean zero.
    pub demimartingale: bool,
    /// Same with nonnegative means.
    pub demisubmartingale: bool,
    /// Every `E X_i = 0`, including `X_1` (so `E S_n = 0`).
    pub mean_zero: bool,
}

impl ProcessProperties {
    pub fn nonnegative_increments(&self) -> bool {
        self.step_ranges.iter().all(|&(lo, _)| lo >= 0.0)
    }

    pub fn v_n(&self, n: usize) -> f64 {
        self.step_second_moments[..n].iter().sum()
    }
}

impl GeneratorSpec {
    pub fn new(family: Family, horizon: usize) -> Self {
        Self {
            family,
            horizon,
            offset: 0.0,
        }
    }

    pub fn iid(law: Law, horizon: usize) -> Self {
        Self::new(Family::Iid { law }, horizon)
    }

    pub fn centered(family: Family, horizon: usize) -> Self {
        Self::new(
            Family::CenteredPartialSum {
                inner: Box::new(family),
            },
            horizon,
        )
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidGenerator("horizon must be positive".into()));
        }
        if !self.offset.is_finite() {
            return Err(Error::InvalidGenerator("offset must be finite".into()));
        }
        self.family.validate(self.horizon)
    }

    /// Stable identifier (canonical JSON of the spec).
    pub fn id(&self) -> String {
        serde_json::to_string(self).expect("generator specs serialize")
    }

    pub fn linear_form(&self) -> Result<LinearForm> {
        self.validate()?;
        let mut form = self.family.form(self.horizon)?;
        form.offsets_mut()[0] += self.offset;
        Ok(form)
    }

    pub fn sampler(&self) -> Result<PathSampler> {
        Ok(PathSampler::new(self.linear_form()?))
    }

    pub fn properties(&self) -> Result<ProcessProperties> {
        let form = self.linear_form()?;
        let step_means = form.step_means();
        let step_ranges = form.step_ranges();
        let path_lower_bound = form
            .partial_sum_ranges()
            .iter()
            .fold(f64::INFINITY, |a, &(lo, _)| a.min(lo));
        let associated = self.family.associated();
        let later_means = &step_means[1..];
        Ok(ProcessProperties {
            associated,
            identically_distributed: self.offset == 0.0 && self.family.identically_distributed(self.horizon),
            demimartingale: associated && later_means.iter().all(|m| m.abs() <= MEAN_EPS),
            demisubmartingale: associated && later_means.iter().all(|&m| m >= -MEAN_EPS),
            mean_zero: step_means.iter().all(|m| m.abs() <= MEAN_EPS),
            step_second_moments: form.step_second_moments(),
            increment_bound: form.increment_bound(),
            step_ranges,
            path_lower_bound,
            step_means,
        })
    }
}

/// Exact chain whose path law equals the generator's.
pub fn to_chain(spec: &GeneratorSpec) -> Result<DiscreteChainSpec> {
    spec.validate()?;
    let (law, kernel, shared, drift) = spec.family.structure(spec.horizon)?;
    let support = law
        .support()
        .ok_or_else(|| Error::NotEnumerable(format!("{} law is continuous", law.name())))?;
    let shared_component = match shared {
        Some(w) => Some(
            w.support()
                .ok_or_else(|| Error::NotEnumerable(format!("shared {} law is continuous", w.name())))?,
        ),
        None => None,
    };
    let chain = DiscreteChainSpec {
        increment_support: support,
        shared_component,
        horizon: spec.horizon,
        drift,
        kernel,
        offset: spec.offset,
    };
    chain.validate()?;
    Ok(chain)
}

/// `paths` sample paths. Path `k` comes from chunk `k / CHUNK_PATHS` of the
/// split stream, so any prefix of an ensemble is reproducible on its own.
pub fn generate(spec: &GeneratorSpec, paths: usize, seed: u64) -> Result<ProcessEnsemble> {
    if paths == 0 {
        return Err(Error::InvalidEnsemble("paths must be at least 1".into()));
    }
    let sampler = spec.sampler()?;
    let mut out = Vec::with_capacity(paths);
    mc::for_each_path(&sampler, paths as u64, seed, |_, values| {
        out.push(ProcessPath::new(values.to_vec()).expect("generated values are finite"));
    });
    ProcessEnsemble::new(out, seed, spec.id())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rad_iid(n: usize) -> GeneratorSpec {
        GeneratorSpec::iid(Law::Rademacher, n)
    }

    #[test]
    fn rademacher_path_parity() {
        let e = generate(&rad_iid(3), 1, 17).unwrap();
        let p = e.paths()[0].values();
        assert!(p.iter().all(|v| v.abs() <= 3.0));
        assert_eq!((p[2].abs() as i64) % 2, 1);
        for (k, v) in p.iter().enumerate() {
            assert_eq!((v.abs() as usize) % 2, (k + 1) % 2);
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let spec = GeneratorSpec::new(
            Family::SharedShock {
                base: Law::Uniform { a: -1.0, b: 1.0 },
                shared: Law::Rademacher,
            },
            7,
        );
        let a = generate(&spec, 50, 9).unwrap();
        let b = generate(&spec, 50, 9).unwrap();
        assert_eq!(a, b);
        let c = generate(&spec, 50, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sign_flip_second_increment_negates_first() {
        let spec = GeneratorSpec::new(Family::AdversarialSignFlip { law: Law::Rademacher }, 4);
        let e = generate(&spec, 20, 1).unwrap();
        for p in e.paths() {
            let x = p.increments();
            assert_eq!(x[1], -x[0]);
            assert_eq!(x[3], -x[2]);
        }
    }

    #[test]
    fn centered_bernoulli_has_zero_means() {
        let spec = GeneratorSpec::centered(Family::Iid { law: Law::Bernoulli { p: 0.3 } }, 5);
        let props = spec.properties().unwrap();
        assert!(props.mean_zero && props.demimartingale);
        assert_eq!(props.increment_bound, Some(0.7));
        let chain = to_chain(&spec).unwrap();
        assert_eq!(chain.drift, vec![0.3; 5]);
    }

    #[test]
    fn properties_classify_families() {
        let flip = GeneratorSpec::new(Family::AdversarialSignFlip { law: Law::Rademacher }, 4)
            .properties()
            .unwrap();
        assert!(!flip.associated && !flip.demimartingale && !flip.demisubmartingale);

        let bern = GeneratorSpec::iid(Law::Bernoulli { p: 0.5 }, 4).properties().unwrap();
        assert!(bern.demisubmartingale && !bern.demimartingale);
        assert!(bern.nonnegative_increments());
        assert_eq!(bern.path_lower_bound, 0.0);

        let shifted = rad_iid(4).with_offset(5.0).properties().unwrap();
        assert!(shifted.demimartingale && !shifted.mean_zero);
        assert_eq!(shifted.path_lower_bound, 1.0);
        assert!(!shifted.identically_distributed);
    }

    #[test]
    fn shared_shock_moments_match_closed_form() {
        let n = 6;
        let spec = GeneratorSpec::new(
            Family::SharedShock {
                base: Law::Rademacher,
                shared: Law::Rademacher,
            },
            n,
        );
        let form = spec.linear_form().unwrap();
        // V_n = 2n, E S_n^2 = n + n^2
        assert_eq!(form.v_n(n), 2.0 * n as f64);
        assert_eq!(form.partial_sum_second_moment(n), (n + n * n) as f64);
        assert_eq!(spec.properties().unwrap().increment_bound, Some(2.0));
    }

    #[test]
    fn moving_sum_second_moments() {
        let spec = GeneratorSpec::new(
            Family::MovingSum {
                law: Law::Rademacher,
                coeffs: vec![1.0, 0.5],
            },
            3,
        );
        let m = spec.linear_form().unwrap().second_moment_matrix();
        // Var X = 1 + 0.25, Cov(X_i, X_{i+1}) = 0.5, lag 2 = 0
        assert_eq!(m[0][0], 1.25);
        assert_eq!(m[0][1], 0.5);
        assert_eq!(m[0][2], 0.0);
    }

    #[test]
    fn to_chain_examples() {
        let chain = to_chain(&rad_iid(3)).unwrap();
        assert_eq!(chain.increment_support, vec![(-1.0, 0.5), (1.0, 0.5)]);
        assert_eq!(chain.outcome_count(), 8);
        let shared = GeneratorSpec::new(
            Family::SharedShock {
                base: Law::Rademacher,
                shared: Law::Rademacher,
            },
            2,
        );
        assert_eq!(to_chain(&shared).unwrap().outcome_count(), 8);
        let gauss = GeneratorSpec::new(
            Family::GaussianAssoc {
                cov: None,
                variance: Some(1.0),
                rho: Some(0.5),
            },
            3,
        );
        assert!(matches!(to_chain(&gauss), Err(Error::NotEnumerable(_))));
        let unif = GeneratorSpec::iid(Law::Uniform { a: -1.0, b: 1.0 }, 3);
        assert!(matches!(to_chain(&unif), Err(Error::NotEnumerable(_))));
    }

    #[test]
    fn chain_and_generator_forms_agree() {
        let specs = vec![
            GeneratorSpec::centered(Family::Iid { law: Law::Bernoulli { p: 0.3 } }, 4),
            GeneratorSpec::new(
                Family::MovingSum {
                    law: Law::Bernoulli { p: 0.4 },
                    coeffs: vec![1.0, 2.0],
                },
                4,
            )
            .with_offset(1.5),
            GeneratorSpec::new(
                Family::SharedShock {
                    base: Law::Rademacher,
                    shared: Law::Bernoulli { p: 0.2 },
                },
                3,
            ),
        ];
        for spec in specs {
            let a = spec.linear_form().unwrap();
            let b = to_chain(&spec).unwrap().linear_form();
            let close = |x: &f64, y: &f64| (x - y).abs() < 1e-14;
            assert!(a.step_means().iter().zip(&b.step_means()).all(|(x, y)| close(x, y)));
            let (ma, mb) = (a.second_moment_matrix(), b.second_moment_matrix());
            assert!(ma.iter().flatten().zip(mb.iter().flatten()).all(|(x, y)| close(x, y)));
        }
    }

    #[test]
    fn gaussian_covariance_validation() {
        let bad_sign = Family::GaussianAssoc {
            cov: Some(vec![vec![1.0, -0.1], vec![-0.1, 1.0]]),
            variance: None,
            rho: None,
        };
        assert!(matches!(
            GeneratorSpec::new(bad_sign, 2).validate(),
            Err(Error::InvalidCovariance(_))
        ));
        let not_psd = Family::GaussianAssoc {
            cov: Some(vec![vec![1.0, 2.0], vec![2.0, 1.0]]),
            variance: None,
            rho: None,
        };
        assert!(matches!(
            GeneratorSpec::new(not_psd, 2).validate(),
            Err(Error::InvalidCovariance(_))
        ));
        let singular = Family::GaussianAssoc {
            cov: Some(vec![vec![1.0, 1.0], vec![1.0, 1.0]]),
            variance: None,
            rho: None,
        };
        let form = GeneratorSpec::new(singular, 2).linear_form().unwrap();
        let m = form.second_moment_matrix();
        for row in &m {
            for v in row {
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_diagonal_has_uncorrelated_increments() {
        let spec = GeneratorSpec::new(
            Family::GaussianAssoc {
                cov: None,
                variance: 2.0.into(),
                rho: Some(0.0),
            },
            3,
        );
        let e = generate(&spec, 50_000, 5).unwrap();
        let incs: Vec<Vec<f64>> = e.paths().iter().map(|p| p.increments()).collect();
        let n = incs.len() as f64;
        for (i, k) in [(0, 1), (0, 2), (1, 2)] {
            let prods: Vec<f64> = incs.iter().map(|x| x[i] * x[k]).collect();
            let s = crate::stats::summarize(&prods).unwrap();
            assert!(s.mean.abs() <= 3.0 * s.stderr, "cov({i},{k}) = {} ± {}", s.mean, s.stderr);
            assert!(s.stderr < 4.0 / n.sqrt());
        }
    }

    #[test]
    fn config_parsing() {
        let src = r#"
family = "centered_partial_sum"
horizon = 4
inner.family = "iid"
inner.law.kind = "bernoulli"
inner.law.p = 0.5
"#;
        let spec: GeneratorSpec = toml::from_str(src).unwrap();
        assert_eq!(spec, GeneratorSpec::centered(Family::Iid { law: Law::Bernoulli { p: 0.5 } }, 4));
        let bad: std::result::Result<GeneratorSpec, _> = toml::from_str("family = \"levy\"\nhorizon = 3");
        assert!(bad.is_err());
    }
}
