//! Exact enumeration over finite-support chains.
//!
//! The product space of the independent sources is walked depth first. Each
//! increment is added to the running partial sum as soon as every source it
//! reads has been fixed, and probabilities are multiplied along the way.
//! Subtrees below the first source's values run in parallel and are merged
//! in a fixed order.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generators::{DiscreteChainSpec, LinearForm, ENUMERATION_CAP};
use crate::monotone::MonotoneTestFunction;
use crate::process::ProcessPath;
use crate::stats::CompensatedSum;

/// Largest table [`enumerate`] materialises; larger chains go through
/// [`fold_form`] without storing outcomes.
pub const MATERIALIZE_CAP: u64 = 1 << 20;

/// Largest number of distinct atoms kept by [`terminal_law`].
pub const TERMINAL_ATOM_CAP: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTable {
    pub outcomes: Vec<(ProcessPath, f64)>,
    pub total_probability: f64,
}

impl OutcomeTable {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.outcomes.first().map_or(0, |(p, _)| p.horizon())
    }
}

struct Walker<'a> {
    form: &'a LinearForm,
    supports: Vec<Vec<(f64, f64)>>,
    /// `ready[d]` = number of increments computable once `d` sources are fixed.
    ready: Vec<usize>,
}

impl<'a> Walker<'a> {
    fn new(form: &'a LinearForm) -> Result<Self> {
        let supports = form
            .sources()
            .iter()
            .map(|law| {
                law.support()
                    .ok_or_else(|| Error::NotEnumerable(format!("{} law is continuous", law.name())))
            })
            .collect::<Result<Vec<_>>>()?;
        let required = form.outcome_count().unwrap_or(u128::MAX);
        if required > ENUMERATION_CAP as u128 {
            return Err(Error::CapExceeded {
                required,
                cap: ENUMERATION_CAP,
            });
        }
        let m = supports.len();
        let mut depth = 0;
        let depths: Vec<usize> = form
            .row_max_source()
            .iter()
            .map(|s| {
                depth = depth.max(s.map_or(0, |j| j + 1));
                depth
            })
            .collect();
        let ready = (0..=m).map(|d| depths.iter().take_while(|&&r| r <= d).count()).collect();
        Ok(Self { form, supports, ready })
    }

    fn fill_rows(&self, d: usize, xi: &[f64], path: &mut [f64]) {
        let rows = self.form.rows();
        let offsets = self.form.offsets();
        for i in self.ready[d.saturating_sub(1)]..self.ready[d] {
            let mut x = offsets[i];
            for &(j, c) in &rows[i] {
                x += c * xi[j];
            }
            path[i] = if i == 0 { x } else { path[i - 1] + x };
        }
    }

    fn walk<A, V>(&self, d: usize, prob: f64, xi: &mut [f64], path: &mut [f64], acc: &mut A, visit: &V)
    where
        V: Fn(&mut A, &[f64], f64),
    {
        if d == self.supports.len() {
            visit(acc, path, prob);
            return;
        }
        for &(v, p) in &self.supports[d] {
            xi[d] = v;
            self.fill_rows(d + 1, xi, path);
            self.walk(d + 1, prob * p, xi, path, acc, visit);
        }
    }
}

/// Folds `visit(acc, path, probability)` over every outcome. Partial
/// accumulators from the first source's branches are combined with `merge`
/// in branch order.
pub fn fold_form<A, M, V, G>(form: &LinearForm, make: M, visit: V, merge: G) -> Result<A>
where
    A: Send,
    M: Fn() -> A + Sync,
    V: Fn(&mut A, &[f64], f64) + Sync,
    G: Fn(&mut A, A),
{
    let walker = Walker::new(form)?;
    let n = form.horizon();
    let m = walker.supports.len();
    let mut base_path = vec![0.0; n];
    walker.fill_rows(0, &[], &mut base_path);
    if m == 0 {
        let mut acc = make();
        visit(&mut acc, &base_path, 1.0);
        return Ok(acc);
    }
    let parts: Vec<A> = walker.supports[0]
        .par_iter()
        .map(|&(v, p)| {
            let mut xi = vec![0.0; m];
            let mut path = base_path.clone();
            xi[0] = v;
            walker.fill_rows(1, &xi, &mut path);
            let mut acc = make();
            walker.walk(1, p, &mut xi, &mut path, &mut acc, &visit);
            acc
        })
        .collect();
    let mut parts = parts.into_iter();
    let mut total = parts.next().expect("at least one branch");
    for part in parts {
        merge(&mut total, part);
    }
    Ok(total)
}

/// Materialised outcome table of a chain.
pub fn enumerate(chain: &DiscreteChainSpec) -> Result<OutcomeTable> {
    chain.validate()?;
    let required = chain.outcome_count();
    if required > MATERIALIZE_CAP as u128 {
        return Err(Error::CapExceeded {
            required,
            cap: MATERIALIZE_CAP,
        });
    }
    let (outcomes, total) = fold_form(
        &chain.linear_form(),
        || (Vec::new(), CompensatedSum::default()),
        |(out, total), path, p| {
            out.push((ProcessPath::new(path.to_vec()).expect("finite chain values"), p));
            total.add(p);
        },
        |(out, total), (more, t)| {
            out.extend(more);
            total.merge(&t);
        },
    )?;
    Ok(OutcomeTable {
        outcomes,
        total_probability: total.value(),
    })
}

pub fn exact_expectation<F>(table: &OutcomeTable, functional: F) -> f64
where
    F: Fn(&ProcessPath) -> f64,
{
    let mut acc = CompensatedSum::default();
    for (path, p) in &table.outcomes {
        acc.add(p * functional(path));
    }
    acc.value()
}

/// `E[(S_{j+1} - S_j) f(S_1..S_j)]`.
pub fn exact_demi_check(table: &OutcomeTable, j: usize, f: &MonotoneTestFunction) -> Result<f64> {
    let n = table.horizon();
    if j == 0 || j >= n {
        return Err(Error::domain(format!("need 1 <= j < {n}, got j = {j}")));
    }
    let mut acc = CompensatedSum::default();
    for (path, p) in &table.outcomes {
        let s = path.values();
        acc.add(p * (s[j] - s[j - 1]) * f.evaluate(&s[..j])?);
    }
    Ok(acc.value())
}

/// Exact law of `S_n` as sorted `(value, probability)` atoms, by convolving
/// the independent sources' contributions.
pub fn terminal_law(form: &LinearForm, n: usize) -> Result<Vec<(f64, f64)>> {
    if n == 0 || n > form.horizon() {
        return Err(Error::domain(format!("need 1 <= n <= {}, got {n}", form.horizon())));
    }
    let (coef, constant) = form.partial_sum_coefficients(n);
    let mut law = vec![(constant, 1.0)];
    for (c, source) in coef.iter().zip(form.sources()) {
        if *c == 0.0 {
            continue;
        }
        let support = source
            .support()
            .ok_or_else(|| Error::NotEnumerable(format!("{} law is continuous", source.name())))?;
        let mut next = Vec::with_capacity(law.len() * support.len());
        for &(s, p) in &law {
            for &(v, q) in &support {
                next.push((s + c * v, p * q));
            }
        }
        next.sort_by(|a, b| a.0.total_cmp(&b.0));
        law.clear();
        for (v, p) in next {
            match law.last_mut() {
                Some((u, q)) if *u == v => *q += p,
                _ => law.push((v, p)),
            }
        }
        if law.len() > TERMINAL_ATOM_CAP {
            return Err(Error::CapExceeded {
                required: law.len() as u128,
                cap: TERMINAL_ATOM_CAP as u64,
            });
        }
    }
    Ok(law)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{to_chain, Family, GeneratorSpec, Law};
    use crate::monotone::MonotoneTestFunction as F;

    fn rad(n: usize) -> DiscreteChainSpec {
        DiscreteChainSpec::iid(vec![(-1.0, 0.5), (1.0, 0.5)], n)
    }

    #[test]
    fn small_tables() {
        let t = enumerate(&rad(1)).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.outcomes[0].1, 0.5);
        let t = enumerate(&rad(3)).unwrap();
        assert_eq!(t.len(), 8);
        assert_eq!(t.total_probability, 1.0);
        let b = enumerate(&DiscreteChainSpec::iid(vec![(0.0, 0.5), (1.0, 0.5)], 2)).unwrap();
        assert_eq!(exact_expectation(&b, |p| f64::from(u8::from(p.at(2) == 1.0))), 0.5);
    }

    #[test]
    fn expectation_examples() {
        assert_eq!(exact_expectation(&enumerate(&rad(1)).unwrap(), |p| p.at(1)), 0.0);
        let t = enumerate(&rad(3)).unwrap();
        assert_eq!(exact_expectation(&t, |p| p.at(3).powi(2)), 3.0);
        let hit = exact_expectation(&t, |p| f64::from(u8::from(p.values().iter().any(|&s| s >= 1.0))));
        assert_eq!(hit, 0.625);
    }

    #[test]
    fn demi_check_examples() {
        let t = enumerate(&rad(4)).unwrap();
        for j in 1..4 {
            assert_eq!(exact_demi_check(&t, j, &F::constant_one()).unwrap(), 0.0);
        }
        let flip = GeneratorSpec::new(Family::AdversarialSignFlip { law: Law::Rademacher }, 2);
        let t = enumerate(&to_chain(&flip).unwrap()).unwrap();
        assert_eq!(exact_demi_check(&t, 1, &F::last_coordinate()).unwrap(), -1.0);
        let shared = GeneratorSpec::new(
            Family::SharedShock {
                base: Law::Rademacher,
                shared: Law::Rademacher,
            },
            2,
        );
        let t = enumerate(&to_chain(&shared).unwrap()).unwrap();
        assert_eq!(exact_demi_check(&t, 1, &F::last_coordinate()).unwrap(), 1.0);
        assert!(exact_demi_check(&t, 2, &F::constant_one()).is_err());
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            enumerate(&rad(21)),
            Err(Error::CapExceeded { required, .. }) if required == 1 << 21
        ));
        assert!(matches!(
            fold_form(&rad(25).linear_form(), || 0.0, |_, _, _| {}, |_, _| {}),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn streaming_fold_at_large_size() {
        // 2^22 outcomes, folded without materialising
        let form = rad(22).linear_form();
        let (total, m2) = fold_form(
            &form,
            || (CompensatedSum::default(), CompensatedSum::default()),
            |(t, m), path, p| {
                t.add(p);
                m.add(p * path[21] * path[21]);
            },
            |(t, m), (u, v)| {
                t.merge(&u);
                m.merge(&v);
            },
        )
        .unwrap();
        assert!((total.value() - 1.0).abs() < 1e-12);
        assert!((m2.value() - 22.0).abs() < 1e-10);
    }

    #[test]
    fn moving_sum_paths_match_direct_evaluation() {
        let spec = GeneratorSpec::new(
            Family::MovingSum {
                law: Law::Bernoulli { p: 0.25 },
                coeffs: vec![1.0, 0.5, 2.0],
            },
            4,
        )
        .with_offset(0.5);
        let form = spec.linear_form().unwrap();
        let table = enumerate(&to_chain(&spec).unwrap()).unwrap();
        assert_eq!(table.len(), 1 << 6);
        // The walk's incremental sums agree with full evaluation of each
        // source assignment, listed in the same lexicographic order.
        for (idx, (path, p)) in table.outcomes.iter().enumerate() {
            let bits: Vec<f64> = (0..6).map(|k| f64::from(((idx >> (5 - k)) & 1) as u8)).collect();
            let mut direct = vec![0.0; 4];
            form.evaluate_into(&bits, &mut direct);
            for (a, b) in path.values().iter().zip(&direct) {
                assert!((a - b).abs() < 1e-12);
            }
            let ones = bits.iter().sum::<f64>() as i32;
            assert!((p - 0.25f64.powi(ones) * 0.75f64.powi(6 - ones)).abs() < 1e-15);
        }
    }

    #[test]
    fn terminal_law_of_long_walk() {
        let form = GeneratorSpec::iid(Law::Rademacher, 100).linear_form().unwrap();
        let law = terminal_law(&form, 100).unwrap();
        assert_eq!(law.len(), 101);
        let total: f64 = law.iter().map(|a| a.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let var: f64 = law.iter().map(|(s, p)| s * s * p).sum();
        assert!((var - 100.0).abs() < 1e-9);
    }

    #[test]
    fn terminal_law_matches_enumeration() {
        let spec = GeneratorSpec::new(
            Family::SharedShock {
                base: Law::Bernoulli { p: 0.4 },
                shared: Law::Discrete {
                    values: vec![-1.0, 0.5],
                    probs: vec![0.25, 0.75],
                },
            },
            5,
        );
        let form = spec.linear_form().unwrap();
        let law = terminal_law(&form, 3).unwrap();
        let table = enumerate(&to_chain(&spec).unwrap()).unwrap();
        for &(v, p) in &law {
            let q = exact_expectation(&table, |path| f64::from(u8::from((path.at(3) - v).abs() < 1e-12)));
            assert!((p - q).abs() < 1e-14, "atom {v}: {p} vs {q}");
        }
    }

    proptest::proptest! {
        #[test]
        fn probability_conservation_and_linearity(
            p in 0.01f64..0.99,
            n in 1usize..8,
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let chain = DiscreteChainSpec::iid(vec![(-0.5, p), (1.5, 1.0 - p)], n);
            let t = enumerate(&chain).unwrap();
            proptest::prop_assert!((t.total_probability - 1.0).abs() < 1e-12);
            let f = |x: &ProcessPath| x.at(n);
            let g = |x: &ProcessPath| x.values().iter().cloned().fold(f64::MIN, f64::max);
            let lhs = exact_expectation(&t, |x| a * f(x) + b * g(x));
            let rhs = a * exact_expectation(&t, f) + b * exact_expectation(&t, g);
            proptest::prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
