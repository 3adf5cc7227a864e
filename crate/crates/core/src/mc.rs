//! Chunked Monte-Carlo driver.
//!
//! Paths are split into fixed-size chunks; chunk `c` draws from
//! `derive_stream(seed, c)`. Chunks run in parallel and their accumulators are
//! merged in chunk order, so results do not depend on the thread count.

use rayon::prelude::*;

use crate::generators::PathSampler;
use crate::rng::derive_stream;
use crate::stats::Moments;

pub const CHUNK_PATHS: u64 = 1 << 14;

fn chunks(paths: u64) -> impl Iterator<Item = (u64, u64)> {
    let n_chunks = paths.div_ceil(CHUNK_PATHS);
    (0..n_chunks).map(move |c| {
        let start = c * CHUNK_PATHS;
        (c, (paths - start).min(CHUNK_PATHS))
    })
}

/// Visits paths sequentially in index order.
pub fn for_each_path<F>(sampler: &PathSampler, paths: u64, seed: u64, mut visit: F)
where
    F: FnMut(u64, &[f64]),
{
    let mut xi = vec![0.0; sampler.source_count()];
    let mut buf = vec![0.0; sampler.horizon()];
    for (c, len) in chunks(paths) {
        let mut rng = derive_stream(seed, c);
        for k in 0..len {
            sampler.sample_into(&mut rng, &mut xi, &mut buf);
            visit(c * CHUNK_PATHS + k, &buf);
        }
    }
}

/// Moments of a vector-valued path functional. `functional` writes `width`
/// values per path.
pub fn sample_moments<F>(sampler: &PathSampler, paths: u64, seed: u64, width: usize, functional: F) -> Vec<Moments>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let chunk_list: Vec<(u64, u64)> = chunks(paths).collect();
    let partials: Vec<Vec<Moments>> = chunk_list
        .par_iter()
        .map(|&(c, len)| {
            let mut rng = derive_stream(seed, c);
            let mut xi = vec![0.0; sampler.source_count()];
            let mut buf = vec![0.0; sampler.horizon()];
            let mut vals = vec![0.0; width];
            let mut acc = vec![Moments::default(); width];
            for _ in 0..len {
                sampler.sample_into(&mut rng, &mut xi, &mut buf);
                functional(&buf, &mut vals);
                for (m, &v) in acc.iter_mut().zip(&vals) {
                    m.push(v);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Moments::default(); width];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{GeneratorSpec, Law};

    #[test]
    fn chunking_covers_all_paths() {
        let v: Vec<_> = chunks(2 * CHUNK_PATHS + 5).collect();
        assert_eq!(v, vec![(0, CHUNK_PATHS), (1, CHUNK_PATHS), (2, 5)]);
        assert_eq!(chunks(0).count(), 0);
    }

    #[test]
    fn moments_match_sequential_visit() {
        let spec = GeneratorSpec::iid(Law::Uniform { a: -1.0, b: 2.0 }, 5);
        let sampler = spec.sampler().unwrap();
        let paths = CHUNK_PATHS + 1000;
        let m = sample_moments(&sampler, paths, 3, 1, |p, out| out[0] = p[4]);
        let mut seq = Vec::new();
        for_each_path(&sampler, paths, 3, |_, p| seq.push(p[4]));
        let direct = crate::stats::summarize(&seq).unwrap();
        let got = m[0].summary().unwrap();
        assert_eq!(got.count, direct.count);
        assert!((got.mean - direct.mean).abs() < 1e-12);
        assert!((got.stderr - direct.stderr).abs() < 1e-12);
    }

    #[test]
    fn centered_bernoulli_mean_is_zero_within_three_stderr() {
        let spec = GeneratorSpec::centered(crate::generators::Family::Iid { law: Law::Bernoulli { p: 0.5 } }, 10);
        let sampler = spec.sampler().unwrap();
        let m = sample_moments(&sampler, 100_000, 11, 1, |p, out| out[0] = p[9]);
        let s = m[0].summary().unwrap();
        assert!(s.mean.abs() <= 3.0 * s.stderr, "{} ± {}", s.mean, s.stderr);
    }
}
