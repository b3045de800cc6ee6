//! Seeded streams and mergeable Monte Carlo accumulators.
//!
//! Seeding scheme: trial `i` of a run with master seed `s` uses
//! `ChaCha8Rng::seed_from_u64(s)` with its stream set to `i`. The stream
//! counter gives 2^64 independent sequences per master seed, so a trial's
//! draws depend only on `(s, i)` and never on the thread that ran it.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub type TrialRng = ChaCha8Rng;

/// Description of the seeding scheme, written into output metadata.
pub const SEEDING_SCHEME: &str = "chacha8(seed_from_u64(seed)).set_stream(trial)";

/// The random stream owned by trial `index` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, index: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

const CHUNK: u64 = 1024;

/// Runs `trials` independent trials in parallel and merges their accumulators.
///
/// Trials are grouped into fixed-size chunks; each chunk folds its trials in
/// index order and the chunk results are merged in chunk order. Floating
/// point sums therefore come out bit-identical for any thread count.
pub fn run_trials<A, I, B, M>(trials: u64, seed: u64, init: I, body: B, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    B: Fn(&mut A, u64, &mut TrialRng) + Sync,
    M: Fn(A, A) -> A + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            let end = ((c + 1) * CHUNK).min(trials);
            for i in c * CHUNK..end {
                let mut rng = trial_rng(seed, i);
                body(&mut acc, i, &mut rng);
            }
            acc
        })
        .collect();
    parts.into_iter().fold(init(), &merge)
}

/// Like [`run_trials`] for accumulators whose merge is exact (integer
/// counts), where merge order cannot change the result. Uses one
/// accumulator per worker instead of one per chunk.
pub fn run_trials_exact<A, I, B, M>(trials: u64, seed: u64, init: I, body: B, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    B: Fn(&mut A, u64, &mut TrialRng) + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    (0..trials)
        .into_par_iter()
        .fold(&init, |mut acc, i| {
            let mut rng = trial_rng(seed, i);
            body(&mut acc, i, &mut rng);
            acc
        })
        .reduce(&init, &merge)
}

/// Count, sum and sum of squares of a scalar observable.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Tally {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Tally {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(mut self, other: Tally) -> Tally {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        self.sum / self.count as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let m = self.sum / n;
        ((self.sum_sq - n * m * m) / (n - 1.0)).max(0.0)
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        (self.variance() / self.count as f64).sqrt()
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            mean: self.mean(),
            stderr: self.stderr(),
            trials: self.count,
        }
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: u64,
}

impl Estimate {
    /// Binomial proportion `hits / trials` with its standard error.
    pub fn proportion(hits: u64, trials: u64) -> Estimate {
        let p = hits as f64 / trials as f64;
        Estimate {
            mean: p,
            stderr: (p * (1.0 - p) / trials as f64).sqrt(),
            trials,
        }
    }

    /// True when `value` lies within `k` standard errors of the mean. A
    /// degenerate (zero-variance) estimate matches only values within 1e-12.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr + 1e-12
    }
}

/// Histogram over nonnegative integers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Histogram {
    counts: BTreeMap<u64, u64>,
    total: u64,
}

impl Histogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, value: u64) {
        *self.counts.entry(value).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn merge(mut self, other: Histogram) -> Histogram {
        for (v, c) in other.counts {
            *self.counts.entry(v).or_insert(0) += c;
        }
        self.total += other.total;
        self
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&v, &c)| (v, c))
    }

    pub fn count(&self, value: u64) -> u64 {
        self.counts.get(&value).copied().unwrap_or(0)
    }

    pub fn min(&self) -> Option<u64> {
        self.counts.keys().next().copied()
    }

    pub fn max(&self) -> Option<u64> {
        self.counts.keys().next_back().copied()
    }

    pub fn mean(&self) -> f64 {
        if self.total == 0 {
            return f64::NAN;
        }
        let s: f64 = self.iter().map(|(v, c)| v as f64 * c as f64).sum();
        s / self.total as f64
    }

    /// Smallest value `v` with `P(X <= v) >= q`, counting `extra` additional
    /// observations as lying above every recorded value (censored trials).
    pub fn quantile_with_censored(&self, q: f64, extra: u64) -> Option<u64> {
        let total = self.total + extra;
        if total == 0 {
            return None;
        }
        let need = (q * total as f64).ceil().max(1.0) as u64;
        let mut acc = 0;
        for (v, c) in self.iter() {
            acc += c;
            if acc >= need {
                return Some(v);
            }
        }
        None
    }

    pub fn quantile(&self, q: f64) -> Option<u64> {
        self.quantile_with_censored(q, 0)
    }

    /// Empirical CDF evaluated at `v`.
    pub fn cdf(&self, v: u64) -> f64 {
        let below: u64 = self.counts.range(..=v).map(|(_, &c)| c).sum();
        below as f64 / self.total as f64
    }
}

/// Kolmogorov-Smirnov distance between two integer-valued empirical laws.
pub fn ks_distance(a: &Histogram, b: &Histogram) -> f64 {
    let mut points: Vec<u64> = a.iter().map(|(v, _)| v).collect();
    points.extend(b.iter().map(|(v, _)| v));
    points.sort_unstable();
    points.dedup();
    points
        .into_iter()
        .map(|v| (a.cdf(v) - b.cdf(v)).abs())
        .fold(0.0, f64::max)
}

/// Total-variation distance `½ Σ |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions over different supports");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Normalises integer counts into an empirical law.
pub fn normalize(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .map(|&c| c as f64 / total.max(1) as f64)
        .collect()
}

/// Result of a Pearson chi-square test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Minimum expected count per cell before neighbouring cells are pooled.
pub const MIN_EXPECTED: f64 = 5.0;

/// Pearson chi-square test of `counts` against the uniform law on its cells.
///
/// No continuity correction. When the expected count per cell is below
/// [`MIN_EXPECTED`], consecutive cells are pooled into groups large enough
/// to reach it; a short trailing group is folded into the previous one.
/// Returns `None` when there are no observations.
pub fn chi_square_uniform(counts: &[u64]) -> Option<ChiSquare> {
    let total: u64 = counts.iter().sum();
    if total == 0 || counts.is_empty() {
        return None;
    }
    let cells = counts.len();
    let per_cell = total as f64 / cells as f64;
    let group = if per_cell >= MIN_EXPECTED {
        1
    } else {
        (MIN_EXPECTED / per_cell).ceil() as usize
    };
    let mut bins: Vec<(u64, usize)> = counts
        .chunks(group)
        .map(|c| (c.iter().sum(), c.len()))
        .collect();
    if bins.len() > 1 && bins.last().is_some_and(|&(_, size)| size < group) {
        let (c, s) = bins.pop().unwrap();
        let last = bins.last_mut().unwrap();
        last.0 += c;
        last.1 += s;
    }
    let statistic: f64 = bins
        .iter()
        .map(|&(observed, size)| {
            let expected = total as f64 * size as f64 / cells as f64;
            let d = observed as f64 - expected;
            d * d / expected
        })
        .sum();
    let dof = bins.len() - 1;
    Some(ChiSquare {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
    })
}

/// Pearson chi-square test of `counts` against the law `probs`.
///
/// Cells of zero probability are dropped, but any observation in one makes
/// the p-value zero. Consecutive cells are pooled greedily until each group
/// expects at least [`MIN_EXPECTED`] observations.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> Option<ChiSquare> {
    assert_eq!(counts.len(), probs.len(), "one probability per cell");
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let n = total as f64;
    let mut impossible = false;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut open = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        if p <= 0.0 {
            impossible |= c > 0;
            continue;
        }
        open.0 += c as f64;
        open.1 += n * p;
        if open.1 >= MIN_EXPECTED {
            bins.push(open);
            open = (0.0, 0.0);
        }
    }
    if open.1 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += open.0;
                last.1 += open.1;
            }
            None => bins.push(open),
        }
    }
    let statistic: f64 = bins.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len().saturating_sub(1);
    Some(ChiSquare {
        statistic,
        dof,
        p_value: if impossible { 0.0 } else { chi_square_sf(statistic, dof) },
    })
}

/// Upper tail `P(X >= x)` of a chi-square variable with `dof` degrees of freedom.
pub fn chi_square_sf(x: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    ChiSquared::new(dof as f64)
        .expect("positive degrees of freedom")
        .sf(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn trial_streams_are_reproducible_and_distinct() {
        let a: u64 = trial_rng(7, 3).random();
        let b: u64 = trial_rng(7, 3).random();
        let c: u64 = trial_rng(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn run_trials_matches_serial_fold() {
        let parallel = run_trials(
            5000,
            11,
            Tally::default,
            |t, _, rng| t.push(rng.random::<f64>()),
            Tally::merge,
        );
        let mut serial = Tally::default();
        let mut chunk = Tally::default();
        for i in 0..5000u64 {
            if i > 0 && i % CHUNK == 0 {
                serial = serial.merge(chunk);
                chunk = Tally::default();
            }
            chunk.push(trial_rng(11, i).random::<f64>());
        }
        serial = Tally::default().merge(serial.merge(chunk));
        assert_eq!(parallel.count, 5000);
        assert_eq!(parallel.sum.to_bits(), serial.sum.to_bits());
    }

    #[test]
    fn tally_moments() {
        let mut t = Tally::default();
        for x in [1.0, 2.0, 3.0, 4.0] {
            t.push(x);
        }
        assert_eq!(t.mean(), 2.5);
        assert!((t.variance() - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_quantiles_and_censoring() {
        let mut h = Histogram::new();
        for v in [1, 2, 2, 3, 10] {
            h.record(v);
        }
        assert_eq!(h.quantile(0.5), Some(2));
        assert_eq!(h.quantile(1.0), Some(10));
        // five censored trials push the median past every recorded value
        assert_eq!(h.quantile_with_censored(0.5, 6), None);
        assert_eq!(h.total(), 5);
    }

    #[test]
    fn chi_square_accepts_exact_uniform_and_rejects_point_mass() {
        let flat = chi_square_uniform(&[100; 10]).unwrap();
        assert_eq!(flat.statistic, 0.0);
        assert_eq!(flat.dof, 9);
        assert!((flat.p_value - 1.0).abs() < 1e-12);

        let mut spike = vec![0u64; 10];
        spike[3] = 1000;
        assert!(chi_square_uniform(&spike).unwrap().p_value < 1e-10);
        assert!(chi_square_uniform(&[0, 0]).is_none());
    }

    #[test]
    fn chi_square_pools_sparse_cells() {
        // 20 observations over 40 cells: 0.5 expected per cell, pooled by 10
        let mut counts = vec![0u64; 40];
        for c in counts.iter_mut().step_by(2) {
            *c = 1;
        }
        let r = chi_square_uniform(&counts).unwrap();
        assert_eq!(r.dof, 3);
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn ks_and_tv() {
        let mut a = Histogram::new();
        let mut b = Histogram::new();
        a.record(1);
        a.record(2);
        b.record(2);
        b.record(2);
        assert!((ks_distance(&a, &b) - 0.5).abs() < 1e-15);
        assert!((total_variation(&[0.5, 0.5], &[1.0, 0.0]) - 0.5).abs() < 1e-15);
    }
}
