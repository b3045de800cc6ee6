//! The birth-death chain on Pauli weights.
//!
//! From weight ℓ on n sites one step of the string chain moves to
//!
//! ```text
//!   ℓ+1 w.p. 6ℓ(n−ℓ) / 5n(n−1)
//!   ℓ−1 w.p. 2ℓ(ℓ−1) / 5n(n−1)
//!   ℓ   otherwise
//! ```
//!
//! Weight 0 is absorbing and the nonzero weights form a single class with
//! stationary law π(k) = 3^k·C(n,k) / (4^n − 1).

pub mod binomial;

use num_rational::Ratio;
use rand::Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{Error, Result};
use crate::stats::{run_trials, Histogram};

/// One row of the weight chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub down: f64,
    pub stay: f64,
    pub up: f64,
}

impl Transition {
    pub fn moving(&self) -> f64 {
        self.down + self.up
    }
}

/// Exact row as (down, stay, up).
pub type ExactRow = [Ratio<i64>; 3];

#[derive(Debug, Clone)]
pub struct WeightChain {
    n: usize,
    exact: Vec<ExactRow>,
    rows: Vec<Transition>,
    waits: Vec<Option<Geometric>>,
}

impl WeightChain {
    /// Builds the rows in rational arithmetic and rounds each entry once.
    pub fn build(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("weight chain needs n >= 2, got {n}")));
        }
        let ni = n as i64;
        let denom = 5 * ni * (ni - 1);
        let exact: Vec<ExactRow> = (0..=ni)
            .map(|l| {
                let up = Ratio::new(6 * l * (ni - l), denom);
                let down = Ratio::new(2 * l * (l - 1), denom);
                let stay = Ratio::from_integer(1) - Ratio::new(2 * l * (3 * ni - 2 * l - 1), denom);
                [down, stay, up]
            })
            .collect();
        let rows: Vec<Transition> = exact
            .iter()
            .map(|[d, s, u]| Transition {
                down: to_f64(*d),
                stay: to_f64(*s),
                up: to_f64(*u),
            })
            .collect();
        let waits = exact
            .iter()
            .map(|[d, _, u]| {
                let p = to_f64(*d + *u);
                (p > 0.0).then(|| Geometric::new(p).expect("move probability in (0,1]"))
            })
            .collect();
        Ok(WeightChain { n, exact, rows, waits })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, weight: usize) -> Transition {
        self.rows[weight]
    }

    pub fn exact_row(&self, weight: usize) -> ExactRow {
        self.exact[weight]
    }

    /// One step of the chain.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, weight: usize, rng: &mut R) -> usize {
        let row = &self.rows[weight];
        let u: f64 = rng.random();
        if u < row.down {
            weight - 1
        } else if u < row.down + row.up {
            weight + 1
        } else {
            weight
        }
    }

    pub fn run_trajectory<R: Rng + ?Sized>(
        &self,
        start: usize,
        steps: u64,
        rng: &mut R,
        record_path: bool,
    ) -> Trajectory {
        let mut path = record_path.then(|| Vec::with_capacity(steps as usize + 1));
        let mut w = start;
        if let Some(p) = path.as_mut() {
            p.push(w);
        }
        for _ in 0..steps {
            w = self.step(w, rng);
            if let Some(p) = path.as_mut() {
                p.push(w);
            }
        }
        Trajectory { last: w, path }
    }

    /// One move of the walk conditioned to move, with the number of idle
    /// steps spent before it.
    ///
    /// The idle count is geometric with success probability
    /// `down(ℓ) + up(ℓ) = 2ℓ(3n−2ℓ−1) / 5n(n−1)` and counts failures.
    pub fn accelerated_step<R: Rng + ?Sized>(&self, weight: usize, rng: &mut R) -> Result<(usize, u64)> {
        let Some(wait) = self.waits.get(weight).copied().flatten() else {
            return Err(Error::domain(format!("weight {weight} never moves")));
        };
        let idle = wait.sample(rng);
        let row = &self.rows[weight];
        let u: f64 = rng.random::<f64>() * row.moving();
        let next = if u < row.down { weight - 1 } else { weight + 1 };
        Ok((next, idle))
    }

    /// Applies one step to a distribution over weights 0..=n.
    pub fn push_forward(&self, dist: &[f64], out: &mut [f64]) {
        debug_assert_eq!(dist.len(), self.n + 1);
        out.iter_mut().for_each(|x| *x = 0.0);
        for (l, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let row = &self.rows[l];
            out[l] += mass * row.stay;
            if l > 0 {
                out[l - 1] += mass * row.down;
            }
            if l < self.n {
                out[l + 1] += mass * row.up;
            }
        }
    }

    /// P^t(start, ·) by `t` sequential tridiagonal products.
    pub fn evolve(&self, start: usize, steps: u64) -> Result<Vec<f64>> {
        if start > self.n {
            return Err(Error::domain(format!("start weight {start} exceeds n = {}", self.n)));
        }
        let mut dist = vec![0.0; self.n + 1];
        dist[start] = 1.0;
        let mut next = vec![0.0; self.n + 1];
        for _ in 0..steps {
            self.push_forward(&dist, &mut next);
            std::mem::swap(&mut dist, &mut next);
        }
        Ok(dist)
    }
}

fn to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub last: usize,
    pub path: Option<Vec<usize>>,
}

/// Stationary law on weights, indexed 0..=n with entry 0 equal to zero.
///
/// Built from the ratio π(k+1)/π(k) = 3(n−k)/(k+1) in log space, so it stays
/// finite for any n.
pub fn stationary(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::domain(format!("weight chain needs n >= 2, got {n}")));
    }
    let mut log_w = vec![f64::NEG_INFINITY; n + 1];
    log_w[1] = (3.0 * n as f64).ln();
    for k in 1..n {
        log_w[k + 1] = log_w[k] + (3.0 * (n - k) as f64 / (k + 1) as f64).ln();
    }
    let max = log_w[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = log_w.iter().map(|&x| (x - max).exp()).collect();
    w[0] = 0.0;
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

/// P^t(start, ·) for the chain on `n` sites.
pub fn evolve_exact(n: usize, start: usize, steps: u64) -> Result<Vec<f64>> {
    WeightChain::build(n)?.evolve(start, steps)
}

/// Default censoring deadline `⌈50·n·(log₂ n)²⌉`.
pub fn default_deadline(n: usize) -> u64 {
    let l = (n as f64).log2();
    (50.0 * n as f64 * l * l).ceil() as u64
}

/// How hitting-time trials are simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HittingSampler {
    /// Step the chain one transition at a time.
    Direct,
    /// Jump between distinct weights, adding geometric idle times.
    #[default]
    Accelerated,
}

/// Monte Carlo law of the first time the chain reaches a target weight.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingStats {
    pub start: usize,
    pub target: usize,
    pub seed: u64,
    pub deadline: u64,
    /// Hitting times of the trials that reached the target by the deadline.
    pub histogram: Histogram,
    /// Trials still short of the target at the deadline.
    pub censored: u64,
}

impl HittingStats {
    pub fn trials(&self) -> u64 {
        self.histogram.total() + self.censored
    }

    /// Quantile over all trials, censored ones counted as +∞.
    pub fn quantile(&self, q: f64) -> Option<u64> {
        self.histogram.quantile_with_censored(q, self.censored)
    }

    pub fn median(&self) -> Option<u64> {
        self.quantile(0.5)
    }

    /// Mean over the uncensored trials.
    pub fn mean(&self) -> f64 {
        self.histogram.mean()
    }

    pub fn merge(mut self, other: HittingStats) -> HittingStats {
        self.histogram = self.histogram.merge(other.histogram);
        self.censored += other.censored;
        self
    }
}

/// Samples `min{t : X_t ≥ target}` (or `≤ target` when starting above it)
/// over `trials` independent runs, censored at `deadline` steps.
pub fn hitting_time_mc(
    chain: &WeightChain,
    start: usize,
    target: usize,
    trials: u64,
    deadline: Option<u64>,
    seed: u64,
    sampler: HittingSampler,
) -> Result<HittingStats> {
    let n = chain.n();
    if target > n || target == 0 {
        return Err(Error::domain(format!("target weight {target} not in 1..={n}")));
    }
    if start == 0 || start > n {
        return Err(Error::domain(format!("start weight {start} not in 1..={n}")));
    }
    let deadline = deadline.unwrap_or_else(|| default_deadline(n));
    let upward = start <= target;
    let reached = move |w: usize| if upward { w >= target } else { w <= target };
    let empty = || HittingStats {
        start,
        target,
        seed,
        deadline,
        histogram: Histogram::new(),
        censored: 0,
    };
    let stats = run_trials(
        trials,
        seed,
        empty,
        |acc, _, rng| {
            let hit = match sampler {
                _ if start == target => Some(0),
                HittingSampler::Direct => {
                    let mut w = start;
                    (1..=deadline).find(|_| {
                        w = chain.step(w, rng);
                        reached(w)
                    })
                }
                HittingSampler::Accelerated => {
                    let mut w = start;
                    let mut time = 0u64;
                    loop {
                        let (next, idle) = chain
                            .accelerated_step(w, rng)
                            .expect("nonzero weights always move");
                        time += idle + 1;
                        if time > deadline {
                            break None;
                        }
                        w = next;
                        if reached(w) {
                            break Some(time);
                        }
                    }
                }
            };
            match hit {
                Some(t) => acc.histogram.record(t),
                None => acc.censored += 1,
            }
        },
        HittingStats::merge,
    );
    Ok(stats)
}

/// The two weights bracketing 3n/4 used to split the state space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoints {
    pub r_minus: usize,
    pub r_plus: usize,
    /// Smallest `up/down` ratio over `2 ≤ x < r_minus`.
    pub min_up_drift: f64,
    /// Smallest `down/up` ratio over `r_plus < y < n`.
    pub min_down_drift: f64,
    /// Both drift ratios are at least `1 + 2δ`.
    pub drift_ok: bool,
}

/// Largest δ accepted by [`reference_points`] (exclusive).
pub const DELTA_MAX: f64 = 1.0 / 16.0;

/// `r− = ⌊(3/4 − δ)n⌋`, `r+ = ⌈(3/4 + δ)n⌉` together with the drift check
/// `3(n−x)/(x−1) ≥ 1+2δ` below r− and its mirror above r+.
pub fn reference_points(n: usize, delta: f64) -> Result<ReferencePoints> {
    if !(delta > 0.0 && delta < DELTA_MAX) {
        return Err(Error::domain(format!("delta = {delta} outside (0, 1/16)")));
    }
    if n < 2 {
        return Err(Error::domain(format!("weight chain needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    // 1e-9 absorbs representation error in δ, e.g. (0.75 - 0.05)·100
    let r_minus = ((0.75 - delta) * nf + 1e-9).floor() as usize;
    let r_plus = (((0.75 + delta) * nf - 1e-9).ceil() as usize).min(n);
    let min_up_drift = (2..r_minus)
        .map(|x| 3.0 * (n - x) as f64 / (x - 1) as f64)
        .fold(f64::INFINITY, f64::min);
    let min_down_drift = (r_plus + 1..n)
        .map(|y| (y - 1) as f64 / (3.0 * (n - y) as f64))
        .fold(f64::INFINITY, f64::min);
    let need = 1.0 + 2.0 * delta;
    Ok(ReferencePoints {
        r_minus,
        r_plus,
        min_up_drift,
        min_down_drift,
        drift_ok: min_up_drift >= need && min_down_drift >= need,
    })
}

/// Free constants of the convergence bound
/// `P^t(ℓ,k) ≤ base^{δn}·π(k) + slack / ((3−η)^ℓ·C(n,ℓ)·n^poly_degree)`.
/// Bases 4 and 16 are equivalent up to rescaling δ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub delta: f64,
    pub eta: f64,
    pub slack: f64,
    pub poly_degree: f64,
    pub base: f64,
}

impl Default for BoundParams {
    fn default() -> Self {
        BoundParams {
            delta: 0.05,
            eta: 0.5,
            slack: 1.0,
            poly_degree: 0.0,
            base: 4.0,
        }
    }
}

/// Natural logs of both sides of the bound for one (ℓ, k, t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub k: usize,
    pub ln_lhs: f64,
    pub ln_stationary_term: f64,
    pub ln_correction_term: f64,
    pub ln_rhs: f64,
    pub pass: bool,
}

impl BoundReport {
    pub fn lhs(&self) -> f64 {
        self.ln_lhs.exp()
    }
}

/// Compares the exact P^t(ℓ,k) against the bound for every k in 1..=n.
pub fn check_theorem_bound_sweep(
    chain: &WeightChain,
    start: usize,
    steps: u64,
    params: &BoundParams,
) -> Result<Vec<BoundReport>> {
    if start == 0 || start > chain.n() {
        return Err(Error::domain(format!("start weight {start} not in 1..={}", chain.n())));
    }
    if !(params.delta > 0.0 && params.eta > 0.0 && params.eta < 3.0 && params.slack >= 0.0 && params.base > 1.0) {
        return Err(Error::domain(format!("invalid bound parameters {params:?}")));
    }
    let dist = chain.evolve(start, steps)?;
    let n = chain.n();
    let ln4n_minus_1 = n as f64 * 4f64.ln() + (-(4f64.powi(-(n as i32)))).ln_1p();
    let ln_correction = params.slack.ln()
        - start as f64 * (3.0 - params.eta).ln()
        - binomial::ln_binomial(n, start)
        - params.poly_degree * (n as f64).ln();
    Ok((1..=n)
        .map(|k| {
            let ln_stationary = params.delta * n as f64 * params.base.ln()
                + k as f64 * 3f64.ln()
                + binomial::ln_binomial(n, k)
                - ln4n_minus_1;
            let ln_rhs = log_add_exp(ln_stationary, ln_correction);
            let ln_lhs = dist[k].ln();
            BoundReport {
                k,
                ln_lhs,
                ln_stationary_term: ln_stationary,
                ln_correction_term: ln_correction,
                ln_rhs,
                pass: ln_lhs <= ln_rhs,
            }
        })
        .collect())
}

/// Single-k form of [`check_theorem_bound_sweep`].
pub fn check_theorem_bound(
    chain: &WeightChain,
    start: usize,
    k: usize,
    steps: u64,
    params: &BoundParams,
) -> Result<BoundReport> {
    if k == 0 || k > chain.n() {
        return Err(Error::domain(format!("k = {k} not in 1..={}", chain.n())));
    }
    Ok(check_theorem_bound_sweep(chain, start, steps, params)?[k - 1])
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{total_variation, trial_rng};

    fn r(a: i64, b: i64) -> Ratio<i64> {
        Ratio::new(a, b)
    }

    #[test]
    fn rows_match_closed_form_by_substitution() {
        let c = WeightChain::build(4).unwrap();
        assert_eq!(c.exact_row(2), [r(1, 15), r(8, 15), r(6, 15)]);
        assert_eq!(c.exact_row(0), [r(0, 1), r(1, 1), r(0, 1)]);
        let c2 = WeightChain::build(2).unwrap();
        assert_eq!(c2.exact_row(1), [r(0, 1), r(2, 5), r(3, 5)]);
        assert_eq!(c2.row(1), Transition { down: 0.0, stay: 0.4, up: 0.6 });
        assert!(WeightChain::build(1).is_err());
    }

    #[test]
    fn rows_are_exactly_stochastic_with_boundaries() {
        for n in 2..=512 {
            let c = WeightChain::build(n).unwrap();
            for l in 0..=n {
                let [d, s, u] = c.exact_row(l);
                assert_eq!(d + s + u, Ratio::from_integer(1), "n={n} l={l}");
            }
            assert_eq!(c.exact_row(1)[0], r(0, 1));
            assert_eq!(c.exact_row(n)[2], r(0, 1));
        }
    }

    #[test]
    fn stationary_small_case_and_normalisation() {
        let pi = stationary(2).unwrap();
        assert!((pi[1] - 0.4).abs() < 1e-15 && (pi[2] - 0.6).abs() < 1e-15);
        for n in 2..=20 {
            let pi = stationary(n).unwrap();
            assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let chain = WeightChain::build(n).unwrap();
            let mut next = vec![0.0; n + 1];
            chain.push_forward(&pi, &mut next);
            for k in 0..=n {
                assert!((next[k] - pi[k]).abs() < 1e-12, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn stationary_matches_direct_formula() {
        // 3^k C(n,k) / (4^n - 1) is exact in f64 for n = 10
        let n = 10;
        let pi = stationary(n).unwrap();
        for k in 1..=n {
            let direct = 3f64.powi(k as i32) * binomial::binomial(n, k) / (4f64.powi(n as i32) - 1.0);
            assert!((pi[k] - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn detailed_balance() {
        for n in 2..=64 {
            let pi = stationary(n).unwrap();
            let c = WeightChain::build(n).unwrap();
            for l in 1..n {
                let lhs = pi[l] * c.row(l).up;
                let rhs = pi[l + 1] * c.row(l + 1).down;
                assert!((lhs - rhs).abs() < 1e-12, "n={n} l={l}");
            }
        }
    }

    #[test]
    fn evolve_examples() {
        let d = evolve_exact(5, 3, 0).unwrap();
        assert_eq!(d, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let d = evolve_exact(2, 1, 1).unwrap();
        assert_eq!(d, vec![0.0, 0.4, 0.6]);
        let d = evolve_exact(8, 3, 10_000).unwrap();
        assert!(total_variation(&d, &stationary(8).unwrap()) < 1e-6);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn stationary_mixture_is_invariant_under_powering() {
        for n in [2, 5, 13, 32] {
            let pi = stationary(n).unwrap();
            let c = WeightChain::build(n).unwrap();
            for t in [1u64, 10, 100, 1000] {
                let mut mix = vec![0.0; n + 1];
                for l in 1..=n {
                    let row = c.evolve(l, t).unwrap();
                    for k in 0..=n {
                        mix[k] += pi[l] * row[k];
                    }
                }
                for k in 1..=n {
                    assert!((mix[k] - pi[k]).abs() < 1e-9, "n={n} t={t} k={k}");
                }
            }
        }
    }

    #[test]
    fn one_step_frequencies() {
        let c = WeightChain::build(4).unwrap();
        let mut rng = trial_rng(5, 0);
        let draws = 1_000_000u64;
        let mut counts = [0u64; 3];
        for _ in 0..draws {
            counts[c.step(2, &mut rng) - 1] += 1;
        }
        for (count, p) in counts.iter().zip([1.0 / 15.0, 8.0 / 15.0, 6.0 / 15.0]) {
            let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
            assert!((*count as f64 - draws as f64 * p).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn zero_is_absorbing() {
        let c = WeightChain::build(6).unwrap();
        let mut rng = trial_rng(1, 1);
        let tr = c.run_trajectory(0, 1000, &mut rng, true);
        assert_eq!(tr.last, 0);
        assert!(tr.path.unwrap().iter().all(|&w| w == 0));
        assert!(c.accelerated_step(0, &mut rng).is_err());
    }

    #[test]
    fn trajectory_law_matches_powering() {
        let n = 6;
        let c = WeightChain::build(n).unwrap();
        let counts = run_trials(
            100_000,
            17,
            || vec![0u64; n + 1],
            |acc, _, rng| acc[c.run_trajectory(1, 500, rng, false).last] += 1,
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
        let emp = crate::stats::normalize(&counts);
        assert!(total_variation(&emp, &c.evolve(1, 500).unwrap()) < 0.01);
    }

    #[test]
    fn accelerated_boundary_and_mean_wait() {
        let c2 = WeightChain::build(2).unwrap();
        let mut rng = trial_rng(3, 0);
        for _ in 0..100 {
            assert_eq!(c2.accelerated_step(1, &mut rng).unwrap().0, 2);
        }
        let c = WeightChain::build(4).unwrap();
        let mut t = crate::stats::Tally::default();
        for _ in 0..1_000_000 {
            t.push(c.accelerated_step(2, &mut rng).unwrap().1 as f64);
        }
        assert!(t.estimate().within(8.0 / 7.0, 3.0), "{:?}", t.estimate());
    }

    #[test]
    fn hitting_time_samplers_agree() {
        let c = WeightChain::build(6).unwrap();
        let a = hitting_time_mc(&c, 1, 4, 100_000, None, 8, HittingSampler::Direct).unwrap();
        let b = hitting_time_mc(&c, 1, 4, 100_000, None, 9, HittingSampler::Accelerated).unwrap();
        assert_eq!(a.censored + b.censored, 0);
        assert!(crate::stats::ks_distance(&a.histogram, &b.histogram) < 0.02);
    }

    #[test]
    fn hitting_time_single_transition_is_geometric() {
        let c = WeightChain::build(2).unwrap();
        for sampler in [HittingSampler::Direct, HittingSampler::Accelerated] {
            let h = hitting_time_mc(&c, 1, 2, 1_000_000, None, 4, sampler).unwrap();
            assert_eq!(h.histogram.min(), Some(1));
            let mut t = crate::stats::Tally::default();
            for (v, cnt) in h.histogram.iter() {
                for _ in 0..cnt {
                    t.push(v as f64);
                }
            }
            assert!(t.estimate().within(5.0 / 3.0, 3.0), "{:?}", t.estimate());
        }
    }

    #[test]
    fn hitting_time_edges() {
        let c = WeightChain::build(10).unwrap();
        let h = hitting_time_mc(&c, 5, 5, 10, None, 1, HittingSampler::Direct).unwrap();
        assert_eq!(h.histogram.count(0), 10);
        assert!(hitting_time_mc(&c, 1, 11, 10, None, 1, HittingSampler::Direct).is_err());
        // downward target
        let h = hitting_time_mc(&c, 10, 8, 1000, None, 1, HittingSampler::Accelerated).unwrap();
        assert_eq!(h.trials(), 1000);
        assert!(h.histogram.min().unwrap() >= 2);
        // a deadline of one step censors almost everything
        let h = hitting_time_mc(&c, 1, 8, 1000, Some(1), 1, HittingSampler::Direct).unwrap();
        assert_eq!(h.censored, 1000);
        assert_eq!(h.median(), None);
    }

    #[test]
    fn reference_points_examples() {
        let rp = reference_points(100, 0.05).unwrap();
        assert_eq!((rp.r_minus, rp.r_plus), (70, 80));
        let x = 69.0;
        assert!(3.0 * (100.0 - x) / (x - 1.0) >= 1.1);
        assert!(rp.drift_ok);
        assert!(reference_points(100, 1.0 / 16.0).is_err());
        assert!(reference_points(100, 0.0).is_err());
    }

    #[test]
    fn theorem_bound_reports() {
        let c = WeightChain::build(32).unwrap();
        let p = BoundParams::default();
        // bulk k after many steps: the stationary term alone dominates
        let rep = check_theorem_bound(&c, 1, 24, 20_000, &p).unwrap();
        assert!(rep.ln_lhs <= rep.ln_stationary_term);
        // t = 0 is pre-asymptotic: P^0(ℓ,ℓ) = 1 exceeds a tiny slack
        let tiny = BoundParams { slack: 1e-6, ..p };
        let rep = check_theorem_bound(&c, 3, 3, 0, &tiny).unwrap();
        assert_eq!(rep.lhs(), 1.0);
        assert!(!rep.pass);

        let n = 64;
        let c = WeightChain::build(n).unwrap();
        let l = (n as f64).log2();
        let t = (4.0 * n as f64 * l * l).ceil() as u64;
        let p = BoundParams { delta: 0.1, ..BoundParams::default() };
        assert!(check_theorem_bound_sweep(&c, 1, t, &p).unwrap().iter().all(|r| r.pass));
    }

    #[test]
    fn bound_base_is_a_rescaling_of_delta() {
        let c = WeightChain::build(20).unwrap();
        let four = BoundParams { delta: 0.04, ..BoundParams::default() };
        let sixteen = BoundParams { delta: 0.02, base: 16.0, ..BoundParams::default() };
        for k in [1, 7, 15, 20] {
            let a = check_theorem_bound(&c, 2, k, 300, &four).unwrap();
            let b = check_theorem_bound(&c, 2, k, 300, &sixteen).unwrap();
            assert!((a.ln_rhs - b.ln_rhs).abs() < 1e-12);
        }
        let bad = BoundParams { base: 1.0, ..BoundParams::default() };
        assert!(check_theorem_bound(&c, 2, 3, 10, &bad).is_err());
    }

    #[test]
    fn theorem_bound_survives_large_n() {
        let c = WeightChain::build(1500).unwrap();
        let reps = check_theorem_bound_sweep(&c, 1, 50, &BoundParams::default()).unwrap();
        assert!(reps.iter().all(|r| r.ln_rhs.is_finite()));
    }
}
