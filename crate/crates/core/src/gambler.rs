//! Hitting probabilities for a walk on {−1, 0, …, a} with site-dependent
//! forward probabilities.
//!
//! Sites `i ≤ 0` step forward with probability `p_minus`, sites `1..a−1`
//! with `p_plus[i−1]`. The walk starts at 0 and is absorbed at −1 or `a`.
//! With `α(p) = p / (1 − p)` the probability of absorption at −1 is
//!
//! ```text
//!   1 / (1 + α_− · Π_{j=1}^{a−1} α_+(j) / (1 + Σ_{i=1}^{a−1} Π_{j=i}^{a−1} α_+(j)))
//! ```
//!
//! whenever every forward probability exceeds 1/2.

use rand::Rng;

use crate::error::{Error, Result};
use crate::stats::{run_trials, Estimate, Tally};

#[derive(Debug, Clone, PartialEq)]
pub struct RuinInstance {
    a: usize,
    p_minus: f64,
    p_plus: Vec<f64>,
}

impl RuinInstance {
    /// Accepts any forward probabilities in (0, 1). The closed form
    /// additionally requires them to exceed 1/2; see [`ruin_probability`].
    pub fn new(a: usize, p_minus: f64, p_plus: Vec<f64>) -> Result<Self> {
        if a == 0 {
            return Err(Error::domain("right boundary a must be positive"));
        }
        if p_plus.len() != a - 1 {
            return Err(Error::domain(format!(
                "expected {} forward probabilities for a = {a}, got {}",
                a - 1,
                p_plus.len()
            )));
        }
        for &p in std::iter::once(&p_minus).chain(&p_plus) {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::domain(format!("forward probability {p} outside (0, 1)")));
            }
        }
        Ok(RuinInstance { a, p_minus, p_plus })
    }

    /// Same forward probability `p` at every site.
    pub fn constant(a: usize, p: f64) -> Result<Self> {
        RuinInstance::new(a, p, vec![p; a.saturating_sub(1)])
    }

    pub fn a(&self) -> usize {
        self.a
    }

    pub fn p_minus(&self) -> f64 {
        self.p_minus
    }

    pub fn p_plus(&self) -> &[f64] {
        &self.p_plus
    }

    /// Forward probability at site `i ∈ {0, …, a−1}`.
    pub fn forward(&self, i: usize) -> f64 {
        if i == 0 {
            self.p_minus
        } else {
            self.p_plus[i - 1]
        }
    }

    fn satisfies_drift_hypothesis(&self) -> bool {
        std::iter::once(&self.p_minus)
            .chain(&self.p_plus)
            .all(|&p| p > 0.5)
    }
}

fn odds(p: f64) -> f64 {
    p / (1.0 - p)
}

/// Closed-form probability of hitting −1 before `a`.
///
/// Evaluated backwards from site a−1: the running product d = Π_{j≥i} α_+(j)
/// and the partial sum S = 1 + Σ d are rescaled together whenever S grows
/// large, since only their ratio enters the result.
pub fn ruin_probability(inst: &RuinInstance) -> Result<f64> {
    if !inst.satisfies_drift_hypothesis() {
        return Err(Error::domain(
            "closed form requires every forward probability to exceed 1/2",
        ));
    }
    let mut d = 1.0;
    let mut s = 1.0;
    for &p in inst.p_plus.iter().rev() {
        d *= odds(p);
        s += d;
        if s > 1e150 {
            d /= s;
            s = 1.0;
        }
    }
    Ok(1.0 / (1.0 + odds(inst.p_minus) * (d / s)))
}

/// Hitting probabilities P_{−1}, …, P_a from the absorbing-chain equations
/// `P_i = p_i P_{i+1} + (1 − p_i) P_{i−1}` with P_{−1} = 1 and P_a = 0.
/// Entry `i + 1` holds P_i.
///
/// Tridiagonal elimination from site 0. Writing the eliminated row i as
/// `P_i = g_i + (1 − g_i) P_{i+1}`, the coefficients obey
/// `g_i = (1 − p_i) g_{i−1} / (p_i + (1 − p_i) g_{i−1})` with `g_{−1} = 1`.
/// Every quantity stays in [0, 1] and nothing is subtracted, so the solve is
/// accurate even when the drift changes sign along the walk.
pub fn ruin_linear_solution(inst: &RuinInstance) -> Result<Vec<f64>> {
    let m = inst.a;
    let mut g = vec![0.0; m];
    let mut prev = 1.0;
    for (i, gi) in g.iter_mut().enumerate() {
        let p = inst.forward(i);
        let pivot = p + (1.0 - p) * prev;
        if !(pivot > 0.0) {
            return Err(Error::Internal(format!("singular pivot at site {i}")));
        }
        *gi = (1.0 - p) * prev / pivot;
        prev = *gi;
    }
    let mut sol = vec![0.0; m + 2];
    sol[0] = 1.0;
    let mut next = 0.0;
    for i in (0..m).rev() {
        next = g[i] + (1.0 - g[i]) * next;
        sol[i + 1] = next;
    }
    Ok(sol)
}

/// P_0 from [`ruin_linear_solution`].
pub fn ruin_exact_linear(inst: &RuinInstance) -> Result<f64> {
    Ok(ruin_linear_solution(inst)?[1])
}

/// Simulates the walk from 0 and reports the frequency of absorption at −1.
pub fn ruin_mc(inst: &RuinInstance, trials: u64, seed: u64) -> Estimate {
    let a = inst.a as i64;
    run_trials(
        trials,
        seed,
        Tally::default,
        |acc, _, rng| {
            let mut pos = 0i64;
            while pos > -1 && pos < a {
                let p = inst.forward(pos as usize);
                if rng.random::<f64>() < p {
                    pos += 1;
                } else {
                    pos -= 1;
                }
            }
            acc.push(if pos == -1 { 1.0 } else { 0.0 });
        },
        Tally::merge,
    )
    .estimate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::trial_rng;

    fn random_instance<R: Rng>(rng: &mut R, max_a: usize) -> RuinInstance {
        let a = rng.random_range(1..=max_a);
        let draw = |rng: &mut R| rng.random_range(0.501..0.999);
        let p_minus = draw(rng);
        let p_plus = (1..a).map(|_| draw(rng)).collect();
        RuinInstance::new(a, p_minus, p_plus).unwrap()
    }

    #[test]
    fn single_barrier() {
        let inst = RuinInstance::new(1, 2.0 / 3.0, vec![]).unwrap();
        assert!((ruin_probability(&inst).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((ruin_exact_linear(&inst).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_two_thirds_gives_three_sevenths() {
        let inst = RuinInstance::constant(2, 2.0 / 3.0).unwrap();
        assert!((ruin_probability(&inst).unwrap() - 3.0 / 7.0).abs() < 1e-15);
        assert!((ruin_exact_linear(&inst).unwrap() - 3.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn hypothesis_enforced_only_for_closed_form() {
        let inst = RuinInstance::constant(3, 0.5).unwrap();
        assert!(ruin_probability(&inst).is_err());
        assert!((ruin_exact_linear(&inst).unwrap() - 0.75).abs() < 1e-14);
        assert!(RuinInstance::new(3, 0.6, vec![0.7]).is_err());
        assert!(RuinInstance::new(2, 1.0, vec![0.7]).is_err());
        assert!(RuinInstance::new(0, 0.6, vec![]).is_err());
    }

    #[test]
    fn formula_matches_linear_solve() {
        let mut rng = trial_rng(21, 0);
        for _ in 0..1000 {
            let inst = random_instance(&mut rng, 40);
            let f = ruin_probability(&inst).unwrap();
            let l = ruin_exact_linear(&inst).unwrap();
            assert!((f - l).abs() <= 1e-12, "{inst:?}: {f} vs {l}");
        }
    }

    #[test]
    fn constant_odds_bound() {
        let mut rng = trial_rng(22, 0);
        for _ in 0..100 {
            let a = rng.random_range(1..60);
            let p = rng.random_range(0.51..0.99);
            let inst = RuinInstance::constant(a, p).unwrap();
            let alpha = odds(p);
            let bound = 1.0 / (1.0 + alpha * (1.0 - 1.0 / alpha));
            assert!(ruin_probability(&inst).unwrap() <= bound + 1e-15);
        }
    }

    #[test]
    fn linear_solve_survives_drift_reversal() {
        let hi = 255.5 / 256.0;
        let lo = 0.5 / 256.0;
        let p_plus: Vec<f64> = (1..64)
            .map(|i| if i < 21 { hi } else if i < 63 { lo } else { hi })
            .collect();
        let inst = RuinInstance::new(64, hi, p_plus).unwrap();
        let sol = ruin_linear_solution(&inst).unwrap();
        assert!(sol.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!((sol[1] - 1.0).abs() < 1e-9, "{}", sol[1]);
    }

    #[test]
    fn long_walks_do_not_overflow() {
        let inst = RuinInstance::constant(2000, 0.9).unwrap();
        let p = ruin_probability(&inst).unwrap();
        // α = 9: essentially the single-barrier value with α_+ correction
        let alpha = 9.0;
        assert!((p - 1.0 / (1.0 + alpha * (1.0 - 1.0 / alpha))).abs() < 1e-12);
        assert!(p.is_finite());
    }

    #[test]
    fn monotone_in_forward_probabilities() {
        let mut rng = trial_rng(23, 0);
        for _ in 0..200 {
            let inst = random_instance(&mut rng, 12);
            let base = ruin_probability(&inst).unwrap();
            let bumped_minus = RuinInstance::new(
                inst.a(),
                (inst.p_minus() + 0.01).min(0.999),
                inst.p_plus().to_vec(),
            )
            .unwrap();
            assert!(ruin_probability(&bumped_minus).unwrap() <= base + 1e-15);
            for j in 0..inst.p_plus().len() {
                let mut pp = inst.p_plus().to_vec();
                pp[j] = (pp[j] + 0.01).min(0.999);
                let bumped = RuinInstance::new(inst.a(), inst.p_minus(), pp).unwrap();
                assert!(ruin_probability(&bumped).unwrap() <= base + 1e-15);
            }
        }
    }

    #[test]
    fn monotone_limit_towards_certain_escape() {
        let mut last = 1.0;
        for step in 0..=39 {
            let p = 0.6 + step as f64 * 0.01;
            let v = ruin_exact_linear(&RuinInstance::constant(5, p).unwrap()).unwrap();
            assert!(v < last);
            last = v;
        }
        assert!(last < 0.02);
    }

    #[test]
    fn telescoping_identity() {
        let mut rng = trial_rng(24, 0);
        for _ in 0..200 {
            let inst = random_instance(&mut rng, 15);
            let sol = ruin_linear_solution(&inst).unwrap();
            let a = inst.a();
            let p_last = sol[a]; // P_{a-1}
            for i in 1..a {
                let prod: f64 = (i..a).map(|j| odds(inst.forward(j))).product();
                let lhs = sol[i] - sol[i + 1]; // P_{i-1} - P_i
                assert!((lhs - prod * p_last).abs() <= 1e-10, "{inst:?} i={i}");
            }
        }
    }

    #[test]
    fn monte_carlo_agrees() {
        let inst = RuinInstance::new(1, 0.9, vec![]).unwrap();
        assert!(ruin_mc(&inst, 100_000, 1).within(0.1, 3.0));
        let inst = RuinInstance::new(4, 0.55, vec![0.6, 0.7, 0.8]).unwrap();
        let exact = ruin_probability(&inst).unwrap();
        assert!(ruin_mc(&inst, 1_000_000, 2).within(exact, 3.0));
    }
}
