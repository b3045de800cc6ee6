//! Binomial coefficients and the binary entropy estimates used to reason
//! about the weight chain's stationary law.

use statrs::function::factorial::ln_binomial as statrs_ln_binomial;

/// ln C(n, k); `-inf` when k > n.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    statrs_ln_binomial(n as u64, k as u64)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    ln_binomial(n, k).exp().round()
}

/// Binary entropy in bits, h(0) = h(1) = 0.
pub fn binary_entropy(alpha: f64) -> f64 {
    let term = |p: f64| if p <= 0.0 { 0.0 } else { -p * p.log2() };
    term(alpha) + term(1.0 - alpha)
}

/// log₂ Σ_{k ≤ m} C(n, k).
pub fn log2_binomial_prefix_sum(n: usize, m: usize) -> f64 {
    let logs: Vec<f64> = (0..=m.min(n)).map(|k| ln_binomial(n, k)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logs.iter().map(|&x| (x - max).exp()).sum();
    (max + s.ln()) / std::f64::consts::LN_2
}

/// Which of the four estimates a [`Violation`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimate {
    /// Σ_{k ≤ αn} C(n,k) ≤ 2^{n·h(α)}, for α ≤ 1/2.
    PrefixSum,
    /// C(n, αn) ≥ 2^{n·h(α)} / (n+1).
    CentralLower,
    /// |h(α+δ) − h(α)| ≤ h(δ).
    EntropyShift,
    /// h(α) ≤ 2√(α(1−α)).
    EntropySqrt,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub estimate: Estimate,
    pub n: usize,
    pub alpha: f64,
    pub delta: f64,
    /// rhs − lhs in the estimate's natural units (negative when violated).
    pub margin: f64,
}

const TOL: f64 = 1e-12;

/// Checks the four estimates on the grid α = k/n for every n in `ns` and
/// every integer k with α in [0.01, 0.99], and on α, δ in {0.01, …, 0.99}
/// for the entropy-only ones. Returns every violation found.
pub fn check_estimates(ns: impl IntoIterator<Item = usize>) -> Vec<Violation> {
    let mut out = Vec::new();
    for n in ns {
        for k in 0..=n {
            let alpha = k as f64 / n as f64;
            if !(0.01 - 1e-12..=0.99 + 1e-12).contains(&alpha) {
                continue;
            }
            let nh = n as f64 * binary_entropy(alpha);
            if 2 * k <= n {
                let margin = nh - log2_binomial_prefix_sum(n, k);
                if margin < -TOL * nh.max(1.0) {
                    out.push(Violation { estimate: Estimate::PrefixSum, n, alpha, delta: 0.0, margin });
                }
            }
            let log2c = ln_binomial(n, k) / std::f64::consts::LN_2;
            let margin = log2c - (nh - ((n + 1) as f64).log2());
            if margin < -TOL * nh.max(1.0) {
                out.push(Violation { estimate: Estimate::CentralLower, n, alpha, delta: 0.0, margin });
            }
        }
    }
    for a in 1..=99 {
        let alpha = a as f64 / 100.0;
        let margin = 2.0 * (alpha * (1.0 - alpha)).sqrt() - binary_entropy(alpha);
        if margin < -TOL {
            out.push(Violation { estimate: Estimate::EntropySqrt, n: 0, alpha, delta: 0.0, margin });
        }
        for d in 1..=(100 - a) {
            let delta = d as f64 / 100.0;
            let margin = binary_entropy(delta) - (binary_entropy(alpha + delta) - binary_entropy(alpha)).abs();
            if margin < -TOL {
                out.push(Violation { estimate: Estimate::EntropyShift, n: 0, alpha, delta, margin });
            }
        }
    }
    out
}
