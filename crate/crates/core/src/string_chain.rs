//! The Markov chain on Pauli strings induced by one random two-qubit gate.
//!
//! A step picks an ordered pair of distinct sites (i, j). If both carry the
//! identity nothing happens; otherwise the pair is replaced by one of the 15
//! nonzero two-site labels uniformly. The chain splits as
//! `Q = 2/5·R̃ + 3/5·Q̃` where R̃ keeps the weight of the pair (relabeling
//! its nonzero symbols and possibly swapping the two sites) and Q̃ always
//! changes the pair's weight class. The two parts commute, so `t` steps of
//! Q can be sampled as Binomial(t, 3/5) steps of Q̃ followed by the rest as
//! steps of R̃.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::pauli::PauliString;
use crate::stats::{chi_square_uniform, run_trials_exact, ChiSquare};

/// Largest site count for dense or sparse matrices over all 4^n strings.
pub const MATRIX_GUARD: usize = 6;
/// Largest site count for [`verify_commutation`].
pub const COMMUTATION_GUARD: usize = 4;
/// Largest site count for [`empirical_uniformity`].
pub const SHELL_GUARD: usize = 10;

#[inline]
fn ordered_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

/// One step of Q in place.
#[inline]
pub fn q_step<R: Rng + ?Sized>(p: &mut PauliString, rng: &mut R) {
    let (i, j) = ordered_pair(p.len(), rng);
    if p.get(i) == 0 && p.get(j) == 0 {
        return;
    }
    let label: u8 = rng.random_range(1..16);
    p.set(i, label >> 2);
    p.set(j, label & 3);
}

/// One step of R̃ in place. Never changes the weight.
pub fn r_tilde_step<R: Rng + ?Sized>(p: &mut PauliString, rng: &mut R) {
    let (i, j) = ordered_pair(p.len(), rng);
    let (a, b) = (p.get(i), p.get(j));
    match (a != 0, b != 0) {
        (false, false) => {}
        (true, true) => {
            // R draws both symbols uniformly; the optional swap of two iid
            // uniform symbols leaves that law unchanged.
            p.set(i, rng.random_range(1..=3));
            p.set(j, rng.random_range(1..=3));
        }
        _ => {
            let fresh = rng.random_range(1..=3);
            let (keep_zero, nonzero) = if a == 0 { (i, j) } else { (j, i) };
            let (zero_site, new_site) = if rng.random_bool(0.5) {
                (keep_zero, nonzero)
            } else {
                (nonzero, keep_zero)
            };
            p.set(zero_site, 0);
            p.set(new_site, fresh);
        }
    }
}

/// One step of Q̃ in place. Always changes the weight of a nonzero pair.
pub fn q_tilde_step<R: Rng + ?Sized>(p: &mut PauliString, rng: &mut R) {
    let (i, j) = ordered_pair(p.len(), rng);
    let (a, b) = (p.get(i), p.get(j));
    match (a != 0, b != 0) {
        (false, false) => {}
        (true, true) => {
            if rng.random_bool(2.0 / 3.0) {
                let fresh = rng.random_range(1..=3);
                if rng.random_bool(0.5) {
                    p.set(i, fresh);
                    p.set(j, 0);
                } else {
                    p.set(i, 0);
                    p.set(j, fresh);
                }
            } else {
                p.set(i, rng.random_range(1..=3));
                p.set(j, rng.random_range(1..=3));
            }
        }
        _ => {
            p.set(i, rng.random_range(1..=3));
            p.set(j, rng.random_range(1..=3));
        }
    }
}

/// Samples Q^t(μ, ·) via the commuting decomposition.
pub fn two_phase_sample<R: Rng + ?Sized>(mu: &PauliString, t: u64, rng: &mut R) -> PauliString {
    let mut p = mu.clone();
    if t == 0 {
        return p;
    }
    let weight_changing = Binomial::new(t, 0.6).expect("valid binomial").sample(rng);
    for _ in 0..weight_changing {
        q_tilde_step(&mut p, rng);
    }
    for _ in weight_changing..t {
        r_tilde_step(&mut p, rng);
    }
    p
}

/// `t` steps of Q.
pub fn q_trajectory<R: Rng + ?Sized>(mu: &PauliString, t: u64, rng: &mut R) -> PauliString {
    let mut p = mu.clone();
    for _ in 0..t {
        q_step(&mut p, rng);
    }
    p
}

/// Which per-pair rule a [`TransitionMatrix`] was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Q,
    RTilde,
    QTilde,
}

impl Kind {
    /// Common denominator of the per-pair rule.
    fn pair_denominator(self) -> u64 {
        match self {
            Kind::Q => 15,
            Kind::RTilde => 18,
            Kind::QTilde => 27,
        }
    }

    /// Integer weights (over the pair denominator) of the new pair labels.
    fn pair_rule(self, a: u8, b: u8, out: &mut Vec<(u8, u8, u64)>) {
        out.clear();
        let d = self.pair_denominator();
        if a == 0 && b == 0 {
            out.push((0, 0, d));
            return;
        }
        let both = a != 0 && b != 0;
        let weight_two = |out: &mut Vec<(u8, u8, u64)>, w: u64| {
            for x in 1..=3 {
                for y in 1..=3 {
                    out.push((x, y, w));
                }
            }
        };
        let weight_one = |out: &mut Vec<(u8, u8, u64)>, w: u64| {
            for x in 1..=3 {
                out.push((0, x, w));
                out.push((x, 0, w));
            }
        };
        match (self, both) {
            (Kind::Q, _) => {
                weight_one(out, 1);
                weight_two(out, 1);
            }
            (Kind::RTilde, false) => weight_one(out, 3),
            (Kind::RTilde, true) => weight_two(out, 2),
            (Kind::QTilde, false) => weight_two(out, 3),
            (Kind::QTilde, true) => {
                weight_one(out, 3);
                weight_two(out, 1);
            }
        }
    }
}

/// Sparse transition matrix over all 4^n strings with exact integer
/// numerators over a common denominator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMatrix {
    n: usize,
    kind: Kind,
    denominator: u64,
    rows: Vec<Vec<(u32, u64)>>,
}

/// The chain Q as a matrix.
pub type QMatrix = TransitionMatrix;

pub fn build_q_matrix(n: usize) -> Result<QMatrix> {
    TransitionMatrix::build(n, Kind::Q)
}

impl TransitionMatrix {
    /// Averages the per-pair rule over the n(n−1) ordered pairs.
    pub fn build(n: usize, kind: Kind) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("string chain needs n >= 2, got {n}")));
        }
        if n > MATRIX_GUARD {
            return Err(Error::capacity("string chain sites", n, MATRIX_GUARD));
        }
        let dim = 1usize << (2 * n);
        let mut scratch = vec![0u64; dim];
        let mut touched = Vec::new();
        let mut outputs = Vec::with_capacity(16);
        let mut rows = Vec::with_capacity(dim);
        for mu in 0..dim {
            let p = PauliString::from_index(n, mu as u64);
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    kind.pair_rule(p.get(i), p.get(j), &mut outputs);
                    for &(x, y, w) in &outputs {
                        let mut q = p.clone();
                        q.set(i, x);
                        q.set(j, y);
                        let nu = q.index() as usize;
                        if scratch[nu] == 0 {
                            touched.push(nu);
                        }
                        scratch[nu] += w;
                    }
                }
            }
            touched.sort_unstable();
            let row: Vec<(u32, u64)> = touched.iter().map(|&nu| (nu as u32, scratch[nu])).collect();
            for &nu in &touched {
                scratch[nu] = 0;
            }
            touched.clear();
            rows.push(row);
        }
        Ok(TransitionMatrix {
            n,
            kind,
            denominator: kind.pair_denominator() * (n * (n - 1)) as u64,
            rows,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    /// Nonzero numerators of row `mu`, sorted by column.
    pub fn row_numerators(&self, mu: usize) -> &[(u32, u64)] {
        &self.rows[mu]
    }

    pub fn numerator(&self, mu: usize, nu: usize) -> u64 {
        let row = &self.rows[mu];
        row.binary_search_by_key(&(nu as u32), |&(c, _)| c)
            .map(|pos| row[pos].1)
            .unwrap_or(0)
    }

    pub fn prob(&self, mu: usize, nu: usize) -> f64 {
        self.numerator(mu, nu) as f64 / self.denominator as f64
    }

    /// Dense row `mu` as probabilities.
    pub fn row(&self, mu: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for &(nu, w) in &self.rows[mu] {
            out[nu as usize] = w as f64 / self.denominator as f64;
        }
        out
    }

    pub fn push_forward(&self, dist: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let scale = 1.0 / self.denominator as f64;
        for (mu, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for &(nu, w) in &self.rows[mu] {
                out[nu as usize] += mass * w as f64 * scale;
            }
        }
    }

    /// Row `mu` of the t-th power.
    pub fn row_power(&self, mu: usize, t: u64) -> Vec<f64> {
        let mut dist = vec![0.0; self.dim()];
        dist[mu] = 1.0;
        let mut next = vec![0.0; self.dim()];
        for _ in 0..t {
            self.push_forward(&dist, &mut next);
            std::mem::swap(&mut dist, &mut next);
        }
        dist
    }

    /// Numerators of Σ_{ν : |ν| = k} M(μ, ν) for k = 0..=n.
    pub fn weight_marginal(&self, mu: usize) -> Vec<u64> {
        let mut out = vec![0u64; self.n + 1];
        for &(nu, w) in &self.rows[mu] {
            out[PauliString::from_index(self.n, nu as u64).weight()] += w;
        }
        out
    }

    /// Exact numerators of `self · other`, over `self.denominator() · other.denominator()`.
    pub fn product_numerators(&self, other: &TransitionMatrix) -> Vec<Vec<(u32, u64)>> {
        assert_eq!(self.n, other.n);
        let dim = self.dim();
        let mut acc = vec![0u64; dim];
        let mut touched = Vec::new();
        self.rows
            .iter()
            .map(|row| {
                for &(mid, w1) in row {
                    for &(nu, w2) in &other.rows[mid as usize] {
                        if acc[nu as usize] == 0 {
                            touched.push(nu);
                        }
                        acc[nu as usize] += w1 * w2;
                    }
                }
                touched.sort_unstable();
                let out = touched.iter().map(|&nu| (nu, acc[nu as usize])).collect();
                for &nu in &touched {
                    acc[nu as usize] = 0;
                }
                touched.clear();
                out
            })
            .collect()
    }

    /// Triplet export `mu,nu,prob` with textual Pauli strings.
    pub fn write_triplets<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "mu,nu,prob")?;
        for (mu, row) in self.rows.iter().enumerate() {
            let ms = PauliString::from_index(self.n, mu as u64);
            for &(nu, num) in row {
                let ns = PauliString::from_index(self.n, nu as u64);
                writeln!(w, "{ms},{ns},{}", num as f64 / self.denominator as f64)?;
            }
        }
        Ok(())
    }
}

/// Largest entrywise |R̃Q̃ − Q̃R̃|, computed from exact integer products.
pub fn verify_commutation(n: usize) -> Result<f64> {
    if n > COMMUTATION_GUARD {
        return Err(Error::capacity("commutation check sites", n, COMMUTATION_GUARD));
    }
    let r = TransitionMatrix::build(n, Kind::RTilde)?;
    let q = TransitionMatrix::build(n, Kind::QTilde)?;
    let rq = r.product_numerators(&q);
    let qr = q.product_numerators(&r);
    let denom = (r.denominator() * q.denominator()) as f64;
    let mut worst = 0u64;
    for (a, b) in rq.iter().zip(&qr) {
        let mut dense_a = std::collections::BTreeMap::new();
        for &(c, w) in a {
            dense_a.insert(c, w);
        }
        for &(c, w) in b {
            let v = dense_a.remove(&c).unwrap_or(0);
            worst = worst.max(v.abs_diff(w));
        }
        worst = dense_a.values().copied().fold(worst, u64::max);
    }
    Ok(worst as f64 / denom)
}

/// Size of the overlap between the current support and a reference support,
/// both of size `k`, under R̃.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntersectionChain {
    n: usize,
    k: usize,
    overlap: usize,
}

impl IntersectionChain {
    pub fn new(n: usize, k: usize, overlap: usize) -> Result<Self> {
        if n < 2 || k > n {
            return Err(Error::domain(format!("need 2 <= n and k <= n, got n = {n}, k = {k}")));
        }
        let lo = (2 * k).saturating_sub(n);
        if overlap < lo || overlap > k {
            return Err(Error::domain(format!(
                "overlap {overlap} outside [{lo}, {k}] for n = {n}, k = {k}"
            )));
        }
        Ok(IntersectionChain { n, k, overlap })
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    /// (down, up) probabilities from the current state.
    pub fn rates(&self) -> (f64, f64) {
        rates(self.n, self.k, self.overlap)
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let (down, up) = self.rates();
        if !(0.0..=1.0).contains(&down) || !(0.0..=1.0).contains(&up) || down + up > 1.0 {
            return Err(Error::Internal(format!("invalid rates {down}, {up} at {self:?}")));
        }
        let u: f64 = rng.random();
        if u < down {
            self.overlap -= 1;
        } else if u < down + up {
            self.overlap += 1;
        }
        Ok(())
    }
}

/// `(I(n−2k+I), (k−I)²) / n(n−1)`.
pub fn rates(n: usize, k: usize, overlap: usize) -> (f64, f64) {
    let nn = (n * (n - 1)) as f64;
    let i = overlap as f64;
    let down = i * (n as f64 - 2.0 * k as f64 + i) / nn;
    let up = (k as f64 - i).powi(2) / nn;
    (down, up)
}

/// Hypergeometric law C(k,j)·C(n−k,k−j)/C(n,k) for j = 0..=k.
pub fn hypergeometric_law(n: usize, k: usize) -> Vec<f64> {
    use crate::weight_chain::binomial::ln_binomial;
    let total = ln_binomial(n, k);
    (0..=k)
        .map(|j| {
            if k - j > n - k {
                0.0
            } else {
                (ln_binomial(k, j) + ln_binomial(n - k, k - j) - total).exp()
            }
        })
        .collect()
}

/// Chi-square test of one weight shell against the uniform law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellTest {
    pub k: usize,
    pub shell_size: usize,
    pub samples: u64,
    /// `None` when no sample landed in the shell.
    pub test: Option<ChiSquare>,
}

impl ShellTest {
    pub fn rejected_at(&self, alpha: f64) -> bool {
        self.test.is_some_and(|t| t.p_value < alpha)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformityReport {
    pub start: PauliString,
    pub t: u64,
    pub trials: u64,
    pub seed: u64,
    pub shells: Vec<ShellTest>,
}

/// Runs `trials` independent Q trajectories of length `t` from `mu` and
/// tests, for every weight shell, whether the endpoints that landed in it are
/// uniform over the shell's 3^k·C(n,k) strings.
pub fn empirical_uniformity(mu: &PauliString, t: u64, trials: u64, seed: u64) -> Result<UniformityReport> {
    let n = mu.len();
    if n < 2 {
        return Err(Error::domain(format!("string chain needs n >= 2, got {n}")));
    }
    if n > SHELL_GUARD {
        return Err(Error::capacity("shell test sites", n, SHELL_GUARD));
    }
    let dim = 1usize << (2 * n);
    let counts = run_trials_exact(
        trials,
        seed,
        || vec![0u64; dim],
        |acc, _, rng| {
            let end = q_trajectory(mu, t, rng);
            acc[end.index() as usize] += 1;
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    );
    let mut shells: Vec<Vec<u64>> = vec![Vec::new(); n + 1];
    for (idx, &c) in counts.iter().enumerate() {
        shells[PauliString::from_index(n, idx as u64).weight()].push(c);
    }
    let shells = shells
        .into_iter()
        .enumerate()
        .skip(1)
        .map(|(k, cells)| ShellTest {
            k,
            shell_size: cells.len(),
            samples: cells.iter().sum(),
            test: chi_square_uniform(&cells),
        })
        .collect();
    Ok(UniformityReport { start: mu.clone(), t, trials, seed, shells })
}
