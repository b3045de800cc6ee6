//! Sequential random circuits and their greedy parallelisation.
//!
//! A circuit is an ordered list of two-qubit gates on qubits `0..n`
//! (printed 1-based). Leveling walks the list once, appending each gate to
//! the current level until a gate touches a qubit already used there, at
//! which point a new level opens. The number of levels is the depth.

use std::fmt;
use std::ops::Range;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::stats::{run_trials, Estimate, Histogram};

/// An unordered pair of distinct qubits, stored with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Gate {
    lo: u32,
    hi: u32,
}

impl Gate {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a == b {
            return Err(Error::domain(format!("gate acts twice on qubit {}", a + 1)));
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        Ok(Gate { lo: lo as u32, hi: hi as u32 })
    }

    pub fn qubits(&self) -> (usize, usize) {
        (self.lo as usize, self.hi as usize)
    }

    pub fn touches(&self, q: usize) -> bool {
        self.lo as usize == q || self.hi as usize == q
    }

    pub fn overlaps(&self, other: &Gate) -> bool {
        self.touches(other.lo as usize) || self.touches(other.hi as usize)
    }

    /// Uniform over the C(n,2) unordered pairs.
    pub fn sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Gate {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        Gate::new(a, b).expect("distinct qubits")
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{},{}}}", self.lo + 1, self.hi + 1)
    }
}

/// A fixed two-qubit unitary attached to a gate, row-major in the basis
/// |lo hi⟩ with the lower-indexed qubit as the more significant bit.
#[derive(Debug, Clone, PartialEq)]
pub enum GateLabel {
    Identity,
    Unitary(Box<[Complex64; 16]>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n: usize,
    gates: Vec<Gate>,
    labels: Option<Vec<GateLabel>>,
}

impl Circuit {
    pub fn new(n: usize, gates: Vec<Gate>) -> Result<Self> {
        if let Some(g) = gates.iter().find(|g| g.hi as usize >= n) {
            return Err(Error::domain(format!("gate {g} outside {n} qubits")));
        }
        Ok(Circuit { n, gates, labels: None })
    }

    /// Builds from 1-based qubit pairs.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let gates = pairs
            .iter()
            .map(|&(a, b)| {
                if a == 0 || b == 0 {
                    return Err(Error::domain("qubits are numbered from 1"));
                }
                Gate::new(a - 1, b - 1)
            })
            .collect::<Result<Vec<_>>>()?;
        Circuit::new(n, gates)
    }

    pub fn with_labels(mut self, labels: Vec<GateLabel>) -> Result<Self> {
        if labels.len() != self.gates.len() {
            return Err(Error::domain(format!(
                "{} labels for {} gates",
                labels.len(),
                self.gates.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn labels(&self) -> Option<&[GateLabel]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// The circuit made of the first `len` gates.
    pub fn prefix(&self, len: usize) -> Circuit {
        Circuit {
            n: self.n,
            gates: self.gates[..len].to_vec(),
            labels: self.labels.as_ref().map(|l| l[..len].to_vec()),
        }
    }
}

/// `t` independent gates, each uniform over the unordered pairs.
pub fn sample_sequential<R: Rng + ?Sized>(n: usize, t: usize, rng: &mut R) -> Result<Circuit> {
    if n < 2 {
        return Err(Error::domain(format!("need at least 2 qubits, got {n}")));
    }
    let gates = (0..t).map(|_| Gate::sample(n, rng)).collect();
    Circuit::new(n, gates)
}

/// Consecutive runs of gates forming the levels of the greedy schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Levels {
    bounds: Vec<Range<usize>>,
}

impl Levels {
    pub fn depth(&self) -> usize {
        self.bounds.len()
    }

    /// Gate index ranges, one per level.
    pub fn ranges(&self) -> &[Range<usize>] {
        &self.bounds
    }

    pub fn level<'c>(&self, circuit: &'c Circuit, i: usize) -> &'c [Gate] {
        &circuit.gates[self.bounds[i].clone()]
    }
}

/// Greedy leveling of the gate sequence.
pub fn parallelize(circuit: &Circuit) -> Levels {
    let mut stamp = vec![usize::MAX; circuit.n];
    let mut bounds = Vec::new();
    let mut start = 0;
    for (k, g) in circuit.gates.iter().enumerate() {
        let level = bounds.len();
        let (a, b) = g.qubits();
        if stamp[a] == level || stamp[b] == level {
            bounds.push(start..k);
            start = k;
        }
        let level = bounds.len();
        stamp[a] = level;
        stamp[b] = level;
    }
    if start < circuit.gates.len() {
        bounds.push(start..circuit.gates.len());
    }
    Levels { bounds }
}

/// Depth of the greedy schedule without materialising the levels.
pub fn greedy_depth(n: usize, gates: &[Gate]) -> usize {
    let mut stamp = vec![0usize; n];
    let mut depth = 0;
    for g in gates {
        let (a, b) = g.qubits();
        if depth == 0 || stamp[a] == depth || stamp[b] == depth {
            depth += 1;
        }
        stamp[a] = depth;
        stamp[b] = depth;
    }
    depth
}

/// Smallest depth any schedule of `t` gates on `n` qubits can have.
pub fn depth_lower_bound(n: usize, t: usize) -> usize {
    t.div_ceil(n / 2)
}

/// Default number of attempts in [`sample_rqc_td`].
pub const DEFAULT_REJECTION_CAP: usize = 10_000;

/// A depth-constrained circuit and the number of discarded draws.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthLimited {
    pub circuit: Circuit,
    pub levels: Levels,
    pub rejections: usize,
}

/// Draws sequential circuits until the greedy depth is at most `d`.
pub fn sample_rqc_td<R: Rng + ?Sized>(
    n: usize,
    t: usize,
    d: usize,
    cap: usize,
    rng: &mut R,
) -> Result<DepthLimited> {
    if n < 2 {
        return Err(Error::domain(format!("need at least 2 qubits, got {n}")));
    }
    let floor = depth_lower_bound(n, t);
    if d < floor {
        return Err(Error::domain(format!(
            "depth {d} is below ⌈t/⌊n/2⌋⌉ = {floor} for t = {t}, n = {n}"
        )));
    }
    for rejections in 0..cap {
        let circuit = sample_sequential(n, t, rng)?;
        let levels = parallelize(&circuit);
        if levels.depth() <= d {
            return Ok(DepthLimited { circuit, levels, rejections });
        }
    }
    Err(Error::RejectionCap {
        cap,
        detail: format!("no circuit with n = {n}, t = {t} reached depth <= {d}"),
    })
}

/// Histogram of greedy depths of `trials` sequential circuits.
pub fn depth_tail_mc(n: usize, t: usize, trials: u64, seed: u64) -> Result<Histogram> {
    if n < 2 {
        return Err(Error::domain(format!("need at least 2 qubits, got {n}")));
    }
    Ok(run_trials(
        trials,
        seed,
        Histogram::new,
        |h, _, rng| {
            let gates: Vec<Gate> = (0..t).map(|_| Gate::sample(n, rng)).collect();
            h.record(greedy_depth(n, &gates) as u64);
        },
        Histogram::merge,
    ))
}

/// Frequency with which `k` independent gates form a circuit of depth `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainFrequency {
    pub k: usize,
    pub hits: u64,
    pub trials: u64,
    /// `min(1, (2/n)^{k−1}·k!)`.
    pub bound: f64,
}

impl ChainFrequency {
    pub fn estimate(&self) -> Estimate {
        Estimate::proportion(self.hits, self.trials)
    }

    /// Frequency at most `bound + 3σ`, σ the binomial standard error at the bound.
    pub fn dominated(&self) -> bool {
        let p = self.bound.min(1.0);
        let sigma = (p * (1.0 - p) / self.trials as f64).sqrt();
        self.estimate().mean <= p + 3.0 * sigma
    }
}

pub fn chain_bound(n: usize, k: usize) -> f64 {
    let mut b = 1.0;
    for j in 2..=k {
        b *= 2.0 / n as f64 * j as f64;
    }
    b.min(1.0)
}

/// For each k ≤ `k_max`, the frequency that the first k of a sequence of
/// independent gates have greedy depth k (each gate conflicts with its
/// predecessor). One sequence per trial serves every k.
pub fn conflict_chain_mc(n: usize, k_max: usize, trials: u64, seed: u64) -> Result<Vec<ChainFrequency>> {
    if n < 2 || k_max == 0 {
        return Err(Error::domain("need n >= 2 and k_max >= 1"));
    }
    let hits = run_trials(
        trials,
        seed,
        || vec![0u64; k_max + 1],
        |acc, _, rng| {
            let mut prev = Gate::sample(n, rng);
            acc[1] += 1;
            for k in 2..=k_max {
                let g = Gate::sample(n, rng);
                if !g.overlaps(&prev) {
                    break;
                }
                acc[k] += 1;
                prev = g;
            }
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    );
    Ok((1..=k_max)
        .map(|k| ChainFrequency { k, hits: hits[k], trials, bound: chain_bound(n, k) })
        .collect())
}

/// Frequency with which `t` gates touch every qubit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub n: usize,
    pub t: usize,
    pub covered: u64,
    pub trials: u64,
    /// Union bound `n(1 − 2/n)^t` on the probability of missing a qubit.
    pub bound: f64,
}

impl Coverage {
    pub fn covered_estimate(&self) -> Estimate {
        Estimate::proportion(self.covered, self.trials)
    }

    pub fn uncovered_estimate(&self) -> Estimate {
        Estimate::proportion(self.trials - self.covered, self.trials)
    }
}

pub fn coverage_bound(n: usize, t: usize) -> f64 {
    n as f64 * (t as f64 * (1.0 - 2.0 / n as f64).ln()).exp()
}

pub fn coverage_probability(n: usize, t: usize, trials: u64, seed: u64) -> Result<Coverage> {
    if n < 2 {
        return Err(Error::domain(format!("need at least 2 qubits, got {n}")));
    }
    let covered = run_trials(
        trials,
        seed,
        || 0u64,
        |acc, _, rng| {
            let mut seen = vec![false; n];
            let mut left = n;
            for _ in 0..t {
                let (a, b) = Gate::sample(n, rng).qubits();
                for q in [a, b] {
                    if !seen[q] {
                        seen[q] = true;
                        left -= 1;
                    }
                }
                if left == 0 {
                    break;
                }
            }
            if left == 0 {
                *acc += 1;
            }
        },
        |a, b| a + b,
    );
    Ok(Coverage { n, t, covered, trials, bound: coverage_bound(n, t) })
}
