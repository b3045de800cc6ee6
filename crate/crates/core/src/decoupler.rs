//! Dense density matrices on `n` A-qubits plus one environment block E.
//!
//! Basis ordering: A-qubit 0 is the most significant bit of the full index
//! and E occupies the low `e` bits, so the matrix of ρ_AE is laid out as
//! `A ⊗ E`. Pauli strings on A use the same site order as [`PauliString`].
//!
//! Trace distances are plain Schatten-1 norms `Σ|λ|`, ranging over `[0, 2]`.

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::circuit::{sample_sequential, Circuit, Gate, GateLabel};
use crate::error::{Error, Result};
use crate::pauli::PauliString;
use crate::stats::{chi_square_sf, run_trials, Estimate, Tally};
use crate::string_chain::build_q_matrix;
use crate::weight_chain::binomial::binomial;

/// Largest total number of qubits (A plus E) held densely.
pub const QUBIT_GUARD: usize = 12;
/// Largest environment block.
pub const ENV_GUARD: usize = 4;
/// Largest A register for the Monte Carlo decoupling experiments.
pub const DECOUPLING_A_GUARD: usize = 8;
/// Largest A register for Pauli level sums.
pub const LEVEL_GUARD: usize = 6;
/// Largest register for the moment bridge.
pub const MOMENT_GUARD: usize = 4;
/// Eigenvalues of ρ_E below this are treated as zero.
pub const PSEUDO_INVERSE_CUTOFF: f64 = 1e-12;

const STATE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-9;

type Unitary = [Complex64; 16];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_a: usize,
    e: usize,
    data: DMatrix<Complex64>,
}

fn check_register(n_a: usize, e: usize) -> Result<()> {
    if e > ENV_GUARD {
        return Err(Error::capacity("environment qubits", e, ENV_GUARD));
    }
    if n_a + e > QUBIT_GUARD {
        return Err(Error::capacity("total qubits", n_a + e, QUBIT_GUARD));
    }
    Ok(())
}

fn outer(psi: &DVector<Complex64>) -> DMatrix<Complex64> {
    psi * psi.adjoint()
}

fn random_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<Complex64> {
    let v = DVector::from_fn(dim, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let norm = v.norm();
    v / Complex64::new(norm, 0.0)
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(n_a: usize, e: usize, data: DMatrix<Complex64>) -> Result<Self> {
        check_register(n_a, e)?;
        let dim = 1usize << (n_a + e);
        if data.nrows() != dim || data.ncols() != dim {
            return Err(Error::domain(format!(
                "{}x{} matrix for {} qubits",
                data.nrows(),
                data.ncols(),
                n_a + e
            )));
        }
        let rho = DensityMatrix { n_a, e, data };
        let herm = rho.hermiticity_error();
        if herm > STATE_TOL {
            return Err(Error::domain(format!("not Hermitian: deviation {herm:e}")));
        }
        let tr = rho.trace();
        if (tr - 1.0).abs() > STATE_TOL {
            return Err(Error::domain(format!("trace {tr} is not 1")));
        }
        let min = rho.data.clone().symmetric_eigenvalues().min();
        if min < -PSD_TOL {
            return Err(Error::domain(format!("negative eigenvalue {min:e}")));
        }
        Ok(rho)
    }

    /// |ψ⟩⟨ψ| after normalising ψ.
    pub fn from_pure(n_a: usize, e: usize, psi: &DVector<Complex64>) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::domain("zero state vector"));
        }
        DensityMatrix::new(n_a, e, outer(&(psi / Complex64::new(norm, 0.0))))
    }

    /// |ψ⟩_A ⊗ |φ⟩_E.
    pub fn product_pure(psi_a: &DVector<Complex64>, phi_e: &DVector<Complex64>) -> Result<Self> {
        let n_a = qubits_of(psi_a.len())?;
        let e = qubits_of(phi_e.len())?;
        DensityMatrix::from_pure(n_a, e, &psi_a.kronecker(phi_e))
    }

    /// The first `m` A-qubits maximally entangled with an `m`-qubit E, the
    /// remaining A-qubits in |0⟩.
    pub fn entangled_with_env(n_a: usize, m: usize) -> Result<Self> {
        if m > n_a {
            return Err(Error::domain(format!("cannot entangle {m} of {n_a} qubits")));
        }
        check_register(n_a, m)?;
        let mut psi = DVector::zeros(1usize << (n_a + m));
        let amp = Complex64::new((0.5f64).powf(m as f64 / 2.0), 0.0);
        for j in 0..1usize << m {
            let a_index = j << (n_a - m);
            psi[(a_index << m) | j] = amp;
        }
        DensityMatrix::from_pure(n_a, m, &psi)
    }

    /// (I/2^n) ⊗ ρ_E.
    pub fn mixed_with_env(n_a: usize, rho_e: &DMatrix<Complex64>) -> Result<Self> {
        let e = qubits_of(rho_e.nrows())?;
        check_register(n_a, e)?;
        let dim_a = 1usize << n_a;
        let id = DMatrix::<Complex64>::identity(dim_a, dim_a) / Complex64::new(dim_a as f64, 0.0);
        DensityMatrix::new(n_a, e, id.kronecker(rho_e))
    }

    /// I/2^{n+e}.
    pub fn maximally_mixed(n_a: usize, e: usize) -> Result<Self> {
        check_register(n_a, e)?;
        let dim = 1usize << (n_a + e);
        DensityMatrix::new(n_a, e, DMatrix::identity(dim, dim) / Complex64::new(dim as f64, 0.0))
    }

    /// Haar-random pure state on A ⊗ E.
    pub fn random_pure<R: Rng + ?Sized>(n_a: usize, e: usize, rng: &mut R) -> Result<Self> {
        check_register(n_a, e)?;
        DensityMatrix::from_pure(n_a, e, &random_vector(1usize << (n_a + e), rng))
    }

    /// G G† / tr for a complex Gaussian `dim × rank` matrix G.
    pub fn random_mixed<R: Rng + ?Sized>(n_a: usize, e: usize, rank: usize, rng: &mut R) -> Result<Self> {
        check_register(n_a, e)?;
        let dim = 1usize << (n_a + e);
        if rank == 0 || rank > dim {
            return Err(Error::domain(format!("rank {rank} outside 1..={dim}")));
        }
        let g = DMatrix::from_fn(dim, rank, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let mut m = &g * g.adjoint();
        let tr = m.trace();
        m /= tr;
        hermitize(&mut m);
        DensityMatrix::new(n_a, e, m)
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn e_qubits(&self) -> usize {
        self.e
    }

    /// Subsystem qubit counts: one entry per A-qubit, then E (omitted when empty).
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![1; self.n_a];
        if self.e > 0 {
            d.push(self.e);
        }
        d
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        self.data.trace().re
    }

    pub fn purity(&self) -> f64 {
        frobenius_inner(&self.data, &self.data)
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.data - self.data.adjoint()).camax()
    }

    fn a_bit(&self, q: usize) -> usize {
        self.e + self.n_a - 1 - q
    }

    /// ρ → (U ⊗ I) ρ (U ⊗ I)† for a two-qubit unitary on A-qubits of `gate`.
    pub fn apply_gate(&mut self, gate: Gate, u: &[Complex64; 16]) -> Result<()> {
        let (lo, hi) = gate.qubits();
        if hi >= self.n_a {
            return Err(Error::domain(format!("gate {gate} outside {} A-qubits", self.n_a)));
        }
        let (b_lo, b_hi) = (self.a_bit(lo), self.a_bit(hi));
        conjugate(&mut self.data, b_lo, b_hi, u);
        Ok(())
    }

    /// ρ_E^{-1/4} ρ ρ_E^{-1/4}, with the pseudo-inverse on the kernel of ρ_E.
    pub fn rho_tilde(&self) -> DMatrix<Complex64> {
        let rho_e = self.partial_trace_raw(&[], true);
        let m = spectral_power(&rho_e, -0.25);
        let de = 1usize << self.e;
        let da = 1usize << self.n_a;
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        for a in 0..da {
            for b in 0..da {
                let block = self.data.view((a * de, b * de), (de, de));
                let t = &m * block * &m;
                out.view_mut((a * de, b * de), (de, de)).copy_from(&t);
            }
        }
        hermitize(&mut out);
        out
    }

    /// Keeps the listed A-qubits (sorted, distinct) and optionally E.
    pub fn partial_trace(&self, keep_a: &[usize], keep_e: bool) -> Result<DensityMatrix> {
        if keep_a.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("kept qubits must be sorted and distinct"));
        }
        if let Some(&q) = keep_a.iter().find(|&&q| q >= self.n_a) {
            return Err(Error::domain(format!("qubit {q} outside {} A-qubits", self.n_a)));
        }
        let e = if keep_e { self.e } else { 0 };
        Ok(DensityMatrix {
            n_a: keep_a.len(),
            e,
            data: self.partial_trace_raw(keep_a, keep_e),
        })
    }

    fn partial_trace_raw(&self, keep_a: &[usize], keep_e: bool) -> DMatrix<Complex64> {
        let mut kept: Vec<usize> = keep_a.iter().map(|&q| self.a_bit(q)).collect();
        if keep_e {
            kept.extend((0..self.e).rev());
        }
        partial_trace_bits(&self.data, self.n_a + self.e, &kept)
    }
}

fn qubits_of(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::domain(format!("dimension {dim} is not a power of two")));
    }
    Ok(dim.trailing_zeros() as usize)
}

fn hermitize(m: &mut DMatrix<Complex64>) {
    let h = (&*m + m.adjoint()) * Complex64::new(0.5, 0.0);
    *m = h;
}

/// Re tr[A B] for Hermitian A, B.
fn frobenius_inner(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    s
}

/// f(H) = V diag(λ^p) V† with eigenvalues below the cutoff mapped to zero.
fn spectral_power(h: &DMatrix<Complex64>, p: f64) -> DMatrix<Complex64> {
    let eig = h.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let d = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues
            .iter()
            .map(|&l| if l > PSEUDO_INVERSE_CUTOFF { Complex64::new(l.powf(p), 0.0) } else { ZERO }),
    );
    v * DMatrix::from_diagonal(&d) * v.adjoint()
}

/// Traces out every bit not in `kept`; `kept` lists the surviving bit
/// positions from most to least significant in the output.
fn partial_trace_bits(data: &DMatrix<Complex64>, qubits: usize, kept: &[usize]) -> DMatrix<Complex64> {
    let kept_mask: usize = kept.iter().map(|&b| 1usize << b).sum();
    let traced: Vec<usize> = (0..qubits).filter(|b| kept_mask >> b & 1 == 0).collect();
    let scatter = |x: usize, bits: &[usize]| -> usize {
        bits.iter()
            .enumerate()
            .map(|(i, &b)| ((x >> (bits.len() - 1 - i)) & 1) << b)
            .sum()
    };
    let dk = 1usize << kept.len();
    let dt = 1usize << traced.len();
    let traced_offsets: Vec<usize> = (0..dt).map(|t| scatter(t, &traced)).collect();
    let mut out = DMatrix::zeros(dk, dk);
    for r in 0..dk {
        let rf = scatter(r, kept);
        for c in 0..dk {
            let cf = scatter(c, kept);
            out[(r, c)] = traced_offsets.iter().map(|&t| data[(rf | t, cf | t)]).sum();
        }
    }
    out
}

/// X → U X U† where U acts on bits `b_lo` (more significant in U's basis)
/// and `b_hi` of the row and column index.
fn conjugate(x: &mut DMatrix<Complex64>, b_lo: usize, b_hi: usize, u: &Unitary) {
    let dim = x.nrows();
    let off = [0, 1usize << b_hi, 1usize << b_lo, (1usize << b_lo) | (1usize << b_hi)];
    let mask = off[3];
    let data = x.as_mut_slice();
    for c in 0..dim {
        let col = &mut data[c * dim..(c + 1) * dim];
        for r0 in (0..dim).filter(|r| r & mask == 0) {
            let v = [col[r0], col[r0 | off[1]], col[r0 | off[2]], col[r0 | off[3]]];
            for k in 0..4 {
                col[r0 | off[k]] = u[4 * k] * v[0] + u[4 * k + 1] * v[1] + u[4 * k + 2] * v[2] + u[4 * k + 3] * v[3];
            }
        }
    }
    for c0 in (0..dim).filter(|c| c & mask == 0) {
        for r in 0..dim {
            let v = [
                data[r + c0 * dim],
                data[r + (c0 | off[1]) * dim],
                data[r + (c0 | off[2]) * dim],
                data[r + (c0 | off[3]) * dim],
            ];
            for k in 0..4 {
                data[r + (c0 | off[k]) * dim] = v[0] * u[4 * k].conj()
                    + v[1] * u[4 * k + 1].conj()
                    + v[2] * u[4 * k + 2].conj()
                    + v[3] * u[4 * k + 3].conj();
            }
        }
    }
}

/// ‖ρ − σ‖₁ = Σ|λ(ρ − σ)|.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.n_a != sigma.n_a || rho.e != sigma.e {
        return Err(Error::domain(format!(
            "dimension mismatch: {:?} vs {:?}",
            rho.dims(),
            sigma.dims()
        )));
    }
    Ok(trace_norm(&(&rho.data - &sigma.data)))
}

fn trace_norm(h: &DMatrix<Complex64>) -> f64 {
    h.clone().symmetric_eigenvalues().iter().map(|l| l.abs()).sum()
}

/// H₂(A|E) = −log₂ tr[ρ̃²] in bits.
pub fn h2_conditional(rho: &DensityMatrix) -> f64 {
    let t = rho.rho_tilde();
    -frobenius_inner(&t, &t).log2()
}

/// Which two-qubit gate distribution to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateEnsemble {
    Haar,
    Clifford,
}

impl std::str::FromStr for GateEnsemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "haar" => Ok(GateEnsemble::Haar),
            "clifford" => Ok(GateEnsemble::Clifford),
            other => Err(Error::domain(format!("unknown gate ensemble {other:?}"))),
        }
    }
}

impl std::fmt::Display for GateEnsemble {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GateEnsemble::Haar => "haar",
            GateEnsemble::Clifford => "clifford",
        })
    }
}

/// A 4×4 unitary, row-major, first qubit as the more significant bit.
pub fn sample_gate<R: Rng + ?Sized>(ens: GateEnsemble, rng: &mut R) -> [Complex64; 16] {
    match ens {
        GateEnsemble::Haar => haar_unitary(rng),
        GateEnsemble::Clifford => {
            let group = clifford_group();
            group[rng.random_range(0..group.len())]
        }
    }
}

fn haar_unitary<R: Rng + ?Sized>(rng: &mut R) -> Unitary {
    let g = DMatrix::from_fn(4, 4, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..4 {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..4 {
            q[(i, j)] *= phase;
        }
    }
    std::array::from_fn(|k| q[(k / 4, k % 4)])
}

fn mat_mul(a: &Unitary, b: &Unitary) -> Unitary {
    std::array::from_fn(|k| {
        let (i, j) = (k / 4, k % 4);
        (0..4).map(|m| a[4 * i + m] * b[4 * m + j]).sum()
    })
}

/// Rotates the global phase so the first nonzero entry is real positive.
fn canonical_phase(u: &Unitary) -> Unitary {
    let pivot = u.iter().find(|z| z.norm() > 1e-6).copied().unwrap_or(ONE);
    let phase = pivot.conj() / pivot.norm();
    std::array::from_fn(|k| u[k] * phase)
}

fn phase_key(u: &Unitary) -> [(i64, i64); 16] {
    std::array::from_fn(|k| ((u[k].re * 1e6).round() as i64, (u[k].im * 1e6).round() as i64))
}

/// The two-qubit Clifford group modulo global phase, generated by H and S
/// on each qubit and a CNOT.
pub fn clifford_group() -> &'static [[Complex64; 16]] {
    static GROUP: OnceLock<Vec<Unitary>> = OnceLock::new();
    GROUP.get_or_init(|| {
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        let h = [[s2, s2], [s2, -s2]].map(|r| r.map(|x| Complex64::new(x, 0.0)));
        let s = [[ONE, ZERO], [ZERO, Complex64::new(0.0, 1.0)]];
        let id = [[ONE, ZERO], [ZERO, ONE]];
        let kron = |a: [[Complex64; 2]; 2], b: [[Complex64; 2]; 2]| -> Unitary {
            std::array::from_fn(|k| {
                let (i, j) = (k / 4, k % 4);
                a[i / 2][j / 2] * b[i % 2][j % 2]
            })
        };
        let mut cnot = [ZERO; 16];
        for (row, col) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
            cnot[4 * row + col] = ONE;
        }
        let generators = [kron(h, id), kron(id, h), kron(s, id), kron(id, s), cnot];
        let mut identity = [ZERO; 16];
        for i in 0..4 {
            identity[5 * i] = ONE;
        }
        let mut seen = HashMap::new();
        let mut elements = vec![identity];
        seen.insert(phase_key(&identity), 0usize);
        let mut head = 0;
        while head < elements.len() {
            let current = elements[head];
            head += 1;
            for g in &generators {
                let next = canonical_phase(&mat_mul(g, &current));
                let key = phase_key(&next);
                if !seen.contains_key(&key) {
                    seen.insert(key, elements.len());
                    elements.push(next);
                }
            }
        }
        elements
    })
}

/// Applies the circuit's gates to the A register. Gates carrying labels use
/// them; unlabelled gates draw a fresh unitary from `ens`.
pub fn apply_circuit<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    circuit: &Circuit,
    ens: GateEnsemble,
    rng: &mut R,
) -> Result<DensityMatrix> {
    if circuit.n() != rho.n_a {
        return Err(Error::domain(format!(
            "circuit on {} qubits applied to {} A-qubits",
            circuit.n(),
            rho.n_a
        )));
    }
    let mut out = rho.clone();
    for (i, &gate) in circuit.gates().iter().enumerate() {
        match circuit.labels().map(|l| &l[i]) {
            Some(GateLabel::Identity) => {}
            Some(GateLabel::Unitary(u)) => out.apply_gate(gate, u)?,
            None => out.apply_gate(gate, &sample_gate(ens, rng))?,
        }
    }
    Ok(out)
}

/// Mean trace distance at one circuit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecouplingPoint {
    pub t: usize,
    pub error: Estimate,
}

/// Monte Carlo average of ‖tr_{S^c}[U ρ U†] − I/2^{|S|} ⊗ ρ_E‖₁ after `t` gates.
pub fn decoupling_error(
    rho: &DensityMatrix,
    keep: &[usize],
    t: usize,
    ens: GateEnsemble,
    trials: u64,
    seed: u64,
) -> Result<Estimate> {
    Ok(decoupling_curve(rho, keep, &[t], ens, trials, seed)?[0].error)
}

/// [`decoupling_error`] at several lengths. Each trial draws one circuit of
/// the largest length and measures along its prefixes.
pub fn decoupling_curve(
    rho: &DensityMatrix,
    keep: &[usize],
    ts: &[usize],
    ens: GateEnsemble,
    trials: u64,
    seed: u64,
) -> Result<Vec<DecouplingPoint>> {
    if rho.n_a > DECOUPLING_A_GUARD {
        return Err(Error::capacity("decoupling A-qubits", rho.n_a, DECOUPLING_A_GUARD));
    }
    if rho.n_a < 2 {
        return Err(Error::domain("decoupling needs at least 2 A-qubits"));
    }
    let mut order: Vec<usize> = (0..ts.len()).collect();
    order.sort_by_key(|&i| ts[i]);
    let rho_e = rho.partial_trace_raw(&[], true);
    let da = 1usize << keep.len();
    let target = DensityMatrix {
        n_a: keep.len(),
        e: rho.e,
        data: DMatrix::<Complex64>::identity(da, da).kronecker(&rho_e) / Complex64::new(da as f64, 0.0),
    };
    // validates `keep`
    rho.partial_trace(keep, true)?;
    let t_max = ts.iter().copied().max().unwrap_or(0);
    let tallies = run_trials(
        trials,
        seed,
        || vec![Tally::default(); ts.len()],
        |acc, _, rng| {
            let mut state = rho.clone();
            let mut applied = 0;
            for &i in &order {
                while applied < ts[i] {
                    let gate = Gate::sample(state.n_a, rng);
                    let u = sample_gate(ens, rng);
                    state.apply_gate(gate, &u).expect("gate inside register");
                    applied += 1;
                }
                let reduced = state.partial_trace(keep, true).expect("validated subset");
                acc[i].push(trace_distance(&reduced, &target).expect("matching dims"));
            }
            debug_assert!(applied <= t_max);
        },
        |a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect(),
    );
    Ok(ts
        .iter()
        .zip(tallies)
        .map(|(&t, tally)| DecouplingPoint { t, error: tally.estimate() })
        .collect())
}

/// tr_A[σ_ν X] for an operator X on `n_a` A-qubits ⊗ `e` E-qubits.
fn contract_pauli(x: &DMatrix<Complex64>, n_a: usize, e: usize, nu: &PauliString) -> DMatrix<Complex64> {
    let mono = nu.monomial();
    let de = 1usize << e;
    let mut y = DMatrix::zeros(de, de);
    for b in 0..1usize << n_a {
        let (bx, phase) = mono.apply(b);
        let block = x.view((b * de, bx * de), (de, de));
        y += block * phase;
    }
    y
}

/// Σ_{|ν|=ℓ} tr[(tr_A[σ_ν X])²] for every ℓ = 0..=n_a.
pub fn pauli_operator_masses(x: &DMatrix<Complex64>, n_a: usize, e: usize) -> Result<Vec<f64>> {
    if n_a > LEVEL_GUARD {
        return Err(Error::capacity("level-mass A-qubits", n_a, LEVEL_GUARD));
    }
    if x.nrows() != 1usize << (n_a + e) || !x.is_square() {
        return Err(Error::domain("operator does not match the register"));
    }
    let mut masses = vec![0.0; n_a + 1];
    for idx in 0..1u64 << (2 * n_a) {
        let nu = PauliString::from_index(n_a, idx);
        let y = contract_pauli(x, n_a, e, &nu);
        masses[nu.weight()] += (&y * &y).trace().re;
    }
    Ok(masses)
}

/// Σ_{|ν|=ℓ} tr[(tr_A[σ_ν ρ̃])²].
pub fn pauli_level_mass(rho: &DensityMatrix, level: usize) -> Result<f64> {
    if level > rho.n_a {
        return Err(Error::domain(format!("level {level} above {} A-qubits", rho.n_a)));
    }
    Ok(pauli_operator_masses(&rho.rho_tilde(), rho.n_a, rho.e)?[level])
}

/// Level masses against `12 n⁴ (3 − η)^ℓ C(n, ℓ)` with the largest η for
/// which every level ℓ ≥ 1 satisfies the bound.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    pub n: usize,
    pub masses: Vec<f64>,
    /// log₂ tr[ρ̃²] / n, so the state has tr[ρ̃²] = 2^{(1−ε)n} with ε = 1 − this.
    pub purity_exponent: f64,
    pub eta: f64,
    pub bounds: Vec<f64>,
    pub holds: bool,
}

pub fn level_report(rho: &DensityMatrix) -> Result<LevelReport> {
    let n = rho.n_a;
    let t = rho.rho_tilde();
    let masses = pauli_operator_masses(&t, n, rho.e)?;
    let prefactor = 12.0 * (n as f64).powi(4);
    let mut eta: f64 = 3.0;
    for (l, &m) in masses.iter().enumerate().skip(1) {
        if m > 0.0 {
            let base = (m / (prefactor * binomial(n, l))).powf(1.0 / l as f64);
            eta = eta.min(3.0 - base);
        }
    }
    let bounds: Vec<f64> = (0..=n)
        .map(|l| prefactor * (3.0 - eta).max(0.0).powi(l as i32) * binomial(n, l))
        .collect();
    let holds = eta > 0.0 && masses.iter().zip(&bounds).all(|(m, b)| *m <= b * (1.0 + 1e-12));
    Ok(LevelReport {
        n,
        masses,
        purity_exponent: frobenius_inner(&t, &t).log2() / n as f64,
        eta,
        bounds,
        holds,
    })
}

fn subsets(n: usize, m: usize) -> Vec<Vec<usize>> {
    (0..1usize << n)
        .filter(|s| s.count_ones() as usize == m)
        .map(|s| (0..n).filter(|&q| s >> (n - 1 - q) & 1 == 1).collect())
        .collect()
}

/// Average of tr[ρ̃²_{A_S E}] over all subsets S of `m` A-qubits.
pub fn sampled_purity(rho: &DensityMatrix, m: usize) -> Result<f64> {
    if rho.n_a > DECOUPLING_A_GUARD {
        return Err(Error::capacity("sampled-purity A-qubits", rho.n_a, DECOUPLING_A_GUARD));
    }
    if m > rho.n_a {
        return Err(Error::domain(format!("subset size {m} above {} A-qubits", rho.n_a)));
    }
    let tilde = DensityMatrix { n_a: rho.n_a, e: rho.e, data: rho.rho_tilde() };
    let all = subsets(rho.n_a, m);
    let total: f64 = all
        .iter()
        .map(|s| tilde.partial_trace(s, true).map(|r| r.purity()))
        .sum::<Result<f64>>()?;
    Ok(total / all.len() as f64)
}

/// One entry of the moment comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub nu: PauliString,
    pub empirical: Estimate,
    pub exact: f64,
    /// (empirical − exact) / stderr; zero when both agree with zero spread.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub n: usize,
    pub mu: PauliString,
    pub t: usize,
    pub ensemble: GateEnsemble,
    pub rows: Vec<MomentRow>,
}

impl MomentReport {
    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max)
    }

    /// Every entry within `k` standard errors of the exact value.
    pub fn within(&self, k: f64) -> bool {
        self.rows.iter().all(|r| r.empirical.within(r.exact, k))
    }
}

/// Differences below `1e-12` count as exact agreement, which absorbs
/// rounding noise in entries that vanish identically.
fn z_score(diff: f64, stderr: f64) -> f64 {
    if diff.abs() <= 1e-12 {
        0.0
    } else if stderr > 0.0 {
        diff / stderr
    } else {
        f64::INFINITY * diff.signum()
    }
}

/// Estimates E[(1/4^n) tr[σ_ν U σ_μ U†]²] over random circuits of `t` gates
/// and compares with row μ of Q^t.
pub fn moment_consistency(
    n: usize,
    mu: &PauliString,
    t: usize,
    trials: u64,
    ens: GateEnsemble,
    seed: u64,
) -> Result<MomentReport> {
    if n > MOMENT_GUARD {
        return Err(Error::capacity("moment bridge qubits", n, MOMENT_GUARD));
    }
    if mu.len() != n {
        return Err(Error::domain(format!("string {mu} is not on {n} qubits")));
    }
    let q = build_q_matrix(n)?;
    let exact = q.row_power(mu.index() as usize, t as u64);
    let sigma_mu = mu.matrix()?;
    let dim = 1usize << n;
    let paulis: Vec<_> = (0..1u64 << (2 * n)).map(|i| PauliString::from_index(n, i).monomial()).collect();
    let tallies = run_trials(
        trials,
        seed,
        || vec![Tally::default(); paulis.len()],
        |acc, _, rng| {
            let circuit = sample_sequential(n, t, rng).expect("n >= 2");
            let mut w = sigma_mu.clone();
            for &gate in circuit.gates() {
                let (lo, hi) = gate.qubits();
                conjugate(&mut w, n - 1 - lo, n - 1 - hi, &sample_gate(ens, rng));
            }
            for (tally, mono) in acc.iter_mut().zip(&paulis) {
                let tr: Complex64 = (0..dim)
                    .map(|c| {
                        let (cx, phase) = mono.apply(c);
                        phase * w[(c, cx)]
                    })
                    .sum();
                let coeff = tr.re / dim as f64;
                tally.push(coeff * coeff);
            }
        },
        |a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect(),
    );
    let rows = tallies
        .into_iter()
        .enumerate()
        .map(|(i, tally)| {
            let empirical = tally.estimate();
            MomentRow {
                nu: PauliString::from_index(n, i as u64),
                z: z_score(empirical.mean - exact[i], empirical.stderr),
                empirical,
                exact: exact[i],
            }
        })
        .collect();
    Ok(MomentReport { n, mu: mu.clone(), t, ensemble: ens, rows })
}

/// Entrywise two-sample comparison of two moment reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleComparison {
    pub max_abs_z: f64,
    /// Number of entries with nonzero spread in at least one report.
    pub compared: usize,
    /// Šidák-adjusted p-value of the largest |z| across compared entries.
    pub p_value: f64,
}

pub fn compare_ensembles(a: &MomentReport, b: &MomentReport) -> Result<EnsembleComparison> {
    if a.n != b.n || a.mu != b.mu || a.t != b.t {
        return Err(Error::domain("reports describe different experiments"));
    }
    let mut max_abs_z: f64 = 0.0;
    let mut compared = 0;
    for (x, y) in a.rows.iter().zip(&b.rows) {
        let se = (x.empirical.stderr.powi(2) + y.empirical.stderr.powi(2)).sqrt();
        let z = z_score(x.empirical.mean - y.empirical.mean, se);
        if se > 0.0 {
            compared += 1;
        }
        max_abs_z = max_abs_z.max(z.abs());
    }
    Ok(EnsembleComparison { max_abs_z, compared, p_value: sidak_p(max_abs_z, compared) })
}

/// Family-wise p-value of the largest of `m` two-sided normal scores.
pub fn sidak_p(max_abs_z: f64, m: usize) -> f64 {
    if m == 0 {
        return if max_abs_z == 0.0 { 1.0 } else { 0.0 };
    }
    if !max_abs_z.is_finite() {
        return 0.0;
    }
    // two-sided normal tail via the chi-square(1) survival function
    let single = chi_square_sf(max_abs_z * max_abs_z, 1);
    1.0 - (1.0 - single).powi(m as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::trial_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn basis(dim: usize, i: usize) -> DVector<Complex64> {
        let mut v = DVector::zeros(dim);
        v[i] = ONE;
        v
    }

    fn unitarity_error(u: &Unitary) -> f64 {
        let m = DMatrix::from_row_slice(4, 4, u);
        (m.adjoint() * &m - DMatrix::identity(4, 4)).camax()
    }

    /// Full (U ⊗ I) ρ (U ⊗ I)† by Kronecker products.
    fn reference_conjugation(rho: &DensityMatrix, gate: Gate, u: &Unitary) -> DMatrix<Complex64> {
        let n = rho.n_a;
        let (lo, hi) = gate.qubits();
        let pauli_expansion = {
            // express U in the two-site Pauli basis and lift each term
            let mut full = DMatrix::zeros(1 << n, 1 << n);
            for a in 0..4u8 {
                for b in 0..4u8 {
                    let local = PauliString::from_symbols(&[a, b]).unwrap().matrix().unwrap();
                    let um = DMatrix::from_row_slice(4, 4, u);
                    let coeff = (local.adjoint() * um).trace() / c(4.0);
                    let mut sym = vec![0u8; n];
                    sym[lo] = a;
                    sym[hi] = b;
                    full += PauliString::from_symbols(&sym).unwrap().matrix().unwrap() * coeff;
                }
            }
            full
        };
        let de = 1usize << rho.e;
        let big = pauli_expansion.kronecker(&DMatrix::<Complex64>::identity(de, de));
        &big * &rho.data * big.adjoint()
    }

    #[test]
    fn haar_and_clifford_gates_are_unitary() {
        let mut rng = trial_rng(1, 0);
        for _ in 0..10_000 {
            assert!(unitarity_error(&sample_gate(GateEnsemble::Haar, &mut rng)) < 1e-10);
            assert!(unitarity_error(&sample_gate(GateEnsemble::Clifford, &mut rng)) < 1e-10);
        }
    }

    #[test]
    fn clifford_group_has_expected_order() {
        assert_eq!(clifford_group().len(), 11520);
    }

    #[test]
    fn haar_first_moment() {
        let trials = 1_000_000;
        let tally = run_trials(
            trials,
            2,
            Tally::default,
            |acc, _, rng| acc.push(sample_gate(GateEnsemble::Haar, rng)[0].norm_sqr()),
            Tally::merge,
        );
        assert!(tally.estimate().within(0.25, 3.0), "{:?}", tally.estimate());
    }

    fn transfer_second_moments(ens: GateEnsemble, trials: u64, seed: u64) -> Vec<Estimate> {
        let paulis: Vec<DMatrix<Complex64>> =
            (0..16).map(|i| PauliString::from_index(2, i).matrix().unwrap()).collect();
        let pairs = [(1usize, 1usize), (5, 10), (15, 3), (0, 7), (9, 0)];
        let tallies = run_trials(
            trials,
            seed,
            || vec![Tally::default(); pairs.len()],
            |acc, _, rng| {
                let u = DMatrix::from_row_slice(4, 4, &sample_gate(ens, rng));
                for (k, &(mu, nu)) in pairs.iter().enumerate() {
                    let tr = (&paulis[nu] * &u * &paulis[mu] * u.adjoint()).trace().re;
                    acc[k].push(tr * tr / 16.0);
                }
            },
            |a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect(),
        );
        tallies.iter().map(Tally::estimate).collect()
    }

    #[test]
    fn pauli_transfer_second_moment_table() {
        for (ens, trials) in [(GateEnsemble::Haar, 1_000_000), (GateEnsemble::Clifford, 200_000)] {
            let est = transfer_second_moments(ens, trials, 3);
            for e in &est[..3] {
                assert!(e.within(1.0 / 15.0, 3.0), "{ens}: {e:?}");
            }
            for e in &est[3..] {
                assert!(e.mean.abs() < 1e-20, "{ens}: {e:?}");
            }
        }
    }

    #[test]
    fn gate_kernel_matches_kronecker_reference() {
        let mut rng = trial_rng(4, 0);
        for _ in 0..20 {
            let rho = DensityMatrix::random_mixed(4, 1, 3, &mut rng).unwrap();
            let gate = Gate::sample(4, &mut rng);
            let u = sample_gate(GateEnsemble::Haar, &mut rng);
            let mut fast = rho.clone();
            fast.apply_gate(gate, &u).unwrap();
            assert!((fast.data - reference_conjugation(&rho, gate, &u)).camax() < 1e-12);
        }
    }

    #[test]
    fn identity_labels_leave_state_unchanged() {
        let mut rng = trial_rng(5, 0);
        let rho = DensityMatrix::random_mixed(3, 1, 4, &mut rng).unwrap();
        let circuit = Circuit::from_pairs(3, &[(1, 2), (2, 3), (1, 3)])
            .unwrap()
            .with_labels(vec![GateLabel::Identity; 3])
            .unwrap();
        let out = apply_circuit(&rho, &circuit, GateEnsemble::Haar, &mut rng).unwrap();
        assert_eq!(out, rho);
        let wrong = sample_sequential(4, 2, &mut rng).unwrap();
        assert!(apply_circuit(&rho, &wrong, GateEnsemble::Haar, &mut rng).is_err());
    }

    #[test]
    fn circuits_preserve_purity_trace_and_h2() {
        let mut rng = trial_rng(6, 0);
        for ens in [GateEnsemble::Haar, GateEnsemble::Clifford] {
            let rho = DensityMatrix::random_mixed(4, 2, 5, &mut rng).unwrap();
            let circuit = sample_sequential(4, 30, &mut rng).unwrap();
            let out = apply_circuit(&rho, &circuit, ens, &mut rng).unwrap();
            assert!((out.trace() - 1.0).abs() < 1e-9);
            assert!(out.hermiticity_error() < 1e-9);
            assert!((out.purity() - rho.purity()).abs() < 1e-9);
            assert!((h2_conditional(&out) - h2_conditional(&rho)).abs() < 1e-8);
        }
    }

    #[test]
    fn partial_trace_and_distance_basics() {
        let bell = DensityMatrix::entangled_with_env(1, 1).unwrap();
        let a = bell.partial_trace(&[0], false).unwrap();
        assert!((a.data.clone() - DMatrix::identity(2, 2) * c(0.5)).camax() < 1e-15);
        let e = bell.partial_trace(&[], true).unwrap();
        assert!((e.data - DMatrix::identity(2, 2) * c(0.5)).camax() < 1e-15);
        assert_eq!(trace_distance(&a, &a).unwrap(), 0.0);

        let zero = DensityMatrix::from_pure(1, 0, &basis(2, 0)).unwrap();
        let one = DensityMatrix::from_pure(1, 0, &basis(2, 1)).unwrap();
        assert!((trace_distance(&zero, &one).unwrap() - 2.0).abs() < 1e-12);
        assert!(trace_distance(&zero, &bell).is_err());
        assert!(bell.partial_trace(&[1], true).is_err());
        assert!(DensityMatrix::new(1, 0, DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn partial_trace_of_products() {
        let mut rng = trial_rng(7, 0);
        let x = DensityMatrix::random_mixed(1, 0, 2, &mut rng).unwrap();
        let y = DensityMatrix::random_mixed(2, 0, 2, &mut rng).unwrap();
        let z = DensityMatrix::random_mixed(0, 1, 2, &mut rng).unwrap();
        let full = DensityMatrix::new(3, 1, x.data.kronecker(&y.data).kronecker(&z.data)).unwrap();
        let kept = full.partial_trace(&[0], true).unwrap();
        assert!((kept.data - x.data.kronecker(&z.data)).camax() < 1e-12);
        let kept = full.partial_trace(&[1, 2], false).unwrap();
        assert!((kept.data - &y.data).camax() < 1e-12);
    }

    #[test]
    fn h2_closed_forms() {
        let mut rng = trial_rng(8, 0);
        for n in 1..=4 {
            let rho_e = DensityMatrix::random_mixed(0, 2, 4, &mut rng).unwrap();
            let mixed = DensityMatrix::mixed_with_env(n, &rho_e.data).unwrap();
            assert!((h2_conditional(&mixed) - n as f64).abs() < 1e-8);

            let ent = DensityMatrix::entangled_with_env(n, n).unwrap();
            assert!((h2_conditional(&ent) + n as f64).abs() < 1e-8);

            let psi = random_vector(1 << n, &mut rng);
            let phi = random_vector(4, &mut rng);
            let prod = DensityMatrix::product_pure(&psi, &phi).unwrap();
            assert!(h2_conditional(&prod).abs() < 1e-8);
        }
    }

    #[test]
    fn level_masses_and_parseval() {
        let mut rng = trial_rng(9, 0);
        for n in 1..=4 {
            let dim = 1usize << (n + 1);
            let g = DMatrix::from_fn(dim, dim, |_, _| {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            });
            let x = &g + g.adjoint();
            let masses = pauli_operator_masses(&x, n, 1).unwrap();
            let total: f64 = masses.iter().sum();
            let expected = (1 << n) as f64 * frobenius_inner(&x, &x);
            assert!((total - expected).abs() < 1e-8 * expected.max(1.0));
        }
        let rho = DensityMatrix::random_mixed(2, 1, 2, &mut rng).unwrap();
        assert!((pauli_level_mass(&rho, 0).unwrap() - 1.0).abs() < 1e-10);
        assert!(pauli_level_mass(&rho, 3).is_err());
    }

    #[test]
    fn level_report_on_random_states() {
        let mut rng = trial_rng(10, 0);
        for n in 4..=5 {
            let rho = DensityMatrix::random_mixed(n, 1, 2, &mut rng).unwrap();
            let rep = level_report(&rho).unwrap();
            assert!(rep.purity_exponent < 1.0);
            assert!(rep.holds, "{rep:?}");
        }
    }

    #[test]
    fn sampled_purity_endpoints_and_growth() {
        let mut rng = trial_rng(11, 0);
        for _ in 0..100 {
            let rho = DensityMatrix::random_mixed(4, 1, 3, &mut rng).unwrap();
            let tilde = rho.rho_tilde();
            assert!((sampled_purity(&rho, 4).unwrap() - frobenius_inner(&tilde, &tilde)).abs() < 1e-10);
            let mut prev = sampled_purity(&rho, 0).unwrap();
            assert!((prev - 1.0).abs() < 1e-10);
            for m in 1..=4 {
                let cur = sampled_purity(&rho, m).unwrap();
                assert!(2.0 * cur >= prev - 1e-12);
                prev = cur;
            }
        }
    }

    #[test]
    fn decoupling_zero_cases() {
        let mut rng = trial_rng(12, 0);
        let rho_e = DensityMatrix::random_mixed(0, 2, 4, &mut rng).unwrap();
        let invariant = DensityMatrix::mixed_with_env(4, &rho_e.data).unwrap();
        for p in decoupling_curve(&invariant, &[1], &[0, 5, 20], GateEnsemble::Haar, 20, 1).unwrap() {
            assert!(p.error.mean < 1e-12);
        }
        let psi = DVector::from_fn(8, |i, _| if i == 0 { ONE } else { ZERO });
        let pure = DensityMatrix::from_pure(3, 0, &psi).unwrap();
        let e = decoupling_error(&pure, &[0, 1, 2], 0, GateEnsemble::Haar, 5, 2).unwrap();
        assert!((e.mean - 2.0 * (1.0 - 1.0 / 8.0)).abs() < 1e-12);
    }

    #[test]
    fn decoupling_error_decreases() {
        let rho = DensityMatrix::entangled_with_env(4, 2).unwrap();
        let curve = decoupling_curve(&rho, &[0], &[0, 40], GateEnsemble::Haar, 50, 3).unwrap();
        assert!((curve[0].error.mean - 1.5).abs() < 1e-9);
        assert!(curve[1].error.mean < curve[0].error.mean);
        assert!(curve.iter().all(|p| p.error.mean <= 2.0));
    }

    #[test]
    fn moment_bridge_at_zero_steps_is_a_point_mass() {
        let mu: PauliString = "21".parse().unwrap();
        let rep = moment_consistency(2, &mu, 0, 10, GateEnsemble::Haar, 1).unwrap();
        for row in &rep.rows {
            let expected = if row.nu == mu { 1.0 } else { 0.0 };
            assert!((row.empirical.mean - expected).abs() < 1e-12);
            assert_eq!(row.z, 0.0);
        }
    }

    #[test]
    fn moment_bridge_one_gate_weight_marginal() {
        let mu: PauliString = "10".parse().unwrap();
        let rep = moment_consistency(2, &mu, 1, 100_000, GateEnsemble::Haar, 2).unwrap();
        let w2: f64 = rep.rows.iter().filter(|r| r.nu.weight() == 2).map(|r| r.empirical.mean).sum();
        assert!((w2 - 0.6).abs() < 0.01);
        assert!(sidak_p(rep.max_abs_z(), rep.rows.len()) > 1e-3);
    }

    #[test]
    fn ensembles_agree_on_three_qubits() {
        let mu: PauliString = "010".parse().unwrap();
        let a = moment_consistency(3, &mu, 5, 20_000, GateEnsemble::Haar, 3).unwrap();
        let b = moment_consistency(3, &mu, 5, 20_000, GateEnsemble::Clifford, 4).unwrap();
        assert!(compare_ensembles(&a, &b).unwrap().p_value > 1e-3);
    }

    #[test]
    fn guards() {
        assert!(DensityMatrix::entangled_with_env(9, 5).is_err());
        assert!(DensityMatrix::random_pure(10, 3, &mut trial_rng(0, 0)).is_err());
        let mu = PauliString::identity(5);
        assert!(moment_consistency(5, &mu, 1, 1, GateEnsemble::Haar, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn trace_distance_is_bounded(seed in any::<u64>()) {
            let mut rng = trial_rng(seed, 0);
            let a = DensityMatrix::random_mixed(2, 1, 2, &mut rng).unwrap();
            let b = DensityMatrix::random_pure(2, 1, &mut rng).unwrap();
            let d = trace_distance(&a, &b).unwrap();
            prop_assert!((0.0..=2.0 + 1e-12).contains(&d));
        }

        #[test]
        fn h2_lies_in_range(seed in any::<u64>(), n in 1usize..4, rank in 1usize..8) {
            let mut rng = trial_rng(seed, 1);
            let rho = DensityMatrix::random_mixed(n, 1, rank.min(1 << (n + 1)), &mut rng).unwrap();
            let h = h2_conditional(&rho);
            prop_assert!(h >= -(n as f64) - 1e-8 && h <= n as f64 + 1e-8);
        }
    }
}
