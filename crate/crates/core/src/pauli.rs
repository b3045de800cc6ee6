//! Bit-packed Pauli strings.
//!
//! A string over {0,1,2,3} is stored two bits per site, 32 sites per `u64`,
//! site 0 in the least significant bits of word 0. Symbol `s` at a site means
//! σ_s, with 0 the identity. The textual form lists site 1 (index 0) first.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

const SITES_PER_WORD: usize = 32;
const LOW_BITS: u64 = 0x5555_5555_5555_5555;

/// Largest site count accepted by [`PauliString::matrix`].
pub const MATRIX_GUARD: usize = 12;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    n: usize,
    words: Vec<u64>,
}

impl PauliString {
    /// The all-identity string on `n` sites.
    pub fn identity(n: usize) -> Self {
        PauliString {
            n,
            words: vec![0; n.div_ceil(SITES_PER_WORD).max(1)],
        }
    }

    pub fn from_symbols(symbols: &[u8]) -> Result<Self> {
        let mut p = PauliString::identity(symbols.len());
        for (i, &s) in symbols.iter().enumerate() {
            if s > 3 {
                return Err(Error::domain(format!("site {i} has symbol {s}, expected 0..=3")));
            }
            p.set(i, s);
        }
        Ok(p)
    }

    /// Builds a string of at most 32 sites from its packed word.
    pub fn from_index(n: usize, index: u64) -> Self {
        debug_assert!(n <= SITES_PER_WORD);
        debug_assert!(n == SITES_PER_WORD || index >> (2 * n) == 0);
        PauliString { n, words: vec![index] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// The packed word for strings of at most 32 sites. Equals the base-4
    /// number whose least significant digit is site 0.
    pub fn index(&self) -> u64 {
        debug_assert!(self.n <= SITES_PER_WORD);
        self.words[0]
    }

    #[inline]
    pub fn get(&self, site: usize) -> u8 {
        debug_assert!(site < self.n);
        ((self.words[site / SITES_PER_WORD] >> (2 * (site % SITES_PER_WORD))) & 3) as u8
    }

    #[inline]
    pub fn set(&mut self, site: usize, symbol: u8) {
        debug_assert!(site < self.n && symbol < 4);
        let shift = 2 * (site % SITES_PER_WORD);
        let w = &mut self.words[site / SITES_PER_WORD];
        *w = (*w & !(3 << shift)) | ((symbol as u64) << shift);
    }

    pub fn symbols(&self) -> Vec<u8> {
        (0..self.n).map(|i| self.get(i)).collect()
    }

    /// Number of non-identity sites.
    #[inline]
    pub fn weight(&self) -> usize {
        self.words
            .iter()
            .map(|&w| ((w | (w >> 1)) & LOW_BITS).count_ones() as usize)
            .sum()
    }

    pub fn is_identity(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Sites carrying a non-identity symbol, in increasing order.
    pub fn support(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.get(i) != 0).collect()
    }

    /// Moves the symbol at site `i` to site `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        let mut out = PauliString::identity(self.n);
        for (i, &dest) in perm.iter().enumerate() {
            out.set(dest, self.get(i));
        }
        Ok(out)
    }

    /// Applies a per-site relabeling of the nonzero symbols.
    pub fn relabel(&self, relabeling: &Relabeling) -> Result<Self> {
        if relabeling.maps.len() != self.n {
            return Err(Error::domain(format!(
                "relabeling covers {} sites, string has {}",
                relabeling.maps.len(),
                self.n
            )));
        }
        let mut out = self.clone();
        for (i, map) in relabeling.maps.iter().enumerate() {
            out.set(i, map[self.get(i) as usize]);
        }
        Ok(out)
    }

    /// Uniform draw among the 3^ℓ·C(n,ℓ) strings of weight `weight`.
    pub fn sample_uniform_weight<R: Rng + ?Sized>(n: usize, weight: usize, rng: &mut R) -> Result<Self> {
        if weight > n {
            return Err(Error::domain(format!("weight {weight} exceeds site count {n}")));
        }
        let mut p = PauliString::identity(n);
        for site in rand::seq::index::sample(rng, n, weight) {
            p.set(site, rng.random_range(1..=3));
        }
        Ok(p)
    }

    /// Dense matrix σ_{ν₁} ⊗ ⋯ ⊗ σ_{ν_n}, site 0 as the most significant
    /// tensor factor.
    pub fn matrix(&self) -> Result<DMatrix<Complex64>> {
        if self.n > MATRIX_GUARD {
            return Err(Error::capacity("pauli matrix sites", self.n, MATRIX_GUARD));
        }
        let dim = 1usize << self.n;
        let mono = self.monomial();
        let mut m = DMatrix::zeros(dim, dim);
        for col in 0..dim {
            let (row, phase) = mono.apply(col);
            m[(row, col)] = phase;
        }
        Ok(m)
    }

    /// Sparse form σ|b⟩ = phase(b)·|b ⊕ x⟩ on basis states of `n` qubits.
    pub fn monomial(&self) -> Monomial {
        assert!(self.n <= 63, "monomial form limited to 63 sites");
        let mut x = 0u64;
        let mut z = 0u64;
        let mut ys = 0u32;
        for site in 0..self.n {
            let bit = 1u64 << (self.n - 1 - site);
            match self.get(site) {
                1 => x |= bit,
                2 => {
                    x |= bit;
                    z |= bit;
                    ys += 1;
                }
                3 => z |= bit,
                _ => {}
            }
        }
        Monomial { x, z, ys }
    }
}

/// A Pauli operator as a signed permutation of computational basis states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Monomial {
    /// Bits flipped by X or Y factors.
    pub x: u64,
    /// Bits picking up a sign from Y or Z factors.
    pub z: u64,
    /// Number of Y factors, contributing i^ys.
    pub ys: u32,
}

impl Monomial {
    /// Image of basis state `b`: (index, amplitude).
    #[inline]
    pub fn apply(&self, b: usize) -> (usize, Complex64) {
        let sign = if ((b as u64) & self.z).count_ones() % 2 == 1 {
            -1.0
        } else {
            1.0
        };
        let phase = match self.ys % 4 {
            0 => Complex64::new(sign, 0.0),
            1 => Complex64::new(0.0, sign),
            2 => Complex64::new(-sign, 0.0),
            _ => Complex64::new(0.0, -sign),
        };
        (b ^ self.x as usize, phase)
    }
}

/// Per-site permutations of {1,2,3}, each extended by 0 ↦ 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relabeling {
    maps: Vec<[u8; 4]>,
}

impl Relabeling {
    /// `images[i]` lists the images of 1, 2, 3 at site `i`.
    pub fn new(images: &[[u8; 3]]) -> Result<Self> {
        let mut maps = Vec::with_capacity(images.len());
        for (site, img) in images.iter().enumerate() {
            let mut seen = [false; 4];
            for &s in img {
                if !(1..=3).contains(&s) || seen[s as usize] {
                    return Err(Error::domain(format!(
                        "site {site}: {img:?} is not a permutation of 1,2,3"
                    )));
                }
                seen[s as usize] = true;
            }
            maps.push([0, img[0], img[1], img[2]]);
        }
        Ok(Relabeling { maps })
    }

    pub fn identity(n: usize) -> Self {
        Relabeling {
            maps: vec![[0, 1, 2, 3]; n],
        }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        use rand::seq::SliceRandom;
        let maps = (0..n)
            .map(|_| {
                let mut img = [1u8, 2, 3];
                img.shuffle(rng);
                [0, img[0], img[1], img[2]]
            })
            .collect();
        Relabeling { maps }
    }

    pub fn site(&self, i: usize) -> [u8; 4] {
        self.maps[i]
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::domain(format!("permutation has {} entries, expected {n}", perm.len())));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::domain(format!("{perm:?} is not a permutation of 0..{n}")));
        }
        seen[p] = true;
    }
    Ok(())
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            write!(f, "{}", self.get(i))?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PauliString(\"{self}\")")
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::domain("empty Pauli string"));
        }
        let symbols = s
            .bytes()
            .map(|b| match b {
                b'0'..=b'3' => Ok(b - b'0'),
                _ => Err(Error::domain(format!("invalid Pauli symbol {:?}", b as char))),
            })
            .collect::<Result<Vec<u8>>>()?;
        PauliString::from_symbols(&symbols)
    }
}
