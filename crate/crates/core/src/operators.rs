//! Pauli-string Hamiltonians: canonical terms, dense construction, matrix-free
//! application and the exact-diagonalization oracle.
//!
//! Basis convention: qubit `k` is bit `k` of the computational-basis index
//! (little-endian), so `|q_{n-1} ... q_1 q_0>` has index `sum q_k 2^k`.

use std::collections::HashMap;
use std::fmt;

use faer::complex_native::c64;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest register the dense oracle accepts.
pub const MAX_DENSE_QUBITS: usize = 14;

/// Default eigenvalue window that counts as degenerate with the minimum.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn symbol(self) -> char {
        match self {
            Axis::X => 'X',
            Axis::Y => 'Y',
            Axis::Z => 'Z',
        }
    }
}

/// Tensor product of single-qubit Paulis, stored sorted by qubit index.
/// The empty word is the identity.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliWord(Vec<(usize, Axis)>);

impl PauliWord {
    pub fn identity() -> Self {
        PauliWord(Vec::new())
    }

    /// Builds a word from factors in any order; repeated qubits are rejected.
    pub fn new(factors: impl IntoIterator<Item = (usize, Axis)>) -> Result<Self> {
        let mut factors: Vec<_> = factors.into_iter().collect();
        factors.sort_by_key(|&(q, _)| q);
        if factors.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidTerm(format!("qubit repeated within one Pauli word: {factors:?}")));
        }
        Ok(PauliWord(factors))
    }

    pub fn single(qubit: usize, axis: Axis) -> Self {
        PauliWord(vec![(qubit, axis)])
    }

    pub fn factors(&self) -> &[(usize, Axis)] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    pub fn axis_on(&self, qubit: usize) -> Option<Axis> {
        self.0.binary_search_by_key(&qubit, |&(q, _)| q).ok().map(|i| self.0[i].1)
    }

    pub fn max_qubit(&self) -> Option<usize> {
        self.0.last().map(|&(q, _)| q)
    }

    /// True when the two words agree (or one is identity) on every qubit.
    pub fn qubitwise_commutes(&self, other: &PauliWord) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            let (qa, aa) = self.0[i];
            let (qb, ab) = other.0[j];
            match qa.cmp(&qb) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    if aa != ab {
                        return false;
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        true
    }

    /// Bit masks used for matrix-free application.
    pub fn compile(&self) -> CompiledPauli {
        let mut flip = 0usize;
        let mut sign = 0usize;
        let mut n_y = 0u32;
        for &(q, a) in &self.0 {
            match a {
                Axis::X => flip |= 1 << q,
                Axis::Z => sign |= 1 << q,
                Axis::Y => {
                    flip |= 1 << q;
                    sign |= 1 << q;
                    n_y += 1;
                }
            }
        }
        let phase = match n_y % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        CompiledPauli { flip, sign, phase }
    }
}

impl fmt::Display for PauliWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "I");
        }
        for (i, (q, a)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}{}", a.symbol(), q)?;
        }
        Ok(())
    }
}

/// `P|b> = phase * (-1)^{popcount(b & sign)} |b ^ flip>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompiledPauli {
    pub flip: usize,
    pub sign: usize,
    pub phase: Complex64,
}

impl CompiledPauli {
    #[inline]
    pub fn amplitude(&self, basis: usize) -> Complex64 {
        if (basis & self.sign).count_ones() % 2 == 0 {
            self.phase
        } else {
            -self.phase
        }
    }

    /// `out += coefficient * P * state`.
    #[inline]
    pub fn accumulate(&self, coefficient: f64, state: &[Complex64], out: &mut [Complex64]) {
        let c = self.phase * coefficient;
        for (b, &amp) in state.iter().enumerate() {
            let v = c * amp;
            let v = if (b & self.sign).count_ones() % 2 == 0 { v } else { -v };
            out[b ^ self.flip] += v;
        }
    }

    /// Real-valued in the computational basis.
    pub fn is_real(&self) -> bool {
        self.phase.im == 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PauliTerm {
    pub coefficient: f64,
    pub word: PauliWord,
}

impl PauliTerm {
    pub fn new(coefficient: f64, word: PauliWord) -> Self {
        PauliTerm { coefficient, word }
    }

    pub fn identity(coefficient: f64) -> Self {
        PauliTerm::new(coefficient, PauliWord::identity())
    }

    /// Convenience constructor, e.g. `PauliTerm::from_factors(0.5, &[(0, Axis::X), (1, Axis::X)])`.
    pub fn from_factors(coefficient: f64, factors: &[(usize, Axis)]) -> Result<Self> {
        Ok(PauliTerm::new(coefficient, PauliWord::new(factors.iter().copied())?))
    }
}

/// A real-weighted sum of Pauli words on a fixed register.
///
/// Terms with identical words are merged on construction, keeping the
/// position of the first occurrence.
#[derive(Clone, Debug, PartialEq)]
pub struct TermList {
    n_qubits: usize,
    terms: Vec<PauliTerm>,
}

impl TermList {
    pub fn new(n_qubits: usize, terms: impl IntoIterator<Item = PauliTerm>) -> Result<Self> {
        if n_qubits == 0 || n_qubits > usize::BITS as usize - 2 {
            return Err(Error::InvalidTerm(format!("unsupported qubit count {n_qubits}")));
        }
        let mut merged: Vec<PauliTerm> = Vec::new();
        let mut index: HashMap<PauliWord, usize> = HashMap::new();
        for term in terms {
            if !term.coefficient.is_finite() {
                return Err(Error::InvalidTerm(format!("non-finite coefficient on {}", term.word)));
            }
            if let Some(q) = term.word.max_qubit() {
                if q >= n_qubits {
                    return Err(Error::InvalidTerm(format!("qubit {q} out of range for {n_qubits}-qubit register")));
                }
            }
            match index.get(&term.word) {
                Some(&i) => merged[i].coefficient += term.coefficient,
                None => {
                    index.insert(term.word.clone(), merged.len());
                    merged.push(term);
                }
            }
        }
        Ok(TermList { n_qubits, terms: merged })
    }

    pub fn empty(n_qubits: usize) -> Result<Self> {
        TermList::new(n_qubits, std::iter::empty())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Sum of identity coefficients (the classical energy offset).
    pub fn identity_offset(&self) -> f64 {
        self.terms.iter().filter(|t| t.word.is_identity()).map(|t| t.coefficient).sum()
    }

    /// Non-identity terms in file order; these are the schedulable terms.
    pub fn schedulable(&self) -> impl Iterator<Item = &PauliTerm> {
        self.terms.iter().filter(|t| !t.word.is_identity())
    }

    pub fn schedulable_count(&self) -> usize {
        self.schedulable().count()
    }

    /// Same words, new coefficients for the schedulable terms (identity kept).
    pub fn with_schedulable_coefficients(&self, coefficients: &[f64]) -> Result<Self> {
        let expected = self.schedulable_count();
        if coefficients.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: coefficients.len() });
        }
        let mut it = coefficients.iter();
        let terms = self
            .terms
            .iter()
            .map(|t| if t.word.is_identity() { t.clone() } else { PauliTerm::new(*it.next().unwrap(), t.word.clone()) })
            .collect::<Vec<_>>();
        TermList::new(self.n_qubits, terms)
    }

    /// Sum of absolute coefficients over schedulable terms; bounds the operator norm.
    pub fn schedulable_weight(&self) -> f64 {
        self.schedulable().map(|t| t.coefficient.abs()).sum()
    }

    pub fn is_real(&self) -> bool {
        self.terms.iter().all(|t| t.word.compile().is_real())
    }

    fn check_state(&self, state: &[Complex64]) -> Result<()> {
        if state.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: state.len() });
        }
        Ok(())
    }
}

fn check_dense(n_qubits: usize) -> Result<()> {
    if n_qubits > MAX_DENSE_QUBITS {
        Err(Error::TooLarge { n_qubits, limit: MAX_DENSE_QUBITS })
    } else {
        Ok(())
    }
}

/// Dense `2^n x 2^n` Hermitian matrix of the full term list, identity included.
pub fn build_dense(terms: &TermList) -> Result<DMatrix<Complex64>> {
    check_dense(terms.n_qubits())?;
    let dim = terms.dim();
    let mut m = DMatrix::from_element(dim, dim, ZERO);
    for t in terms.terms() {
        let p = t.word.compile();
        for b in 0..dim {
            m[(b ^ p.flip, b)] += p.amplitude(b) * t.coefficient;
        }
    }
    Ok(m)
}

/// Matrix-free `H * state`.
pub fn apply_terms(terms: &TermList, state: &[Complex64]) -> Result<Vec<Complex64>> {
    terms.check_state(state)?;
    let mut out = vec![ZERO; state.len()];
    for t in terms.terms() {
        t.word.compile().accumulate(t.coefficient, state, &mut out);
    }
    Ok(out)
}

pub fn norm(state: &[Complex64]) -> f64 {
    state.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `<state|H|state>` for a normalized state.
pub fn expectation(terms: &TermList, state: &[Complex64]) -> Result<f64> {
    terms.check_state(state)?;
    let n = norm(state);
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized { norm: n });
    }
    let hv = apply_terms(terms, state)?;
    let e = inner(state, &hv);
    debug_assert!(e.im.abs() < 1e-10, "imaginary expectation residue {}", e.im);
    Ok(e.re)
}

#[derive(Clone, Debug)]
pub struct SpectrumResult {
    pub ground_energy: f64,
    /// Orthonormal basis of the eigenspace within the degeneracy window.
    pub ground_space: Vec<Vec<Complex64>>,
    /// Full ascending spectrum.
    pub spectrum: Vec<f64>,
}

impl SpectrumResult {
    pub fn degeneracy(&self) -> usize {
        self.ground_space.len()
    }

    /// Gap between the ground energy and the first level above the degeneracy window.
    pub fn gap(&self) -> Option<f64> {
        self.spectrum.get(self.degeneracy()).map(|e| e - self.ground_energy)
    }
}

/// Eigenvalues and eigenvector columns of a real symmetric matrix.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]).selfadjoint_eigendecomposition(faer::Side::Lower);
    let u = eig.u();
    ((0..n).map(|j| eig.s().column_vector().read(j)).collect(), DMatrix::from_fn(n, n, |i, j| u.read(i, j)))
}

/// Eigenvalues and eigenvector columns of a Hermitian matrix.
pub fn hermitian_eigen(m: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let n = m.nrows();
    let eig = faer::Mat::<c64>::from_fn(n, n, |i, j| c64::new(m[(i, j)].re, m[(i, j)].im))
        .selfadjoint_eigendecomposition(faer::Side::Lower);
    let u = eig.u();
    let values = (0..n).map(|j| eig.s().column_vector().read(j).re).collect();
    (
        values,
        DMatrix::from_fn(n, n, |i, j| {
            let z = u.read(i, j);
            Complex64::new(z.re, z.im)
        }),
    )
}

/// Exact diagonalization; the ground space collects every eigenvector whose
/// eigenvalue lies within `degeneracy_tol` of the minimum.
pub fn exact_ground(terms: &TermList, degeneracy_tol: f64) -> Result<SpectrumResult> {
    check_dense(terms.n_qubits())?;
    let dim = terms.dim();
    let dense = build_dense(terms)?;
    let (values, vectors) = if terms.is_real() {
        let (vals, u) = symmetric_eigen(&dense.map(|z| z.re));
        (vals, (0..dim).map(|j| u.column(j).iter().map(|&x| Complex64::new(x, 0.0)).collect()).collect::<Vec<Vec<_>>>())
    } else {
        let (vals, u) = hermitian_eigen(&dense);
        (vals, (0..dim).map(|j| u.column(j).iter().copied().collect()).collect())
    };
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let ground_energy = values[order[0]];
    let ground_space = order
        .iter()
        .take_while(|&&i| values[i] - ground_energy <= degeneracy_tol)
        .map(|&i| vectors[i].clone())
        .collect();
    Ok(SpectrumResult { ground_energy, ground_space, spectrum: order.iter().map(|&i| values[i]).collect() })
}

/// Greedy first-fit partition of term indices into qubit-wise commuting groups.
pub fn qubitwise_commuting_groups(terms: &TermList) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, t) in terms.terms().iter().enumerate() {
        let slot = groups.iter().position(|g| g.iter().all(|&j| terms.terms()[j].word.qubitwise_commutes(&t.word)));
        match slot {
            Some(g) => groups[g].push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
}

/// Computational basis state `|index>`.
pub fn basis_state(n_qubits: usize, index: usize) -> Vec<Complex64> {
    let mut v = vec![ZERO; 1 << n_qubits];
    v[index] = Complex64::new(1.0, 0.0);
    v
}
