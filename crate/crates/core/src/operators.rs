//! Observables as Pauli expansions, pure states and the exact spectral oracle.
//!
//! Qubit 0 is the leftmost character of a Pauli string and the most
//! significant bit of a basis index, so `"XZ"` acts as `X ⊗ Z`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, inner, CMatrix, HermitianEigen};
use crate::scalar::{count, lit, to_f64, tol, Real};

/// Largest register the dense path accepts.
pub const MAX_QUBITS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PauliAxis {
    I,
    X,
    Y,
    Z,
}

impl PauliAxis {
    pub const ALL: [PauliAxis; 4] = [PauliAxis::I, PauliAxis::X, PauliAxis::Y, PauliAxis::Z];

    pub fn symbol(self) -> char {
        match self {
            PauliAxis::I => 'I',
            PauliAxis::X => 'X',
            PauliAxis::Y => 'Y',
            PauliAxis::Z => 'Z',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'I' => Some(PauliAxis::I),
            'X' => Some(PauliAxis::X),
            'Y' => Some(PauliAxis::Y),
            'Z' => Some(PauliAxis::Z),
            _ => None,
        }
    }

    pub fn matrix<T: Real>(self) -> CMatrix<T> {
        PauliString { axes: vec![self] }.matrix()
    }
}

/// Tensor product of single-qubit Pauli matrices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PauliString {
    axes: Vec<PauliAxis>,
}

impl PauliString {
    pub fn new(axes: Vec<PauliAxis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_QUBITS {
            return Err(Error::InvalidPauli(axes.iter().map(|a| a.symbol()).collect()));
        }
        Ok(Self { axes })
    }

    pub fn identity(qubits: usize) -> Self {
        Self { axes: vec![PauliAxis::I; qubits.max(1)] }
    }

    /// All `4ⁿ` strings on `n` qubits in lexicographic `I < X < Y < Z` order.
    pub fn all(qubits: usize) -> impl Iterator<Item = PauliString> {
        (0..4usize.pow(qubits as u32)).map(move |code| {
            let axes = (0..qubits)
                .map(|q| PauliAxis::ALL[(code >> (2 * (qubits - 1 - q))) & 3])
                .collect();
            PauliString { axes }
        })
    }

    pub fn axes(&self) -> &[PauliAxis] {
        &self.axes
    }

    pub fn qubit_count(&self) -> usize {
        self.axes.len()
    }

    pub fn is_identity(&self) -> bool {
        self.axes.iter().all(|&a| a == PauliAxis::I)
    }

    fn flip_mask(&self) -> usize {
        let n = self.axes.len();
        self.axes
            .iter()
            .enumerate()
            .filter(|(_, a)| matches!(a, PauliAxis::X | PauliAxis::Y))
            .fold(0, |m, (q, _)| m | (1 << (n - 1 - q)))
    }

    /// `P|j⟩ = phase·|i⟩`; returns `(i, phase)`.
    pub fn action<T: Real>(&self, basis: usize) -> (usize, Complex<T>) {
        let n = self.axes.len();
        let mut quarter_turns = 0u32;
        for (q, axis) in self.axes.iter().enumerate() {
            let bit = (basis >> (n - 1 - q)) & 1;
            quarter_turns += match (axis, bit) {
                (PauliAxis::Y, 0) => 1,
                (PauliAxis::Y, _) => 3,
                (PauliAxis::Z, 1) => 2,
                _ => 0,
            };
        }
        let phase = match quarter_turns % 4 {
            0 => Complex::new(T::one(), T::zero()),
            1 => Complex::new(T::zero(), T::one()),
            2 => Complex::new(-T::one(), T::zero()),
            _ => Complex::new(T::zero(), -T::one()),
        };
        (basis ^ self.flip_mask(), phase)
    }

    pub fn apply<T: Real>(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut out = vec![Complex::zero(); v.len()];
        for (j, &amp) in v.iter().enumerate() {
            let (i, ph) = self.action::<T>(j);
            out[i] = out[i] + ph * amp;
        }
        out
    }

    /// `⟨ψ|P|ψ⟩`, real because `P` is Hermitian.
    pub fn expectation<T: Real>(&self, state: &PureState<T>) -> T {
        inner(state.amplitudes(), &self.apply(state.amplitudes())).re
    }

    pub fn matrix<T: Real>(&self) -> CMatrix<T> {
        let dim = 1usize << self.axes.len();
        let mut m = CMatrix::zeros(dim);
        for j in 0..dim {
            let (i, ph) = self.action::<T>(j);
            m[(i, j)] = ph;
        }
        m
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let axes = s
            .chars()
            .map(PauliAxis::from_symbol)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::InvalidPauli(s.to_string()))?;
        PauliString::new(axes).map_err(|_| Error::InvalidPauli(s.to_string()))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.axes {
            write!(f, "{}", a.symbol())?;
        }
        Ok(())
    }
}

impl TryFrom<String> for PauliString {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PauliString> for String {
    fn from(p: PauliString) -> String {
        p.to_string()
    }
}

/// One term `α e^{iθ} P` of the traceless part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm<T> {
    pub weight: T,
    pub phase: T,
    pub string: PauliString,
}

impl<T: Real> PauliTerm<T> {
    /// Term with a signed real coefficient: phase 0 for `c > 0`, π for `c < 0`.
    pub fn real(coefficient: T, string: PauliString) -> Self {
        let phase = if coefficient < T::zero() { T::PI() } else { T::zero() };
        Self { weight: coefficient.abs(), phase, string }
    }

    pub fn coefficient(&self) -> Complex<T> {
        Complex::from_polar(self.weight, self.phase)
    }

    /// Signed real coefficient `α cos θ`.
    pub fn signed_weight(&self) -> T {
        self.weight * self.phase.cos()
    }
}

/// The q-norms of the coefficient vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms<T> {
    /// `‖Ō_T‖₁ = Σ α_k`
    pub traceless_one: T,
    /// `‖Ō‖₁ = |α₀| + ‖Ō_T‖₁`
    pub full_one: T,
    /// `‖Ō_T‖₂`
    pub traceless_two: T,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
struct RawObservable<T> {
    identity_coeff: T,
    #[serde(default)]
    terms: Vec<PauliTerm<T>>,
    #[serde(default)]
    qubit_count: Option<usize>,
}

/// `O = α₀·1 + Σ_k α_k e^{iθ_k} P_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawObservable<T>",
    bound(serialize = "T: Serialize", deserialize = "T: Real + Deserialize<'de>")
)]
pub struct ObservableExpansion<T> {
    identity_coeff: T,
    terms: Vec<PauliTerm<T>>,
    qubit_count: usize,
}

impl<T: Real> TryFrom<RawObservable<T>> for ObservableExpansion<T> {
    type Error = Error;

    fn try_from(raw: RawObservable<T>) -> Result<Self> {
        match raw.qubit_count {
            Some(n) => Self::with_qubits(n, raw.identity_coeff, raw.terms),
            None => Self::new(raw.identity_coeff, raw.terms),
        }
    }
}

impl<T: Real> ObservableExpansion<T> {
    /// Infers the register size from the first term.
    pub fn new(identity_coeff: T, terms: Vec<PauliTerm<T>>) -> Result<Self> {
        let n = terms
            .first()
            .map(|t| t.string.qubit_count())
            .ok_or_else(|| Error::InvalidObservable("qubit_count required when there are no terms".into()))?;
        Self::with_qubits(n, identity_coeff, terms)
    }

    pub fn with_qubits(qubit_count: usize, identity_coeff: T, terms: Vec<PauliTerm<T>>) -> Result<Self> {
        if qubit_count == 0 || qubit_count > MAX_QUBITS {
            return Err(Error::InvalidObservable(format!("qubit_count {qubit_count} outside 1..={MAX_QUBITS}")));
        }
        if !identity_coeff.is_finite() {
            return Err(Error::InvalidObservable("identity_coeff is not finite".into()));
        }
        let hermitian_tol = tol::<T>(1e-12);
        for t in &terms {
            if t.string.qubit_count() != qubit_count {
                return Err(Error::InvalidObservable(format!(
                    "term {} has {} qubits, expected {qubit_count}",
                    t.string,
                    t.string.qubit_count()
                )));
            }
            if t.string.is_identity() {
                return Err(Error::InvalidObservable("identity string inside the traceless part".into()));
            }
            if !(t.weight > T::zero()) || !t.weight.is_finite() {
                return Err(Error::InvalidObservable(format!("term {} has non-positive weight", t.string)));
            }
            if (t.phase.sin() * t.weight).abs() > hermitian_tol * t.weight.max(T::one()) {
                return Err(Error::InvalidObservable(format!(
                    "term {} has phase {} so the operator is not Hermitian",
                    t.string, t.phase
                )));
            }
        }
        Ok(Self { identity_coeff, terms, qubit_count })
    }

    /// Builds from signed real coefficients, dropping exact zeros.
    pub fn from_real(identity_coeff: T, terms: &[(T, &str)]) -> Result<Self> {
        let parsed = terms
            .iter()
            .filter(|(c, _)| !c.is_zero())
            .map(|&(c, s)| Ok(PauliTerm::real(c, s.parse()?)))
            .collect::<Result<Vec<_>>>()?;
        match terms.first() {
            Some((_, s)) => Self::with_qubits(s.len(), identity_coeff, parsed),
            None => Err(Error::InvalidObservable("no terms given".into())),
        }
    }

    pub fn identity_coeff(&self) -> T {
        self.identity_coeff
    }

    pub fn terms(&self) -> &[PauliTerm<T>] {
        &self.terms
    }

    /// Number of traceless terms `L`.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn qubit_count(&self) -> usize {
        self.qubit_count
    }

    pub fn dim(&self) -> usize {
        1 << self.qubit_count
    }

    pub fn norms(&self) -> Norms<T> {
        let traceless_one: T = self.terms.iter().map(|t| t.weight).sum();
        let sq: T = self.terms.iter().map(|t| t.weight * t.weight).sum();
        Norms {
            traceless_one,
            full_one: self.identity_coeff.abs() + traceless_one,
            traceless_two: sq.sqrt(),
        }
    }

    pub fn apply(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        let a0 = Complex::new(self.identity_coeff, T::zero());
        let mut out: Vec<Complex<T>> = v.iter().map(|&x| x * a0).collect();
        for t in &self.terms {
            let c = t.coefficient();
            for (o, p) in out.iter_mut().zip(t.string.apply(v)) {
                *o = *o + c * p;
            }
        }
        out
    }

    pub fn expectation(&self, state: &PureState<T>) -> Result<T> {
        state.check_dim(self.dim())?;
        Ok(inner(state.amplitudes(), &self.apply(state.amplitudes())).re)
    }

    pub fn dense(&self) -> CMatrix<T> {
        let dim = self.dim();
        let mut m = CMatrix::identity(dim).scale(Complex::new(self.identity_coeff, T::zero()));
        for t in &self.terms {
            let c = t.coefficient();
            for j in 0..dim {
                let (i, ph) = t.string.action::<T>(j);
                m[(i, j)] = m[(i, j)] + c * ph;
            }
        }
        m
    }

    pub fn oracle(&self) -> SpectralOracle<T> {
        SpectralOracle::from_matrix(&self.dense())
    }
}

/// Normalized state vector on `n` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState<T> {
    amplitudes: Vec<Complex<T>>,
}

impl<T: Real> PureState<T> {
    pub fn new(amplitudes: Vec<Complex<T>>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(len));
        }
        let norm2: T = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm2 - T::one()).abs() > tol(1e-12) {
            return Err(Error::NotNormalized(to_f64(norm2)));
        }
        Ok(Self { amplitudes })
    }

    pub fn normalized(amplitudes: Vec<Complex<T>>) -> Result<Self> {
        let norm2: T = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if !(norm2 > T::zero()) || !norm2.is_finite() {
            return Err(Error::NotNormalized(to_f64(norm2)));
        }
        let s = Complex::new(norm2.sqrt().recip(), T::zero());
        Self::new(amplitudes.into_iter().map(|a| a * s).collect())
    }

    pub fn from_real(amplitudes: &[T]) -> Result<Self> {
        Self::normalized(amplitudes.iter().map(|&a| Complex::new(a, T::zero())).collect())
    }

    pub fn basis(qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize << qubits;
        if qubits == 0 || index >= dim {
            return Err(Error::InvalidArgument(format!("basis index {index} on {qubits} qubits")));
        }
        let mut amps = vec![Complex::zero(); dim];
        amps[index] = Complex::new(T::one(), T::zero());
        Ok(Self { amplitudes: amps })
    }

    /// `R_y(θ)|0⟩ = cos(θ/2)|0⟩ + sin(θ/2)|1⟩`.
    pub fn ry(theta: T) -> Self {
        let half = theta * lit(0.5);
        Self {
            amplitudes: vec![Complex::new(half.cos(), T::zero()), Complex::new(half.sin(), T::zero())],
        }
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn qubit_count(&self) -> usize {
        self.amplitudes.len().trailing_zeros() as usize
    }

    pub fn overlap(&self, other: &Self) -> Complex<T> {
        inner(&self.amplitudes, &other.amplitudes)
    }

    /// `⟨ψ|A|ψ⟩` for a square matrix of matching size.
    pub fn braket(&self, a: &CMatrix<T>) -> Result<Complex<T>> {
        self.check_dim(a.dim())?;
        Ok(inner(&self.amplitudes, &a.mul_vec(&self.amplitudes)))
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch { expected, got: self.dim() });
        }
        Ok(())
    }
}

/// Eigen-decomposition of an observable; the ground truth every estimator is checked against.
#[derive(Clone, Debug)]
pub struct SpectralOracle<T> {
    eigen: HermitianEigen<T>,
    lambda_max: T,
}

impl<T: Real> SpectralOracle<T> {
    pub fn from_matrix(m: &CMatrix<T>) -> Self {
        let eigen = eigh(m);
        let lambda_max = eigen.values.iter().fold(T::zero(), |acc, &l| acc.max(l.abs()));
        Self { eigen, lambda_max }
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigen.values
    }

    pub fn eigenvectors(&self) -> &CMatrix<T> {
        &self.eigen.vectors
    }

    /// Largest singular value `max_i |λ_i|`.
    pub fn lambda_max(&self) -> T {
        self.lambda_max
    }

    pub fn dim(&self) -> usize {
        self.eigen.values.len()
    }

    pub fn eigenstate(&self, k: usize) -> PureState<T> {
        PureState { amplitudes: self.eigen.eigenvector(k) }
    }

    pub fn ground_state(&self) -> PureState<T> {
        self.eigenstate(0)
    }

    pub fn reconstruct(&self) -> CMatrix<T> {
        self.eigen.map_spectrum(|l| Complex::new(l, T::zero()))
    }

    /// `e^{iτO}`.
    pub fn evolution(&self, tau: T) -> CMatrix<T> {
        self.eigen.map_spectrum(|l| Complex::from_polar(T::one(), tau * l))
    }

    /// Spectral weights `|⟨i|ψ⟩|²` paired with the eigenvalues.
    pub fn profile(&self, state: &PureState<T>) -> Result<SpectralProfile<T>> {
        state.check_dim(self.dim())?;
        let v = &self.eigen.vectors;
        let weights = (0..self.dim())
            .map(|k| {
                let amp = (0..self.dim())
                    .fold(Complex::zero(), |acc: Complex<T>, i| acc + v[(i, k)].conj() * state.amplitudes[i]);
                amp.norm_sqr()
            })
            .collect();
        Ok(SpectralProfile { values: self.eigen.values.clone(), weights })
    }

    pub fn moments(&self, state: &PureState<T>, k_max: usize) -> Result<MomentTable<T>> {
        Ok(self.profile(state)?.moments(k_max))
    }

    pub fn sine_expectation(&self, state: &PureState<T>, tau: T) -> Result<T> {
        Ok(self.profile(state)?.sine(tau))
    }
}

/// Eigenvalues with the populations of one fixed state.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralProfile<T> {
    pub values: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> SpectralProfile<T> {
    pub fn expect(&self, f: impl Fn(T) -> T) -> T {
        self.values.iter().zip(&self.weights).map(|(&l, &w)| w * f(l)).sum()
    }

    pub fn mean(&self) -> T {
        self.expect(|l| l)
    }

    /// `⟨O^p⟩`.
    pub fn power(&self, p: u32) -> T {
        self.expect(|l| l.powi(p as i32))
    }

    /// `⟨sin(τO)⟩`.
    pub fn sine(&self, tau: T) -> T {
        self.expect(|l| (tau * l).sin())
    }

    pub fn variance(&self) -> T {
        let m = self.mean();
        self.expect(|l| (l - m) * (l - m))
    }

    pub fn moments(&self, k_max: usize) -> MomentTable<T> {
        MomentTable {
            odd: (0..=k_max).map(|k| self.power(2 * k as u32 + 1)).collect(),
            even: (0..=k_max).map(|k| self.power(2 * k as u32)).collect(),
            variance: self.variance(),
        }
    }
}

/// Odd moments `m_k = ⟨O^{2k+1}⟩`, even moments `⟨O^{2K}⟩` and `Var[O]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTable<T> {
    pub odd: Vec<T>,
    pub even: Vec<T>,
    pub variance: T,
}

impl<T: Real> MomentTable<T> {
    pub fn m(&self, k: usize) -> T {
        self.odd[k]
    }

    pub fn even(&self, k: usize) -> T {
        self.even[k]
    }

    pub fn mean(&self) -> T {
        self.odd[0]
    }

    /// `Cov[O^{2K}, O] = ⟨O^{2K+1}⟩ − ⟨O^{2K}⟩⟨O⟩`.
    pub fn covariance(&self, k: usize) -> T {
        self.odd[k] - self.even[k] * self.odd[0]
    }

    pub fn k_max(&self) -> usize {
        self.odd.len() - 1
    }
}

/// `R_O = |⟨O⟩|/‖Ō_T‖₁` and its ceiling `R_O^max = ‖Ō‖₁/‖Ō_T‖₁`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ratio<T> {
    pub r_o: T,
    pub r_max: T,
}

/// Pauli decomposition of a Hermitian `2ⁿ × 2ⁿ` matrix.
pub fn decompose<T: Real>(dense: &CMatrix<T>) -> Result<ObservableExpansion<T>> {
    let dim = dense.dim();
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(dim));
    }
    let qubits = dim.trailing_zeros() as usize;
    if qubits > MAX_QUBITS {
        return Err(Error::InvalidObservable(format!("{qubits} qubits exceeds {MAX_QUBITS}")));
    }
    let scale = dense.max_abs().max(T::one());
    let skew = (dense - &dense.adjoint()).max_abs();
    if skew > tol::<T>(1e-10) * scale {
        return Err(Error::NotHermitian(to_f64(skew)));
    }
    let h = dense.hermitian_part();
    let inv_dim = count::<T>(dim as u64).recip();
    let drop = T::epsilon() * lit(16.0) * scale;
    let mut alpha0 = T::zero();
    let mut terms = Vec::new();
    for p in PauliString::all(qubits) {
        // Tr[P H] = Σ_j P[i,j] H[j,i] where P|j⟩ = ph|i⟩.
        let tr = (0..dim).fold(Complex::zero(), |acc: Complex<T>, j| {
            let (i, ph) = p.action::<T>(j);
            acc + ph * h[(j, i)]
        });
        let c = tr.re * inv_dim;
        if p.is_identity() {
            alpha0 = c;
        } else if c.abs() > drop {
            terms.push(PauliTerm::real(c, p));
        }
    }
    ObservableExpansion::with_qubits(qubits, alpha0, terms)
}

pub fn one_norms<T: Real>(obs: &ObservableExpansion<T>) -> Norms<T> {
    obs.norms()
}

pub fn moments<T: Real>(obs: &ObservableExpansion<T>, state: &PureState<T>, k_max: usize) -> Result<MomentTable<T>> {
    obs.oracle().moments(state, k_max)
}

pub fn exact_sine_expectation<T: Real>(obs: &ObservableExpansion<T>, state: &PureState<T>, tau: T) -> Result<T> {
    obs.oracle().sine_expectation(state, tau)
}

pub fn exact_evolution<T: Real>(obs: &ObservableExpansion<T>, tau: T) -> CMatrix<T> {
    obs.oracle().evolution(tau)
}

pub fn ratio_r<T: Real>(obs: &ObservableExpansion<T>, state: &PureState<T>) -> Result<Ratio<T>> {
    let n = obs.norms();
    if !(n.traceless_one > T::zero()) {
        return Err(Error::InvalidObservable("traceless part has zero norm".into()));
    }
    let mean = obs.expectation(state)?;
    Ok(Ratio { r_o: mean.abs() / n.traceless_one, r_max: n.full_one / n.traceless_one })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn deuteron() -> ObservableExpansion<f64> {
        ObservableExpansion::from_real(87.5, &[(-35.0, "X"), (82.5, "Z")]).unwrap()
    }

    fn random_hermitian(dim: usize, vals: &[f64]) -> CMatrix<f64> {
        let mut k = 0;
        let mut next = || {
            k += 1;
            vals[k % vals.len()] * ((k * 7919) % 13) as f64 / 6.5 - vals[(k * 3) % vals.len()]
        };
        let mut m = CMatrix::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex::new(next(), 0.0);
            for j in (i + 1)..dim {
                let z = Complex::new(next(), next());
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    #[test]
    fn pauli_string_parsing_and_display() {
        let p: PauliString = "xZi".parse().unwrap();
        assert_eq!(p.to_string(), "XZI");
        assert!("XQ".parse::<PauliString>().is_err());
        assert!("".parse::<PauliString>().is_err());
        assert!(PauliString::identity(3).is_identity());
        assert_eq!(PauliString::all(2).count(), 16);
    }

    #[test]
    fn pauli_matrices_match_textbook() {
        let y = PauliAxis::Y.matrix::<f64>();
        assert_eq!(y[(0, 1)], Complex::new(0.0, -1.0));
        assert_eq!(y[(1, 0)], Complex::new(0.0, 1.0));
        let xz: CMatrix<f64> = "XZ".parse::<PauliString>().unwrap().matrix();
        let expected = PauliAxis::X.matrix::<f64>().kron(&PauliAxis::Z.matrix());
        assert!((&xz - &expected).max_abs() < 1e-15);
    }

    #[test]
    fn deuteron_from_printed_matrix_is_basis_swapped() {
        let printed = CMatrix::<f64>::from_real_rows(&[vec![5.0, -35.0], vec![-35.0, 170.0]]);
        let obs = decompose(&printed).unwrap();
        assert!((obs.identity_coeff() - 87.5).abs() < 1e-12);
        let coeffs: Vec<(String, f64)> = obs.terms().iter().map(|t| (t.string.to_string(), t.signed_weight())).collect();
        assert_eq!(coeffs.len(), 2);
        assert_eq!(coeffs[0].0, "X");
        assert!((coeffs[0].1 + 35.0).abs() < 1e-12);
        assert!((coeffs[1].1 + 82.5).abs() < 1e-12);
        let swapped = CMatrix::from_real_rows(&[vec![170.0, -35.0], vec![-35.0, 5.0]]);
        let canon = decompose(&swapped).unwrap();
        assert!((&canon.dense() - &deuteron().dense()).max_abs() < 1e-12);
        assert!((canon.terms()[0].phase - std::f64::consts::PI).abs() < 1e-15);
        let a = obs.oracle();
        let b = canon.oracle();
        for (x, y) in a.eigenvalues().iter().zip(b.eigenvalues()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_decomposes_to_constant() {
        let obs = decompose(&CMatrix::<f64>::identity(2)).unwrap();
        assert_eq!(obs.identity_coeff(), 1.0);
        assert!(obs.is_empty());
    }

    #[test]
    fn decompose_rejects_bad_input() {
        let non_herm = CMatrix::from_real_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]);
        assert!(matches!(decompose(&non_herm), Err(Error::NotHermitian(_))));
        assert!(matches!(decompose(&CMatrix::<f64>::identity(3)), Err(Error::NotPowerOfTwo(3))));
    }

    #[test]
    fn deuteron_norms() {
        let n = deuteron().norms();
        assert_eq!(n.traceless_one, 117.5);
        assert_eq!(n.full_one, 205.0);
        assert!((n.traceless_two * n.traceless_two - 8031.25).abs() < 1e-9);
        let z = ObservableExpansion::from_real(0.0, &[(1.0, "Z")]).unwrap().norms();
        assert_eq!((z.traceless_one, z.full_one, z.traceless_two), (1.0, 1.0, 1.0));
    }

    #[test]
    fn deuteron_ground_moments() {
        let obs = deuteron();
        let oracle = obs.oracle();
        let m = oracle.moments(&oracle.ground_state(), 2).unwrap();
        assert!((m.mean() + 2.1174).abs() < 1e-3);
        let lam = 87.5 - 8031.25f64.sqrt();
        assert!((m.m(1) - lam.powi(3)).abs() < 1e-9);
        assert!((m.m(1) + 9.4906).abs() < 1e-3);
        assert!(m.variance.abs() < 1e-9);
    }

    #[test]
    fn z_eigenstate_moments() {
        let obs = ObservableExpansion::<f64>::from_real(0.0, &[(1.0, "Z")]).unwrap();
        let m = moments(&obs, &PureState::basis(1, 0).unwrap(), 4).unwrap();
        assert!(m.odd.iter().all(|&x| (x - 1.0).abs() < 1e-14));
        assert!(m.variance.abs() < 1e-14);
    }

    #[test]
    fn sine_expectation_examples() {
        let z = ObservableExpansion::from_real(0.0, &[(1.0, "Z")]).unwrap();
        let zero = PureState::basis(1, 0).unwrap();
        assert!((exact_sine_expectation(&z, &zero, 0.3).unwrap() - 0.3f64.sin()).abs() < 1e-15);
        assert_eq!(exact_sine_expectation(&z, &zero, 0.0).unwrap(), 0.0);
        let obs = deuteron();
        let o = obs.oracle();
        let lam = 87.5 - 8031.25f64.sqrt();
        let s = o.sine_expectation(&o.ground_state(), 0.4).unwrap();
        assert!((s - (0.4 * lam).sin()).abs() < 1e-12);
        assert!((s + 0.749229).abs() < 1e-6);
    }

    #[test]
    fn evolution_examples() {
        let obs = deuteron();
        assert!((&exact_evolution(&obs, 0.0) - &CMatrix::identity(2)).max_abs() < 1e-14);
        let z = ObservableExpansion::from_real(0.0, &[(1.0, "Z")]).unwrap();
        let u = exact_evolution(&z, std::f64::consts::FRAC_PI_2);
        assert!((u[(0, 0)] - Complex::new(0.0, 1.0)).norm() < 1e-15);
        assert!((u[(1, 1)] - Complex::new(0.0, -1.0)).norm() < 1e-15);
        let u = exact_evolution(&obs, 0.1);
        assert!(u.unitarity_defect() < 1e-12);
        let tr = u.trace();
        let lam0 = 87.5 - 8031.25f64.sqrt();
        let lam1 = 87.5 + 8031.25f64.sqrt();
        let expected = Complex::from_polar(1.0, 0.1 * lam0) + Complex::from_polar(1.0, 0.1 * lam1);
        assert!((tr - expected).norm() < 1e-12);
    }

    #[test]
    fn ratio_examples() {
        let obs = deuteron();
        let r = ratio_r(&obs, &obs.oracle().ground_state()).unwrap();
        assert!((r.r_o - 0.018019).abs() < 1e-5);
        assert!((r.r_max - 205.0 / 117.5).abs() < 1e-14);
        let z = ObservableExpansion::<f64>::from_real(0.0, &[(1.0, "Z")]).unwrap();
        assert!((ratio_r(&z, &PureState::basis(1, 0).unwrap()).unwrap().r_o - 1.0).abs() < 1e-15);
        let c = ObservableExpansion::<f64>::with_qubits(1, 2.0, vec![]).unwrap();
        assert!(ratio_r(&c, &PureState::basis(1, 0).unwrap()).is_err());
    }

    #[test]
    fn observable_validation() {
        let bad_phase = PauliTerm { weight: 1.0, phase: 0.5, string: "Z".parse().unwrap() };
        assert!(ObservableExpansion::new(0.0, vec![bad_phase]).is_err());
        let identity_term = PauliTerm::real(1.0, "II".parse().unwrap());
        assert!(ObservableExpansion::new(0.0, vec![identity_term]).is_err());
        let zero_weight = PauliTerm { weight: 0.0, phase: 0.0, string: "X".parse().unwrap() };
        assert!(ObservableExpansion::new(0.0, vec![zero_weight]).is_err());
        let mixed = vec![PauliTerm::real(1.0, "X".parse().unwrap()), PauliTerm::real(1.0, "XZ".parse().unwrap())];
        assert!(ObservableExpansion::new(0.0, mixed).is_err());
    }

    #[test]
    fn observable_json_round_trip() {
        let obs = deuteron();
        let json = serde_json::to_string(&obs).unwrap();
        assert!(json.contains("\"string\":\"X\""));
        let back: ObservableExpansion<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, obs);
        let minimal: ObservableExpansion<f64> =
            serde_json::from_str(r#"{"identity_coeff": 1.5, "terms": [{"weight": 2.0, "phase": 0.0, "string": "ZX"}]}"#)
                .unwrap();
        assert_eq!(minimal.qubit_count(), 2);
        let bad = serde_json::from_str::<ObservableExpansion<f64>>(
            r#"{"identity_coeff": 0.0, "terms": [{"weight": 1.0, "phase": 0.0, "string": "II"}]}"#,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn state_validation() {
        assert!(PureState::<f64>::new(vec![Complex::new(1.0, 0.0); 2]).is_err());
        assert!(PureState::<f64>::from_real(&[1.0, 1.0, 1.0]).is_err());
        assert!(PureState::<f64>::from_real(&[0.0, 0.0]).is_err());
        let s = PureState::<f64>::from_real(&[3.0, 4.0]).unwrap();
        assert!((s.amplitudes()[1].re - 0.8).abs() < 1e-15);
        let obs = deuteron();
        assert!(matches!(
            obs.expectation(&PureState::basis(2, 0).unwrap()),
            Err(Error::DimensionMismatch { expected: 2, got: 4 })
        ));
    }

    #[test]
    fn ry_energy_matches_closed_form() {
        let obs = deuteron();
        for &th in &[0.0, 0.7, 2.74, 4.0] {
            let e = obs.expectation(&PureState::ry(th)).unwrap();
            assert!((e - (87.5 - 35.0 * f64::sin(th) + 82.5 * f64::cos(th))).abs() < 1e-12);
        }
    }

    #[test]
    fn single_precision_oracle() {
        let obs = ObservableExpansion::<f32>::from_real(87.5, &[(-35.0, "X"), (82.5, "Z")]).unwrap();
        let o = obs.oracle();
        assert!((o.eigenvalues()[0] + 2.1174).abs() < 2e-3);
        assert!((o.eigenvalues()[1] - 177.1172).abs() < 1e-2);
    }

    fn arb_observable(max_qubits: usize) -> impl Strategy<Value = ObservableExpansion<f64>> {
        (1..=max_qubits).prop_flat_map(|n| {
            let strings = proptest::collection::vec((1usize..4usize.pow(n as u32), -3.0f64..3.0), 1..6);
            (Just(n), -2.0f64..2.0, strings).prop_map(|(n, a0, raw)| {
                let terms = raw
                    .into_iter()
                    .filter(|(_, c)| c.abs() > 1e-3)
                    .map(|(code, c)| PauliTerm::real(c, PauliString::all(n).nth(code).unwrap()))
                    .collect::<Vec<_>>();
                ObservableExpansion::with_qubits(n, a0, terms).unwrap()
            })
        })
    }

    fn arb_state(n: usize) -> impl Strategy<Value = PureState<f64>> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1 << n).prop_filter_map("nonzero", |v| {
            PureState::normalized(v.into_iter().map(|(a, b)| Complex::new(a, b)).collect()).ok()
        })
    }

    fn arb_pair(max_qubits: usize) -> impl Strategy<Value = (ObservableExpansion<f64>, PureState<f64>)> {
        arb_observable(max_qubits).prop_flat_map(|o| {
            let n = o.qubit_count();
            (Just(o), arb_state(n))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn decompose_round_trip(n in 1usize..=3, seed in proptest::collection::vec(-1.0f64..1.0, 7)) {
            let m = random_hermitian(1 << n, &seed);
            let obs = decompose(&m).unwrap();
            prop_assert!((&obs.dense() - &m).max_abs() < 1e-12);
        }

        #[test]
        fn oracle_reconstructs_dense(obs in arb_observable(3)) {
            let dense = obs.dense();
            prop_assert!(dense.is_hermitian(1e-12));
            let o = obs.oracle();
            prop_assert!((&o.reconstruct() - &dense).max_abs() < 1e-10);
            let lmax = o.eigenvalues().iter().fold(0.0f64, |a, l| a.max(l.abs()));
            prop_assert_eq!(o.lambda_max(), lmax);
        }

        #[test]
        fn moments_match_repeated_products((obs, state) in arb_pair(3)) {
            let table = moments(&obs, &state, 4).unwrap();
            let mut v = state.amplitudes().to_vec();
            let mut power = 0;
            for k in 0..=4usize {
                while power < 2 * k + 1 {
                    v = obs.apply(&v);
                    power += 1;
                }
                let direct = inner(state.amplitudes(), &v);
                let scale = obs.norms().full_one.powi(2 * k as i32 + 1).max(1.0);
                prop_assert!((direct.re - table.m(k)).abs() <= 1e-10 * scale);
                prop_assert!(direct.im.abs() <= 1e-10 * scale);
            }
        }

        #[test]
        fn sine_matches_imaginary_part_of_evolution((obs, state) in arb_pair(2), tau in -1.0f64..1.0) {
            let s = exact_sine_expectation(&obs, &state, tau).unwrap();
            let u = exact_evolution(&obs, tau);
            prop_assert!((state.braket(&u).unwrap().im - s).abs() < 1e-12);
        }

        #[test]
        fn eigenstate_sine_is_exact(obs in arb_observable(2), k in 0usize..4, tau in -2.0f64..2.0) {
            let o = obs.oracle();
            let k = k % o.dim();
            let s = o.sine_expectation(&o.eigenstate(k), tau).unwrap();
            prop_assert!((s - (tau * o.eigenvalues()[k]).sin()).abs() < 1e-12);
        }

        #[test]
        fn odd_moments_bounded_by_one_norm((obs, state) in arb_pair(3)) {
            let table = moments(&obs, &state, 4).unwrap();
            let norm = obs.norms().full_one;
            for k in 0..=4usize {
                prop_assert!(table.m(k).abs() <= norm.powi(2 * k as i32 + 1) * (1.0 + 1e-12));
            }
        }

        #[test]
        fn pauli_expectation_matches_dense((obs, state) in arb_pair(3)) {
            for t in obs.terms() {
                let dense = state.braket(&t.string.matrix()).unwrap().re;
                prop_assert!((t.string.expectation(&state) - dense).abs() < 1e-12);
            }
        }
    }
}
