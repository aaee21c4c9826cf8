//! Product-formula compilation of `e^{iτO}` and the two-CNOT controlled evolution for one system qubit.

use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{inner, operator_norm, CMatrix};
use crate::operators::{ObservableExpansion, PureState};
use crate::scalar::{count, lit, Real};
use crate::shots::SineSource;

/// `order_j = 0` is the first-order product, `j ≥ 1` the order-`2j` Suzuki formula.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrotterPlan<T> {
    pub order_j: u32,
    pub intervals_r: u64,
    pub error_bound: T,
    pub rho: T,
    pub exponentials_per_interval: u64,
}

impl<T: Real> TrotterPlan<T> {
    /// Two-qubit gates for the controlled single-qubit case: 2 CNOTs per exponential.
    pub fn cnot_count(&self) -> u64 {
        2 * self.exponentials_per_interval * self.intervals_r
    }
}

fn check_r(r: u64) -> Result<()> {
    if r == 0 {
        return Err(Error::InvalidArgument("need at least one interval".into()));
    }
    Ok(())
}

fn five_pow<T: Real>(j: u32) -> T {
    lit::<T>(5.0).powi(j as i32 - 1)
}

/// `(τ‖Ō‖₁)²/r · e^{τ‖Ō‖₁/r}`.
pub fn first_order_bound<T: Real>(obs: &ObservableExpansion<T>, tau: T, r: u64) -> Result<T> {
    check_r(r)?;
    let x = tau.abs() * obs.norms().full_one;
    let r = count::<T>(r);
    Ok(x * x / r * (x / r).exp())
}

/// `(2τ5^{j−1}‖Ō‖₁)^{2j+1}/(3r^{2j}) · e^{2(τ/r)5^{j−1}‖Ō‖₁}`.
pub fn suzuki_bound<T: Real>(obs: &ObservableExpansion<T>, tau: T, r: u64, j: u32) -> Result<T> {
    check_r(r)?;
    if j == 0 {
        return first_order_bound(obs, tau, r);
    }
    let x = lit::<T>(2.0) * tau.abs() * five_pow::<T>(j) * obs.norms().full_one;
    let r = count::<T>(r);
    Ok(x.powi(2 * j as i32 + 1) / (lit::<T>(3.0) * r.powi(2 * j as i32)) * (x / r).exp())
}

fn check_tau_eps<T: Real>(tau: T, eps: T) -> Result<()> {
    if !(tau > T::zero() && eps > T::zero()) {
        return Err(Error::InvalidArgument("tau and eps must be positive".into()));
    }
    Ok(())
}

fn ceil_count<T: Real>(x: T) -> u64 {
    x.ceil().to_u64().unwrap_or(u64::MAX).max(1)
}

fn exponentials<T: Real>(obs: &ObservableExpansion<T>, j: u32) -> u64 {
    let l = obs.len() as u64;
    if j == 0 {
        l
    } else {
        2 * l * 5u64.pow(j - 1)
    }
}

/// `r₁ = ⌈max(τ‖Ō‖₁, (2e/(ετ))(τ‖Ō‖₁)²)⌉`, enough for `δ_τ/τ ≤ ε/2`.
pub fn first_order_intervals<T: Real>(obs: &ObservableExpansion<T>, tau: T, eps: T) -> Result<TrotterPlan<T>> {
    check_tau_eps(tau, eps)?;
    let rho = tau * obs.norms().full_one;
    let e = T::one().exp();
    let r = ceil_count(rho.max(lit::<T>(2.0) * e / (eps * tau) * rho * rho));
    Ok(TrotterPlan {
        order_j: 0,
        intervals_r: r,
        error_bound: first_order_bound(obs, tau, r)?,
        rho,
        exponentials_per_interval: exponentials(obs, 0),
    })
}

/// `r_j = ⌈ρ_j max(1, ((4e/(3ε))5^{j−1}‖Ō‖₁)^{1/(2j)})⌉` with `ρ_j = 2τ‖Ō‖₁5^{j−1}`.
pub fn suzuki_intervals<T: Real>(obs: &ObservableExpansion<T>, tau: T, eps: T, j: u32) -> Result<TrotterPlan<T>> {
    if j == 0 {
        return first_order_intervals(obs, tau, eps);
    }
    check_tau_eps(tau, eps)?;
    let norm = obs.norms().full_one;
    let rho = lit::<T>(2.0) * tau * norm * five_pow::<T>(j);
    let e = T::one().exp();
    let inner = (lit::<T>(4.0) * e / (lit::<T>(3.0) * eps) * five_pow::<T>(j) * norm)
        .powf(T::one() / count::<T>(2 * u64::from(j)));
    let r = ceil_count(rho * inner.max(T::one()));
    Ok(TrotterPlan {
        order_j: j,
        intervals_r: r,
        error_bound: suzuki_bound(obs, tau, r, j)?,
        rho,
        exponentials_per_interval: exponentials(obs, j),
    })
}

/// `ρ₁ = γ(K)‖Ō‖₁ (ε/|m_K|)^{1/(2K)}`, i.e. `τ_opt‖Ō‖₁`.
pub fn rho_one<T: Real>(norm1: T, eps: T, m_k: T, k: u32) -> T {
    crate::sqpe::gamma_k::<T>(k) * norm1 * (eps / m_k.abs()).powf(T::one() / count::<T>(2 * u64::from(k)))
}

fn term_exponential<T: Real>(string: &CMatrix<T>, angle: T) -> CMatrix<T> {
    let dim = string.dim();
    let (s, c) = angle.sin_cos();
    CMatrix::from_fn(dim, |a, b| {
        let id = if a == b { Complex::new(c, T::zero()) } else { Complex::new(T::zero(), T::zero()) };
        id + string[(a, b)] * Complex::new(T::zero(), s)
    })
}

struct Splitting<T> {
    strings: Vec<CMatrix<T>>,
    weights: Vec<T>,
    dim: usize,
}

impl<T: Real> Splitting<T> {
    fn new(obs: &ObservableExpansion<T>) -> Self {
        Self {
            strings: obs.terms().iter().map(|t| t.string.matrix()).collect(),
            weights: obs.terms().iter().map(|t| t.signed_weight()).collect(),
            dim: obs.dim(),
        }
    }

    fn forward(&self, t: T) -> CMatrix<T> {
        // later factors act after earlier ones
        let mut m = CMatrix::identity(self.dim);
        for (s, &w) in self.strings.iter().zip(&self.weights) {
            m = &term_exponential(s, t * w) * &m;
        }
        m
    }

    fn strang(&self, t: T) -> CMatrix<T> {
        let half = t * lit(0.5);
        let mut m = self.forward(half);
        for (s, &w) in self.strings.iter().zip(&self.weights).rev() {
            m = &term_exponential(s, half * w) * &m;
        }
        m
    }

    fn suzuki(&self, t: T, j: u32) -> CMatrix<T> {
        if j == 1 {
            return self.strang(t);
        }
        let u = T::one() / (lit::<T>(4.0) - lit::<T>(4.0).powf(T::one() / count::<T>(2 * u64::from(j) - 1)));
        let outer = self.suzuki(u * t, j - 1);
        let outer2 = &outer * &outer;
        let middle = self.suzuki((T::one() - lit::<T>(4.0) * u) * t, j - 1);
        &(&outer2 * &middle) * &outer2
    }
}

fn matrix_power<T: Real>(m: &CMatrix<T>, mut n: u64) -> CMatrix<T> {
    let mut acc = CMatrix::identity(m.dim());
    let mut base = m.clone();
    while n > 0 {
        if n & 1 == 1 {
            acc = &acc * &base;
        }
        base = &base * &base;
        n >>= 1;
    }
    acc
}

/// `e^{iτα₀}[step(τ/r)]^r` with the terms in listed order.
pub fn build_suzuki<T: Real>(obs: &ObservableExpansion<T>, tau: T, r: u64, j: u32) -> Result<CMatrix<T>> {
    check_r(r)?;
    let split = Splitting::new(obs);
    let dt = tau / count::<T>(r);
    let step = if j == 0 { split.forward(dt) } else { split.suzuki(dt, j) };
    let phase = Complex::from_polar(T::one(), tau * obs.identity_coeff());
    Ok(matrix_power(&step, r).scale(phase))
}

/// `‖S(τ,r) − U_τ‖` by dense computation.
pub fn exact_error<T: Real>(obs: &ObservableExpansion<T>, tau: T, r: u64, j: u32) -> Result<T> {
    let approx = build_suzuki(obs, tau, r, j)?;
    let exact = crate::operators::exact_evolution(obs, tau);
    Ok(operator_norm(&(&approx - &exact)))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope<T: Real>(xs: &[T], ys: &[T]) -> T {
    let n = count::<T>(xs.len() as u64);
    let lx: Vec<T> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<T> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().copied().sum::<T>() / n;
    let my = ly.iter().copied().sum::<T>() / n;
    let sxy: T = lx.iter().zip(&ly).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let sxx: T = lx.iter().map(|&a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `⟨sin τO⟩` read from a compiled propagator instead of the exact one.
#[derive(Clone, Debug)]
pub struct TrotterSource<T> {
    pub obs: ObservableExpansion<T>,
    pub state: PureState<T>,
    pub intervals_r: u64,
    pub order_j: u32,
}

impl<T: Real> TrotterSource<T> {
    pub fn new(obs: ObservableExpansion<T>, state: PureState<T>, intervals_r: u64, order_j: u32) -> Result<Self> {
        check_r(intervals_r)?;
        if state.dim() != obs.dim() {
            return Err(Error::DimensionMismatch { expected: obs.dim(), got: state.dim() });
        }
        Ok(Self { obs, state, intervals_r, order_j })
    }
}

impl<T: Real> SineSource<T> for TrotterSource<T> {
    fn sine_expectation(&self, tau: T) -> T {
        let u = build_suzuki(&self.obs, tau, self.intervals_r, self.order_j).expect("intervals checked at construction");
        let psi = self.state.amplitudes();
        inner(psi, &u.mul_vec(psi)).im
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrotterRow<T> {
    pub j: u32,
    pub tau: T,
    pub eps: T,
    pub r: u64,
    pub bound: T,
    pub exact_error: Option<T>,
}

/// One row per `(j, τ, ε)`; the dense error is only computed when `r ≤ exact_r_max`.
pub fn trotter_scan<T: Real>(
    obs: &ObservableExpansion<T>,
    orders: &[u32],
    taus: &[T],
    eps: &[T],
    exact_r_max: u64,
) -> Result<Vec<TrotterRow<T>>> {
    let mut rows = Vec::new();
    for &j in orders {
        for &tau in taus {
            for &e in eps {
                let plan = suzuki_intervals(obs, tau, e, j)?;
                let exact = if plan.intervals_r <= exact_r_max {
                    Some(exact_error(obs, tau, plan.intervals_r, j)?)
                } else {
                    None
                };
                rows.push(TrotterRow { j, tau, eps: e, r: plan.intervals_r, bound: plan.error_bound, exact_error: exact });
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Wire {
    Ancilla,
    System,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Gate<T> {
    Phase(T),
    Rz(T),
    Ry(T),
    /// Control on the ancilla, target on the system qubit.
    Cnot,
}

/// `diag(e^{iφ/2}, e^{−iφ/2})`.
pub fn rz<T: Real>(phi: T) -> CMatrix<T> {
    let h = phi * lit(0.5);
    CMatrix::diagonal(&[Complex::from_polar(T::one(), h), Complex::from_polar(T::one(), -h)])
}

/// `[[cos θ/2, sin θ/2], [−sin θ/2, cos θ/2]]`.
pub fn ry<T: Real>(theta: T) -> CMatrix<T> {
    let (s, c) = (theta * lit(0.5)).sin_cos();
    CMatrix::from_real_rows(&[vec![c, s], vec![-s, c]])
}

/// `diag(1, e^{iθ})`.
pub fn phase_gate<T: Real>(theta: T) -> CMatrix<T> {
    CMatrix::diagonal(&[Complex::new(T::one(), T::zero()), Complex::from_polar(T::one(), theta)])
}

impl<T: Real> Gate<T> {
    pub fn wire(&self) -> Option<Wire> {
        match self {
            Gate::Phase(_) => Some(Wire::Ancilla),
            Gate::Rz(_) | Gate::Ry(_) => Some(Wire::System),
            Gate::Cnot => None,
        }
    }

    /// 4×4 matrix in the basis `|ancilla, system⟩`.
    pub fn matrix(&self) -> CMatrix<T> {
        let id = CMatrix::<T>::identity(2);
        match *self {
            Gate::Phase(t) => phase_gate(t).kron(&id),
            Gate::Rz(t) => id.kron(&rz(t)),
            Gate::Ry(t) => id.kron(&ry(t)),
            Gate::Cnot => {
                let one = Complex::new(T::one(), T::zero());
                let mut m = CMatrix::zeros(4);
                m[(0, 0)] = one;
                m[(1, 1)] = one;
                m[(2, 3)] = one;
                m[(3, 2)] = one;
                m
            }
        }
    }
}

/// `U = e^{iθ₀} R_z(θ₁) R_y(θ₂) R_z(θ₃)` and the gate list realizing `C_U`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlledCircuit<T> {
    pub angles: [T; 4],
    pub gates: Vec<Gate<T>>,
}

impl<T: Real> ControlledCircuit<T> {
    /// Gates in time order. With control set the system sees
    /// `R_z(a)R_y(θ₂)R_z(b)` for first rotation `b` and last `a`, so the
    /// outer angles enter in the opposite order to the decomposition.
    pub fn from_angles(angles: [T; 4]) -> Self {
        let [t0, t1, t2, t3] = angles;
        let (first, last) = (t3, t1);
        let half = lit::<T>(0.5);
        let gates = vec![
            Gate::Phase(t0),
            Gate::Rz(first),
            Gate::Ry(t2 * half),
            Gate::Cnot,
            Gate::Ry(-t2 * half),
            Gate::Rz(-(last + first) * half),
            Gate::Cnot,
            Gate::Rz((last - first) * half),
        ];
        Self { angles, gates }
    }

    pub fn cnot_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::Cnot)).count()
    }

    pub fn matrix(&self) -> CMatrix<T> {
        self.gates.iter().fold(CMatrix::identity(4), |acc, g| &g.matrix() * &acc)
    }

    /// `e^{iθ₀} R_z(θ₁) R_y(θ₂) R_z(θ₃)`.
    pub fn target_unitary(&self) -> CMatrix<T> {
        let [t0, t1, t2, t3] = self.angles;
        (&(&rz(t1) * &ry(t2)) * &rz(t3)).scale(Complex::from_polar(T::one(), t0))
    }
}

/// `C_U = diag(1, U)` in the basis `|ancilla, system⟩`.
pub fn controlled<T: Real>(u: &CMatrix<T>) -> CMatrix<T> {
    let mut m = CMatrix::identity(4);
    for a in 0..2 {
        for b in 0..2 {
            m[(2 + a, 2 + b)] = u[(a, b)];
        }
    }
    m
}

/// Angles of an `SU(2)` matrix `[[p, q], [−q*, p*]]` as `R_z(θ₁)R_y(θ₂)R_z(θ₃)`.
pub fn su2_angles<T: Real>(p: Complex<T>, q: Complex<T>) -> [T; 3] {
    let tiny = lit::<T>(1e-300).max(T::min_positive_value());
    let sum = if p.norm() > tiny { p.arg() * lit(2.0) } else { T::zero() };
    let diff = if q.norm() > tiny { q.arg() * lit(2.0) } else { T::zero() };
    let theta2 = lit::<T>(2.0) * q.norm().atan2(p.norm());
    [(sum + diff) * lit(0.5), theta2, (sum - diff) * lit(0.5)]
}

/// `e^{iδH}` for `H = [[α, β], [β, γ]]`.
pub fn two_level_propagator<T: Real>(alpha: T, beta: T, gamma: T, delta: T) -> CMatrix<T> {
    let (phase, p, q) = propagator_parts(alpha, beta, gamma, delta);
    let g = Complex::from_polar(T::one(), phase);
    CMatrix::from_rows(&[vec![g * p, g * q], vec![-g * q.conj(), g * p.conj()]])
}

/// Phase `δ(α+γ)/2` and the `SU(2)` part `cos θ + i θ̂·σ sin θ` with `θ⃗ = (δβ, 0, δ(α−γ)/2)`.
fn propagator_parts<T: Real>(alpha: T, beta: T, gamma: T, delta: T) -> (T, Complex<T>, Complex<T>) {
    let half = lit::<T>(0.5);
    let (tx, tz) = (delta * beta, delta * (alpha - gamma) * half);
    let theta = tx.hypot(tz);
    let (s, c) = theta.sin_cos();
    let (nx, nz) = if theta > T::zero() { (tx / theta, tz / theta) } else { (T::zero(), T::zero()) };
    let p = Complex::new(c, nz * s);
    let q = Complex::new(T::zero(), nx * s);
    (delta * (alpha + gamma) * half, p, q)
}

pub fn controlled_angles<T: Real>(alpha: T, beta: T, gamma: T, delta: T) -> Result<ControlledCircuit<T>> {
    if !(alpha.is_finite() && beta.is_finite() && gamma.is_finite() && delta.is_finite()) {
        return Err(Error::InvalidArgument("Hamiltonian entries and delta must be finite".into()));
    }
    let (phase, p, q) = propagator_parts(alpha, beta, gamma, delta);
    let [t1, t2, t3] = su2_angles(p, q);
    Ok(ControlledCircuit::from_angles([phase, t1, t2, t3]))
}

/// Depth estimate for a controlled product formula on `n` system qubits: every
/// exponential of a weight-`w` string costs `2(w−1)` CNOTs for the parity ladder plus 2 for the control.
pub fn controlled_cnot_estimate<T: Real>(obs: &ObservableExpansion<T>, plan: &TrotterPlan<T>) -> u64 {
    let per_term: Vec<u64> = obs
        .terms()
        .iter()
        .map(|t| {
            let w = t.string.axes().iter().filter(|a| **a != crate::operators::PauliAxis::I).count() as u64;
            2 * w.saturating_sub(1) + 2
        })
        .collect();
    let sweep: u64 = per_term.iter().sum();
    let sweeps_per_interval = if plan.order_j == 0 { 1 } else { 2 * 5u64.pow(plan.order_j - 1) };
    sweep * sweeps_per_interval * plan.intervals_r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{PauliAxis, PauliString, PauliTerm};
    use crate::shots::RngStream;
    use proptest::prelude::*;

    fn deuteron() -> ObservableExpansion<f64> {
        ObservableExpansion::from_real(87.5, &[(-35.0, "X"), (82.5, "Z")]).unwrap()
    }

    fn random_obs(rng: &mut RngStream, qubits: usize) -> ObservableExpansion<f64> {
        let strings: Vec<PauliString> = PauliString::all(qubits).filter(|s| !s.is_identity()).collect();
        let count = 2 + (rng.uniform() * 3.0) as usize;
        let terms = (0..count)
            .map(|_| {
                let s = strings[(rng.uniform() * strings.len() as f64) as usize % strings.len()].clone();
                PauliTerm::real(rng.uniform() * 4.0 - 2.0, s)
            })
            .collect();
        ObservableExpansion::with_qubits(qubits, rng.uniform() * 2.0 - 1.0, terms).unwrap()
    }

    #[test]
    fn zero_time_bounds_vanish() {
        let h = deuteron();
        assert_eq!(first_order_bound(&h, 0.0, 3).unwrap(), 0.0);
        assert_eq!(suzuki_bound(&h, 0.0, 3, 2).unwrap(), 0.0);
        assert!(first_order_bound(&h, 0.1, 0).is_err());
    }

    #[test]
    fn deuteron_first_order_arithmetic() {
        let h = deuteron();
        let b = first_order_bound(&h, 0.0879, 100_000).unwrap();
        let x: f64 = 0.0879 * 205.0;
        assert!((x - 18.0195).abs() < 1e-4);
        assert!((b - x * x / 1e5 * (x / 1e5f64).exp()).abs() < 1e-15);
        let plan = first_order_intervals(&h, 0.0879, 0.021174).unwrap();
        let expect = (2.0 * std::f64::consts::E / (0.021174 * 0.0879) * x * x).ceil() as u64;
        assert_eq!(plan.intervals_r, expect);
        assert!((plan.intervals_r as f64 - 9.5e5).abs() < 0.02e6, "{}", plan.intervals_r);
        assert!(plan.error_bound / 0.0879 <= 0.021174 / 2.0);
    }

    #[test]
    fn large_eps_takes_left_branch() {
        let h = ObservableExpansion::from_real(0.0, &[(1.0, "Z")]).unwrap();
        assert_eq!(first_order_intervals(&h, 0.5, 1e6).unwrap().intervals_r, 1);
        let p = suzuki_intervals(&deuteron(), 0.01, 1e9, 2).unwrap();
        assert_eq!(p.intervals_r, (2.0f64 * 0.01 * 205.0 * 5.0).ceil() as u64);
    }

    #[test]
    fn intervals_are_sufficient_on_random_instances() {
        let mut rng = RngStream::new(11);
        for i in 0..20 {
            let obs = random_obs(&mut rng, 1 + i % 2);
            let tau = 0.01 + rng.uniform() * 0.5;
            let eps = 10f64.powf(-1.0 - 4.0 * rng.uniform());
            for j in 0..=3 {
                let plan = suzuki_intervals(&obs, tau, eps, j).unwrap();
                assert!(plan.error_bound / tau <= eps / 2.0 * (1.0 + 1e-12), "j={j}");
                assert!(plan.error_bound <= eps / 2.0);
            }
        }
    }

    #[test]
    fn deuteron_fourth_order_plan_meets_target() {
        let plan = suzuki_intervals(&deuteron(), 0.4, 0.021174, 2).unwrap();
        assert!(plan.error_bound / 0.4 <= 0.021174 / 2.0);
        assert_eq!(plan.exponentials_per_interval, 20);
        assert_eq!(plan.cnot_count(), 40 * plan.intervals_r);
    }

    #[test]
    fn bounds_dominate_dense_error() {
        let mut rng = RngStream::new(5);
        for i in 0..100 {
            let obs = random_obs(&mut rng, 1 + i % 2);
            let norm = obs.norms().full_one;
            let tau = rng.uniform() * 0.3 / norm * 4.0;
            let r = 1 + (rng.uniform() * 64.0) as u64;
            let j = (i % 3) as u32;
            let err = exact_error(&obs, tau, r, j).unwrap();
            let bound = suzuki_bound(&obs, tau, r, j).unwrap();
            assert!(err <= bound + 1e-13, "i={i} j={j} err={err} bound={bound}");
        }
    }

    #[test]
    fn built_formulas_are_unitary_and_converge() {
        let h = deuteron();
        for j in 0..=2 {
            let u = build_suzuki(&h, 0.3, 7, j).unwrap();
            assert!(u.unitarity_defect() < 1e-12);
        }
        let single = ObservableExpansion::from_real(0.3, &[(1.7, "Y")]).unwrap();
        assert!(exact_error(&single, 0.9, 1, 0).unwrap() < 1e-13);
        assert!(exact_error(&single, 0.9, 1, 2).unwrap() < 1e-13);
    }

    #[test]
    fn deuteron_convergence_slopes() {
        let h = deuteron();
        let rs: Vec<f64> = [4u64, 8, 16, 32, 64].iter().map(|&r| r as f64).collect();
        let slope = |j: u32| {
            let errs: Vec<f64> = [4u64, 8, 16, 32, 64].iter().map(|&r| exact_error(&h, 0.01, r, j).unwrap()).collect();
            -log_log_slope(&rs, &errs)
        };
        let s1 = slope(0);
        assert!((s1 - 1.0).abs() < 0.1, "{s1}");
        let s2 = slope(1);
        assert!((1.8..=2.2).contains(&s2), "{s2}");
        let s4 = slope(2);
        assert!((3.6..=4.4).contains(&s4), "{s4}");
    }

    #[test]
    fn order_k_plan_is_precision_independent() {
        let h = deuteron();
        let lambda: f64 = -2.117_241_644_674_607;
        for k in 1..=2u32 {
            let mk = lambda.powi(2 * k as i32 + 1);
            let plan_at = |eps: f64, j: u32| {
                let tau = crate::sqpe::gamma_k::<f64>(k) * (eps / mk.abs()).powf(1.0 / (2 * k) as f64);
                suzuki_intervals(&h, tau, eps, j).unwrap()
            };
            let rs: Vec<u64> = [1e-2, 1e-4, 1e-6].iter().map(|&e| plan_at(e, k).intervals_r).collect();
            assert!(rs.iter().all(|&r| r.abs_diff(rs[0]) <= 1), "{rs:?}");
            let hi: Vec<u64> = [1e-2, 1e-4, 1e-6].iter().map(|&e| plan_at(e, k + 1).intervals_r).collect();
            assert!(hi[0] > hi[1] && hi[1] > hi[2], "{hi:?}");
            for (a, b) in hi.iter().zip(&rs) {
                assert!((*a as f64) < 5.0 * *b as f64);
            }
            let eps = 1e-4;
            let tau = crate::sqpe::gamma_k::<f64>(k) * (eps / mk.abs()).powf(1.0 / (2 * k) as f64);
            assert!((rho_one(205.0, eps, mk, k) - tau * 205.0).abs() < 1e-9);
        }
    }

    #[test]
    fn cnot_count_monotone_in_r() {
        let h = deuteron();
        let mut last = 0;
        for e in [1e-1, 1e-2, 1e-3, 1e-4] {
            let p = first_order_intervals(&h, 0.05, e).unwrap();
            assert!(p.cnot_count() >= last);
            last = p.cnot_count();
        }
        let p = suzuki_intervals(&h, 0.05, 1e-3, 1).unwrap();
        assert_eq!(controlled_cnot_estimate(&h, &p), p.cnot_count());
    }

    #[test]
    fn trotter_source_shift_within_bound() {
        let h = deuteron();
        let state = h.oracle().ground_state();
        let profile = h.oracle().profile(&state).unwrap();
        for (j, r) in [(0u32, 200u64), (1, 20), (2, 4)] {
            let src = TrotterSource::new(h.clone(), state.clone(), r, j).unwrap();
            for tau in [0.01, 0.05, 0.2] {
                let shift = (src.sine_expectation(tau) - profile.sine(tau)).abs() / tau;
                let delta = suzuki_bound(&h, tau, r, j).unwrap();
                assert!(shift <= delta / tau + 1e-12, "j={j} tau={tau}");
            }
        }
        assert!(TrotterSource::new(h, PureState::basis(2, 0).unwrap(), 1, 0).is_err());
    }

    #[test]
    fn scan_rows() {
        let rows = trotter_scan(&deuteron(), &[1, 2], &[0.01, 0.1], &[1e-2], 200).unwrap();
        assert_eq!(rows.len(), 4);
        for row in rows {
            if let Some(e) = row.exact_error {
                assert!(e <= row.bound);
            }
        }
    }

    #[test]
    fn printed_circuit_order_swaps_outer_angles() {
        // the printed gate order realizes R_z(θ₃)R_y(θ₂)R_z(θ₁) for the listed angles
        let [t0, t1, t2, t3] = [0.3, 0.7, -1.1, 0.4];
        let h = 0.5;
        let printed = [
            Gate::Phase(t0),
            Gate::Rz(t1),
            Gate::Ry(t2 * h),
            Gate::Cnot,
            Gate::Ry(-t2 * h),
            Gate::Rz(-(t3 + t1) * h),
            Gate::Cnot,
            Gate::Rz((t3 - t1) * h),
        ];
        let m = printed.iter().fold(CMatrix::identity(4), |acc, g| &g.matrix() * &acc);
        let swapped = (&(&rz(t3) * &ry(t2)) * &rz(t1)).scale(Complex::from_polar(1.0, t0));
        assert!((&m - &controlled(&swapped)).max_abs() < 1e-14);
    }

    #[test]
    fn zero_delta_gives_identity() {
        let c = controlled_angles(170.0, -35.0, 5.0, 0.0).unwrap();
        assert_eq!(c.angles, [0.0; 4]);
        assert!((&c.matrix() - &CMatrix::identity(4)).max_abs() < 1e-15);
        assert_eq!(c.cnot_count(), 2);
    }

    #[test]
    fn deuteron_controlled_evolution() {
        let h = deuteron();
        for (a, b, g) in [(170.0, -35.0, 5.0), (5.0, -35.0, 170.0)] {
            let c = controlled_angles(a, b, g, 0.4).unwrap();
            let u = two_level_propagator(a, b, g, 0.4);
            assert!((&c.matrix() - &controlled(&u)).max_abs() < 1e-10);
            assert!((&c.target_unitary() - &u).max_abs() < 1e-10);
        }
        // Pauli convention: Z = diag(1, −1), so α = 87.5 + 82.5
        let exact = crate::operators::exact_evolution(&h, 0.4);
        assert!((&two_level_propagator(170.0, -35.0, 5.0, 0.4) - &exact).max_abs() < 1e-12);
    }

    #[test]
    fn axis_aligned_is_controlled_phase() {
        let c = controlled_angles(2.0f64, 0.0, -1.0, 0.7).unwrap();
        assert!(c.angles[2].abs() < 1e-15);
        let m = c.matrix();
        for i in 0..4 {
            for k in 0..4 {
                if i != k {
                    assert!(m[(i, k)].norm() < 1e-14);
                }
            }
        }
        assert!((&m - &controlled(&two_level_propagator(2.0, 0.0, -1.0, 0.7))).max_abs() < 1e-12);
        let flat = controlled_angles(1.5, 0.0, 1.5, 0.9).unwrap();
        assert_eq!(&flat.angles[1..], &[0.0, 0.0, 0.0]);
        assert!(controlled_angles(f64::NAN, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn gate_wires() {
        assert_eq!(Gate::Phase(0.1f64).wire(), Some(Wire::Ancilla));
        assert_eq!(Gate::<f64>::Cnot.wire(), None);
        assert_eq!(PauliAxis::from_symbol('Z'), Some(PauliAxis::Z));
    }

    proptest! {
        #[test]
        fn controlled_circuit_matches_exact(a in -200.0f64..200.0, b in -100.0f64..100.0, g in -200.0f64..200.0, d in -2.0f64..2.0) {
            let c = controlled_angles(a, b, g, d).unwrap();
            let u = two_level_propagator(a, b, g, d);
            prop_assert!((&c.matrix() - &controlled(&u)).max_abs() < 1e-10);
            prop_assert!(u.unitarity_defect() < 1e-12);
            let dense = ObservableExpansion::from_real((a + g) / 2.0, &[(b, "X"), ((a - g) / 2.0, "Z")]).unwrap();
            prop_assert!((&u - &crate::operators::exact_evolution(&dense, d)).max_abs() < 1e-9);
        }

        #[test]
        fn su2_angles_roundtrip(t1 in -3.0f64..3.0, t2 in 0.0f64..3.1, t3 in -3.0f64..3.0) {
            let v = &(&rz(t1) * &ry(t2)) * &rz(t3);
            let [a, b, c] = su2_angles(v[(0, 0)], v[(0, 1)]);
            let w = &(&rz(a) * &ry(b)) * &rz(c);
            prop_assert!((&v - &w).max_abs() < 1e-12);
        }
    }
}
