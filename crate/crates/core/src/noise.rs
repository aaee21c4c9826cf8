//! Readout-error mitigation, calibration budgets and the ancilla channel.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::operators::{ObservableExpansion, PauliAxis, PureState};
use crate::scalar::{count, lit, to_f64, Real};
use crate::shots::ReadoutNoise;

/// Single-qubit rotation and readout error rates per qubit of a five-qubit device.
pub const DEVICE_ERRORS: [(usize, f64, f64); 5] =
    [(0, 0.0019, 0.0865), (1, 0.0024, 0.08), (2, 0.0024, 0.0382), (3, 0.0027, 0.3567), (4, 0.0036, 0.2715)];

fn check_p<T: Real>(p: T) -> Result<()> {
    if !(p >= T::zero() && p < lit(0.5)) {
        return Err(Error::SingularCorrection(to_f64(p)));
    }
    Ok(())
}

/// `⟨P⟩ = ⟨P̃⟩/(1−2p̂)`.
pub fn mitigate_pauli<T: Real>(raw_mean: T, p_hat: T) -> Result<T> {
    check_p(p_hat)?;
    Ok(raw_mean / (T::one() - lit::<T>(2.0) * p_hat))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MitigatedEstimate<T> {
    pub value: T,
    pub statistical_variance: T,
    pub calibration_floor: T,
    pub total_shots: u64,
    pub calibration_shots: u64,
}

impl<T: Real> MitigatedEstimate<T> {
    pub fn total_variance(&self) -> T {
        self.statistical_variance + self.calibration_floor
    }
}

/// `4‖Ō_T‖₂² p̂(1−p̂)/((1−2p̂)⁴ N_C)`; zero for `N_C = 0` (rate known exactly).
pub fn calibration_floor_bound<T: Real>(two_norm_sq: T, p_hat: T, n_c: u64) -> T {
    if n_c == 0 {
        return T::zero();
    }
    let c = T::one() - lit::<T>(2.0) * p_hat;
    lit::<T>(4.0) * two_norm_sq * p_hat * (T::one() - p_hat) / (c.powi(4) * count::<T>(n_c))
}

pub fn pauli_calibration_floor<T: Real>(obs: &ObservableExpansion<T>, noise: &ReadoutNoise<T>) -> T {
    let two = obs.norms().traceless_two;
    calibration_floor_bound(two * two, noise.estimated_p, noise.calibration_shots)
}

/// Sharper floor before bounding `⟨P̃_k⟩² ≤ 1`: `4δp²/(1−2p̂)⁴ Σ α_k²⟨P̃_k⟩²`.
pub fn pauli_calibration_floor_exact<T: Real>(
    obs: &ObservableExpansion<T>,
    raw_means: &[T],
    noise: &ReadoutNoise<T>,
) -> Result<T> {
    if raw_means.len() != obs.len() {
        return Err(Error::DimensionMismatch { expected: obs.len(), got: raw_means.len() });
    }
    let c = noise.contraction();
    let s: T = obs.terms().iter().zip(raw_means).map(|(t, &r)| t.weight * t.weight * r * r).sum();
    Ok(lit::<T>(4.0) * noise.estimator_variance * s / c.powi(4))
}

/// `(4/τ²) p̂(1−p̂)/((1−2p̂)⁴ N_C)`.
pub fn ancilla_calibration_floor<T: Real>(tau: T, p_hat: T, n_c: u64) -> T {
    calibration_floor_bound(T::one(), p_hat, n_c) / (tau * tau)
}

/// Mitigated operator-averaging estimate from raw per-term means.
pub fn mitigated_variance<T: Real>(
    obs: &ObservableExpansion<T>,
    raw_means: &[T],
    shots: &[u64],
    p_hat: T,
    n_c: u64,
) -> Result<MitigatedEstimate<T>> {
    check_p(p_hat)?;
    if raw_means.len() != obs.len() || shots.len() != obs.len() {
        return Err(Error::DimensionMismatch { expected: obs.len(), got: raw_means.len().min(shots.len()) });
    }
    if shots.contains(&0) {
        return Err(Error::InvalidArgument("every term needs at least one shot".into()));
    }
    let c = T::one() - lit::<T>(2.0) * p_hat;
    let mut value = obs.identity_coeff();
    let mut stat = T::zero();
    for ((t, &r), &m) in obs.terms().iter().zip(raw_means).zip(shots) {
        value = value + t.signed_weight() * r / c;
        stat = stat + t.weight * t.weight * (T::one() - r * r) / (count::<T>(m) * c * c);
    }
    let two = obs.norms().traceless_two;
    Ok(MitigatedEstimate {
        value,
        statistical_variance: stat,
        calibration_floor: calibration_floor_bound(two * two, p_hat, n_c),
        total_shots: shots.iter().sum::<u64>() + n_c,
        calibration_shots: n_c,
    })
}

/// Mitigated linear ancilla estimate `−⟨Z̃⟩/(τ(1−2p̂))` with its variance split.
pub fn mitigated_ancilla<T: Real>(raw_z: T, shots: u64, tau: T, p_hat: T, n_c: u64) -> Result<MitigatedEstimate<T>> {
    check_p(p_hat)?;
    if shots == 0 || !(tau > T::zero()) {
        return Err(Error::InvalidArgument("need shots > 0 and tau > 0".into()));
    }
    let c = T::one() - lit::<T>(2.0) * p_hat;
    Ok(MitigatedEstimate {
        value: -raw_z / (tau * c),
        statistical_variance: (T::one() - raw_z * raw_z) / (count::<T>(shots) * tau * tau * c * c),
        calibration_floor: ancilla_calibration_floor(tau, p_hat, n_c),
        total_shots: shots + n_c,
        calibration_shots: n_c,
    })
}

/// Variance model `stat/N + calib/N_C` with `N_tot = settings·N + N_C`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BudgetProblem<T> {
    pub stat: T,
    pub calib: T,
    pub settings: u64,
}

impl<T: Real> BudgetProblem<T> {
    /// Operator averaging with noiseless term expectations `expectations` and flip rate `p`.
    pub fn observable(obs: &ObservableExpansion<T>, expectations: &[T], p: T) -> Result<Self> {
        check_p(p)?;
        if expectations.len() != obs.len() {
            return Err(Error::DimensionMismatch { expected: obs.len(), got: expectations.len() });
        }
        let c = T::one() - lit::<T>(2.0) * p;
        let stat = obs
            .terms()
            .iter()
            .zip(expectations)
            .map(|(t, &e)| t.weight * t.weight * (T::one() - c * c * e * e))
            .sum::<T>()
            / (c * c);
        let two = obs.norms().traceless_two;
        let calib = calibration_floor_bound(two * two, p, 1);
        Ok(Self { stat, calib, settings: obs.len() as u64 })
    }

    /// Linear ancilla readout at step `tau` with noiseless `⟨Z_a⟩ = z`.
    pub fn ancilla(tau: T, z: T, p: T) -> Result<Self> {
        check_p(p)?;
        if !(tau > T::zero()) {
            return Err(Error::InvalidArgument("tau must be positive".into()));
        }
        let c = T::one() - lit::<T>(2.0) * p;
        Ok(Self {
            stat: (T::one() - c * c * z * z) / (tau * tau * c * c),
            calib: ancilla_calibration_floor(tau, p, 1),
            settings: 1,
        })
    }

    pub fn variance(&self, n: u64, n_c: u64) -> T {
        let s = if n == 0 { T::infinity() } else { self.stat / count::<T>(n) };
        let r = if self.calib > T::zero() {
            if n_c == 0 {
                T::infinity()
            } else {
                self.calib / count::<T>(n_c)
            }
        } else {
            T::zero()
        };
        s + r
    }

    /// Continuous total as a function of the calibration fraction `f`.
    fn total_at(&self, f: T, eps: T) -> T {
        let s = count::<T>(self.settings);
        (s * self.stat / (T::one() - f) + self.calib / f) / (eps * eps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    Joint,
    Precomputed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BudgetResult {
    pub mode: BudgetMode,
    pub n_per_setting: u64,
    pub n_c: u64,
    pub n_tot: u64,
    pub calibration_fraction: f64,
}

fn ceil_u64<T: Real>(x: T) -> u64 {
    to_f64(x).ceil().max(0.0) as u64
}

/// Minimizes `N_tot` with `N` and `N_C` chosen jointly (golden section over the
/// calibration fraction, then rounded up).
pub fn budget_joint<T: Real>(problem: &BudgetProblem<T>, eps: T) -> Result<BudgetResult> {
    if !(eps > T::zero()) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let s = count::<T>(problem.settings);
    if problem.calib <= T::zero() {
        let n = ceil_u64(problem.stat / (eps * eps));
        return Ok(BudgetResult {
            mode: BudgetMode::Joint,
            n_per_setting: n,
            n_c: 0,
            n_tot: problem.settings * n,
            calibration_fraction: 0.0,
        });
    }
    let inv_phi = lit::<T>((5f64.sqrt() - 1.0) / 2.0);
    let (mut lo, mut hi) = (T::zero(), T::one());
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (problem.total_at(x1, eps), problem.total_at(x2, eps));
    for _ in 0..200 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = problem.total_at(x1, eps);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = problem.total_at(x2, eps);
        }
        if hi - lo < T::epsilon() {
            break;
        }
    }
    let f = (lo + hi) * lit(0.5);
    let total = problem.total_at(f, eps);
    let mut n = ceil_u64((T::one() - f) * total / s);
    let n_c = ceil_u64(f * total);
    while problem.variance(n, n_c) > eps * eps {
        n += 1;
    }
    let n_tot = problem.settings * n + n_c;
    Ok(BudgetResult {
        mode: BudgetMode::Joint,
        n_per_setting: n,
        n_c,
        n_tot,
        calibration_fraction: n_c as f64 / n_tot as f64,
    })
}

/// Calibration already paid with `n_c0` shots; only `N` is optimized.
pub fn budget_precomputed<T: Real>(problem: &BudgetProblem<T>, eps: T, n_c0: u64) -> Result<BudgetResult> {
    if !(eps > T::zero()) || n_c0 == 0 {
        return Err(Error::InvalidArgument("need epsilon > 0 and N_C > 0".into()));
    }
    let residual = eps * eps - problem.calib / count::<T>(n_c0);
    if !(residual > T::zero()) {
        return Err(Error::Unreachable(n_c0));
    }
    let mut n = ceil_u64(problem.stat / residual);
    while problem.variance(n, n_c0) > eps * eps {
        n += 1;
    }
    let n_tot = problem.settings * n + n_c0;
    Ok(BudgetResult {
        mode: BudgetMode::Precomputed,
        n_per_setting: n,
        n_c: n_c0,
        n_tot,
        calibration_fraction: n_c0 as f64 / n_tot as f64,
    })
}

/// Both modes for each rate in `rates`. Rates where the precomputed
/// calibration cannot reach `eps` yield only the joint row.
pub fn budget_scan<T: Real>(
    obs: &ObservableExpansion<T>,
    expectations: &[T],
    rates: &[T],
    eps: T,
    n_c0: u64,
) -> Result<Vec<(T, BudgetResult)>> {
    let mut rows = Vec::with_capacity(2 * rates.len());
    for &p in rates {
        let problem = BudgetProblem::observable(obs, expectations, p)?;
        rows.push((p, budget_joint(&problem, eps)?));
        match budget_precomputed(&problem, eps, n_c0) {
            Ok(r) => rows.push((p, r)),
            Err(Error::Unreachable(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

/// Real 4×4 matrix `R_ij = Tr[P_i Λ(P_j)]/2` in the basis `(1, X, Y, Z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PauliTransferMatrix<T> {
    pub entries: [[T; 4]; 4],
}

impl<T: Real> PauliTransferMatrix<T> {
    pub fn identity() -> Self {
        let mut e = [[T::zero(); 4]; 4];
        for (i, row) in e.iter_mut().enumerate() {
            row[i] = T::one();
        }
        Self { entries: e }
    }

    pub fn diagonal(d: [T; 4]) -> Self {
        let mut m = Self::identity();
        for i in 0..4 {
            m.entries[i][i] = d[i];
        }
        m
    }

    /// Rotation about z by `theta`.
    pub fn rotation_z(theta: T) -> Self {
        let mut m = Self::identity();
        let (s, c) = theta.sin_cos();
        m.entries[1][1] = c;
        m.entries[1][2] = -s;
        m.entries[2][1] = s;
        m.entries[2][2] = c;
        m
    }

    /// Dephasing that scales the transverse components by `1 − p_z`.
    pub fn dephasing(p_z: T) -> Self {
        Self::diagonal([T::one(), T::one() - p_z, T::one() - p_z, T::one()])
    }

    pub fn compose(&self, after: &Self) -> Self {
        let mut e = [[T::zero(); 4]; 4];
        for (i, row) in e.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..4).map(|k| after.entries[i][k] * self.entries[k][j]).sum();
            }
        }
        Self { entries: e }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut d = T::zero();
        for i in 0..4 {
            for j in 0..4 {
                d = d.max((self.entries[i][j] - other.entries[i][j]).abs());
            }
        }
        d
    }

    pub fn is_trace_preserving(&self, tol: T) -> bool {
        (self.entries[0][0] - T::one()).abs() <= tol && (1..4).all(|j| self.entries[0][j].abs() <= tol)
    }
}

/// PTM of a single-qubit channel given by Kraus operators.
pub fn ptm_from_kraus<T: Real>(kraus: &[CMatrix<T>]) -> Result<PauliTransferMatrix<T>> {
    if kraus.iter().any(|k| k.dim() != 2) {
        return Err(Error::DimensionMismatch { expected: 2, got: kraus.iter().map(|k| k.dim()).find(|&d| d != 2).unwrap_or(0) });
    }
    let paulis: Vec<CMatrix<T>> = PauliAxis::ALL.iter().map(|a| a.matrix()).collect();
    let mut e = [[T::zero(); 4]; 4];
    for (j, pj) in paulis.iter().enumerate() {
        let mut out = CMatrix::zeros(2);
        for k in kraus {
            out = &out + &(&(k * pj) * &k.adjoint());
        }
        for (i, pi) in paulis.iter().enumerate() {
            e[i][j] = (pi * &out).trace().re * lit(0.5);
        }
    }
    Ok(PauliTransferMatrix { entries: e })
}

/// Ancilla channel of the controlled `e^{iτO}` acting on `|Ψ⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AncillaChannel<T> {
    pub kappa_re: T,
    pub kappa_im: T,
    /// `|ν|² = 1 − |κ|²`.
    pub leakage: T,
    /// Rotation angle `atan2(κ_I, κ_R)`.
    pub theta: T,
    /// Dephasing strength that factorizes the PTM, `1 − |κ|`.
    pub p_z: T,
    pub ptm: PauliTransferMatrix<T>,
}

impl<T: Real> AncillaChannel<T> {
    pub fn kappa(&self) -> Complex<T> {
        Complex::new(self.kappa_re, self.kappa_im)
    }

    /// Kraus pair `A₀ = diag(1, κ)`, `A₁ = diag(0, ν)` with `ν = √(1−|κ|²)`.
    pub fn kraus(&self) -> [CMatrix<T>; 2] {
        let z = Complex::new(T::zero(), T::zero());
        let one = Complex::new(T::one(), T::zero());
        let nu = Complex::new(self.leakage.max(T::zero()).sqrt(), T::zero());
        [CMatrix::diagonal(&[one, self.kappa()]), CMatrix::diagonal(&[z, nu])]
    }

    /// `R_z(p_z)·R_θ`.
    pub fn factorized(&self) -> PauliTransferMatrix<T> {
        PauliTransferMatrix::rotation_z(self.theta).compose(&PauliTransferMatrix::dephasing(self.p_z))
    }
}

pub fn ancilla_channel<T: Real>(obs: &ObservableExpansion<T>, state: &PureState<T>, tau: T) -> Result<AncillaChannel<T>> {
    state.check_dim(obs.dim())?;
    let kappa = state.braket(&obs.oracle().evolution(tau))?;
    Ok(channel_from_kappa(kappa))
}

pub fn channel_from_kappa<T: Real>(kappa: Complex<T>) -> AncillaChannel<T> {
    let mut ptm = PauliTransferMatrix::identity();
    ptm.entries[1][1] = kappa.re;
    ptm.entries[1][2] = -kappa.im;
    ptm.entries[2][1] = kappa.im;
    ptm.entries[2][2] = kappa.re;
    let modulus = kappa.norm().min(T::one());
    AncillaChannel {
        kappa_re: kappa.re,
        kappa_im: kappa.im,
        leakage: T::one() - modulus * modulus,
        theta: kappa.im.atan2(kappa.re),
        p_z: T::one() - modulus,
        ptm,
    }
}

/// Follows the channel with `Λ_D(ρ) = (1−p_D)ρ + (p_D/d)Tr[ρ]·1`.
pub fn depolarize<T: Real>(ptm: &PauliTransferMatrix<T>, p_d: T, d: u32) -> Result<PauliTransferMatrix<T>> {
    if !(p_d >= T::zero() && p_d <= T::one()) || d == 0 {
        return Err(Error::InvalidArgument("need 0 ≤ p_D ≤ 1 and d ≥ 1".into()));
    }
    let mut out = *ptm;
    let keep = T::one() - p_d;
    let first = keep + lit::<T>(2.0) * p_d / count::<T>(d as u64);
    for j in 0..4 {
        out.entries[0][j] = first * ptm.entries[0][j];
        for i in 1..4 {
            out.entries[i][j] = keep * ptm.entries[i][j];
        }
    }
    Ok(out)
}
