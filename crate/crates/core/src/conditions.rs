//! When does phase estimation beat operator averaging?
//!
//! Every check compares `R_O` against a right-hand side built from the
//! target relative error, the order `K` and some knowledge of higher moments.
//! All inequalities are non-strict.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::{Norms, SpectralOracle};
use crate::scalar::{count, lit, Real};
use crate::sqpe::f_k;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConditionInput<T> {
    pub r_o: T,
    pub eps_r: T,
    pub k: u32,
    /// Upper bound on `|m_K|/‖Ō‖₁^{2K+1}`.
    pub gamma_k: T,
    pub variance: T,
    /// `⟨O^{2K}⟩` or an upper bound on it.
    pub even_moment: T,
    pub lambda_u: T,
    pub alpha0: T,
    pub norm_t1: T,
    pub norm1: T,
}

impl<T: Real> ConditionInput<T> {
    /// Input for a state with mean `mean`; moment fields start at their loosest values.
    pub fn new(norms: Norms<T>, alpha0: T, mean: T, eps_r: T, k: u32) -> Result<Self> {
        let input = Self {
            r_o: mean.abs() / norms.traceless_one,
            eps_r,
            k,
            gamma_k: T::one(),
            variance: T::zero(),
            even_moment: mean.powi(2 * k as i32),
            lambda_u: mean.abs(),
            alpha0,
            norm_t1: norms.traceless_one,
            norm1: norms.full_one,
        };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.norm_t1 > T::zero() && self.norm1 > T::zero()) {
            return Err(Error::InvalidArgument("norms must be positive".into()));
        }
        if !(self.eps_r > T::zero()) {
            return Err(Error::InvalidArgument("eps_r must be positive".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("order K must be at least 1".into()));
        }
        if self.gamma_k > T::one() || self.gamma_k < T::zero() {
            return Err(Error::InvalidArgument("gamma_K must lie in [0, 1]".into()));
        }
        if self.variance < T::zero() || self.even_moment < T::zero() {
            return Err(Error::InvalidArgument("variance and even moment must be non-negative".into()));
        }
        Ok(())
    }

    /// `|⟨O⟩| = R_O·‖Ō_T‖₁`.
    pub fn mean_abs(&self) -> T {
        self.r_o * self.norm_t1
    }

    fn prefactor(&self) -> T {
        f_k::<T>(self.k).powi(self.k as i32) / self.eps_r
    }

    fn power(&self) -> i32 {
        2 * self.k as i32 + 1
    }
}

/// `f(K)^K/ε_r · |⟨O^{2K+1}⟩|/‖Ō_T‖₁^{2K+1}`.
pub fn exact_rhs<T: Real>(input: &ConditionInput<T>, m_2k1: T) -> T {
    input.prefactor() * m_2k1.abs() / input.norm_t1.powi(input.power())
}

pub fn condition_exact<T: Real>(input: &ConditionInput<T>, m_2k1: T) -> bool {
    input.r_o >= exact_rhs(input, m_2k1)
}

/// Same test with `|m_K|` replaced by `Γ_K ‖Ō‖₁^{2K+1}`.
pub fn condition_sufficient<T: Real>(input: &ConditionInput<T>) -> bool {
    let lift = (T::one() + input.alpha0.abs() / input.norm_t1).powi(input.power());
    input.r_o >= input.prefactor() * input.gamma_k * lift
}

/// `ε_r^{1/(2K)}/√f(K)`: the largest admissible `|λ|/‖Ō_T‖₁` for an eigenstate.
pub fn eigen_boundary<T: Real>(eps_r: T, k: u32) -> T {
    eps_r.powf(T::one() / count::<T>(2 * u64::from(k))) / f_k::<T>(k).sqrt()
}

pub fn condition_eigen<T: Real>(lambda_ratio: T, eps_r: T, k: u32) -> bool {
    lambda_ratio <= eigen_boundary(eps_r, k)
}

/// Smallest `ε_r` an eigenstate with ratio `x` admits at order `K`: `f(K)^K x^{2K}`.
pub fn eigen_min_eps<T: Real>(lambda_ratio: T, k: u32) -> T {
    f_k::<T>(k).powi(k as i32) * lambda_ratio.powi(2 * k as i32)
}

/// The numerators of the two loose conditions, before dividing by `ε_r`.
fn loose_numerators<T: Real>(input: &ConditionInput<T>) -> (T, T) {
    let p = input.power();
    let b = input.even_moment * input.mean_abs() + input.norm1.powi(p - 2) * input.variance;
    let c = input.norm1.powi(p) * (T::one() + input.variance / (input.norm1 * input.norm1));
    (b, c)
}

/// `(pconB, pconC)`.
pub fn condition_loose<T: Real>(input: &ConditionInput<T>) -> (bool, bool) {
    let (b, c) = loose_numerators(input);
    let scale = input.prefactor() / input.norm_t1.powi(input.power());
    (input.r_o >= scale * b, input.r_o >= scale * c)
}

/// Smallest `ε_r` each loose condition admits, `(pconB, pconC)`.
pub fn loose_min_eps<T: Real>(input: &ConditionInput<T>) -> (T, T) {
    let (b, c) = loose_numerators(input);
    let den = input.norm_t1.powi(input.power() - 1) * input.mean_abs();
    let f = f_k::<T>(input.k).powi(input.k as i32);
    (f * b / den, f * c / den)
}

/// Covariance term bounded by `2K λ_max^{2K−1} Var[O]`, which always implies [`condition_exact`].
pub fn condition_covariance_bound<T: Real>(input: &ConditionInput<T>, lambda_max: T) -> bool {
    let p = input.power();
    let cov = count::<T>(2 * u64::from(input.k)) * lambda_max.powi(p - 2) * input.variance;
    let num = input.even_moment * input.mean_abs() + cov;
    input.r_o >= input.prefactor() * num / input.norm_t1.powi(p)
}

/// `⟨O^{2K}⟩ ≤ λ_φ^{2K} + Δ‖Ō‖₁^{2K}`.
pub fn even_moment_from_fidelity<T: Real>(lambda_phi: T, delta: T, norm1: T, k: u32) -> T {
    let p = 2 * k as i32;
    lambda_phi.powi(p) + delta * norm1.powi(p)
}

/// `4K² λ_max^{4K−2} Var[O]`, the Lipschitz bound on `Var[O^{2K}]`.
pub fn even_power_variance_bound<T: Real>(variance: T, lambda_max: T, k: u32) -> T {
    let kk = count::<T>(u64::from(k));
    lit::<T>(4.0) * kk * kk * lambda_max.powi(4 * k as i32 - 2) * variance
}

/// States `√(1−w)|λ_lo⟩ + √w|λ_hi⟩` mixing the two extreme eigenvectors; `w` is fixed by the variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoLevelFamily<T> {
    pub lambda_lo: T,
    pub lambda_hi: T,
    pub norms: Norms<T>,
    pub alpha0: T,
}

impl<T: Real> TwoLevelFamily<T> {
    pub fn new(oracle: &SpectralOracle<T>, norms: Norms<T>, alpha0: T) -> Self {
        let ev = oracle.eigenvalues();
        Self { lambda_lo: ev[0], lambda_hi: ev[ev.len() - 1], norms, alpha0 }
    }

    pub fn max_variance(&self) -> T {
        let gap = self.lambda_hi - self.lambda_lo;
        gap * gap / lit(4.0)
    }

    /// Weight on the upper level, taking the root closer to the lower eigenvector.
    pub fn weight(&self, variance: T) -> Result<T> {
        let vmax = self.max_variance();
        if variance < T::zero() || variance > vmax {
            return Err(Error::InvalidArgument(format!("variance outside [0, {}]", vmax)));
        }
        let half = lit::<T>(0.5);
        Ok(half * (T::one() - (T::one() - variance / vmax).max(T::zero()).sqrt()))
    }

    pub fn moment(&self, variance: T, p: u32) -> Result<T> {
        let w = self.weight(variance)?;
        Ok((T::one() - w) * self.lambda_lo.powi(p as i32) + w * self.lambda_hi.powi(p as i32))
    }

    pub fn input(&self, variance: T, eps_r: T, k: u32) -> Result<ConditionInput<T>> {
        let mut input = ConditionInput::new(self.norms, self.alpha0, self.moment(variance, 1)?, eps_r, k)?;
        input.variance = variance;
        input.even_moment = self.moment(variance, 2 * k)?;
        input.lambda_u = self.lambda_lo.abs().max(self.lambda_hi.abs());
        Ok(input)
    }

    /// Variance at which pconB at order `k` stops admitting `eps_r`, by bisection in `log Var`.
    pub fn pconb_variance_crossing(&self, eps_r: T, k: u32) -> Result<T> {
        let admits = |v: T| -> Result<bool> { Ok(condition_loose(&self.input(v, eps_r, k)?).0) };
        let mut lo = self.max_variance() * lit(1e-12);
        let mut hi = self.max_variance();
        if !admits(lo)? {
            return Ok(T::zero());
        }
        if admits(hi)? {
            return Ok(hi);
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if admits(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((lo * hi).sqrt())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionMode {
    Fig1,
    Fig8,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionRow<T> {
    pub mode: &'static str,
    #[serde(rename = "K")]
    pub k: u32,
    pub x: T,
    pub y_boundary: T,
}

/// `count` log-spaced points from `start` to `end` inclusive.
pub fn logspace<T: Real>(start: T, end: T, count_: usize) -> Vec<T> {
    if count_ == 1 {
        return vec![start];
    }
    let (a, b) = (start.ln(), end.ln());
    let n = count::<T>(count_ as u64 - 1);
    let mut xs: Vec<T> = (0..count_).map(|i| (a + (b - a) * count::<T>(i as u64) / n).exp()).collect();
    xs[0] = start;
    xs[count_ - 1] = end;
    xs
}

/// Boundary curves. `fig1`: minimal `ε_r` per eigenvalue ratio in `[x_min, 1]`.
/// `fig8`: minimal `ε_r` per variance in `[x_min, max_variance]` for pconB and pconC.
pub fn region_scan<T: Real>(
    mode: RegionMode,
    k_range: std::ops::RangeInclusive<u32>,
    grid: usize,
    x_min: T,
    family: Option<&TwoLevelFamily<T>>,
) -> Result<Vec<RegionRow<T>>> {
    if grid < 16 {
        return Err(Error::InvalidArgument("grid resolution must be at least 16".into()));
    }
    if !(x_min > T::zero()) {
        return Err(Error::InvalidArgument("x_min must be positive".into()));
    }
    let mut rows = Vec::new();
    match mode {
        RegionMode::Fig1 => {
            let xs = logspace(x_min, T::one(), grid);
            for k in k_range {
                rows.extend(xs.iter().map(|&x| RegionRow { mode: "fig1", k, x, y_boundary: eigen_min_eps(x, k) }));
            }
        }
        RegionMode::Fig8 => {
            let family = family.ok_or_else(|| Error::InvalidArgument("fig8 needs an observable".into()))?;
            let xs = logspace(x_min, family.max_variance(), grid);
            let mut c_rows = Vec::new();
            for k in k_range {
                for &v in &xs {
                    let (b, c) = loose_min_eps(&family.input(v, T::one(), k)?);
                    rows.push(RegionRow { mode: "fig8_pconb", k, x: v, y_boundary: b });
                    c_rows.push(RegionRow { mode: "fig8_pconc", k, x: v, y_boundary: c });
                }
            }
            rows.extend(c_rows);
        }
    }
    Ok(rows)
}

/// Smallest `K ≤ k_max` whose condition admits `eps_r`; `None` when none does.
pub fn minimal_order(k_max: u32, admits: impl Fn(u32) -> bool) -> Option<u32> {
    (1..=k_max).find(|&k| admits(k))
}
