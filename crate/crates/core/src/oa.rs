//! Operator averaging: measure every Pauli term directly and combine the means.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::pauli_calibration_floor;
use crate::operators::{ObservableExpansion, PureState};
use crate::scalar::{count, to_f64, Real};
use crate::shots::{sample_pauli, ReadoutNoise, RngStream, ShotBatch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationMode {
    Uniform,
    Proportional,
}

/// Shots assigned to each traceless term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OAllocation {
    pub per_term_shots: Vec<u64>,
    pub mode: AllocationMode,
}

impl OAllocation {
    pub fn uniform(terms: usize, shots_per_term: u64) -> Result<Self> {
        if shots_per_term == 0 {
            return Err(Error::InvalidArgument("shots per term must be at least 1".into()));
        }
        Ok(Self { per_term_shots: vec![shots_per_term; terms], mode: AllocationMode::Uniform })
    }

    /// `M_k ∝ α_k/‖Ō_T‖₁`, each at least one shot, summing exactly to `total`
    /// (largest-remainder rounding).
    pub fn proportional<T: Real>(obs: &ObservableExpansion<T>, total: u64) -> Result<Self> {
        let l = obs.len() as u64;
        if total < l {
            return Err(Error::InvalidArgument(format!("{total} shots cannot cover {l} terms")));
        }
        let norm = to_f64(obs.norms().traceless_one);
        let free = (total - l) as f64;
        let ideal: Vec<f64> = obs.terms().iter().map(|t| free * to_f64(t.weight) / norm).collect();
        let mut shots: Vec<u64> = ideal.iter().map(|x| 1 + x.floor() as u64).collect();
        let mut left = total - shots.iter().sum::<u64>();
        let mut order: Vec<usize> = (0..shots.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = ideal[a] - ideal[a].floor();
            let rb = ideal[b] - ideal[b].floor();
            rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        for &k in order.iter().cycle() {
            if left == 0 {
                break;
            }
            shots[k] += 1;
            left -= 1;
        }
        Ok(Self { per_term_shots: shots, mode: AllocationMode::Proportional })
    }

    pub fn total(&self) -> u64 {
        self.per_term_shots.iter().sum()
    }
}

/// Estimate with its error budget; `mse = variance + bias_bound²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EstimateReport<T> {
    pub value: T,
    pub variance: T,
    pub bias_bound: T,
    pub mse: T,
    pub total_shots: u64,
}

impl<T: Real> EstimateReport<T> {
    pub fn new(value: T, variance: T, bias_bound: T, total_shots: u64) -> Self {
        Self { value, variance, bias_bound, mse: variance + bias_bound * bias_bound, total_shots }
    }

    pub fn rmse(&self) -> T {
        self.mse.sqrt()
    }
}

/// Draws one batch per term according to `allocation`.
pub fn oa_sample<T: Real>(
    obs: &ObservableExpansion<T>,
    state: &PureState<T>,
    allocation: &OAllocation,
    noise: Option<&ReadoutNoise<T>>,
    rng: &mut RngStream,
) -> Result<Vec<ShotBatch>> {
    if allocation.per_term_shots.len() != obs.len() {
        return Err(Error::DimensionMismatch { expected: obs.len(), got: allocation.per_term_shots.len() });
    }
    state.check_dim(obs.dim())?;
    obs.terms()
        .iter()
        .zip(&allocation.per_term_shots)
        .map(|(t, &m)| sample_pauli(t, state, m, noise, rng))
        .collect()
}

/// Combines per-term batches: value `α₀ + Σ c_k P̂_k` and the sample variance
/// `Σ α_k²(1−P̃_k²)/(M_k(1−2p̂)²)`, plus the calibration floor when noisy.
pub fn combine_batches<T: Real>(
    obs: &ObservableExpansion<T>,
    batches: &[ShotBatch],
    noise: Option<&ReadoutNoise<T>>,
) -> EstimateReport<T> {
    let contraction = noise.map_or(T::one(), |n| n.contraction());
    let mut value = obs.identity_coeff();
    let mut variance = T::zero();
    let mut raw_means = Vec::with_capacity(batches.len());
    for (t, b) in obs.terms().iter().zip(batches) {
        let raw = b.z_mean::<T>();
        raw_means.push(raw);
        value = value + t.signed_weight() * raw / contraction;
        variance = variance
            + t.weight * t.weight * (T::one() - raw * raw) / (count::<T>(b.trials) * contraction * contraction);
    }
    if let Some(n) = noise {
        variance = variance + pauli_calibration_floor(obs, n);
    }
    let shots = batches.iter().map(|b| b.trials).sum();
    EstimateReport::new(value, variance, T::zero(), shots)
}

pub fn oa_estimate<T: Real>(
    obs: &ObservableExpansion<T>,
    state: &PureState<T>,
    allocation: &OAllocation,
    noise: Option<&ReadoutNoise<T>>,
    rng: &mut RngStream,
) -> Result<EstimateReport<T>> {
    let batches = oa_sample(obs, state, allocation, noise, rng)?;
    Ok(combine_batches(obs, &batches, noise))
}

/// Shot budget in its exact form and its norm bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Budget<T> {
    pub required: T,
    pub bound: T,
}

impl<T: Real> Budget<T> {
    pub fn shots(&self) -> u64 {
        to_f64(self.required).ceil() as u64
    }
}

fn check_budget_inputs<T: Real>(obs: &ObservableExpansion<T>, p: &[T], eps: T) -> Result<()> {
    if !(eps > T::zero()) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    if p.len() != obs.len() {
        return Err(Error::DimensionMismatch { expected: obs.len(), got: p.len() });
    }
    Ok(())
}

/// Uniform allocation: `N_tot = (L/ε²) Σ α_k²(1−P̂_k²)`, bounded by `L‖Ō_T‖₂²/ε²`.
pub fn budget_uniform<T: Real>(obs: &ObservableExpansion<T>, p: &[T], eps: T) -> Result<Budget<T>> {
    check_budget_inputs(obs, p, eps)?;
    let l = count::<T>(obs.len() as u64);
    let s: T = obs.terms().iter().zip(p).map(|(t, &pk)| t.weight * t.weight * (T::one() - pk * pk)).sum();
    let two = obs.norms().traceless_two;
    Ok(Budget { required: l * s / (eps * eps), bound: l * two * two / (eps * eps) })
}

/// Proportional allocation: `N′_tot = (‖Ō_T‖₁/ε²) Σ α_k(1−P̂_k²)`, bounded by `‖Ō_T‖₁²/ε²`.
pub fn budget_proportional<T: Real>(obs: &ObservableExpansion<T>, p: &[T], eps: T) -> Result<Budget<T>> {
    check_budget_inputs(obs, p, eps)?;
    let one = obs.norms().traceless_one;
    let s: T = obs.terms().iter().zip(p).map(|(t, &pk)| t.weight * (T::one() - pk * pk)).sum();
    Ok(Budget { required: one * s / (eps * eps), bound: one * one / (eps * eps) })
}

/// `N_A = ‖Ō_T‖₁²/ε²`.
pub fn n_a<T: Real>(obs: &ObservableExpansion<T>, eps: T) -> T {
    let one = obs.norms().traceless_one;
    one * one / (eps * eps)
}

/// `N_A = 1/(R_O ε_r)²`.
pub fn n_a_relative<T: Real>(r_o: T, eps_r: T) -> T {
    (r_o * eps_r).powi(-2)
}

/// `ε = √((L/N_tot) Σ α_k²(1−P̂_k²))`.
pub fn analytic_eps<T: Real>(obs: &ObservableExpansion<T>, p: &[T], n_tot: u64) -> T {
    let l = count::<T>(obs.len() as u64);
    let s: T = obs.terms().iter().zip(p).map(|(t, &pk)| t.weight * t.weight * (T::one() - pk * pk)).sum();
    (l * s / count::<T>(n_tot)).sqrt()
}

/// One row of the `N_tot, analytic_eps, empirical_abs_err, seed` table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint<T> {
    pub n_tot: u64,
    pub analytic_eps: T,
    pub empirical_abs_err: T,
    pub seed: u64,
}

/// Cumulative uniform-allocation run evaluated at each schedule point.
/// `analytic_eps` uses the running `P̂_k`; `empirical_abs_err` is `|Ô − ⟨O⟩|`.
pub fn error_curve<T: Real>(
    obs: &ObservableExpansion<T>,
    state: &PureState<T>,
    schedule: &[u64],
    noise: Option<&ReadoutNoise<T>>,
    rng: &mut RngStream,
) -> Result<Vec<CurvePoint<T>>> {
    if obs.is_empty() {
        return Err(Error::InvalidArgument("observable has no traceless terms".into()));
    }
    if schedule.first().is_some_and(|&n| n == 0) || schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("schedule must be positive and strictly increasing".into()));
    }
    let truth = obs.expectation(state)?;
    let l = obs.len() as u64;
    let mut acc: Vec<ShotBatch> = obs.terms().iter().map(|_| ShotBatch { successes: 0, trials: 0, true_probability: 0.0 }).collect();
    let mut rows = Vec::with_capacity(schedule.len());
    for &n in schedule {
        let per_term = (n / l).max(1);
        let extra = per_term - acc[0].trials;
        if extra > 0 {
            let alloc = OAllocation::uniform(obs.len(), extra)?;
            for (a, b) in acc.iter_mut().zip(oa_sample(obs, state, &alloc, noise, rng)?) {
                *a = ShotBatch { successes: a.successes + b.successes, trials: a.trials + b.trials, true_probability: b.true_probability };
            }
        }
        let report = combine_batches(obs, &acc, noise);
        let contraction = noise.map_or(T::one(), |n| n.contraction());
        let p: Vec<T> = acc.iter().map(|b| b.z_mean::<T>() / contraction).collect();
        rows.push(CurvePoint {
            n_tot: per_term * l,
            analytic_eps: analytic_eps(obs, &p, per_term * l),
            empirical_abs_err: (report.value - truth).abs(),
            seed: rng.seed(),
        });
    }
    Ok(rows)
}

/// First schedule point whose analytic error is at or below `eps`.
pub fn shots_to_target<T: Real>(curve: &[CurvePoint<T>], eps: T) -> Option<u64> {
    curve.iter().find(|r| r.analytic_eps <= eps).map(|r| r.n_tot)
}

/// First schedule point whose single-run error is at or below `eps`.
pub fn single_run_crossing<T: Real>(curve: &[CurvePoint<T>], eps: T) -> Option<u64> {
    curve.iter().find(|r| r.empirical_abs_err <= eps).map(|r| r.n_tot)
}

/// `count` points geometrically spaced from `start` to `end`, deduplicated.
pub fn log_schedule(start: u64, end: u64, count: usize) -> Vec<u64> {
    let (a, b) = ((start.max(1) as f64).ln(), (end.max(start.max(1)) as f64).ln());
    let mut out: Vec<u64> = (0..count.max(2))
        .map(|i| (a + (b - a) * i as f64 / (count.max(2) - 1) as f64).exp().round() as u64)
        .collect();
    out.dedup();
    out
}
