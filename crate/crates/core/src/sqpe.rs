//! Single-step phase estimation: planning formulas, the linear estimator and
//! the adaptive cubic maximum-likelihood loop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oa::EstimateReport;
use crate::scalar::{count, factorial, lit, to_f64, Real};
use crate::shots::{bayes_probability, sample_ancilla_z, ReadoutNoise, RngStream, ShotBatch, SineSource};

/// `f(K) = ((2K+1)/(2K))·(√(2K+1)/(2K+1)!)^{1/K}`.
pub fn f_k<T: Real>(k: u32) -> T {
    let n = 2 * k + 1;
    let nn = count::<T>(n as u64);
    nn / count::<T>(2 * k as u64) * (nn.sqrt() / factorial::<T>(n)).powf(T::one() / count::<T>(k as u64))
}

/// `γ(K) = ((2K+1)!/(2√(2K+1)))^{1/(2K)}`.
pub fn gamma_k<T: Real>(k: u32) -> T {
    let n = 2 * k + 1;
    (factorial::<T>(n) / (lit::<T>(2.0) * count::<T>(n as u64).sqrt())).powf(T::one() / count::<T>(2 * k as u64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SqpePlan<T> {
    pub order: u32,
    pub tau_opt: T,
    pub f_k: T,
    pub predicted_shots: T,
    pub bias_bound_at_tau: T,
}

/// Optimal step and shot count at order `k` for absolute target `eps` and `|m_K|` (or a bound on it).
pub fn plan<T: Real>(k: u32, eps: T, m_k: T) -> Result<SqpePlan<T>> {
    let m = m_k.abs();
    if k == 0 || !(eps > T::zero()) || !(m > T::zero()) {
        return Err(Error::InvalidArgument("plan needs K ≥ 1, eps > 0 and |m_K| > 0".into()));
    }
    let n = 2 * k + 1;
    let kk = count::<T>(k as u64);
    let fact = factorial::<T>(n);
    let tau = (fact / count::<T>(n as u64).sqrt() * eps / m).powf(T::one() / (kk + kk));
    let f = f_k::<T>(k);
    Ok(SqpePlan {
        order: k,
        tau_opt: tau,
        f_k: f,
        predicted_shots: m.powf(T::one() / kk) / eps.powf(lit::<T>(2.0) + T::one() / kk) * f,
        bias_bound_at_tau: truncation_bound(k, tau, m),
    })
}

/// `τ^{2K}|m_K|/(2K+1)!`.
pub fn truncation_bound<T: Real>(k: u32, tau: T, m_k: T) -> T {
    tau.powi(2 * k as i32) * m_k.abs() / factorial::<T>(2 * k + 1)
}

/// Linear step from an eigenvalue bound `λ_u`: `√((6/√3)·ε_r/λ_u²)`.
pub fn linear_tau_from_bound<T: Real>(eps_r: T, lambda_u: T) -> T {
    (lit::<T>(6.0) / lit::<T>(3.0).sqrt() * eps_r / (lambda_u * lambda_u)).sqrt()
}

/// `O_K(τ) = −(ẑ + Σ_{k<K} τ^{2k+1}(−1)^k m_k/(2k+1)!)/τ` with `known = [m_1, …, m_{K−1}]`.
pub fn estimator_k<T: Real>(z_hat: T, tau: T, known: &[T]) -> Result<T> {
    if tau == T::zero() {
        return Err(Error::InvalidArgument("tau must be nonzero".into()));
    }
    let mut s = z_hat;
    for (i, &m) in known.iter().enumerate() {
        let k = i as u32 + 1;
        let sign = if k % 2 == 0 { T::one() } else { -T::one() };
        s = s + tau.powi(2 * k as i32 + 1) * sign * m / factorial::<T>(2 * k + 1);
    }
    Ok(-s / tau)
}

/// One point of an accumulating linear run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearPoint<T> {
    pub shots: u64,
    pub estimate: T,
    pub mse: T,
    pub abs_err: Option<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearRun<T> {
    pub tau: T,
    pub report: EstimateReport<T>,
    pub curve: Vec<LinearPoint<T>>,
    pub shots_to_target: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearOptions<T> {
    pub tau: T,
    pub target_eps: T,
    /// `|m_1| = |⟨O³⟩|`, exact or an upper bound.
    pub m1_bound: T,
    pub shot_cap: u64,
    pub first_checkpoint: u64,
    /// Ratio between consecutive checkpoints.
    pub growth: f64,
    /// Oracle value used only for the `abs_err` column.
    pub truth: Option<T>,
}

impl<T: Real> LinearOptions<T> {
    pub fn new(tau: T, target_eps: T, m1_bound: T) -> Self {
        Self { tau, target_eps, m1_bound, shot_cap: 100_000_000, first_checkpoint: 100, growth: 1.01, truth: None }
    }
}

/// Accumulates ancilla shots at a fixed step and reports the linear estimate
/// with MSE `(1−Ẑ²)/(τ²N) + τ⁴m₁²/36`, stopping once it reaches `target_eps²`.
/// Returns `shots_to_target = None` when the cap is hit first.
pub fn linear_run<T: Real>(
    source: &impl SineSource<T>,
    opts: &LinearOptions<T>,
    noise: Option<&ReadoutNoise<T>>,
    rng: &mut RngStream,
) -> Result<LinearRun<T>> {
    let tau = opts.tau;
    if !(tau > T::zero()) || !(opts.target_eps > T::zero()) || !(opts.growth > 1.0) {
        return Err(Error::InvalidArgument("linear run needs tau > 0, eps > 0, growth > 1".into()));
    }
    let bias = truncation_bound(1, tau, opts.m1_bound);
    if bias >= opts.target_eps {
        return Err(Error::BiasExceedsTarget { bias: to_f64(bias), target: to_f64(opts.target_eps) });
    }
    let contraction = noise.map_or(T::one(), |n| n.contraction());
    let dp2 = noise.map_or(T::zero(), |n| n.estimator_variance);
    let eps2 = opts.target_eps * opts.target_eps;
    let mut total = ShotBatch { successes: 0, trials: 0, true_probability: 0.0 };
    let mut next = opts.first_checkpoint.max(1) as f64;
    let mut curve = Vec::new();
    let mut hit = None;
    loop {
        let target = (next.round() as u64).min(opts.shot_cap);
        if target > total.trials {
            let b = sample_ancilla_z(source, tau, target - total.trials, noise, rng)?;
            total = total.merge(&b);
        }
        let raw = total.z_mean::<T>();
        let z = raw / contraction;
        let estimate = -z / tau;
        let stat = (T::one() - raw * raw) / (count::<T>(total.trials) * tau * tau * contraction * contraction);
        let floor = lit::<T>(4.0) * estimate * estimate * dp2 / (contraction * contraction);
        let mse = stat + floor + bias * bias;
        curve.push(LinearPoint { shots: total.trials, estimate, mse, abs_err: opts.truth.map(|t| (estimate - t).abs()) });
        if mse <= eps2 {
            hit = Some(total.trials);
            break;
        }
        if total.trials >= opts.shot_cap {
            break;
        }
        next = (next * opts.growth).max(next + 1.0);
    }
    let last = curve[curve.len() - 1];
    let variance = last.mse - bias * bias;
    Ok(LinearRun {
        tau,
        report: EstimateReport::new(last.estimate, variance, bias, total.trials),
        curve,
        shots_to_target: hit,
    })
}

/// Two distinct positive time steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimeStepPair<T> {
    pub tau_a: T,
    pub tau_b: T,
}

impl<T: Real> TimeStepPair<T> {
    pub fn new(tau_a: T, tau_b: T) -> Result<Self> {
        let scale = tau_a.abs().max(tau_b.abs());
        if !(tau_a > T::zero() && tau_b > T::zero()) || (tau_a - tau_b).abs() <= scale * lit(1e-12) {
            return Err(Error::DegeneratePair(to_f64(tau_a), to_f64(tau_b)));
        }
        Ok(Self { tau_a, tau_b })
    }

    pub fn c_mu(&self) -> T {
        T::one() / (self.tau_a * self.tau_a - self.tau_b * self.tau_b)
    }

    pub fn c_eta(&self) -> T {
        lit::<T>(6.0) * self.c_mu() / (self.tau_a * self.tau_b)
    }

    /// `τ_a²τ_b²(τ_a²+τ_b²)/|τ_a²−τ_b²|`.
    pub fn sum_factor(&self) -> T {
        let (a2, b2) = (self.tau_a * self.tau_a, self.tau_b * self.tau_b);
        a2 * b2 * (a2 + b2) / (a2 - b2).abs()
    }

    /// `τ_a²τ_b²·max(τ_a², τ_b²)/|τ_a²−τ_b²|`.
    pub fn max_factor(&self) -> T {
        let (a2, b2) = (self.tau_a * self.tau_a, self.tau_b * self.tau_b);
        a2 * b2 * a2.max(b2) / (a2 - b2).abs()
    }

    /// `P̃(τ) = (1 − τμ + τ³η/6)/2` at both steps.
    pub fn model_probabilities(&self, mu: T, eta: T) -> (T, T) {
        let p = |t: T| (T::one() - t * mu + t * t * t * eta / lit(6.0)) * lit(0.5);
        (p(self.tau_a), p(self.tau_b))
    }

    /// Inverse Fisher variances of `(μ, η)` with per-step shot counts.
    pub fn fisher_variances(&self, pa: T, pb: T, m_a: u64, m_b: u64) -> (T, T) {
        let (a, b) = (self.tau_a, self.tau_b);
        let (a2, b2) = (a * a, b * b);
        let den = a2 * b2 * (a2 - b2) * (a2 - b2);
        let va = pa * (T::one() - pa) / count::<T>(m_a);
        let vb = pb * (T::one() - pb) / count::<T>(m_b);
        let var_mu = lit::<T>(4.0) * (a2 * a2 * a2 * vb + b2 * b2 * b2 * va) / den;
        let var_eta = lit::<T>(144.0) * (a2 * vb + b2 * va) / den;
        (var_mu, var_eta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MleEstimate<T> {
    pub mu: T,
    pub eta: T,
    pub var_mu: T,
    pub var_eta: T,
    pub bias_bound: T,
    pub blocks_used: usize,
    pub block_size: u64,
}

/// Closed-form maximizer of the two-step likelihood from the sine estimates
/// `s = 1 − 2X/M` (that is `−⟨Z_a⟩`).
pub fn mle_from_means<T: Real>(s_a: T, s_b: T, pair: &TimeStepPair<T>) -> (T, T) {
    let (a, b) = (pair.tau_a, pair.tau_b);
    let mu = pair.c_mu() * (a * a / b * s_b - b * b / a * s_a);
    let eta = pair.c_eta() * (a * s_b - b * s_a);
    (mu, eta)
}

/// MLE from one batch per step; variances use the Beta(1,1) posterior means.
pub fn mle_pair<T: Real>(batch_a: &ShotBatch, batch_b: &ShotBatch, pair: &TimeStepPair<T>) -> Result<MleEstimate<T>> {
    let (mu, eta) = mle_from_means(-batch_a.z_mean::<T>(), -batch_b.z_mean::<T>(), pair);
    let pa = bayes_probability::<T>(batch_a)?;
    let pb = bayes_probability::<T>(batch_b)?;
    let (var_mu, var_eta) = pair.fisher_variances(pa, pb, batch_a.trials, batch_b.trials);
    Ok(MleEstimate {
        mu,
        eta,
        var_mu,
        var_eta,
        bias_bound: bias_estimators(mu, eta, pair).0,
        blocks_used: 1,
        block_size: batch_a.trials + batch_b.trials,
    })
}

/// Log-likelihood of `(X_a, X_b)` under the cubic model (constant terms dropped).
pub fn log_likelihood<T: Real>(mu: T, eta: T, pair: &TimeStepPair<T>, x: (u64, u64), m: (u64, u64)) -> T {
    let (pa, pb) = pair.model_probabilities(mu, eta);
    let term = |p: T, x: u64, m: u64| count::<T>(x) * p.ln() + count::<T>(m - x) * (T::one() - p).ln();
    term(pa, x.0, m.0) + term(pb, x.1, m.1)
}

/// Gradient of [`log_likelihood`] in `(μ, η)`.
pub fn score<T: Real>(mu: T, eta: T, pair: &TimeStepPair<T>, x: (u64, u64), m: (u64, u64)) -> (T, T) {
    let (pa, pb) = pair.model_probabilities(mu, eta);
    let g = |p: T, x: u64, m: u64| count::<T>(x) / p - count::<T>(m - x) / (T::one() - p);
    let (ga, gb) = (g(pa, x.0, m.0), g(pb, x.1, m.1));
    let (a, b) = (pair.tau_a, pair.tau_b);
    let half = lit::<T>(0.5);
    let twelfth = T::one() / lit(12.0);
    (-(ga * a + gb * b) * half, (ga * a * a * a + gb * b * b * b) * twelfth)
}

/// `(B_A1, B_A2)` from the current estimates.
pub fn bias_estimators<T: Real>(mu: T, eta: T, pair: &TimeStepPair<T>) -> (T, T) {
    let s = (mu * eta).abs() / lit(120.0);
    (s * pair.sum_factor(), s * pair.max_factor())
}

/// `|⟨O⁵⟩|/120 · τ_a²τ_b²(τ_a²+τ_b²)/|τ_a²−τ_b²|`.
pub fn fifth_moment_bound<T: Real>(m5: T, pair: &TimeStepPair<T>) -> T {
    m5.abs() / lit(120.0) * pair.sum_factor()
}

/// `B_E = c^μ[(τ_a²/τ_b)⟨sin τ_bO⟩ − (τ_b²/τ_a)⟨sin τ_aO⟩] − ⟨O⟩` (signed).
pub fn exact_bias<T: Real>(source: &(impl SineSource<T> + ?Sized), mean: T, pair: &TimeStepPair<T>) -> T {
    let (a, b) = (pair.tau_a, pair.tau_b);
    pair.c_mu() * (a * a / b * source.sine_expectation(b) - b * b / a * source.sine_expectation(a)) - mean
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasMode {
    A1,
    A2,
    Exact,
}

/// Bias model used by the design cost.
#[derive(Clone, Copy)]
pub enum BiasModel<'a, T> {
    A1,
    A2,
    /// Oracle bias `B_E` from a sine source and the true mean.
    Exact(&'a dyn SineSource<T>, T),
}

impl<T: Real> BiasModel<'_, T> {
    pub fn mode(&self) -> BiasMode {
        match self {
            BiasModel::A1 => BiasMode::A1,
            BiasModel::A2 => BiasMode::A2,
            BiasModel::Exact(..) => BiasMode::Exact,
        }
    }

    pub fn bias(&self, mu: T, eta: T, pair: &TimeStepPair<T>) -> T {
        match self {
            BiasModel::A1 => bias_estimators(mu, eta, pair).0,
            BiasModel::A2 => bias_estimators(mu, eta, pair).1,
            BiasModel::Exact(source, mean) => exact_bias(*source, *mean, pair).abs(),
        }
    }
}

/// Log grid over `[tau_min, tau_max]` searched by the design step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchDomain<T> {
    pub tau_min: T,
    pub tau_max: T,
    pub grid: usize,
}

impl<T: Real> SearchDomain<T> {
    pub fn new(tau_max: T) -> Self {
        Self { tau_min: lit(1e-4), tau_max, grid: 64 }
    }

    /// Ceiling `√(π/‖Ō‖₁)` under which `B_A2` is a valid bound.
    pub fn a2_limit(full_one_norm: T) -> T {
        (T::PI() / full_one_norm).sqrt()
    }

    fn points(&self) -> Vec<T> {
        let (lo, hi) = (self.tau_min.ln(), self.tau_max.ln());
        let n = self.grid.max(2);
        (0..n).map(|i| (lo + (hi - lo) * count::<T>(i as u64) / count::<T>(n as u64 - 1)).exp()).collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau_min > T::zero() && self.tau_max > self.tau_min) || self.grid < 2 {
            return Err(Error::InvalidArgument("search domain needs 0 < tau_min < tau_max and grid ≥ 2".into()));
        }
        Ok(())
    }
}

const INFEASIBLE: f64 = 1e30;

/// `Δ_i = Ṽar[μ] + (i+1)·B_u²` with `P̃` from the current estimates; `1e30`
/// when either model probability leaves `[0, 1]`.
pub fn design_cost<T: Real>(mu: T, eta: T, i: usize, m: u64, pair: &TimeStepPair<T>, bias: &BiasModel<'_, T>) -> T {
    let (pa, pb) = pair.model_probabilities(mu, eta);
    let unit = T::zero()..=T::one();
    if !unit.contains(&pa) || !unit.contains(&pb) {
        return lit(INFEASIBLE);
    }
    let (var, _) = pair.fisher_variances(pa, pb, m, m);
    let b = bias.bias(mu, eta, pair);
    let cost = var + count::<T>(i as u64 + 1) * b * b;
    if cost.is_finite() {
        cost
    } else {
        lit(INFEASIBLE)
    }
}

/// Grid search over `τ_a < τ_b` followed by three rounds of step-halving
/// coordinate descent in log space.
pub fn design_next_pair<T: Real>(
    mu: T,
    eta: T,
    i: usize,
    m: u64,
    bias: &BiasModel<'_, T>,
    domain: &SearchDomain<T>,
) -> Result<TimeStepPair<T>> {
    domain.validate()?;
    let pts = domain.points();
    let cost_at = |a: T, b: T| match TimeStepPair::new(a, b) {
        Ok(p) if a < b => design_cost(mu, eta, i, m, &p, bias),
        _ => lit(INFEASIBLE),
    };
    let mut best = (lit::<T>(INFEASIBLE), T::zero(), T::zero());
    for (ia, &a) in pts.iter().enumerate() {
        for &b in &pts[ia + 1..] {
            let c = cost_at(a, b);
            if c < best.0 {
                best = (c, a, b);
            }
        }
    }
    if best.0 >= lit(INFEASIBLE) {
        return Err(Error::NoFeasiblePair);
    }
    let (mut cost, mut la, mut lb) = (best.0, best.1.ln(), best.2.ln());
    let (lo, hi) = (domain.tau_min.ln(), domain.tau_max.ln());
    let mut step = (hi - lo) / count::<T>(pts.len() as u64 - 1);
    for _ in 0..3 {
        step = step * lit(0.5);
        for coord in 0..2 {
            for dir in [-T::one(), T::one()] {
                let (na, nb) = if coord == 0 { (la + dir * step, lb) } else { (la, lb + dir * step) };
                if na < lo || nb > hi || na >= nb {
                    continue;
                }
                let c = cost_at(na.exp(), nb.exp());
                if c < cost {
                    cost = c;
                    la = na;
                    lb = nb;
                }
            }
        }
    }
    TimeStepPair::new(la.exp(), lb.exp())
}

/// `τ_b` minimizing `(τ_a⁶+τ_b⁶)/(τ_a²τ_b²(τ_a²−τ_b²)²)` over a fine log grid of the domain.
pub fn initial_partner<T: Real>(tau_a: T, domain: &SearchDomain<T>) -> Result<T> {
    domain.validate()?;
    let fine = SearchDomain { grid: 4000, ..*domain };
    let a2 = tau_a * tau_a;
    let mut best = (T::infinity(), T::zero());
    for b in fine.points() {
        let b2 = b * b;
        let v = (a2 * a2 * a2 + b2 * b2 * b2) / (a2 * b2 * (a2 - b2) * (a2 - b2));
        if v.is_finite() && v < best.0 {
            best = (v, b);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::NoFeasiblePair);
    }
    Ok(best.1)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CubicOptions<T> {
    pub target_eps: T,
    pub block_size: u64,
    pub shot_cap: u64,
    pub min_blocks: usize,
    pub domain: SearchDomain<T>,
    /// Upper end of the uniform draw for the first `τ_a`.
    pub initial_tau_max: T,
}

impl<T: Real> CubicOptions<T> {
    pub fn new(target_eps: T, tau_max: T) -> Self {
        Self {
            target_eps,
            block_size: 40,
            shot_cap: 2_000_000,
            min_blocks: 5,
            domain: SearchDomain::new(tau_max),
            initial_tau_max: lit(0.1),
        }
    }
}

/// One block of the adaptive loop. Bias columns are for the block's own pair;
/// `mse` is the pooled value the stopping rule uses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CubicTraceRow<T> {
    pub block: usize,
    pub tau_a: T,
    pub tau_b: T,
    pub x_a: u64,
    pub x_b: u64,
    pub mu: T,
    pub eta: T,
    pub var_mu: T,
    pub b_a1: T,
    pub b_a2: T,
    pub b_e: Option<T>,
    pub mse: T,
    pub mse_exact: Option<T>,
    pub cumulative_shots: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CubicRun<T> {
    pub mode: BiasMode,
    pub report: EstimateReport<T>,
    pub estimate: MleEstimate<T>,
    pub trace: Vec<CubicTraceRow<T>>,
    /// Shots when the pooled MSE (this run's bias model) first reached the target
    /// after `min_blocks` blocks.
    pub shots_to_target: Option<u64>,
    /// Same, judged with the oracle bias when one was supplied.
    pub shots_to_target_exact: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Stop on the pooled MSE built from the run's own bias model.
    Model,
    /// Stop on the pooled MSE built from the oracle bias.
    Exact,
}

#[derive(Default)]
struct Pool<T> {
    blocks: usize,
    mu: T,
    eta: T,
    var_mu: T,
    var_eta: T,
    geo_sum: T,
    geo_max: T,
    exact: T,
}

/// Adaptive cubic estimator. Each block spends `block_size/2` shots at each step
/// of the current pair. Block estimates are averaged with equal weight, so the
/// pooled variance is `ΣV_j/i²` with `V_j` the block's posterior Fisher variance
/// and the pooled bias is the block-averaged pair bias. `oracle_mean` enables the
/// exact bias columns and is required by [`BiasMode::Exact`] and [`StopRule::Exact`].
pub fn cubic_run<T: Real>(
    source: &impl SineSource<T>,
    oracle_mean: Option<T>,
    mode: BiasMode,
    stop: StopRule,
    opts: &CubicOptions<T>,
    noise: Option<&ReadoutNoise<T>>,
    rng: &mut RngStream,
) -> Result<CubicRun<T>> {
    if opts.block_size < 2 || opts.block_size % 2 != 0 {
        return Err(Error::InvalidArgument("block size must be even and at least 2".into()));
    }
    if !(opts.target_eps > T::zero()) || !(opts.initial_tau_max > T::zero()) {
        return Err(Error::InvalidArgument("target and initial step range must be positive".into()));
    }
    opts.domain.validate()?;
    if oracle_mean.is_none() && (mode == BiasMode::Exact || stop == StopRule::Exact) {
        return Err(Error::InvalidArgument("exact bias needs the oracle mean".into()));
    }
    let bias_model: BiasModel<'_, T> = match mode {
        BiasMode::A1 => BiasModel::A1,
        BiasMode::A2 => BiasModel::A2,
        BiasMode::Exact => BiasModel::Exact(source, oracle_mean.unwrap_or(T::zero())),
    };
    let half = opts.block_size / 2;
    let contraction = noise.map_or(T::one(), |n| n.contraction());
    let c2 = contraction * contraction;
    let dp2 = noise.map_or(T::zero(), |n| n.estimator_variance);
    let eps2 = opts.target_eps * opts.target_eps;

    let mut tau_a = T::zero();
    while !(tau_a > opts.domain.tau_min) {
        tau_a = lit::<T>(rng.uniform()) * opts.initial_tau_max;
    }
    let mut pair = TimeStepPair::new(tau_a, initial_partner(tau_a, &opts.domain)?)?;
    let mut pool = Pool::<T>::default();
    let mut trace = Vec::new();
    let mut shots = 0u64;
    let mut hit = None;
    let mut hit_exact = None;
    let mut current = MleEstimate {
        mu: T::zero(),
        eta: T::zero(),
        var_mu: T::infinity(),
        var_eta: T::infinity(),
        bias_bound: T::zero(),
        blocks_used: 0,
        block_size: opts.block_size,
    };
    while shots + opts.block_size <= opts.shot_cap {
        let ba = sample_ancilla_z(source, pair.tau_a, half, noise, rng)?;
        let bb = sample_ancilla_z(source, pair.tau_b, half, noise, rng)?;
        shots += opts.block_size;
        let block = mle_pair::<T>(&ba, &bb, &pair)?;
        let b_e = oracle_mean.map(|m| exact_bias(source, m, &pair));

        pool.blocks += 1;
        pool.mu = pool.mu + block.mu / contraction;
        pool.eta = pool.eta + block.eta / contraction;
        pool.var_mu = pool.var_mu + block.var_mu / c2;
        pool.var_eta = pool.var_eta + block.var_eta / c2;
        pool.geo_sum = pool.geo_sum + pair.sum_factor();
        pool.geo_max = pool.geo_max + pair.max_factor();
        pool.exact = pool.exact + b_e.unwrap_or(T::zero());

        let i = count::<T>(pool.blocks as u64);
        let mu = pool.mu / i;
        let eta = pool.eta / i;
        let var_mu = pool.var_mu / (i * i) + lit::<T>(4.0) * mu * mu * dp2 / c2;
        let var_eta = pool.var_eta / (i * i);
        let scale = (mu * eta).abs() / lit(120.0);
        let pooled_exact = oracle_mean.map(|_| (pool.exact / i).abs());
        let pooled_bias = match mode {
            BiasMode::A1 => scale * pool.geo_sum / i,
            BiasMode::A2 => scale * pool.geo_max / i,
            BiasMode::Exact => pooled_exact.unwrap_or(T::zero()),
        };
        let mse = var_mu + pooled_bias * pooled_bias;
        let mse_exact = pooled_exact.map(|b| var_mu + b * b);
        let (b_a1, b_a2) = bias_estimators(mu, eta, &pair);
        trace.push(CubicTraceRow {
            block: pool.blocks,
            tau_a: pair.tau_a,
            tau_b: pair.tau_b,
            x_a: ba.successes,
            x_b: bb.successes,
            mu,
            eta,
            var_mu,
            b_a1,
            b_a2,
            b_e,
            mse,
            mse_exact,
            cumulative_shots: shots,
        });
        current = MleEstimate {
            mu,
            eta,
            var_mu,
            var_eta,
            bias_bound: pooled_bias,
            blocks_used: pool.blocks,
            block_size: opts.block_size,
        };

        if pool.blocks >= opts.min_blocks {
            if hit.is_none() && mse <= eps2 {
                hit = Some(shots);
            }
            if hit_exact.is_none() && mse_exact.is_some_and(|m| m <= eps2) {
                hit_exact = Some(shots);
            }
            let done = match stop {
                StopRule::Model => hit.is_some(),
                StopRule::Exact => hit_exact.is_some(),
            };
            if done {
                break;
            }
        }
        pair = design_next_pair(mu, eta, pool.blocks, half, &bias_model, &opts.domain)?;
    }
    let report = EstimateReport::new(current.mu, current.var_mu, current.bias_bound, shots);
    Ok(CubicRun { mode, report, estimate: current, trace, shots_to_target: hit, shots_to_target_exact: hit_exact })
}
