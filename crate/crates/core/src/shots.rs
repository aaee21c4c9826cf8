//! Seeded measurement simulation: direct Pauli readout and the ancilla of the
//! controlled-evolution circuit, with an optional symmetric readout flip.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::operators::{PauliTerm, PureState, SpectralProfile};
use crate::scalar::{count, lit, to_f64, Real};

/// Identifier of the generator behind [`RngStream`]; part of the reproducibility contract.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Batches up to this size are drawn as individual Bernoulli trials.
pub const BERNOULLI_LIMIT: u64 = 10_000;

/// Seeded random stream. Replicas of one seed use disjoint ChaCha streams.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Stream for replica `index`, independent of the parent and of other replicas.
    pub fn replica(&self, index: u64) -> Self {
        Self::with_stream(self.seed, self.stream.wrapping_add(index).wrapping_add(1))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Number of successes in `trials` Bernoulli(`p`) draws.
    pub fn binomial(&mut self, trials: u64, p: f64) -> u64 {
        if trials == 0 || p <= 0.0 {
            return 0;
        }
        if p >= 1.0 {
            return trials;
        }
        if trials <= BERNOULLI_LIMIT {
            (0..trials).filter(|_| self.rng.random::<f64>() < p).count() as u64
        } else {
            Binomial::new(trials, p).expect("valid binomial parameters").sample(&mut self.rng)
        }
    }
}

/// `X` successes out of `M` trials, plus the oracle probability for checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShotBatch {
    pub successes: u64,
    pub trials: u64,
    pub true_probability: f64,
}

impl ShotBatch {
    pub fn new(successes: u64, trials: u64, true_probability: f64) -> Result<Self> {
        if successes > trials || !(0.0..=1.0).contains(&true_probability) {
            return Err(Error::InvalidArgument(format!(
                "batch {successes}/{trials} with probability {true_probability}"
            )));
        }
        Ok(Self { successes, trials, true_probability })
    }

    /// `X/M`.
    pub fn frequency<T: Real>(&self) -> T {
        count::<T>(self.successes) / count::<T>(self.trials.max(1))
    }

    /// Mean of the ±1 outcome, `2X/M − 1`.
    pub fn z_mean<T: Real>(&self) -> T {
        lit::<T>(2.0) * self.frequency::<T>() - T::one()
    }

    /// Pools two batches drawn at the same setting.
    pub fn merge(&self, other: &ShotBatch) -> ShotBatch {
        ShotBatch {
            successes: self.successes + other.successes,
            trials: self.trials + other.trials,
            true_probability: self.true_probability,
        }
    }
}

/// Symmetric readout flip with probability `p` and its calibrated estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadoutNoise<T> {
    pub flip_probability: T,
    pub estimated_p: T,
    /// `δp² = p̂(1−p̂)/N_C`; zero when `p̂` is taken as exact.
    pub estimator_variance: T,
    pub calibration_shots: u64,
}

impl<T: Real> ReadoutNoise<T> {
    fn check(p: T) -> Result<()> {
        if !(p >= T::zero() && p < lit(0.5)) {
            return Err(Error::SingularCorrection(to_f64(p)));
        }
        Ok(())
    }

    /// Noise whose flip probability is known exactly.
    pub fn exact(p: T) -> Result<Self> {
        Self::check(p)?;
        Ok(Self { flip_probability: p, estimated_p: p, estimator_variance: T::zero(), calibration_shots: 0 })
    }

    /// Estimates `p̂` by preparing `|0⟩` and reading it out `n_c` times.
    pub fn calibrate(p: T, n_c: u64, rng: &mut RngStream) -> Result<Self> {
        Self::check(p)?;
        if n_c == 0 {
            return Err(Error::InvalidArgument("calibration needs at least one shot".into()));
        }
        let flips = rng.binomial(n_c, to_f64(p));
        Self::from_calibration(p, count::<T>(flips) / count::<T>(n_c), n_c)
    }

    pub fn from_calibration(p: T, p_hat: T, n_c: u64) -> Result<Self> {
        Self::check(p)?;
        Self::check(p_hat)?;
        let variance = if n_c == 0 { T::zero() } else { p_hat * (T::one() - p_hat) / count::<T>(n_c) };
        Ok(Self { flip_probability: p, estimated_p: p_hat, estimator_variance: variance, calibration_shots: n_c })
    }

    /// `q̃ = (1−p)q + p(1−q)`.
    pub fn noisy_probability(&self, q: T) -> T {
        let p = self.flip_probability;
        (T::one() - p) * q + p * (T::one() - q)
    }

    /// `1 − 2p̂`, the contraction the correction divides out.
    pub fn contraction(&self) -> T {
        T::one() - lit::<T>(2.0) * self.estimated_p
    }
}

/// Source of `⟨sin(τO)⟩` on a fixed state: exact spectral profile or a compiled propagator.
pub trait SineSource<T> {
    fn sine_expectation(&self, tau: T) -> T;
}

impl<T: Real> SineSource<T> for SpectralProfile<T> {
    fn sine_expectation(&self, tau: T) -> T {
        self.sine(tau)
    }
}

fn clamp_probability<T: Real>(q: T) -> f64 {
    to_f64(q).clamp(0.0, 1.0)
}

/// Measures `P_k` `shots` times; success is the `+1` outcome, `q = (1+⟨P_k⟩)/2`.
pub fn sample_pauli<T: Real>(
    term: &PauliTerm<T>,
    state: &PureState<T>,
    shots: u64,
    noise: Option<&ReadoutNoise<T>>,
    rng: &mut RngStream,
) -> Result<ShotBatch> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be at least 1".into()));
    }
    state.check_dim(1 << term.string.qubit_count())?;
    let mut q = (T::one() + term.string.expectation(state)) * lit(0.5);
    if let Some(n) = noise {
        q = n.noisy_probability(q);
    }
    let p = clamp_probability(q);
    Ok(ShotBatch { successes: rng.binomial(shots, p), trials: shots, true_probability: p })
}

/// Probability of reading the ancilla in `|0⟩`: `(1 − ⟨sin τO⟩)/2`.
pub fn ancilla_probability<T: Real>(source: &impl SineSource<T>, tau: T) -> T {
    (T::one() - source.sine_expectation(tau)) * lit(0.5)
}

/// Measures the ancilla `shots` times; `2X/M − 1` estimates `⟨Z_a⟩ = −⟨sin τO⟩`.
pub fn sample_ancilla_z<T: Real>(
    source: &impl SineSource<T>,
    tau: T,
    shots: u64,
    noise: Option<&ReadoutNoise<T>>,
    rng: &mut RngStream,
) -> Result<ShotBatch> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be at least 1".into()));
    }
    let mut q = ancilla_probability(source, tau);
    if let Some(n) = noise {
        q = n.noisy_probability(q);
    }
    let p = clamp_probability(q);
    Ok(ShotBatch { successes: rng.binomial(shots, p), trials: shots, true_probability: p })
}

/// Beta(1,1) posterior mean `(X+1)/(M+2)`.
pub fn bayes_probability<T: Real>(batch: &ShotBatch) -> Result<T> {
    if batch.trials == 0 {
        return Err(Error::InvalidArgument("batch has no trials".into()));
    }
    Ok(count::<T>(batch.successes + 1) / count::<T>(batch.trials + 2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::ObservableExpansion;

    fn deuteron() -> ObservableExpansion<f64> {
        ObservableExpansion::from_real(87.5, &[(-35.0, "X"), (82.5, "Z")]).unwrap()
    }

    fn z_term() -> PauliTerm<f64> {
        PauliTerm::real(1.0, "Z".parse().unwrap())
    }

    #[test]
    fn z_on_zero_always_succeeds() {
        let mut rng = RngStream::new(1);
        let zero = PureState::basis(1, 0).unwrap();
        for shots in [1, 100, 50_000] {
            let b = sample_pauli(&z_term(), &zero, shots, None, &mut rng).unwrap();
            assert_eq!(b.successes, shots);
            assert_eq!(b.true_probability, 1.0);
        }
    }

    #[test]
    fn readout_flip_lowers_probability() {
        let mut rng = RngStream::new(2);
        let noise = ReadoutNoise::exact(0.1).unwrap();
        let b = sample_pauli(&z_term(), &PureState::basis(1, 0).unwrap(), 10, Some(&noise), &mut rng).unwrap();
        assert!((b.true_probability - 0.9).abs() < 1e-15);
        assert!(ReadoutNoise::exact(0.5).is_err());
        assert!(ReadoutNoise::exact(-0.1).is_err());
    }

    #[test]
    fn deuteron_x_within_five_sigma() {
        let obs = deuteron();
        let o = obs.oracle();
        let g = o.ground_state();
        let x = &obs.terms()[0];
        let expected = x.string.expectation(&g);
        assert!((expected - 0.390546).abs() < 1e-5);
        let m = 100_000;
        let b = sample_pauli(x, &g, m, None, &mut RngStream::new(3)).unwrap();
        let sigma = ((1.0 - expected * expected) / m as f64).sqrt();
        assert!((b.z_mean::<f64>() - expected).abs() < 5.0 * sigma);
    }

    #[test]
    fn ancilla_probabilities() {
        let obs = deuteron();
        let o = obs.oracle();
        let prof = o.profile(&o.ground_state()).unwrap();
        assert_eq!(ancilla_probability(&prof, 0.0), 0.5);
        let z = ObservableExpansion::<f64>::from_real(0.0, &[(1.0, "Z")]).unwrap();
        let zp = z.oracle().profile(&PureState::basis(1, 0).unwrap()).unwrap();
        assert!(ancilla_probability(&zp, std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let lam = 87.5 - 8031.25f64.sqrt();
        let p = ancilla_probability(&prof, 0.3);
        assert!((p - (1.0 - (0.3 * lam).sin()) / 2.0).abs() < 1e-12);
        let m = 100_000;
        let b = sample_ancilla_z(&prof, 0.3, m, None, &mut RngStream::new(4)).unwrap();
        let sigma = (p * (1.0 - p) / m as f64).sqrt();
        assert!((b.frequency::<f64>() - p).abs() < 5.0 * sigma);
    }

    #[test]
    fn bayes_probability_examples() {
        let b = |x, m| bayes_probability::<f64>(&ShotBatch::new(x, m, 0.5).unwrap());
        assert!((b(0, 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((b(100, 100).unwrap() - 101.0 / 102.0).abs() < 1e-15);
        assert_eq!(b(50, 100).unwrap(), 0.5);
        assert!(b(0, 0).is_err());
        assert!(ShotBatch::new(3, 2, 0.5).is_err());
    }

    #[test]
    fn same_seed_same_batches() {
        let obs = deuteron();
        let o = obs.oracle();
        let prof = o.profile(&o.ground_state()).unwrap();
        let run = |seed| {
            let mut rng = RngStream::new(seed);
            (0..20)
                .map(|i| sample_ancilla_z(&prof, 0.01 * i as f64, 1 + 3000 * i, None, &mut rng).unwrap().successes)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
        let base = RngStream::new(9);
        let mut a = base.replica(0);
        let mut b = base.replica(1);
        assert_ne!(a.binomial(1000, 0.5), b.binomial(1000, 0.5));
        assert_eq!(RngStream::new(9).replica(3).stream(), 4);
    }

    #[test]
    fn replica_means_track_oracle() {
        let obs = deuteron();
        let g = obs.oracle().ground_state();
        let x = &obs.terms()[0];
        let expected = x.string.expectation(&g);
        let (reps, m) = (200u64, 10_000u64);
        let master = RngStream::new(2024);
        let mut passes = 0;
        for meta in 0..200 {
            let mut rng = master.replica(meta);
            let total: f64 = (0..reps).map(|_| sample_pauli(x, &g, m, None, &mut rng).unwrap().z_mean::<f64>()).sum();
            if (total / reps as f64 - expected).abs() < 5.0 / ((reps * m) as f64).sqrt() {
                passes += 1;
            }
        }
        assert!(passes >= 199, "{passes}/200");
    }

    #[test]
    fn flip_then_correct_is_unbiased() {
        let obs = deuteron();
        let g = obs.oracle().ground_state();
        let z = &obs.terms()[1];
        let expected = z.string.expectation(&g);
        let m = 1_000_000u64;
        for (i, &p) in [0.05, 0.1, 0.35].iter().enumerate() {
            let noise = ReadoutNoise::exact(p).unwrap();
            let b = sample_pauli(z, &g, m, Some(&noise), &mut RngStream::new(50 + i as u64)).unwrap();
            let raw = b.z_mean::<f64>();
            let corrected = raw / noise.contraction();
            let se = ((1.0 - raw * raw) / m as f64).sqrt() / noise.contraction();
            assert!((corrected - expected).abs() < 3.0 * se, "p = {p}");
        }
    }

    #[test]
    fn ancilla_slope_at_small_tau() {
        let obs = deuteron();
        let o = obs.oracle();
        let mut state = PureState::ry(1.1);
        let prof = o.profile(&state).unwrap();
        let mean = obs.expectation(&state).unwrap();
        for tau in [1e-3, 1e-4] {
            let slope = (ancilla_probability(&prof, tau) - 0.5) / tau;
            assert!((slope + mean / 2.0).abs() < 0.1 * tau * o.lambda_max().powi(3));
        }
        state = o.ground_state();
        let prof = o.profile(&state).unwrap();
        let slope = (ancilla_probability(&prof, 1e-4) - 0.5) / 1e-4;
        assert!((slope - 2.1174 / 2.0).abs() < 1e-3);
    }

    #[test]
    fn calibration_estimates_flip_rate() {
        let mut rng = RngStream::new(77);
        let n = ReadoutNoise::<f64>::calibrate(0.2, 1_000_000, &mut rng).unwrap();
        assert!((n.estimated_p - 0.2).abs() < 5.0 * (0.16f64 / 1e6).sqrt());
        assert!((n.estimator_variance - n.estimated_p * (1.0 - n.estimated_p) / 1e6).abs() < 1e-18);
        assert!(ReadoutNoise::<f64>::calibrate(0.2, 0, &mut rng).is_err());
    }
}
