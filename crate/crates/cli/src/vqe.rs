//! Single-parameter VQE with the `R_y(θ)` ansatz, noisy operator-averaging energies
//! and Nelder-Mead from argmin.

use std::cell::RefCell;
use std::sync::{Arc, Mutex};

use argmin::core::observers::{Observe, ObserverMode};
use argmin::core::{CostFunction, Error as ArgminError, Executor, KV};
use argmin::solver::neldermead::NelderMead;
use expval::oa::oa_estimate;
use expval::{OAllocation, Observable, RngStream, State};
use serde::Serialize;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VqeStep {
    pub iteration: u64,
    pub theta: f64,
    pub energy_estimate: f64,
}

/// `R_y(θ)` on the first qubit of `|0…0⟩`.
pub fn ansatz(dim: usize, theta: f64) -> State {
    let mut amps = vec![num_complex::Complex::new(0.0, 0.0); dim];
    amps[0].re = (theta / 2.0).cos();
    amps[dim / 2].re = (theta / 2.0).sin();
    State::new(amps).expect("rotation keeps the norm")
}

/// Closed-form minimiser of `⟨R_y(θ)|O|R_y(θ)⟩ = α₀ + a_x sinθ + a_z cosθ` for a one-qubit observable.
pub fn theta_min(obs: &Observable) -> Result<f64, CliError> {
    if obs.qubit_count() != 1 {
        return Err(CliError::Config("vqe_demo needs a one-qubit observable".into()));
    }
    let (mut ax, mut az) = (0.0, 0.0);
    for t in obs.terms() {
        match t.string.axes()[0].symbol() {
            'X' => ax += t.signed_weight(),
            'Z' => az += t.signed_weight(),
            _ => {}
        }
    }
    Ok((-ax).atan2(-az))
}

/// One-sigma statistical error of a single energy evaluation at `theta`.
pub fn energy_sigma(obs: &Observable, theta: f64, shots_per_eval: u64) -> f64 {
    let state = ansatz(obs.dim(), theta);
    let m = (shots_per_eval / obs.len() as u64).max(1) as f64;
    obs.terms()
        .iter()
        .map(|t| {
            let p = t.string.expectation(&state);
            t.weight * t.weight * (1.0 - p * p) / m
        })
        .sum::<f64>()
        .sqrt()
}

struct NoisyEnergy<'a> {
    obs: &'a Observable,
    alloc: OAllocation,
    rng: RefCell<RngStream>,
}

impl CostFunction for NoisyEnergy<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> Result<f64, ArgminError> {
        let state = ansatz(self.obs.dim(), p[0]);
        let r = oa_estimate(self.obs, &state, &self.alloc, None, &mut self.rng.borrow_mut())?;
        Ok(r.value)
    }
}

struct Recorder(Arc<Mutex<Vec<VqeStep>>>);

impl<I: argmin::core::State<Param = Vec<f64>, Float = f64>> Observe<I> for Recorder {
    fn observe_iter(&mut self, state: &I, _kv: &KV) -> Result<(), ArgminError> {
        if let Some(p) = state.get_best_param() {
            self.0.lock().expect("recorder lock").push(VqeStep {
                iteration: state.get_iter(),
                theta: p[0],
                energy_estimate: state.get_best_cost(),
            });
        }
        Ok(())
    }
}

/// Runs Nelder-Mead from the simplex `{0.382π, 0.618π}` and returns the best point after each iteration.
pub fn run(obs: &Observable, shots_per_eval: u64, max_iterations: u64, rng: RngStream) -> Result<Vec<VqeStep>, CliError> {
    theta_min(obs)?;
    let per_term = (shots_per_eval / obs.len() as u64).max(1);
    let cost = NoisyEnergy { obs, alloc: OAllocation::uniform(obs.len(), per_term)?, rng: RefCell::new(rng) };
    let pi = std::f64::consts::PI;
    let solver = NelderMead::new(vec![vec![pi * 0.381_966], vec![pi * 0.618_034]])
        .with_sd_tolerance(0.0)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let log = Arc::new(Mutex::new(Vec::new()));
    Executor::new(cost, solver)
        .configure(|s| s.max_iters(max_iterations))
        .add_observer(Recorder(log.clone()), ObserverMode::Always)
        .run()
        .map_err(|e| CliError::Config(format!("optimizer failed: {e}")))?;
    let steps = log.lock().expect("recorder lock").clone();
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deuteron::hamiltonian;

    #[test]
    fn closed_form_minimum() {
        let h = hamiltonian();
        let t = theta_min(&h).unwrap();
        assert!((t - 35f64.atan2(-82.5)).abs() < 1e-15);
        let e = h.expectation(&ansatz(2, t)).unwrap();
        assert!((e - (87.5 - 8031.25f64.sqrt())).abs() < 1e-10);
        for d in [-0.01, 0.01] {
            assert!(h.expectation(&ansatz(2, t + d)).unwrap() > e);
        }
    }

    #[test]
    fn sigma_matches_term_variances() {
        let h = hamiltonian();
        let t = theta_min(&h).unwrap();
        let s = energy_sigma(&h, t, 1000);
        let (x, z) = (t.sin(), t.cos());
        let want = ((35.0f64.powi(2) * (1.0 - x * x) + 82.5f64.powi(2) * (1.0 - z * z)) / 500.0).sqrt();
        assert!((s - want).abs() < 1e-12);
    }

    #[test]
    fn converges_near_minimum() {
        let h = hamiltonian();
        let steps = run(&h, 1000, 60, RngStream::new(3)).unwrap();
        assert!(!steps.is_empty());
        assert!(steps.windows(2).all(|w| w[1].energy_estimate <= w[0].energy_estimate));
        let last = steps.last().unwrap();
        let t = theta_min(&h).unwrap();
        assert!((last.theta - t).abs() / t < 0.1, "theta {} vs {t}", last.theta);
    }

    #[test]
    fn rejects_two_qubit_observable() {
        let o = Observable::from_real(0.0, &[(1.0, "ZZ")]).unwrap();
        assert!(run(&o, 100, 5, RngStream::new(0)).is_err());
    }
}
