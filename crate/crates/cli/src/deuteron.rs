//! One-qubit deuteron Hamiltonian `87.5·1 − 35X + 82.5Z` (MeV) and its reference numbers.

use expval::oa::n_a;
use expval::{Observable, State};
use serde::Serialize;

/// Ground-state energy as quoted to four decimals.
pub const E_GS_QUOTED: f64 = -2.1174;

pub fn hamiltonian() -> Observable {
    Observable::from_real(87.5, &[(-35.0, "X"), (82.5, "Z")]).expect("deuteron terms are valid")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeuteronReference {
    pub e_gs: f64,
    pub e_excited: f64,
    pub trace: f64,
    pub identity_coeff: f64,
    pub norm_traceless_one: f64,
    pub norm_full_one: f64,
    pub norm_traceless_two_sq: f64,
    pub r_o: f64,
    pub r_o_max: f64,
    pub expect_x: f64,
    pub expect_z: f64,
    /// `N_A` at 1% relative error.
    pub n_a_one_percent: f64,
}

pub fn deuteron() -> (Observable, State, DeuteronReference) {
    let h = hamiltonian();
    let oracle = h.oracle();
    let ground = oracle.ground_state();
    let ev = oracle.eigenvalues();
    let norms = h.norms();
    let e_gs = ev[0];
    let x = h.terms()[0].string.expectation(&ground);
    let z = h.terms()[1].string.expectation(&ground);
    let reference = DeuteronReference {
        e_gs,
        e_excited: ev[1],
        trace: ev.iter().sum(),
        identity_coeff: h.identity_coeff(),
        norm_traceless_one: norms.traceless_one,
        norm_full_one: norms.full_one,
        norm_traceless_two_sq: norms.traceless_two * norms.traceless_two,
        r_o: e_gs.abs() / norms.traceless_one,
        r_o_max: norms.full_one / norms.traceless_one,
        expect_x: x,
        expect_z: z,
        n_a_one_percent: n_a(&h, 0.01 * e_gs.abs()),
    };
    (h, ground, reference)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_numbers() {
        let (_, g, r) = deuteron();
        assert!((r.e_gs - E_GS_QUOTED).abs() < 1e-3);
        assert!((r.e_gs - (87.5 - 8031.25f64.sqrt())).abs() < 1e-12);
        assert!((r.e_excited - (87.5 + 8031.25f64.sqrt())).abs() < 1e-12);
        assert!((r.e_excited - 177.117).abs() < 1e-3);
        assert!((r.trace - 175.0).abs() < 1e-12);
        assert_eq!(r.norm_traceless_one, 117.5);
        assert_eq!(r.norm_full_one, 205.0);
        assert!((r.norm_traceless_two_sq - 8031.25).abs() < 1e-9);
        assert!((0.0175..=0.0185).contains(&r.r_o));
        assert!((r.r_o_max - 205.0 / 117.5).abs() < 1e-15);
        assert!((r.n_a_one_percent / 3.0794e7 - 1.0).abs() < 1e-3);
        assert!((87.5 - 35.0 * r.expect_x + 82.5 * r.expect_z - r.e_gs).abs() < 1e-12);
        assert!((g.amplitudes().iter().map(|a| a.norm_sqr()).sum::<f64>() - 1.0).abs() < 1e-14);
    }
}
