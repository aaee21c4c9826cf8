use expval::conditions::{condition_eigen, condition_exact, condition_sufficient};
use expval::oa::{budget_uniform, n_a, oa_estimate};
use expval::sqpe::{cubic_run, linear_run, plan, CubicOptions, LinearOptions, StopRule};
use expval::trotter::{suzuki_intervals, TrotterSource};
use expval::{BiasMode, ConditionInput, OAllocation, Observable, Observable32, ReadoutNoise, RngStream, SineSource};

const E_GS: f64 = -2.117_241_644_674_607;

fn deuteron() -> Observable {
    Observable::from_real(87.5, &[(-35.0, "X"), (82.5, "Z")]).unwrap()
}

#[test]
fn observable_json_format_roundtrips() {
    let h = deuteron();
    let text = serde_json::to_string(&h).unwrap();
    assert!(text.contains("\"identity_coeff\":87.5"));
    assert!(text.contains("\"string\":\"X\""));
    let back: Observable = serde_json::from_str(&text).unwrap();
    assert_eq!(back, h);
    let parsed: Observable = serde_json::from_str(
        r#"{"identity_coeff": 87.5, "terms": [{"weight": 35.0, "phase": 3.141592653589793, "string": "X"}, {"weight": 82.5, "phase": 0.0, "string": "Z"}]}"#,
    )
    .unwrap();
    let g = parsed.oracle().ground_state();
    assert!((parsed.expectation(&g).unwrap() - E_GS).abs() < 1e-12);
}

#[test]
fn oa_and_linear_estimates_agree_with_oracle() {
    let h = deuteron();
    let g = h.oracle().ground_state();
    let eps = 0.01 * E_GS.abs();
    let p: Vec<f64> = h.terms().iter().map(|t| t.string.expectation(&g)).collect();
    let m = budget_uniform(&h, &p, eps).unwrap().required / 2.0;
    let oa = oa_estimate(&h, &g, &OAllocation::uniform(2, m.ceil() as u64).unwrap(), None, &mut RngStream::new(1)).unwrap();
    assert!((oa.value - E_GS).abs() < 4.0 * oa.variance.sqrt());
    assert!(oa.total_shots as f64 <= n_a(&h, eps));

    let prof = h.oracle().profile(&g).unwrap();
    let tau = plan(1, eps, E_GS.powi(3)).unwrap().tau_opt;
    let mut opts = LinearOptions::new(tau, eps, E_GS.powi(3));
    opts.truth = Some(E_GS);
    let run = linear_run(&prof, &opts, None, &mut RngStream::new(2)).unwrap();
    assert!(run.shots_to_target.is_some());
    assert!((run.report.value - E_GS).abs() < 4.0 * run.report.mse.sqrt());
}

#[test]
fn cubic_run_on_trotterized_source() {
    let h = deuteron();
    let g = h.oracle().ground_state();
    let eps = 0.01 * E_GS.abs();
    let r = suzuki_intervals(&h, 1.0, 1e-4, 1).unwrap().intervals_r;
    let src = TrotterSource::new(h.clone(), g.clone(), r, 1).unwrap();
    let exact = h.oracle().profile(&g).unwrap();
    for tau in [0.1, 0.3, 0.9] {
        assert!((src.sine_expectation(tau) - exact.sine_expectation(tau)).abs() < 1e-4);
    }
    let opts = CubicOptions::new(eps, 1.0);
    let run = cubic_run(&src, Some(E_GS), BiasMode::A1, StopRule::Model, &opts, None, &mut RngStream::new(0)).unwrap();
    assert!(run.shots_to_target.is_some());
    assert!((run.estimate.mu - E_GS).abs() < 5.0 * run.report.mse.sqrt());
}

#[test]
fn noisy_linear_run_has_larger_floor() {
    let h = deuteron();
    let g = h.oracle().ground_state();
    let prof = h.oracle().profile(&g).unwrap();
    let eps = 0.01 * E_GS.abs();
    let tau = plan(1, eps, E_GS.powi(3)).unwrap().tau_opt;
    let mut opts = LinearOptions::new(tau, eps, E_GS.powi(3));
    opts.shot_cap = 2_000_000;
    let clean = linear_run(&prof, &opts, None, &mut RngStream::new(3)).unwrap();
    let noise = ReadoutNoise::exact(0.05).unwrap();
    let noisy = linear_run(&prof, &opts, Some(&noise), &mut RngStream::new(3)).unwrap();
    assert!(noisy.shots_to_target.unwrap_or(u64::MAX) > clean.shots_to_target.unwrap());
}

#[test]
fn conditions_on_deuteron() {
    let h = deuteron();
    let o = h.oracle();
    let g = o.ground_state();
    let moments = o.moments(&g, 3).unwrap();
    let input = ConditionInput::new(h.norms(), h.identity_coeff(), E_GS, 0.01, 2).unwrap();
    assert!(condition_exact(&input, moments.m(2)));
    let ratio = E_GS.abs() / o.eigenvalues().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(condition_eigen(ratio, 0.01, 2));
    // Worst-case Γ_K = 1 asks for R_O ≥ f(2)²/ε_r·(205/117.5)⁵ ≈ 47.
    assert_eq!(input.gamma_k, 1.0);
    assert!(!condition_sufficient(&input));
}

#[test]
fn single_precision_alias() {
    let h = Observable32::from_real(87.5, &[(-35.0, "X"), (82.5, "Z")]).unwrap();
    let e = h.oracle().eigenvalues()[0];
    assert!((e - E_GS as f32).abs() < 1e-3);
    assert_eq!(h.norms().traceless_one, 117.5f32);
}
