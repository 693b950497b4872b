//! Characterization sweeps: trivial limits, oracle recomputability of the
//! array path, reproducibility, and the fidelity comparison structure.
//! Full-size population studies live in the acceptance suite.

use xbar_core::characterize::{
    fidelity_compare, monte_carlo_variation, per_column_error, sweep_dimension, sweep_inputs,
    sweep_states, CharacterizeSetup, NonIdealityMask, UniformState,
};
use xbar_core::converters::VariationConfig;
use xbar_core::matrix::ConductanceMatrix;
use xbar_core::nonideal::build_nonideal;
use xbar_core::params::CrossbarParams;

fn setup() -> CharacterizeSetup {
    CharacterizeSetup::default()
}

#[test]
fn error_metric_sign_and_fallback() {
    // attenuation is positive error; near-zero ideal outputs divide by the
    // full-scale current instead
    let eps = per_column_error(&[1.0, -1.0, 1e-9], &[0.9, -0.9, 0.5], 1.0);
    assert!((eps[0] - 10.0).abs() < 1e-12);
    assert!((eps[1] - 10.0).abs() < 1e-12);
    assert!((eps[2] - 100.0 * (1e-9 - 0.5)).abs() < 1e-9);
}

#[test]
fn masks_zero_the_right_parameters() {
    let p = CrossbarParams::default();
    let wire = NonIdealityMask::Wire.apply(&p);
    assert_eq!((wire.r_row, wire.r_col), (p.r_row, p.r_col));
    assert_eq!((wire.r_sense, wire.r_driver), (0.0, 0.0));
    let sense = NonIdealityMask::Sense.apply(&p);
    assert_eq!(sense.r_sense, p.r_sense);
    assert_eq!((sense.r_row, sense.r_col, sense.r_driver), (0.0, 0.0, 0.0));
    let dac = NonIdealityMask::DacDriver.apply(&p);
    assert_eq!(dac.r_driver, p.r_driver);
    assert_eq!((dac.r_row, dac.r_col, dac.r_sense), (0.0, 0.0, 0.0));
    assert!(NonIdealityMask::DacDriver.converters_enabled());
    assert!(!NonIdealityMask::WireSense.converters_enabled());
}

#[test]
fn ideal_parameters_give_exactly_zero_array_error() {
    let mut s = setup();
    s.params = CrossbarParams::ideal(8, 8);
    let rows = sweep_dimension(
        &s,
        &[8],
        &[
            NonIdealityMask::Wire,
            NonIdealityMask::Sense,
            NonIdealityMask::WireSense,
        ],
    )
    .unwrap();
    for r in &rows {
        assert_eq!(r.last_column_error_pct, 0.0, "{:?}", r);
    }
}

#[test]
fn dimension_trend_and_state_ordering_hold_at_small_sizes() {
    let rows = sweep_dimension(&setup(), &[8, 16], &[NonIdealityMask::All]).unwrap();
    let get = |size, state| {
        rows.iter()
            .find(|r| r.size == size && r.state == state)
            .unwrap()
            .last_column_error_pct
    };
    for state in [UniformState::AllGmin, UniformState::AllGmax] {
        assert!(
            get(16, state).abs() > get(8, state).abs(),
            "{state:?}: error should grow with size"
        );
    }
    // heavier loading errs more
    assert!(get(16, UniformState::AllGmax) > get(16, UniformState::AllGmin));
}

#[test]
fn array_path_sweep_currents_match_oracle() {
    // WIRE-only modeled currents are recomputable from the circuit solve
    let s = setup().sized(16);
    let mask = NonIdealityMask::Wire;
    let g = ConductanceMatrix::random_levels(&s.params, 31);
    let masked = mask.apply(&s.params);
    let xbar = build_nonideal(&g, &masked).unwrap();
    let din: Vec<u32> = (0..16).map(|i| (i as u32 * 5) % 64).collect();
    let model = s.model_currents(&xbar, &din, mask).unwrap();
    let truth = s.oracle_currents(&g, &din, mask).unwrap();
    let scale = truth.iter().fold(1e-300f64, |a, v| a.max(v.abs()));
    for (m, t) in model.iter().zip(&truth) {
        assert!((m - t).abs() <= 1e-9 * scale, "{m} vs {t}");
    }
}

#[test]
fn state_sweep_degenerate_and_reproducible() {
    let s = setup();
    let one = sweep_states(&s, 8, 1, 77).unwrap();
    assert_eq!(one.max, one.min);
    assert_eq!(one.max, one.avg);
    assert_eq!(one.max, one.sample);

    let a = sweep_states(&s, 8, 20, 123).unwrap();
    let b = sweep_states(&s, 8, 20, 123).unwrap();
    assert_eq!(a.max, b.max);
    assert_eq!(a.min, b.min);
    assert_eq!(a.avg, b.avg);
    // a population of random states spreads in every column
    assert!(a.spread().iter().all(|&v| v > 0.0));
}

#[test]
fn input_sweep_degenerate_case_has_zero_spread() {
    let s = setup();
    let one = sweep_inputs(&s, 8, 1, 5).unwrap();
    assert!(one.spread().iter().all(|&v| v == 0.0));
}

#[test]
fn variation_sweep_zero_sigma_and_growth() {
    let s = setup();
    let var0 = VariationConfig {
        sigma_over_mu: 0.0,
        ..Default::default()
    };
    let stats0 = monte_carlo_variation(&s, 8, 10, &var0, 9).unwrap();
    assert_eq!(stats0.max, stats0.min);

    let mut spreads = Vec::new();
    for sigma in [0.05, 0.10] {
        let var = VariationConfig {
            sigma_over_mu: sigma,
            clamp: true,
            seed: 0,
        };
        let stats = monte_carlo_variation(&s, 8, 60, &var, 9).unwrap();
        spreads.push(stats.mean_spread());
    }
    assert!(
        spreads[1] > spreads[0],
        "spread should grow with sigma: {spreads:?}"
    );
}

#[test]
fn fidelity_array_only_deviation_is_solver_noise() {
    let report = fidelity_compare(&setup(), 16, 12, 17, false).unwrap();
    assert!(
        report.fcm_max_dev <= 1e-7,
        "array-only deviation {} should be solver noise",
        report.fcm_max_dev
    );
}

#[test]
fn fidelity_model_beats_constant_baseline() {
    let report = fidelity_compare(&setup(), 16, 20, 18, true).unwrap();
    assert!(
        report.fcm_max_dev < report.baseline_max_dev,
        "model dev {} should beat baseline dev {}",
        report.fcm_max_dev,
        report.baseline_max_dev
    );
}
