//! Statistical verification of the synthetic generators against independent
//! oracles: sample autocorrelation, sample variance, and the lagged
//! regression F-test.

mod common;

use common::oracles;
use proptest::prelude::*;
use tsexam::synth::{
    add_noise, compose, gen_base_pattern, gen_granger_pair, inject_anomaly, signal_power,
    AnomalyKind, AnomalyLabel, Composition, PatternSpec, TimeSeries,
};

#[test]
fn ar1_long_run_matches_its_coefficient() {
    let series = gen_base_pattern(
        &PatternSpec::ArProcess {
            coeffs: vec![0.9],
            noise_std: 1.0,
        },
        10_000,
        42,
    )
    .unwrap();
    let rho = oracles::autocorr(series.values(), 1);
    assert!((rho - 0.9).abs() < 0.05, "lag-1 autocorrelation {rho}");
}

#[test]
fn ols_slope_of_pure_trend_is_exact() {
    for (seed, slope) in [(0u64, 0.35), (1, -1.25), (2, 4.0)] {
        let series = gen_base_pattern(
            &PatternSpec::LinearTrend {
                slope,
                intercept: 2.0,
            },
            128,
            seed,
        )
        .unwrap();
        let estimated = oracles::ols_slope(series.values());
        assert!(
            (estimated - slope).abs() < 1e-9,
            "slope {estimated} vs {slope}"
        );
    }
}

#[test]
fn snr_zero_db_noise_variance_matches_signal_power() {
    let clean = gen_base_pattern(
        &PatternSpec::Sine {
            amplitude: 1.0,
            period: 64.0,
            phase: 0.0,
        },
        100_000,
        7,
    )
    .unwrap();
    let power = signal_power(clean.values());
    assert!((power - 0.5).abs() < 0.01, "sine power {power}");
    let noisy = add_noise(&clean, 0.0, 11).unwrap();
    let injected: Vec<f64> = noisy
        .values()
        .iter()
        .zip(clean.values())
        .map(|(a, b)| a - b)
        .collect();
    let injected_var = oracles::variance(&injected);
    assert!(
        (injected_var - power).abs() / power < 0.05,
        "injected noise variance {injected_var} vs signal power {power}"
    );
}

#[test]
fn snr_monotonicity_in_residual_variance() {
    let clean = gen_base_pattern(
        &PatternSpec::Sine {
            amplitude: 2.0,
            period: 32.0,
            phase: 0.5,
        },
        20_000,
        3,
    )
    .unwrap();
    let mut previous = -1.0;
    for snr_db in [20.0, 10.0, 0.0, -10.0] {
        let noisy = add_noise(&clean, snr_db, 5).unwrap();
        let residual: Vec<f64> = noisy
            .values()
            .iter()
            .zip(clean.values())
            .map(|(a, b)| a - b)
            .collect();
        let var = oracles::variance(&residual);
        assert!(
            var > previous,
            "residual variance must grow as SNR drops: {var} after {previous}"
        );
        previous = var;
    }
}

#[test]
fn variance_shift_scales_in_window_std() {
    let base = gen_base_pattern(&PatternSpec::WhiteNoise { std: 1.0 }, 4000, 13).unwrap();
    let label = AnomalyLabel {
        kind: AnomalyKind::VarianceShift,
        start: 1000,
        end: 2999,
        magnitude: 3.0,
    };
    let shifted = inject_anomaly(&base, &label, 17).unwrap();
    let inside = &shifted.values()[1000..3000];
    let outside = &shifted.values()[..1000];
    let inside_std = oracles::std_dev(inside);
    assert!(
        (inside_std - 3.0).abs() / 3.0 < 0.10,
        "in-window std {inside_std}"
    );
    assert!((oracles::std_dev(outside) - 1.0).abs() < 0.15);
}

#[test]
fn granger_detection_rates_over_100_seeds() {
    let mut detected = 0;
    let mut reverse_quiet = 0;
    let mut independent_quiet = 0;
    for seed in 0..100 {
        let (x, y) = gen_granger_pair(128, 2, 0.8, seed).unwrap();
        if oracles::granger_p_value(x.values(), y.values(), 4) < 0.01 {
            detected += 1;
        }
        if oracles::granger_p_value(y.values(), x.values(), 4) >= 0.01 {
            reverse_quiet += 1;
        }
        let (xi, yi) = gen_granger_pair(128, 2, 0.0, seed).unwrap();
        if oracles::granger_p_value(xi.values(), yi.values(), 4) > 0.05 {
            independent_quiet += 1;
        }
    }
    assert!(detected >= 90, "coupled pair detected in {detected}/100 seeds");
    assert!(
        reverse_quiet >= 80,
        "reverse direction non-significant in {reverse_quiet}/100 seeds"
    );
    assert!(
        independent_quiet >= 90,
        "independent pair quiet in {independent_quiet}/100 seeds"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn additive_composition_commutes_and_associates(
        a in prop::collection::vec(-1e6f64..1e6, 4..32),
        b in prop::collection::vec(-1e6f64..1e6, 4..32),
        c in prop::collection::vec(-1e6f64..1e6, 4..32),
    ) {
        let n = a.len().min(b.len()).min(c.len());
        let ts = |v: &[f64], tag: &str| TimeSeries::external(v[..n].to_vec(), tag).unwrap();
        let (ta, tb, tc) = (ts(&a, "a"), ts(&b, "b"), ts(&c, "c"));

        for method in [Composition::Additive, Composition::Multiplicative] {
            let ab = compose(&[ta.clone(), tb.clone()], method).unwrap();
            let ba = compose(&[tb.clone(), ta.clone()], method).unwrap();
            prop_assert_eq!(ab.values(), ba.values());

            let ab_c = compose(&[ab, tc.clone()], method).unwrap();
            let flat = compose(&[ta.clone(), tb.clone(), tc.clone()], method).unwrap();
            for (x, y) in ab_c.values().iter().zip(flat.values()) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn anomaly_injection_preserves_out_of_window_bits(
        seed in 0u64..500,
        start in 0usize..40,
        width in 0usize..20,
        kind_pick in 0usize..4,
    ) {
        let base = gen_base_pattern(&PatternSpec::WhiteNoise { std: 1.0 }, 64, seed).unwrap();
        let kind = [
            AnomalyKind::Spike,
            AnomalyKind::LevelShift,
            AnomalyKind::VarianceShift,
            AnomalyKind::PatternBreak,
        ][kind_pick];
        let end = if kind == AnomalyKind::Spike { start } else { (start + width).min(63) };
        let label = AnomalyLabel { kind, start, end, magnitude: 2.5 };
        let shifted = inject_anomaly(&base, &label, seed ^ 0xabcd).unwrap();
        for i in (0..start).chain(end + 1..64) {
            prop_assert_eq!(base.values()[i].to_bits(), shifted.values()[i].to_bits());
        }
    }

    #[test]
    fn generators_are_pure_functions_of_seed(seed in 0u64..200) {
        let spec = PatternSpec::MeanReverting { mean: 1.0, rate: 0.4, noise_std: 0.7 };
        let a = gen_base_pattern(&spec, 96, seed).unwrap();
        let b = gen_base_pattern(&spec, 96, seed).unwrap();
        prop_assert_eq!(a.values(), b.values());
    }
}
