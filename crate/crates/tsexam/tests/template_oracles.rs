//! Every builtin template, every option: the attached series must satisfy
//! the option's oracle check (correctness by construction, verified
//! statistically). The acceptance suite runs the same checks over more seeds.

mod common;

use common::oracles;
use common::template_checks::check_question;
use tsexam::templates::Registry;

#[test]
fn all_templates_all_options_pass_their_oracles() {
    let registry = Registry::builtin();
    for meta in registry.list_templates(None) {
        for option in 0..meta.option_count {
            for seed in 0..5u64 {
                let question = registry
                    .instantiate(&meta.template_id, Some(option), seed)
                    .unwrap();
                assert_eq!(question.correct_index, option);
                if let Err(message) = check_question(&meta.template_id, option, &question) {
                    panic!("seed {seed}: {message}");
                }
            }
        }
    }
}

#[test]
fn snr_template_noisier_series_has_larger_residual_variance() {
    // The designated noisier series must dominate by a wide margin (the
    // conditioning separates 0 dB from 20 dB, a 100x variance gap).
    let registry = Registry::builtin();
    for seed in 0..10u64 {
        let q = registry.instantiate("noise_level", Some(0), seed).unwrap();
        check_question("noise_level", 0, &q).unwrap();
        let q = registry.instantiate("noise_level", Some(1), seed).unwrap();
        check_question("noise_level", 1, &q).unwrap();
    }
}

#[test]
fn white_noise_yes_option_passes_ljung_box_at_95_in_90_percent_of_seeds() {
    let registry = Registry::builtin();
    let critical = oracles::chi2_quantile(10.0, 0.95);
    let mut below = 0;
    for seed in 0..100u64 {
        let q = registry.instantiate("white_noise", Some(0), seed).unwrap();
        if oracles::ljung_box_q(q.series[0].values(), 10) < critical {
            below += 1;
        }
    }
    assert!(below >= 90, "Ljung-Box below critical in {below}/100 seeds");
}

#[test]
fn unforced_instantiation_draws_each_option() {
    let registry = Registry::builtin();
    let mut seen = [false; 4];
    for seed in 0..60u64 {
        let q = registry.instantiate("trend", None, seed).unwrap();
        seen[q.correct_index] = true;
    }
    assert!(seen.iter().all(|&s| s), "uniform draw should hit all options: {seen:?}");
}
