//! Parameter recovery: fit simulated response data from known 2PL parameters
//! and require the estimates to track the truth.

mod common;

use common::oracles;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsexam::exam::{Category, CategoryKind, Exam, ExamMetadata, QuestionInstance};
use tsexam::irt::{
    fit_2pl, normalize_params, predict_prob, refine, FitConfig, RefineConfig, ResponseMatrix,
};
use tsexam::templates::{Registry, RegistryResampler};

/// Simulate a response matrix from known parameters.
fn simulate(
    num_questions: usize,
    num_candidates: usize,
    seed: u64,
) -> (ResponseMatrix, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..num_questions).map(|_| rng.random_range(0.5..2.5)).collect();
    let b: Vec<f64> = (0..num_questions).map(|_| rng.random_range(-2.0..2.0)).collect();
    let theta: Vec<f64> = (0..num_candidates).map(|_| rng.random_range(-2.0..2.0)).collect();
    let entries = (0..num_questions)
        .map(|i| {
            (0..num_candidates)
                .map(|j| Some(rng.random::<f64>() < predict_prob(a[i], b[i], theta[j])))
                .collect()
        })
        .collect();
    let matrix = ResponseMatrix::new(
        (0..num_questions).map(|i| format!("q{i}")).collect(),
        (0..num_candidates).map(|j| format!("c{j}")).collect(),
        entries,
    )
    .unwrap();
    (matrix, a, b, theta)
}

#[test]
fn recovery_correlates_with_truth() {
    // Twenty candidates carry limited information per item, so the
    // single-seed discrimination bar here is a floor; the acceptance suite
    // additionally requires mean r_a >= 0.6 over five seeds.
    let (matrix, true_a, true_b, true_theta) = simulate(200, 20, 31);
    let fit = fit_2pl(&matrix, &FitConfig::default()).unwrap();
    let r_b = oracles::pearson(&true_b, &fit.difficulty);
    let r_a = oracles::pearson(&true_a, &fit.discrimination);
    let r_theta = oracles::pearson(&true_theta, &fit.ability);
    assert!(r_b >= 0.8, "difficulty recovery r = {r_b}");
    assert!(r_a >= 0.55, "discrimination recovery r = {r_a}");
    assert!(r_theta >= 0.8, "ability recovery r = {r_theta}");
}

#[test]
fn all_correct_question_lands_in_easiest_decile() {
    let (matrix, _, _, _) = simulate(100, 20, 7);
    // Rebuild with question 0 answered correctly by everyone.
    let entries: Vec<Vec<Option<bool>>> = (0..matrix.num_questions())
        .map(|i| {
            (0..matrix.num_candidates())
                .map(|j| if i == 0 { Some(true) } else { matrix.entry(i, j) })
                .collect()
        })
        .collect();
    let doctored = ResponseMatrix::new(
        matrix.question_ids.clone(),
        matrix.candidate_ids.clone(),
        entries,
    )
    .unwrap();
    let fit = fit_2pl(&doctored, &FitConfig::default()).unwrap();
    let mut sorted = fit.difficulty.clone();
    sorted.sort_by(f64::total_cmp);
    let decile = sorted[sorted.len() / 10];
    assert!(
        fit.difficulty[0] <= decile,
        "all-correct question difficulty {} above 10th percentile {decile}",
        fit.difficulty[0]
    );
    assert!(fit.degenerate_questions.contains(&0));
}

fn builtin_exam(num_per_category: usize, seed: u64) -> Exam {
    let registry = Registry::builtin();
    let counts = CategoryKind::ALL
        .into_iter()
        .map(|k| (k, num_per_category))
        .collect();
    registry.generate_exam(Some(&counts), seed).unwrap()
}

#[test]
fn refine_with_zero_drop_leaves_exam_unchanged() {
    let exam = builtin_exam(4, 5);
    let thetas = common::irt_sim::theta_spread(8);
    let initial = common::irt_sim::simulate_responses(&exam, &thetas, 0);
    let registry = Registry::builtin();
    let mut resampler = RegistryResampler::new(&registry, 99);
    let config = RefineConfig {
        drop_percentage: 0.0,
        num_iterations: 3,
        fit: FitConfig {
            epochs: 300,
            ..Default::default()
        },
    };
    let outcome = refine(&exam, &initial, &config, &mut resampler, &mut |e| {
        Ok(common::irt_sim::simulate_responses(e, &thetas, 0))
    })
    .unwrap();
    assert_eq!(outcome.exam, exam, "no drops means the exam never changes");
    assert!(outcome.rounds.iter().all(|r| r.dropped_ids.is_empty()));
}

#[test]
fn refine_preserves_per_category_counts_and_replaces_in_category() {
    let exam = builtin_exam(4, 11);
    let count_by_category = |e: &Exam| {
        let mut counts = std::collections::BTreeMap::new();
        for q in &e.questions {
            *counts.entry(q.category.clone()).or_insert(0usize) += 1;
        }
        counts
    };
    let before = count_by_category(&exam);

    let thetas = common::irt_sim::theta_spread(8);
    let initial = common::irt_sim::simulate_responses(&exam, &thetas, 3);
    let registry = Registry::builtin();
    let mut resampler = RegistryResampler::new(&registry, 12345);
    let config = RefineConfig {
        drop_percentage: 0.2,
        num_iterations: 3,
        fit: FitConfig {
            epochs: 300,
            ..Default::default()
        },
    };
    let outcome = refine(&exam, &initial, &config, &mut resampler, &mut |e| {
        Ok(common::irt_sim::simulate_responses(e, &thetas, 3))
    })
    .unwrap();

    assert_eq!(count_by_category(&outcome.exam), before);
    assert!(
        outcome.rounds.iter().any(|r| !r.dropped_ids.is_empty()),
        "some questions should have been dropped"
    );
    // Replacements are fresh questions from the same category.
    let dropped: std::collections::BTreeSet<&String> = outcome
        .rounds
        .iter()
        .flat_map(|r| r.dropped_ids.iter())
        .collect();
    for id in dropped {
        assert!(
            outcome.exam.question(id).is_none()
                || exam.question(id).is_none(),
            "dropped question `{id}` should be replaced in the final exam"
        );
    }
}

#[test]
fn refine_rejects_mismatched_response_matrix() {
    let exam = builtin_exam(2, 1);
    let other = builtin_exam(2, 2);
    let thetas = common::irt_sim::theta_spread(4);
    let wrong = common::irt_sim::simulate_responses(&other, &thetas, 0);
    let registry = Registry::builtin();
    let mut resampler = RegistryResampler::new(&registry, 7);
    let config = RefineConfig::default();
    let result = refine(&exam, &wrong, &config, &mut resampler, &mut |_| {
        panic!("should fail before re-administration")
    });
    assert!(result.is_err());
}

#[test]
fn fitted_abilities_order_matches_raw_accuracy_trend() {
    let exam = builtin_exam(5, 21);
    let thetas = common::irt_sim::theta_spread(10);
    let matrix = common::irt_sim::simulate_responses(&exam, &thetas, 1);
    let fit = fit_2pl(
        &matrix,
        &FitConfig {
            epochs: 500,
            ..Default::default()
        },
    )
    .unwrap();
    // The strongest simulated candidate should land above the weakest.
    assert!(fit.ability[9] > fit.ability[0]);
    let (a_norm, b_norm) = normalize_params(&fit);
    assert!(a_norm.iter().chain(&b_norm).all(|v| (0.0..=1.0).contains(v)));
}
