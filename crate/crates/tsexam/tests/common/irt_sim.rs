//! Oracle candidate simulation for IRT tests: questions get fixed true
//! parameters derived from their id, candidates answer stochastically through
//! the 2PL response curve at fixed ability levels.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsexam::exam::Exam;
use tsexam::irt::{predict_prob, ResponseMatrix};

fn seeded(parts: &[u64]) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &p in parts {
        for b in p.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Fixed true `(a, b)` per question id, drawn once from the id's hash:
/// discrimination in `[0.5, 2.5]`, difficulty in `[-2, 2]`.
pub fn true_params(question_id: &str, world_seed: u64) -> (f64, f64) {
    let mut rng = seeded(&[hash_str(question_id), world_seed]);
    let a = rng.random_range(0.5..2.5);
    let b = rng.random_range(-2.0..2.0);
    (a, b)
}

/// Evenly spread candidate abilities over `[-3, 3]`.
pub fn theta_spread(num_candidates: usize) -> Vec<f64> {
    (0..num_candidates)
        .map(|j| -3.0 + 6.0 * j as f64 / (num_candidates - 1).max(1) as f64)
        .collect()
}

/// Administer an exam to oracle candidates: each answers correctly with the
/// 2PL probability at their ability. A candidate always gives the same
/// answer to the same question (temperature-zero behavior), so re-taking an
/// exam only changes responses for replaced questions.
pub fn simulate_responses(exam: &Exam, thetas: &[f64], world_seed: u64) -> ResponseMatrix {
    let question_ids: Vec<String> = exam.questions.iter().map(|q| q.id.clone()).collect();
    let candidate_ids: Vec<String> = (0..thetas.len()).map(|j| format!("cand-{j:02}")).collect();
    let entries = question_ids
        .iter()
        .map(|qid| {
            let (a, b) = true_params(qid, world_seed);
            thetas
                .iter()
                .enumerate()
                .map(|(j, &theta)| {
                    let p = predict_prob(a, b, theta);
                    let mut rng = seeded(&[hash_str(qid), world_seed, j as u64]);
                    Some(rng.random::<f64>() < p)
                })
                .collect()
        })
        .collect();
    ResponseMatrix::new(question_ids, candidate_ids, entries).expect("well-formed matrix")
}
