//! Exam administration, answer parsing, accuracy, jury quality scoring, and
//! diversity metrics.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::exam::{Exam, QuestionInstance};
use crate::gateway::{render_plot, serialize_text, Gateway, ModelMessage, ModelRef};
use crate::irt::ResponseMatrix;
use crate::rng::{child_seed, rng_for};
use crate::Result;

/// How series reach the candidate model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Vision,
    Text,
}

/// One candidate reply to one question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub question_id: String,
    pub candidate: String,
    pub raw_text: String,
    pub parsed_choice: Option<usize>,
    pub correct: bool,
    pub parsable: bool,
    pub modality: Modality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dpi: Option<u32>,
}

/// Settings for [`administer`].
#[derive(Clone, Debug)]
pub struct AdministerOptions {
    pub modality: Modality,
    pub dpi: u32,
    /// Text-serialization precision (decimal places).
    pub decimals: usize,
    /// With `strict`, a model failure aborts the run; otherwise it is
    /// recorded as an unparsable response.
    pub strict: bool,
}

impl Default for AdministerOptions {
    fn default() -> Self {
        AdministerOptions {
            modality: Modality::Vision,
            dpi: 50,
            decimals: 3,
            strict: false,
        }
    }
}

/// Build the prompt text (and images in vision mode) for one question.
pub fn build_prompt(
    question: &QuestionInstance,
    modality: Modality,
    dpi: u32,
    decimals: usize,
) -> Result<ModelMessage> {
    let mut text = String::new();
    let mut images = Vec::new();

    if let Some(notes) = &question.concept_notes {
        text.push_str("Background: ");
        text.push_str(notes);
        text.push_str("\n\n");
    }
    if let Some(icl) = &question.icl_example {
        text.push_str("Here is a solved example of the same kind of question.\n");
        text.push_str("Example question: ");
        text.push_str(&icl.question);
        text.push('\n');
        if !icl.series.is_empty() {
            match modality {
                Modality::Vision => {
                    text.push_str("(The example time series is shown in the first image.)\n");
                    images.push(render_plot(&icl.series, dpi)?);
                }
                Modality::Text => {
                    for (i, s) in icl.series.iter().enumerate() {
                        text.push_str(&format!(
                            "Example series {}: {}\n",
                            i + 1,
                            serialize_text(s, decimals)
                        ));
                    }
                }
            }
        }
        text.push_str("Example answer: ");
        text.push_str(&icl.answer);
        text.push_str("\n\n");
    }
    if let Some(hint) = &question.hint {
        text.push_str("Hint: ");
        text.push_str(hint);
        text.push_str("\n\n");
    }

    text.push_str("Question: ");
    text.push_str(&question.question);
    text.push('\n');
    match modality {
        Modality::Vision => {
            let label = if images.is_empty() {
                "(The time series is shown in the attached image.)"
            } else {
                "(The time series for this question is shown in the last image.)"
            };
            text.push_str(label);
            text.push('\n');
            images.push(render_plot(&question.series, dpi)?);
        }
        Modality::Text => {
            for (i, s) in question.series.iter().enumerate() {
                text.push_str(&format!("Series {}: {}\n", i + 1, serialize_text(s, decimals)));
            }
        }
    }
    text.push('\n');
    for (i, option) in question.options.iter().enumerate() {
        text.push_str(&format!("[{}] {}\n", option_letter(i), option));
    }
    text.push('\n');
    text.push_str(&question.format_hint);

    Ok(ModelMessage::user_with_images(text, images))
}

fn option_letter(index: usize) -> char {
    (b'A' + index as u8) as char
}

/// Present every question to a candidate model, in exam order.
pub fn administer(
    gateway: &Gateway,
    exam: &Exam,
    candidate: &ModelRef,
    options: &AdministerOptions,
) -> Result<Vec<ResponseRecord>> {
    let mut records = Vec::with_capacity(exam.len());
    for question in &exam.questions {
        let prompt = build_prompt(question, options.modality, options.dpi, options.decimals)?;
        let raw = match gateway.chat(candidate, std::slice::from_ref(&prompt)) {
            Ok(text) => text,
            // Configuration problems abort even in lenient mode; only
            // per-question model failures degrade to unparsable records.
            Err(e @ (Error::MissingCredential(_) | Error::AuthFailed { .. })) => return Err(e),
            Err(e) if !options.strict => format!("<model error: {e}>"),
            Err(e) => return Err(e),
        };
        let parsed = parse_answer(&raw, question.options.len());
        records.push(ResponseRecord {
            question_id: question.id.clone(),
            candidate: candidate.model_id.clone(),
            raw_text: raw,
            parsed_choice: parsed,
            correct: parsed == Some(question.correct_index),
            parsable: parsed.is_some(),
            modality: options.modality,
            dpi: (options.modality == Modality::Vision).then_some(options.dpi),
        });
    }
    Ok(records)
}

/// Extract the chosen option from a model reply.
///
/// The last bracketed letter within range wins (`"... [B] ... final [A]"`
/// parses as A); otherwise a trailing standalone letter followed only by
/// punctuation counts. Case-insensitive, whitespace tolerated inside the
/// brackets.
pub fn parse_answer(raw: &str, option_count: usize) -> Option<usize> {
    debug_assert!((2..=26).contains(&option_count));
    let bracket = regex::Regex::new(r"\[\s*([A-Za-z])\s*\]").unwrap();
    let mut chosen = None;
    for cap in bracket.captures_iter(raw) {
        let letter = cap[1].chars().next().unwrap().to_ascii_uppercase();
        let index = (letter as u8 - b'A') as usize;
        if index < option_count {
            chosen = Some(index);
        }
    }
    if chosen.is_some() {
        return chosen;
    }
    let trailing = regex::Regex::new(r"(?i)\b([A-Z])\b[\s.,!?:;)\]]*$").unwrap();
    if let Some(cap) = trailing.captures(raw) {
        let letter = cap[1].chars().next().unwrap().to_ascii_uppercase();
        let index = (letter as u8 - b'A') as usize;
        if index < option_count {
            return Some(index);
        }
    }
    None
}

/// Accuracy pair: all responses (unparsable counted wrong) versus the
/// parsable subset only (absent when nothing parsed).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub general: f64,
    pub parsable_only: Option<f64>,
    pub total: usize,
    pub parsable_count: usize,
}

/// Score a non-empty set of response records.
pub fn accuracy(records: &[ResponseRecord]) -> Result<Accuracy> {
    if records.is_empty() {
        return Err(Error::invalid("records", "must be non-empty"));
    }
    let total = records.len();
    let correct = records.iter().filter(|r| r.correct).count();
    let parsable_count = records.iter().filter(|r| r.parsable).count();
    Ok(Accuracy {
        general: correct as f64 / total as f64,
        parsable_only: (parsable_count > 0).then(|| correct as f64 / parsable_count as f64),
        total,
        parsable_count,
    })
}

/// Accuracy per group, keyed by `group_of(record)`.
pub fn accuracy_by<F>(records: &[ResponseRecord], group_of: F) -> Result<BTreeMap<String, Accuracy>>
where
    F: Fn(&ResponseRecord) -> String,
{
    if records.is_empty() {
        return Err(Error::invalid("records", "must be non-empty"));
    }
    let mut groups: BTreeMap<String, Vec<ResponseRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(group_of(r)).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(k, v)| accuracy(&v).map(|a| (k, a)))
        .collect()
}

/// Build a question x candidate response matrix from administration records.
pub fn build_response_matrix(
    exam: &Exam,
    runs: &[(String, Vec<ResponseRecord>)],
) -> Result<ResponseMatrix> {
    let question_ids: Vec<String> = exam.questions.iter().map(|q| q.id.clone()).collect();
    let candidate_ids: Vec<String> = runs.iter().map(|(id, _)| id.clone()).collect();
    let mut entries = vec![vec![None; candidate_ids.len()]; question_ids.len()];
    for (j, (candidate, records)) in runs.iter().enumerate() {
        for record in records {
            let Some(i) = question_ids.iter().position(|id| id == &record.question_id) else {
                return Err(Error::NotFound(format!(
                    "response for unknown question `{}` from `{candidate}`",
                    record.question_id
                )));
            };
            entries[i][j] = Some(record.correct);
        }
    }
    ResponseMatrix::new(question_ids, candidate_ids, entries)
}

/// Jury rubric criteria.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JuryCriterion {
    Specificity,
    Unambiguity,
    DomainRelevance,
    Answerability,
    NoUnintendedHints,
}

impl JuryCriterion {
    pub const ALL: [JuryCriterion; 5] = [
        JuryCriterion::Specificity,
        JuryCriterion::Unambiguity,
        JuryCriterion::DomainRelevance,
        JuryCriterion::Answerability,
        JuryCriterion::NoUnintendedHints,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            JuryCriterion::Specificity => "specificity",
            JuryCriterion::Unambiguity => "unambiguity",
            JuryCriterion::DomainRelevance => "domain_relevance",
            JuryCriterion::Answerability => "answerability",
            JuryCriterion::NoUnintendedHints => "no_unintended_hints",
        }
    }

    /// The judge prompt for this criterion. The medicine/ECG domain ships
    /// fixed texts; other domains use the parameterized analogues.
    pub fn prompt(self, domain: &str) -> String {
        let ecg = matches!(domain, "ecg" | "medicine");
        match self {
            JuryCriterion::Specificity if ecg => {
                include_str!("../assets/jury/ecg/specificity.txt").to_string()
            }
            JuryCriterion::Unambiguity if ecg => {
                include_str!("../assets/jury/ecg/unambiguity.txt").to_string()
            }
            JuryCriterion::DomainRelevance if ecg => {
                include_str!("../assets/jury/ecg/domain_relevance.txt").to_string()
            }
            JuryCriterion::Answerability if ecg => {
                include_str!("../assets/jury/ecg/answerability.txt").to_string()
            }
            JuryCriterion::Specificity => {
                include_str!("../assets/jury/specificity.txt").replace("{domain}", domain)
            }
            JuryCriterion::Unambiguity => {
                include_str!("../assets/jury/unambiguity.txt").replace("{domain}", domain)
            }
            JuryCriterion::DomainRelevance => {
                include_str!("../assets/jury/domain_relevance.txt").replace("{domain}", domain)
            }
            JuryCriterion::Answerability => {
                include_str!("../assets/jury/answerability.txt").replace("{domain}", domain)
            }
            JuryCriterion::NoUnintendedHints => {
                include_str!("../assets/jury/no_unintended_hints.txt").replace("{domain}", domain)
            }
        }
    }
}

impl std::fmt::Display for JuryCriterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scores one (question, criterion) cell: one integer 1-10 per judge that
/// produced an extractable score, and their mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JuryScore {
    pub criterion: JuryCriterion,
    pub scores: Vec<u8>,
    pub mean: f64,
}

/// Aggregated jury output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JuryReport {
    /// Per question id, one [`JuryScore`] per criterion.
    pub per_question: BTreeMap<String, Vec<JuryScore>>,
    /// Mean over judges then questions, per criterion.
    pub criterion_means: BTreeMap<String, f64>,
    /// Mean of the criterion means.
    pub combined_mean: f64,
    /// Extracted judgments / attempted judgments.
    pub coverage: f64,
}

/// Panel-of-judges scoring: one chat call per (question, judge, criterion),
/// the leading integer 1-10 extracted from each reply.
pub fn jury_score(
    gateway: &Gateway,
    questions: &[QuestionInstance],
    panel: &[ModelRef],
    domain: &str,
) -> Result<JuryReport> {
    if panel.is_empty() {
        return Err(Error::invalid("panel", "must be non-empty"));
    }
    if questions.is_empty() {
        return Err(Error::invalid("questions", "must be non-empty"));
    }
    let mut per_question: BTreeMap<String, Vec<JuryScore>> = BTreeMap::new();
    let mut attempted = 0usize;
    let mut extracted = 0usize;

    for question in questions {
        let rendered = render_question_for_judges(question);
        let mut scores_for_question = Vec::new();
        for criterion in JuryCriterion::ALL {
            let prompt_text = format!(
                "{}\n\nHere is the question to evaluate:\n\n{rendered}",
                criterion.prompt(domain)
            );
            let mut scores = Vec::new();
            for judge in panel {
                attempted += 1;
                let reply = gateway.chat(judge, &[ModelMessage::user(prompt_text.clone())])?;
                if let Some(score) = extract_leading_score(&reply) {
                    extracted += 1;
                    scores.push(score);
                }
            }
            let mean = if scores.is_empty() {
                f64::NAN
            } else {
                scores.iter().map(|&s| s as f64).sum::<f64>() / scores.len() as f64
            };
            scores_for_question.push(JuryScore {
                criterion,
                scores,
                mean,
            });
        }
        per_question.insert(question.id.clone(), scores_for_question);
    }

    let mut criterion_means = BTreeMap::new();
    for criterion in JuryCriterion::ALL {
        let means: Vec<f64> = per_question
            .values()
            .flat_map(|scores| scores.iter())
            .filter(|s| s.criterion == criterion && !s.mean.is_nan())
            .map(|s| s.mean)
            .collect();
        if !means.is_empty() {
            criterion_means.insert(
                criterion.as_str().to_string(),
                means.iter().sum::<f64>() / means.len() as f64,
            );
        }
    }
    let combined_mean = if criterion_means.is_empty() {
        f64::NAN
    } else {
        criterion_means.values().sum::<f64>() / criterion_means.len() as f64
    };

    Ok(JuryReport {
        per_question,
        criterion_means,
        combined_mean,
        coverage: extracted as f64 / attempted.max(1) as f64,
    })
}

fn render_question_for_judges(question: &QuestionInstance) -> String {
    let mut text = String::new();
    text.push_str(&question.question);
    text.push('\n');
    for (i, option) in question.options.iter().enumerate() {
        text.push_str(&format!("[{}] {}\n", option_letter(i), option));
    }
    text
}

/// Leading integer (1-10) of a judge reply, e.g. `"8 - clear and focused"`.
pub fn extract_leading_score(reply: &str) -> Option<u8> {
    let re = regex::Regex::new(r"^\s*(\d{1,2})").unwrap();
    let score: u8 = re.captures(reply)?.get(1)?.as_str().parse().ok()?;
    (1..=10).contains(&score).then_some(score)
}

/// Normalized Levenshtein distance: edit distance over character sequences
/// divided by the longer length; two empty strings are at distance 0.
pub fn levenshtein_norm(s1: &str, s2: &str) -> f64 {
    let a: Vec<char> = s1.chars().collect();
    let b: Vec<char> = s2.chars().collect();
    let max_len = a.len().max(b.len());
    if max_len == 0 {
        return 0.0;
    }
    levenshtein(&a, &b) as f64 / max_len as f64
}

fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut current: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut previous_diagonal = current[0];
        current[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitution = previous_diagonal + usize::from(ca != cb);
            previous_diagonal = current[j + 1];
            current[j + 1] = substitution
                .min(current[j + 1] + 1)
                .min(current[j] + 1);
        }
    }
    current[b.len()]
}

/// `mean` and population standard deviation of a pairwise statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MeanStd {
        mean,
        std: var.sqrt(),
    }
}

/// Diversity over a seeded sample of question texts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiversityReport {
    /// Pairwise cosine distance of embeddings; absent if the embedder failed.
    pub embedding: Option<MeanStd>,
    /// Pairwise normalized Levenshtein distance.
    pub levenshtein: MeanStd,
    pub sampled: usize,
    pub pairs: usize,
}

/// Pairwise diversity over up to `sample_n` questions sampled without
/// replacement (all questions when fewer). Deterministic per seed.
pub fn diversity(
    gateway: &Gateway,
    questions: &[QuestionInstance],
    sample_n: usize,
    embedder: &ModelRef,
    seed: u64,
) -> Result<DiversityReport> {
    if questions.len() < 2 {
        return Err(Error::invalid("questions", "need at least 2 questions"));
    }
    let mut indices: Vec<usize> = (0..questions.len()).collect();
    let mut rng = rng_for(child_seed(seed, "diversity-sample", 0));
    indices.shuffle(&mut rng);
    indices.truncate(sample_n.max(2));
    let texts: Vec<String> = indices.iter().map(|&i| questions[i].question.clone()).collect();

    let mut lev = Vec::new();
    for i in 0..texts.len() {
        for j in i + 1..texts.len() {
            lev.push(levenshtein_norm(&texts[i], &texts[j]));
        }
    }

    let embedding = match gateway.embed(embedder, &texts) {
        Ok(vectors) => {
            let mut distances = Vec::with_capacity(lev.len());
            for i in 0..vectors.len() {
                for j in i + 1..vectors.len() {
                    distances.push(cosine_distance(&vectors[i], &vectors[j]));
                }
            }
            Some(mean_std(&distances))
        }
        Err(e) => {
            log::warn!("embedder failed, reporting Levenshtein diversity only: {e}");
            None
        }
    };

    Ok(DiversityReport {
        embedding,
        levenshtein: mean_std(&lev),
        sampled: texts.len(),
        pairs: lev.len(),
    })
}

fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    // Identical vectors can land at 1 - (1 + eps); keep distances in [0, 2].
    (1.0 - dot / (na * nb)).max(0.0)
}
