//! The template-forging agent: concept planning, LLM template generation,
//! three-stage verification (structure, content, capability), and bounded
//! regeneration with context condensation.
//!
//! All model traffic goes through the [`Gateway`], so the whole pipeline runs
//! offline against scripted mocks.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datasets::{DatasetAdapter, MetaValue};
use crate::dsl::{self, TemplateProgram};
use crate::error::Error;
use crate::evaluation::{administer, AdministerOptions, Modality};
use crate::exam::{Exam, ExamMetadata, QuestionInstance};
use crate::gateway::{Gateway, ModelMessage, ModelRef, Provider};
use crate::rng::{child_seed, fnv1a, rng_for};
use crate::Result;

/// The nine structural few-shot templates sampled into generation prompts.
pub const FEW_SHOT_POOL: [&str; 9] = [
    include_str!("../assets/few_shot/fs01.toml"),
    include_str!("../assets/few_shot/fs02.toml"),
    include_str!("../assets/few_shot/fs03.toml"),
    include_str!("../assets/few_shot/fs04.toml"),
    include_str!("../assets/few_shot/fs05.toml"),
    include_str!("../assets/few_shot/fs06.toml"),
    include_str!("../assets/few_shot/fs07.toml"),
    include_str!("../assets/few_shot/fs08.toml"),
    include_str!("../assets/few_shot/fs09.toml"),
];

/// Golden example programs shipped with the crate, by (name, document).
pub const GOLDEN_PROGRAMS: [(&str, &str); 3] = [
    (
        "finance_trend_strength",
        include_str!("../assets/golden/finance_trend_strength.toml"),
    ),
    (
        "ecg_rhythm_label",
        include_str!("../assets/golden/ecg_rhythm_label.toml"),
    ),
    (
        "weather_variability",
        include_str!("../assets/golden/weather_variability.toml"),
    ),
];

/// How concepts are planned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptMode {
    /// The generator model proposes concepts from the dataset description.
    Llm,
    /// Concepts are read out of a user-provided reference document.
    Rag,
}

/// Pipeline settings; defaults follow the framework's standard values
/// (k = 3 structure samples, 3 regeneration attempts, 9 few-shot templates
/// with 3 sampled per prompt, 4-5 instances per accepted template).
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    /// The user's exam-making guidelines (task description).
    pub task_description: String,
    /// Exam domain tag, e.g. "finance", "ecg", "weather".
    pub domain: String,
    pub concept_mode: ConceptMode,
    /// Samples drawn per template during the structure check.
    pub structure_samples: usize,
    /// Maximum generation attempts per template slot.
    pub regeneration_patience: usize,
    pub few_shot_pool: Vec<String>,
    pub few_shot_per_prompt: usize,
    /// Instances evaluated per accepted template for the final exam (4 or 5).
    pub instances_per_template: usize,
    /// Concepts requested during planning.
    pub num_concepts: usize,
    pub generator_model: ModelRef,
    pub verifier_model: ModelRef,
    pub strong_model: ModelRef,
    pub weak_model: ModelRef,
    /// Modality used when administering samples to the student models.
    pub filter_modality: Modality,
    pub seed: u64,
    /// Template slots processed concurrently (1 = fully sequential).
    pub parallelism: usize,
}

impl PipelineConfig {
    pub fn new(
        task_description: impl Into<String>,
        domain: impl Into<String>,
        generator_model: ModelRef,
        verifier_model: ModelRef,
        strong_model: ModelRef,
        weak_model: ModelRef,
    ) -> Self {
        PipelineConfig {
            task_description: task_description.into(),
            domain: domain.into(),
            concept_mode: ConceptMode::Llm,
            structure_samples: 3,
            regeneration_patience: 3,
            few_shot_pool: FEW_SHOT_POOL.iter().map(|s| s.to_string()).collect(),
            few_shot_per_prompt: 3,
            instances_per_template: 4,
            num_concepts: 8,
            generator_model,
            verifier_model,
            strong_model,
            weak_model,
            filter_modality: Modality::Text,
            seed: 0,
            parallelism: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.regeneration_patience < 1 {
            return Err(Error::invalid("regeneration_patience", "must be at least 1"));
        }
        if self.structure_samples < 1 {
            return Err(Error::invalid("structure_samples", "must be at least 1"));
        }
        if self.few_shot_per_prompt > self.few_shot_pool.len() {
            return Err(Error::invalid(
                "few_shot_per_prompt",
                "cannot exceed the few-shot pool size",
            ));
        }
        if !(4..=5).contains(&self.instances_per_template) {
            return Err(Error::invalid("instances_per_template", "must be 4 or 5"));
        }
        if self.num_concepts == 0 {
            return Err(Error::invalid("num_concepts", "must be positive"));
        }
        Ok(())
    }
}

/// Summary of a dataset handed to the generator model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetDescription {
    pub size: usize,
    pub length_min: usize,
    pub length_max: usize,
    pub columns: Vec<ColumnDescription>,
    pub usage_example: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ColumnDescription {
    pub name: String,
    /// "value" or "metadata".
    pub kind: String,
    /// Example values (distinct, capped) for metadata; min/max for values.
    pub examples: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<(f64, f64)>,
}

impl DatasetDescription {
    pub fn render(&self) -> String {
        let mut text = format!(
            "The dataset has {} samples; series lengths range from {} to {} steps.\n",
            self.size, self.length_min, self.length_max
        );
        for col in &self.columns {
            match (&col.range, col.kind.as_str()) {
                (Some((lo, hi)), "value") => {
                    text.push_str(&format!(
                        "- value column `{}`: numeric series, values in [{lo:.4}, {hi:.4}]\n",
                        col.name
                    ));
                }
                _ => {
                    text.push_str(&format!(
                        "- metadata column `{}`: example values {}\n",
                        col.name,
                        col.examples.join(", ")
                    ));
                }
            }
        }
        text.push_str(&self.usage_example);
        text
    }
}

/// Scan a dataset into a description: columns, value ranges, length
/// statistics, and a short usage example.
pub fn describe_dataset(dataset: &dyn DatasetAdapter) -> Result<DatasetDescription> {
    if dataset.size() == 0 {
        return Err(Error::invalid("dataset", "must be non-empty"));
    }
    let schema = dataset.schema().clone();
    let mut length_min = usize::MAX;
    let mut length_max = 0usize;
    let mut ranges: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut meta_values: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for i in 0..dataset.size() {
        let sample = dataset.query(i)?;
        for s in &sample.series {
            length_min = length_min.min(s.values.len());
            length_max = length_max.max(s.values.len());
            let entry = ranges
                .entry(s.name.clone())
                .or_insert((f64::INFINITY, f64::NEG_INFINITY));
            for v in &s.values {
                entry.0 = entry.0.min(*v);
                entry.1 = entry.1.max(*v);
            }
        }
        for (k, v) in &sample.metadata {
            let examples = meta_values.entry(k.clone()).or_default();
            let text = match v {
                MetaValue::Number(n) => format!("{n}"),
                MetaValue::Text(t) => format!("'{t}'"),
            };
            if !examples.contains(&text) && examples.len() < 8 {
                examples.push(text);
            }
        }
    }

    let mut columns = Vec::new();
    for name in &schema.value_columns {
        columns.push(ColumnDescription {
            name: name.clone(),
            kind: "value".into(),
            examples: Vec::new(),
            range: ranges.get(name).copied(),
        });
    }
    for name in &schema.metadata_columns {
        columns.push(ColumnDescription {
            name: name.clone(),
            kind: "metadata".into(),
            examples: meta_values.get(name).cloned().unwrap_or_default(),
            range: None,
        });
    }
    let usage_example = format!(
        "Querying a sample by index yields the series columns {:?} plus metadata {:?}; your template's selection block windows those series.",
        schema.value_columns, schema.metadata_columns
    );
    Ok(DatasetDescription {
        size: dataset.size(),
        length_min,
        length_max,
        columns,
        usage_example,
    })
}

/// One remembered failure round or its condensed summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TranscriptEntry {
    Failure {
        attempt: usize,
        document: String,
        feedback: String,
    },
    Summary(String),
}

/// Per-slot conversation memory across regeneration attempts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationTranscript {
    pub entries: Vec<TranscriptEntry>,
}

impl GenerationTranscript {
    pub fn record_failure(&mut self, attempt: usize, document: String, feedback: String) {
        self.entries.push(TranscriptEntry::Failure {
            attempt,
            document,
            feedback,
        });
    }

    pub fn failure_rounds(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e, TranscriptEntry::Failure { .. }))
            .count()
    }

    pub fn summaries(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e, TranscriptEntry::Summary(_)))
            .count()
    }

    /// Render for inclusion in the next generation prompt.
    pub fn render(&self) -> String {
        let mut text = String::new();
        for entry in &self.entries {
            match entry {
                TranscriptEntry::Summary(s) => {
                    text.push_str("Earlier failed attempt (summarized): ");
                    text.push_str(s);
                    text.push('\n');
                }
                TranscriptEntry::Failure {
                    attempt,
                    document,
                    feedback,
                } => {
                    text.push_str(&format!(
                        "Failed attempt {attempt}:\n{document}\nFeedback: {feedback}\n"
                    ));
                }
            }
        }
        text
    }
}

/// Verification stages, in pipeline order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Structure,
    Content,
    Capability,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Permanent rejection; only the capability stage (or exhausted
    /// patience) discards.
    Discard,
}

/// Outcome of one verification stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub stage: Stage,
    pub verdict: Verdict,
    pub feedback: String,
}

/// Plan concepts. In LLM mode the generator proposes them from the dataset
/// description; in RAG mode they are read per-chunk from `rag_document`.
pub fn gen_concepts(
    gateway: &Gateway,
    config: &PipelineConfig,
    description: &DatasetDescription,
    rag_document: Option<&str>,
) -> Result<Vec<String>> {
    let replies: Vec<String> = match config.concept_mode {
        ConceptMode::Llm => {
            let prompt = include_str!("../assets/prompts/concepts.txt")
                .replace("{user_info_text}", &config.task_description)
                .replace("{dataset_describe}", &description.render())
                .replace("{num_concepts}", &config.num_concepts.to_string())
                .replace("{exam_type}", &config.domain);
            vec![gateway.chat(&config.generator_model, &[ModelMessage::user(prompt)])?]
        }
        ConceptMode::Rag => {
            let document = rag_document.ok_or_else(|| {
                Error::invalid("rag_document", "required when concept_mode is rag")
            })?;
            let mut replies = Vec::new();
            for chunk in chunk_document(document, 1500) {
                let prompt = include_str!("../assets/prompts/concepts_rag.txt")
                    .replace("{user_info_text}", &config.task_description)
                    .replace("{chunk}", &chunk)
                    .replace("{num_concepts}", &config.num_concepts.to_string())
                    .replace("{exam_type}", &config.domain);
                replies.push(gateway.chat(&config.generator_model, &[ModelMessage::user(prompt)])?);
            }
            replies
        }
    };

    let numbering = regex::Regex::new(r"^\s*(?:\d+[.)]\s*|[-*]\s*)").unwrap();
    let mut concepts = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for reply in replies {
        for line in reply.lines() {
            let concept = numbering.replace(line, "").trim().to_string();
            if concept.is_empty() {
                continue;
            }
            if seen.insert(concept.to_lowercase()) {
                concepts.push(concept);
            }
        }
    }
    if concepts.is_empty() {
        return Err(Error::Pipeline("concept planning produced no concepts".into()));
    }
    Ok(concepts)
}

fn chunk_document(document: &str, target_chars: usize) -> Vec<String> {
    let mut chunks = Vec::new();
    let mut current = String::new();
    for paragraph in document.split("\n\n") {
        if !current.is_empty() && current.len() + paragraph.len() > target_chars {
            chunks.push(std::mem::take(&mut current));
        }
        if !current.is_empty() {
            current.push_str("\n\n");
        }
        current.push_str(paragraph);
    }
    if !current.trim().is_empty() {
        chunks.push(current);
    }
    chunks
}

/// Ask the generator model for one candidate template document.
///
/// The prompt carries the task description, the concept list with the chosen
/// concept number, the dataset description, `few_shot_per_prompt` example
/// templates, and any transcript feedback from earlier failed attempts.
pub fn gen_template(
    gateway: &Gateway,
    config: &PipelineConfig,
    description: &DatasetDescription,
    concepts: &[String],
    concept_index: usize,
    transcript: &GenerationTranscript,
    few_shot: &[String],
) -> Result<String> {
    if concept_index >= concepts.len() {
        return Err(Error::invalid("concept_index", "out of range"));
    }
    let concept_list = concepts
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{}. {c}", i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    let few_shot_block = few_shot.join("\n---\n");
    let feedback_block = if transcript.entries.is_empty() {
        String::new()
    } else {
        format!(
            "\nEarlier attempts at this template failed; avoid their mistakes:\n{}\n",
            transcript.render()
        )
    };
    let prompt = include_str!("../assets/prompts/generation.txt")
        .replace("{user_info_text}", &config.task_description)
        .replace("{concept_list}", &concept_list)
        .replace("{concept_no}", &(concept_index + 1).to_string())
        .replace("{dataset_describe}", &description.render())
        .replace(
            "{dsl_reference}",
            include_str!("../assets/prompts/dsl_reference.md"),
        )
        .replace("{few_shot}", &few_shot_block)
        .replace("{feedback}", &feedback_block);
    let reply = gateway.chat(&config.generator_model, &[ModelMessage::user(prompt)])?;
    Ok(extract_document(&reply))
}

/// Pull the template document out of a model reply, tolerating code fences.
fn extract_document(reply: &str) -> String {
    if !reply.contains("```") {
        return reply.trim().to_string();
    }
    let mut best = String::new();
    let mut inside = false;
    let mut current = String::new();
    for line in reply.lines() {
        if line.trim_start().starts_with("```") {
            if inside && current.len() > best.len() {
                best = current.clone();
            }
            current.clear();
            inside = !inside;
            continue;
        }
        if inside {
            current.push_str(line);
            current.push('\n');
        }
    }
    if best.is_empty() {
        reply.trim().to_string()
    } else {
        best.trim().to_string()
    }
}

/// Structure check: parse, validate against the dataset, and evaluate
/// `samples` instances. Passes only when every requested sample materializes
/// and satisfies the question invariants.
pub fn verify_structure(
    document: &str,
    dataset: &dyn DatasetAdapter,
    samples: usize,
    seed: u64,
) -> (VerificationOutcome, Option<(TemplateProgram, Vec<QuestionInstance>)>) {
    let fail = |feedback: String| VerificationOutcome {
        stage: Stage::Structure,
        verdict: Verdict::Fail,
        feedback,
    };
    let program = match dsl::parse(document) {
        Ok(p) => p,
        Err(e) => return (fail(e.to_string()), None),
    };
    if let Err(e) = dsl::validate(&program, dataset) {
        return (fail(e.to_string()), None);
    }
    match dsl::evaluate(&program, dataset, samples, seed, false) {
        Ok((questions, report)) => {
            if questions.len() < samples {
                let reasons: Vec<&str> = report
                    .skips
                    .iter()
                    .take(3)
                    .map(|s| s.reason.as_str())
                    .collect();
                return (
                    fail(format!(
                        "INSUFFICIENT_SAMPLES: produced {} of {samples} requested samples (skip reasons: {})",
                        questions.len(),
                        reasons.join("; ")
                    )),
                    None,
                );
            }
            (
                VerificationOutcome {
                    stage: Stage::Structure,
                    verdict: Verdict::Pass,
                    feedback: String::new(),
                },
                Some((program, questions)),
            )
        }
        Err(e) => (fail(e.to_string()), None),
    }
}

/// Content verification by the verifier model: pass requires the bare
/// acceptance token `1` (surrounding whitespace tolerated); anything else is
/// the verifier's objection, fed back to the generator.
pub fn verify_content(
    gateway: &Gateway,
    config: &PipelineConfig,
    document: &str,
    samples: &[QuestionInstance],
) -> Result<VerificationOutcome> {
    let sample_block = samples
        .iter()
        .map(|q| {
            let options = q
                .options
                .iter()
                .enumerate()
                .map(|(i, o)| format!("[{}] {o}", (b'A' + i as u8) as char))
                .collect::<Vec<_>>()
                .join("\n");
            format!("Q: {}\n{options}\nCorrect: [{}]", q.question, (b'A' + q.correct_index as u8) as char)
        })
        .collect::<Vec<_>>()
        .join("\n\n");
    let prompt = include_str!("../assets/prompts/verifier.txt")
        .replace("{exam_type}", &config.domain)
        .replace("{exam_template}", document)
        .replace("{sample_questions}", &sample_block);
    let reply = gateway.chat(&config.verifier_model, &[ModelMessage::user(prompt)])?;
    if reply.trim() == "1" {
        Ok(VerificationOutcome {
            stage: Stage::Content,
            verdict: Verdict::Pass,
            feedback: String::new(),
        })
    } else {
        Ok(VerificationOutcome {
            stage: Stage::Content,
            verdict: Verdict::Fail,
            feedback: reply.trim().to_string(),
        })
    }
}

/// Capability-aligned filtering: administer the same samples to the strong
/// and weak student models; discard only on a strictly inverted gap
/// (weak accuracy above strong). All-poor performance is retained.
pub fn capability_filter(
    gateway: &Gateway,
    config: &PipelineConfig,
    samples: &[QuestionInstance],
) -> Result<(VerificationOutcome, f64, f64)> {
    let exam = Exam::new(ExamMetadata::default(), samples.to_vec())?;
    let options = AdministerOptions {
        modality: config.filter_modality,
        strict: false,
        ..Default::default()
    };
    let strong = administer(gateway, &exam, &config.strong_model, &options)?;
    let weak = administer(gateway, &exam, &config.weak_model, &options)?;
    let strong_acc =
        strong.iter().filter(|r| r.correct).count() as f64 / strong.len().max(1) as f64;
    let weak_acc = weak.iter().filter(|r| r.correct).count() as f64 / weak.len().max(1) as f64;
    let outcome = if weak_acc > strong_acc {
        VerificationOutcome {
            stage: Stage::Capability,
            verdict: Verdict::Discard,
            feedback: format!(
                "inverted capability gap: weak model scored {weak_acc:.3} above strong model {strong_acc:.3}"
            ),
        }
    } else {
        VerificationOutcome {
            stage: Stage::Capability,
            verdict: Verdict::Pass,
            feedback: format!("strong {strong_acc:.3} vs weak {weak_acc:.3}"),
        }
    };
    Ok((outcome, strong_acc, weak_acc))
}

/// Replace all but the most recent failure round with one summary each.
/// Summaries come from the generator model, or from a fixed truncation rule
/// when the generator is the mock provider.
pub fn condense_context(
    gateway: &Gateway,
    config: &PipelineConfig,
    transcript: &mut GenerationTranscript,
) -> Result<()> {
    if transcript.failure_rounds() < 2 {
        return Ok(());
    }
    let last_failure = transcript
        .entries
        .iter()
        .rposition(|e| matches!(e, TranscriptEntry::Failure { .. }))
        .expect("at least two failures");
    for i in 0..transcript.entries.len() {
        if i == last_failure {
            continue;
        }
        if let TranscriptEntry::Failure {
            attempt,
            document,
            feedback,
        } = &transcript.entries[i]
        {
            let summary = if config.generator_model.provider == Provider::Mock {
                format!(
                    "attempt {attempt} failed: {}",
                    truncate(feedback, 120).trim()
                )
            } else {
                let prompt = include_str!("../assets/prompts/summarize.txt")
                    .replace("{attempt}", document)
                    .replace("{feedback}", feedback);
                gateway
                    .chat(&config.generator_model, &[ModelMessage::user(prompt)])?
                    .trim()
                    .to_string()
            };
            transcript.entries[i] = TranscriptEntry::Summary(summary);
        }
    }
    Ok(())
}

fn truncate(text: &str, max_chars: usize) -> &str {
    match text.char_indices().nth(max_chars) {
        Some((idx, _)) => &text[..idx],
        None => text,
    }
}

/// Mutually exclusive outcome of one template slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotOutcome {
    /// Passed all three stages.
    Success,
    /// Discarded by capability filtering (weak outscored strong).
    SemanticFailure,
    /// Patience exhausted with the structure check still failing.
    SyntacticFailure,
    /// Patience exhausted with the verifier still rejecting.
    ContentRejection,
}

/// Per-slot report entry.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlotReport {
    pub slot: usize,
    pub concept: String,
    pub attempts: usize,
    pub outcome: SlotOutcome,
    pub last_feedback: String,
}

/// Pipeline-level report; the four outcome counts partition the slots.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PipelineReport {
    pub attempted: usize,
    pub success: usize,
    pub semantic_failure: usize,
    pub syntactic_failure: usize,
    pub content_rejection: usize,
    pub concepts: Vec<String>,
    pub slots: Vec<SlotReport>,
}

/// An accepted template with its source document.
#[derive(Debug)]
pub struct AcceptedTemplate {
    pub slot: usize,
    pub program: TemplateProgram,
    pub document: String,
}

/// Everything a pipeline run produces.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub templates: Vec<AcceptedTemplate>,
    pub exam: Exam,
    pub report: PipelineReport,
}

enum SlotResult {
    Accepted(Box<AcceptedTemplate>, SlotReport),
    Rejected(SlotReport),
}

/// Run the full pipeline: plan concepts, then per template slot generate,
/// verify stage by stage (structure, content, capability), regenerate with
/// feedback up to the patience bound, and finally evaluate every accepted
/// template into the exam.
pub fn run_pipeline(
    gateway: &Gateway,
    config: &PipelineConfig,
    dataset: &dyn DatasetAdapter,
    num_templates: usize,
    rag_document: Option<&str>,
) -> Result<PipelineOutcome> {
    config.validate()?;
    if num_templates == 0 {
        return Err(Error::invalid("num_templates", "must be positive"));
    }
    let description = describe_dataset(dataset)?;
    let concepts = gen_concepts(gateway, config, &description, rag_document)?;

    // Seeded shuffle, then round-robin: every concept is exercised before
    // any repeats.
    let mut concept_order: Vec<usize> = (0..concepts.len()).collect();
    concept_order.shuffle(&mut rng_for(child_seed(config.seed, "concept-order", 0)));

    let run_slot = |slot: usize| -> Result<SlotResult> {
        let concept_index = concept_order[slot % concept_order.len()];
        let mut few_shot = config.few_shot_pool.clone();
        few_shot.shuffle(&mut rng_for(child_seed(config.seed, "few-shot", slot as u64)));
        few_shot.truncate(config.few_shot_per_prompt);

        let mut transcript = GenerationTranscript::default();
        let mut last_stage = Stage::Structure;
        let mut last_feedback = String::new();
        let mut attempts = 0;
        for attempt in 1..=config.regeneration_patience {
            attempts = attempt;
            let document = gen_template(
                gateway,
                config,
                &description,
                &concepts,
                concept_index,
                &transcript,
                &few_shot,
            )?;
            let verify_seed = child_seed(config.seed, "verify", (slot * 1000 + attempt) as u64);
            let (structure, parsed) =
                verify_structure(&document, dataset, config.structure_samples, verify_seed);
            if structure.verdict != Verdict::Pass {
                last_stage = Stage::Structure;
                last_feedback = structure.feedback.clone();
                transcript.record_failure(attempt, document, structure.feedback);
                condense_context(gateway, config, &mut transcript)?;
                continue;
            }
            let (program, samples) = parsed.expect("pass implies parsed");

            let content = verify_content(gateway, config, &document, &samples)?;
            if content.verdict != Verdict::Pass {
                last_stage = Stage::Content;
                last_feedback = content.feedback.clone();
                transcript.record_failure(attempt, document, content.feedback);
                condense_context(gateway, config, &mut transcript)?;
                continue;
            }

            let (capability, _, _) = capability_filter(gateway, config, &samples)?;
            if capability.verdict == Verdict::Discard {
                // Permanent drop; capability discards are not regenerated.
                return Ok(SlotResult::Rejected(SlotReport {
                    slot,
                    concept: concepts[concept_index].clone(),
                    attempts,
                    outcome: SlotOutcome::SemanticFailure,
                    last_feedback: capability.feedback,
                }));
            }

            return Ok(SlotResult::Accepted(
                Box::new(AcceptedTemplate {
                    slot,
                    program,
                    document,
                }),
                SlotReport {
                    slot,
                    concept: concepts[concept_index].clone(),
                    attempts,
                    outcome: SlotOutcome::Success,
                    last_feedback: capability.feedback,
                },
            ));
        }
        let outcome = match last_stage {
            Stage::Content => SlotOutcome::ContentRejection,
            _ => SlotOutcome::SyntacticFailure,
        };
        Ok(SlotResult::Rejected(SlotReport {
            slot,
            concept: concepts[concept_index].clone(),
            attempts,
            outcome,
            last_feedback,
        }))
    };

    let mut results: Vec<Option<SlotResult>> = Vec::with_capacity(num_templates);
    if config.parallelism <= 1 {
        for slot in 0..num_templates {
            results.push(Some(run_slot(slot)?));
        }
    } else {
        let shared: Vec<std::sync::Mutex<Option<Result<SlotResult>>>> =
            (0..num_templates).map(|_| std::sync::Mutex::new(None)).collect();
        let next = std::sync::atomic::AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..config.parallelism.min(num_templates) {
                scope.spawn(|| loop {
                    let slot = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if slot >= num_templates {
                        break;
                    }
                    let result = run_slot(slot);
                    *shared[slot].lock().unwrap() = Some(result);
                });
            }
        });
        for cell in shared {
            let result = cell
                .into_inner()
                .unwrap()
                .expect("every slot was processed")?;
            results.push(Some(result));
        }
    }

    let mut report = PipelineReport {
        attempted: num_templates,
        concepts: concepts.clone(),
        ..Default::default()
    };
    let mut accepted = Vec::new();
    for result in results.into_iter().flatten() {
        match result {
            SlotResult::Accepted(template, slot_report) => {
                report.success += 1;
                report.slots.push(slot_report);
                accepted.push(*template);
            }
            SlotResult::Rejected(slot_report) => {
                match slot_report.outcome {
                    SlotOutcome::SemanticFailure => report.semantic_failure += 1,
                    SlotOutcome::SyntacticFailure => report.syntactic_failure += 1,
                    SlotOutcome::ContentRejection => report.content_rejection += 1,
                    SlotOutcome::Success => unreachable!(),
                }
                report.slots.push(slot_report);
            }
        }
    }
    report.slots.sort_by_key(|s| s.slot);

    if accepted.is_empty() {
        return Err(Error::Pipeline(format!(
            "no templates accepted out of {num_templates} slots (semantic {}, syntactic {}, content {})",
            report.semantic_failure, report.syntactic_failure, report.content_rejection
        )));
    }

    // Materialize the exam: instances_per_template questions per accepted
    // template, ids namespaced by slot.
    let mut questions = Vec::new();
    for template in &accepted {
        let (mut qs, _report) = dsl::evaluate(
            &template.program,
            dataset,
            config.instances_per_template,
            child_seed(config.seed, "instances", template.slot as u64),
            false,
        )?;
        for q in &mut qs {
            q.id = format!("s{:02}-{}", template.slot, q.id);
        }
        questions.extend(qs);
    }
    let digest = format!(
        "agent;seed={};domain={};templates={num_templates};k={};patience={}",
        config.seed, config.domain, config.structure_samples, config.regeneration_patience
    );
    let exam = Exam::new(
        ExamMetadata {
            config_digest: format!("{:016x}", fnv1a(digest.as_bytes())),
            seed: config.seed,
            round: 0,
        },
        questions,
    )?;

    Ok(PipelineOutcome {
        templates: accepted,
        exam,
        report,
    })
}
