//! The built-in template registry: option-conditioned question generators,
//! one per taxonomy subcategory.
//!
//! Ground truth is never computed post-hoc from a series. The correct option
//! is fixed first and the series is generated *as if that option were true*;
//! the conditioning option is recorded in every attached series' provenance.

mod catalog;

pub use catalog::{
    anomaly_windows, ANOMALY_PAIRS, GRANGER_COUPLING, GRANGER_LAG, LEVEL_SHIFT_MAGNITUDE,
    REGIME_MEANS, SNR_NOISY_DB, SNR_QUIET_DB, SPIKE_MAGNITUDE, TREND_SLOPES,
    VARIANCE_SHIFT_FACTOR, WALK_STD_BASE, WALK_STD_LARGE,
};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::exam::{
    Category, CategoryKind, Exam, ExamMetadata, IclExample, QuestionInstance, DEFAULT_FORMAT_HINT,
};
use crate::irt::Resampler;
use crate::rng::{child_seed, fnv1a, rng_for};
use crate::synth::TimeSeries;
use crate::Result;

/// Main question series length.
pub const MAIN_SERIES_LEN: usize = 128;
/// In-context-learning example series length.
pub const ICL_SERIES_LEN: usize = 64;

/// Registry version string, folded into exam config digests.
pub const REGISTRY_VERSION: &str = "builtin-1";

/// Default per-category question counts used when no counts are requested.
pub const DEFAULT_CATEGORY_COUNTS: [(CategoryKind, usize); 5] = [
    (CategoryKind::PatternRecognition, 371),
    (CategoryKind::NoiseUnderstanding, 87),
    (CategoryKind::AnomalyDetection, 129),
    (CategoryKind::ComparativeAnalysis, 113),
    (CategoryKind::CausalityAnalysis, 63),
];

/// Template descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateMeta {
    pub template_id: String,
    pub category: Category,
    pub option_count: usize,
    /// 1 or 2 attached series.
    pub series_count: usize,
    pub description: String,
}

/// Generator conditioned on an option index: `(option, length, seed)` to the
/// question's series.
pub type OptionGenerator = Box<dyn Fn(usize, usize, u64) -> Result<Vec<TimeSeries>> + Send + Sync>;

/// A registered template: static text plus one conditional generator.
pub struct Template {
    pub meta: TemplateMeta,
    pub question: String,
    pub options: Vec<String>,
    pub hint: Option<String>,
    pub concept_notes: Option<String>,
    pub relevant_concepts: Vec<String>,
    pub detractor_types: Vec<String>,
    generator: OptionGenerator,
}

impl Template {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        template_id: &str,
        category: Category,
        description: &str,
        question: &str,
        options: Vec<String>,
        series_count: usize,
        hint: Option<&str>,
        concept_notes: Option<&str>,
        relevant_concepts: &[&str],
        detractor_types: &[&str],
        generator: OptionGenerator,
    ) -> Self {
        Template {
            meta: TemplateMeta {
                template_id: template_id.to_string(),
                category,
                option_count: options.len(),
                series_count,
                description: description.to_string(),
            },
            question: question.to_string(),
            options,
            hint: hint.map(str::to_string),
            concept_notes: concept_notes.map(str::to_string),
            relevant_concepts: relevant_concepts.iter().map(|s| s.to_string()).collect(),
            detractor_types: detractor_types.iter().map(|s| s.to_string()).collect(),
            generator,
        }
    }

    /// Generate this template's series as if `option` were the true answer.
    pub fn generate_series(&self, option: usize, length: usize, seed: u64) -> Result<Vec<TimeSeries>> {
        if option >= self.meta.option_count {
            return Err(Error::invalid(
                "forced_correct",
               format!(
                    "option {option} out of range for {} options",
                    self.meta.option_count
                ),
            ));
        }
        let series = (self.generator)(option, length, seed)?;
        Ok(series
            .into_iter()
            .map(|s| s.conditioned_on(self.meta.template_id.clone(), option))
            .collect())
    }
}

/// Immutable-after-startup collection of templates.
pub struct Registry {
    templates: Vec<Template>,
}

impl Registry {
    /// The shipped registry: one template per taxonomy subcategory.
    pub fn builtin() -> Registry {
        let mut registry = Registry { templates: Vec::new() };
        for template in catalog::builtin_templates() {
            registry.register(template).expect("builtin templates are valid");
        }
        registry
    }

    /// Add a template; ids must be unique and texts consistent.
    pub fn register(&mut self, template: Template) -> Result<()> {
        if template.options.len() < 2 || template.options.len() > 4 {
            return Err(Error::invalid("options", "templates need 2-4 options"));
        }
        if template.options.len() != template.meta.option_count {
            return Err(Error::invalid("option_count", "meta disagrees with option texts"));
        }
        if !(1..=2).contains(&template.meta.series_count) {
            return Err(Error::invalid("series_count", "must be 1 or 2"));
        }
        template.meta.category.validate()?;
        if self
            .templates
            .iter()
            .any(|t| t.meta.template_id == template.meta.template_id)
        {
            return Err(Error::invalid(
                "template_id",
                format!("duplicate template id `{}`", template.meta.template_id),
            ));
        }
        self.templates.push(template);
        self.templates
            .sort_by(|a, b| a.meta.template_id.cmp(&b.meta.template_id));
        Ok(())
    }

    /// List metadata, optionally filtered by category, in template-id order.
    pub fn list_templates(&self, category: Option<CategoryKind>) -> Vec<TemplateMeta> {
        self.templates
            .iter()
            .filter(|t| category.is_none_or(|c| t.meta.category.kind == c))
            .map(|t| t.meta.clone())
            .collect()
    }

    pub fn template(&self, template_id: &str) -> Result<&Template> {
        self.templates
            .iter()
            .find(|t| t.meta.template_id == template_id)
            .ok_or_else(|| Error::NotFound(format!("template `{template_id}`")))
    }

    /// Instantiate one question. The correct option is `forced_correct` when
    /// given, otherwise drawn uniformly from the seed; series are generated
    /// conditioned on that option (128 steps main, 64 steps ICL example).
    pub fn instantiate(
        &self,
        template_id: &str,
        forced_correct: Option<usize>,
        seed: u64,
    ) -> Result<QuestionInstance> {
        let template = self.template(template_id)?;
        let option_count = template.meta.option_count;
        let correct = match forced_correct {
            Some(o) if o >= option_count => {
                return Err(Error::invalid(
                    "forced_correct",
                    format!("option {o} out of range for {option_count} options"),
                ))
            }
            Some(o) => o,
            None => rng_for(child_seed(seed, "correct", 0)).random_range(0..option_count),
        };

        let series = template.generate_series(correct, MAIN_SERIES_LEN, child_seed(seed, "main", 0))?;

        let icl_correct = rng_for(child_seed(seed, "icl-correct", 0)).random_range(0..option_count);
        let icl_series =
            template.generate_series(icl_correct, ICL_SERIES_LEN, child_seed(seed, "icl", 0))?;
        let icl_example = IclExample {
            question: template.question.clone(),
            answer: format!(
                "[{}] {}",
                option_letter(icl_correct),
                template.options[icl_correct]
            ),
            series: icl_series,
        };

        let question = QuestionInstance {
            id: format!("{template_id}-{seed:016x}"),
            category: template.meta.category.clone(),
            question: template.question.clone(),
            options: template.options.clone(),
            correct_index: correct,
            series,
            icl_example: Some(icl_example),
            hint: template.hint.clone(),
            concept_notes: template.concept_notes.clone(),
            relevant_concepts: template.relevant_concepts.clone(),
            detractor_types: template.detractor_types.clone(),
            format_hint: DEFAULT_FORMAT_HINT.to_string(),
            domain: "synthetic".to_string(),
        };
        question.validate()?;
        Ok(question)
    }

    /// Generate a whole exam. `counts` maps categories to question counts;
    /// `None` uses [`DEFAULT_CATEGORY_COUNTS`]. Correct options are balanced
    /// uniformly per template across the exam, and the result is
    /// deterministic per seed.
    pub fn generate_exam(
        &self,
        counts: Option<&BTreeMap<CategoryKind, usize>>,
        seed: u64,
    ) -> Result<Exam> {
        let default_counts: BTreeMap<CategoryKind, usize> =
            DEFAULT_CATEGORY_COUNTS.into_iter().collect();
        let counts = counts.unwrap_or(&default_counts);

        let mut questions = Vec::new();
        for kind in CategoryKind::ALL {
            let requested = counts.get(&kind).copied().unwrap_or(0);
            if requested == 0 {
                continue;
            }
            let templates: Vec<&Template> = self
                .templates
                .iter()
                .filter(|t| t.meta.category.kind == kind)
                .collect();
            if templates.is_empty() {
                return Err(Error::invalid(
                    "counts",
                    format!("no registered templates for category `{kind}`"),
                ));
            }
            for (t_index, template) in templates.iter().enumerate() {
                let share =
                    requested / templates.len() + usize::from(t_index < requested % templates.len());
                if share == 0 {
                    continue;
                }
                let deck = balanced_option_deck(
                    template.meta.option_count,
                    share,
                    child_seed(seed, "deck", fnv1a(template.meta.template_id.as_bytes())),
                );
                for (j, correct) in deck.into_iter().enumerate() {
                    let qseed = child_seed(
                        seed,
                        &format!("question-{}", template.meta.template_id),
                        j as u64,
                    );
                    questions.push(self.instantiate(
                        &template.meta.template_id,
                        Some(correct),
                        qseed,
                    )?);
                }
            }
        }

        // Interleave categories so exam order carries no signal.
        let mut order_rng = rng_for(child_seed(seed, "exam-order", 0));
        questions.shuffle(&mut order_rng);

        let digest_input = format!(
            "{REGISTRY_VERSION};seed={seed};counts={}",
            counts
                .iter()
                .map(|(k, v)| format!("{k}:{v}"))
                .collect::<Vec<_>>()
                .join(",")
        );
        Exam::new(
            ExamMetadata {
                config_digest: format!("{:016x}", fnv1a(digest_input.as_bytes())),
                seed,
                round: 0,
            },
            questions,
        )
    }
}

/// A shuffled deck of option indices with counts as equal as possible.
fn balanced_option_deck(option_count: usize, total: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_for(seed);
    let mut extras: Vec<usize> = (0..option_count).collect();
    extras.shuffle(&mut rng);
    let mut deck = Vec::with_capacity(total);
    for option in 0..option_count {
        let mut share = total / option_count;
        if extras[..total % option_count].contains(&option) {
            share += 1;
        }
        deck.extend(std::iter::repeat_n(option, share));
    }
    deck.shuffle(&mut rng);
    deck
}

fn option_letter(index: usize) -> char {
    (b'A' + index as u8) as char
}

/// Resampler drawing fresh builtin questions from the matching subcategory
/// template (or any same-category template when no exact match exists).
pub struct RegistryResampler<'a> {
    registry: &'a Registry,
    seed: u64,
    drawn: u64,
}

impl<'a> RegistryResampler<'a> {
    pub fn new(registry: &'a Registry, seed: u64) -> Self {
        RegistryResampler {
            registry,
            seed,
            drawn: 0,
        }
    }
}

impl Resampler for RegistryResampler<'_> {
    fn resample(&mut self, category: &Category, round: usize) -> Result<QuestionInstance> {
        let exact: Vec<&Template> = self
            .registry
            .templates
            .iter()
            .filter(|t| &t.meta.category == category)
            .collect();
        let candidates: Vec<&Template> = if exact.is_empty() {
            self.registry
                .templates
                .iter()
                .filter(|t| t.meta.category.kind == category.kind)
                .collect()
        } else {
            exact
        };
        if candidates.is_empty() {
            return Err(Error::ResamplerExhausted {
                category: category.to_string(),
                round,
            });
        }
        self.drawn += 1;
        let pick = (self.drawn as usize - 1) % candidates.len();
        let qseed = child_seed(self.seed, "resample", self.drawn);
        self.registry
            .instantiate(&candidates[pick].meta.template_id, None, qseed)
    }
}
