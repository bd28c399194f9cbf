//! Sandboxed declarative template language.
//!
//! A template program is a TOML document that names a dataset selection, a
//! set of feature expressions over the selected window, and an ordered list
//! of answer rules mapping feature conditions to option indices. Programs
//! cannot read files, reach the network, or loop: the expression language is
//! total and the function library ([`functions::CATALOG`]) is fixed.
//!
//! The three operations mirror the life of a template: [`parse`] turns a
//! document into a [`TemplateProgram`] (or a list of machine-readable
//! diagnostics), [`validate`] dry-runs it against a dataset schema, and
//! [`evaluate`] materializes question instances.

mod error;
pub mod expr;
pub mod functions;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use error::{DslError, DslErrorCode};
pub use expr::{EvalError, Expr, Value};

use crate::datasets::{DatasetAdapter, MetaValue};
use crate::error::Error;
use crate::exam::{Category, CategoryKind, QuestionInstance, DEFAULT_FORMAT_HINT};
use crate::rng::{child_seed, fnv1a, rng_for};
use crate::synth::TimeSeries;
use crate::Result;

/// Default cap on the combined length of a question's series.
pub const DEFAULT_MAX_TOTAL_LENGTH: usize = 3000;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    name: String,
    #[serde(default)]
    domain: Option<String>,
    #[serde(default)]
    category: Option<String>,
    #[serde(default)]
    subcategory: Option<String>,
    question: String,
    #[serde(default)]
    format_hint: Option<String>,
    #[serde(default)]
    relevant_concepts: Vec<String>,
    #[serde(default)]
    detractor_types: Vec<String>,
    #[serde(default)]
    selection: RawSelection,
    #[serde(default)]
    hyperparameters: BTreeMap<String, f64>,
    #[serde(default)]
    features: BTreeMap<String, String>,
    #[serde(default)]
    options: Vec<RawOption>,
    #[serde(default)]
    rules: Vec<RawRule>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOption {
    text: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    #[serde(default)]
    when: Option<String>,
    #[serde(default)]
    default: bool,
    choose: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSelection {
    #[serde(default)]
    filter: Option<String>,
    #[serde(default)]
    columns: Option<Vec<String>>,
    #[serde(default)]
    metadata: Vec<String>,
    #[serde(default = "default_min_window")]
    min_window: usize,
    #[serde(default = "default_max_window")]
    max_window: usize,
    #[serde(default = "default_max_total")]
    max_total_length: usize,
}

fn default_min_window() -> usize {
    16
}
fn default_max_window() -> usize {
    128
}
fn default_max_total() -> usize {
    DEFAULT_MAX_TOTAL_LENGTH
}

impl Default for RawSelection {
    fn default() -> Self {
        RawSelection {
            filter: None,
            columns: None,
            metadata: Vec::new(),
            min_window: default_min_window(),
            max_window: default_max_window(),
            max_total_length: default_max_total(),
        }
    }
}

/// Compiled dataset selection spec.
#[derive(Clone, Debug)]
pub struct Selection {
    pub filter: Option<Expr>,
    /// Value columns to window; `None` means the dataset's first value column.
    pub columns: Option<Vec<String>>,
    /// Metadata columns the template's placeholders and filter may use.
    pub metadata: Vec<String>,
    pub min_window: usize,
    pub max_window: usize,
    pub max_total_length: usize,
}

/// One answer rule; `condition: None` marks the mandatory trailing default.
#[derive(Clone, Debug)]
pub struct Rule {
    pub condition: Option<Expr>,
    pub choose: usize,
}

/// A parsed, internally consistent template program.
#[derive(Clone, Debug)]
pub struct TemplateProgram {
    pub name: String,
    pub domain: String,
    pub category: Category,
    pub question_text: String,
    pub options: Vec<String>,
    pub format_hint: String,
    pub relevant_concepts: Vec<String>,
    pub detractor_types: Vec<String>,
    pub selection: Selection,
    pub hyperparameters: BTreeMap<String, f64>,
    /// Feature definitions in dependency (topological) order.
    features: Vec<(String, Expr)>,
    rules: Vec<Rule>,
    /// The original document text.
    pub source: String,
}

impl TemplateProgram {
    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|(n, _)| n.as_str())
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }
}

/// Per-produced-sample evaluation trace.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleTrace {
    pub dataset_index: usize,
    pub window_start: usize,
    pub window_len: usize,
    /// Feature values (plus window bindings) at selection time.
    pub features: BTreeMap<String, Value>,
    /// Index into the program's rule list of the first matching rule.
    pub matched_rule: usize,
    pub correct_index: usize,
}

/// Why an attempted sample produced no question.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SkipRecord {
    pub dataset_index: usize,
    pub reason: String,
}

/// Outcome summary of an [`evaluate`] run.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub produced: usize,
    pub attempted: usize,
    pub traces: Vec<SampleTrace>,
    pub skips: Vec<SkipRecord>,
}

/// Parse a template document into a program, collecting every diagnostic.
pub fn parse(document: &str) -> Result<TemplateProgram> {
    let raw: RawDocument = toml::from_str(document).map_err(|e| {
        Error::Dsl(vec![DslError::new(
            DslErrorCode::Syntax,
            "",
            e.to_string().replace('\n', " "),
        )])
    })?;

    let mut errors: Vec<DslError> = Vec::new();

    // Selection filter may reference meta.* and hyperparameters only.
    let filter = raw.selection.filter.as_deref().and_then(|src| {
        match expr::parse_expr(src, "selection.filter") {
            Ok(expr) => {
                let mut idents = Vec::new();
                expr.identifiers(&mut idents);
                for ident in idents {
                    if !raw.hyperparameters.contains_key(&ident) {
                        errors.push(DslError::new(
                            DslErrorCode::UnknownIdentifier,
                            "selection.filter",
                            format!(
                                "`{ident}` is not available in filters; use `meta.<column>` or a hyperparameter"
                            ),
                        ));
                    }
                }
                Some(expr)
            }
            Err(e) => {
                errors.push(e);
                None
            }
        }
    });

    if let Some(cols) = &raw.selection.columns {
        if cols.is_empty() || cols.len() > 2 {
            errors.push(DslError::new(
                DslErrorCode::BadSelection,
                "selection.columns",
                "must name 1 or 2 value columns",
            ));
        }
    }
    if raw.selection.min_window < 2 {
        errors.push(DslError::new(
            DslErrorCode::BadSelection,
            "selection.min_window",
            "must be at least 2",
        ));
    }
    if raw.selection.min_window > raw.selection.max_window {
        errors.push(DslError::new(
            DslErrorCode::BadSelection,
            "selection.min_window",
            "must not exceed max_window",
        ));
    }

    // Window bindings available to features and rules.
    let n_columns = raw.selection.columns.as_ref().map_or(1, Vec::len);
    let mut window_names = vec!["window".to_string()];
    if n_columns == 2 {
        window_names.push("window2".to_string());
    }

    // Compile features and check identifier resolution.
    let feature_names: BTreeSet<&String> = raw.features.keys().collect();
    let mut compiled_features: BTreeMap<String, Expr> = BTreeMap::new();
    for (name, src) in &raw.features {
        if raw.hyperparameters.contains_key(name) || window_names.contains(name) {
            errors.push(DslError::new(
                DslErrorCode::BadSelection,
                format!("features.{name}"),
                "feature name shadows a hyperparameter or window binding",
            ));
        }
        match expr::parse_expr(src, &format!("features.{name}")) {
            Ok(expr) => {
                compiled_features.insert(name.clone(), expr);
            }
            Err(e) => errors.push(e),
        }
    }

    let known_ident = |ident: &str| {
        feature_names.contains(&ident.to_string())
            || raw.hyperparameters.contains_key(ident)
            || window_names.iter().any(|w| w == ident)
    };

    for (name, expr) in &compiled_features {
        let mut idents = Vec::new();
        expr.identifiers(&mut idents);
        for ident in idents {
            if !known_ident(&ident) {
                errors.push(DslError::new(
                    DslErrorCode::UnknownIdentifier,
                    format!("features.{name}"),
                    format!("`{ident}` is not a feature, hyperparameter, or window binding"),
                ));
            }
        }
        check_functions(expr, &format!("features.{name}"), &mut errors);
    }

    // Topologically order features; report cycles.
    let features = match topo_sort_features(&raw.features, &compiled_features) {
        Ok(ordered) => ordered,
        Err(cycle) => {
            errors.push(DslError::new(
                DslErrorCode::FeatureCycle,
                "features",
                format!("cyclic feature definitions: {}", cycle.join(" -> ")),
            ));
            Vec::new()
        }
    };

    // Rules: every non-final rule needs a condition; the final rule must be
    // the unconditional default.
    let mut rules = Vec::new();
    if raw.rules.is_empty() {
        errors.push(DslError::new(
            DslErrorCode::MissingDefaultRule,
            "rules",
            "program has no rules; the final rule must be an unconditional default",
        ));
    }
    for (i, rr) in raw.rules.iter().enumerate() {
        let location = format!("rules[{i}]");
        let last = i + 1 == raw.rules.len();
        if rr.choose >= raw.options.len() {
            errors.push(DslError::new(
                DslErrorCode::RuleOptionOutOfRange,
                &location,
                format!(
                    "chooses option {} but the program has {} options",
                    rr.choose,
                    raw.options.len()
                ),
            ));
        }
        if rr.default {
            if rr.when.is_some() {
                errors.push(DslError::new(
                    DslErrorCode::Syntax,
                    &location,
                    "a default rule must not have a `when` condition",
                ));
            }
            if !last {
                errors.push(DslError::new(
                    DslErrorCode::RuleAfterDefault,
                    &location,
                    "rules after the default rule are unreachable",
                ));
            }
            rules.push(Rule {
                condition: None,
                choose: rr.choose,
            });
        } else {
            match &rr.when {
                Some(src) => match expr::parse_expr(src, &location) {
                    Ok(expr) => {
                        let mut idents = Vec::new();
                        expr.identifiers(&mut idents);
                        for ident in idents {
                            if !known_ident(&ident) {
                                errors.push(DslError::new(
                                    DslErrorCode::UnknownIdentifier,
                                    &location,
                                    format!(
                                        "`{ident}` is not a feature, hyperparameter, or window binding"
                                    ),
                                ));
                            }
                        }
                        check_functions(&expr, &location, &mut errors);
                        rules.push(Rule {
                            condition: Some(expr),
                            choose: rr.choose,
                        });
                    }
                    Err(e) => errors.push(e),
                },
                None => errors.push(DslError::new(
                    DslErrorCode::MissingDefaultRule,
                    &location,
                    "rule has no `when` condition and is not marked `default = true`",
                )),
            }
        }
    }
    if raw
        .rules
        .last()
        .map(|r| !r.default)
        .unwrap_or(false)
    {
        errors.push(DslError::new(
            DslErrorCode::MissingDefaultRule,
            "rules",
            "the final rule must set `default = true`",
        ));
    }

    // Placeholders must resolve from features or selection metadata.
    let placeholder_re = regex::Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap();
    let check_placeholders = |text: &str, location: &str, errors: &mut Vec<DslError>| {
        for cap in placeholder_re.captures_iter(text) {
            let name = &cap[1];
            let bound = feature_names.contains(&name.to_string())
                || raw.selection.metadata.iter().any(|m| m == name);
            if !bound {
                errors.push(DslError::new(
                    DslErrorCode::UnboundPlaceholder,
                    location,
                    format!("placeholder `{{{name}}}` has no feature or metadata binding"),
                ));
            }
        }
    };
    check_placeholders(&raw.question, "question", &mut errors);
    for (i, opt) in raw.options.iter().enumerate() {
        check_placeholders(&opt.text, &format!("options[{i}]"), &mut errors);
    }

    // Category defaults to pattern_recognition/statistical_properties.
    let kind = match raw.category.as_deref() {
        None => CategoryKind::PatternRecognition,
        Some(s) => match CategoryKind::parse(s) {
            Ok(k) => k,
            Err(_) => {
                errors.push(DslError::new(
                    DslErrorCode::BadCategory,
                    "category",
                    format!("unknown category `{s}`"),
                ));
                CategoryKind::PatternRecognition
            }
        },
    };
    let subcategory = raw
        .subcategory
        .clone()
        .unwrap_or_else(|| {
            if raw.category.is_none() {
                "statistical_properties".to_string()
            } else {
                kind.subcategories()[0].to_string()
            }
        });
    let category = match Category::new(kind, subcategory.clone()) {
        Ok(c) => c,
        Err(_) => {
            errors.push(DslError::new(
                DslErrorCode::BadCategory,
                "subcategory",
                format!("`{subcategory}` is not a {kind} subcategory"),
            ));
            Category::new(kind, kind.subcategories()[0]).expect("canonical subcategory")
        }
    };

    if !errors.is_empty() {
        return Err(Error::Dsl(errors));
    }

    Ok(TemplateProgram {
        name: raw.name,
        domain: raw.domain.unwrap_or_else(|| "general".to_string()),
        category,
        question_text: raw.question,
        options: raw.options.into_iter().map(|o| o.text).collect(),
        format_hint: raw
            .format_hint
            .unwrap_or_else(|| DEFAULT_FORMAT_HINT.to_string()),
        relevant_concepts: raw.relevant_concepts,
        detractor_types: raw.detractor_types,
        selection: Selection {
            filter,
            columns: raw.selection.columns,
            metadata: raw.selection.metadata,
            min_window: raw.selection.min_window,
            max_window: raw.selection.max_window,
            max_total_length: raw.selection.max_total_length,
        },
        hyperparameters: raw.hyperparameters,
        features,
        rules,
        source: document.to_string(),
    })
}

fn check_functions(expr: &Expr, location: &str, errors: &mut Vec<DslError>) {
    match expr {
        Expr::Call(name, args) => {
            match functions::arity(name) {
                None => errors.push(DslError::new(
                    DslErrorCode::UnknownFunction,
                    location,
                    format!("`{name}` is not in the function library"),
                )),
                Some(expected) if expected != args.len() => errors.push(DslError::new(
                    DslErrorCode::FunctionArity,
                    location,
                    format!("`{name}` expects {expected} argument(s), got {}", args.len()),
                )),
                _ => {}
            }
            args.iter().for_each(|a| check_functions(a, location, errors));
        }
        Expr::Neg(e) | Expr::Not(e) => check_functions(e, location, errors),
        Expr::Binary(_, l, r) => {
            check_functions(l, location, errors);
            check_functions(r, location, errors);
        }
        _ => {}
    }
}

fn topo_sort_features(
    raw: &BTreeMap<String, String>,
    compiled: &BTreeMap<String, Expr>,
) -> std::result::Result<Vec<(String, Expr)>, Vec<String>> {
    // Kahn's algorithm over the feature reference graph.
    let mut deps: BTreeMap<&String, BTreeSet<String>> = BTreeMap::new();
    for name in raw.keys() {
        let refs = match compiled.get(name) {
            Some(expr) => {
                let mut idents = Vec::new();
                expr.identifiers(&mut idents);
                idents
                    .into_iter()
                    .filter(|i| raw.contains_key(i))
                    .collect::<BTreeSet<_>>()
            }
            // Expression failed to parse; treat as leaf so other diagnostics
            // still come through.
            None => BTreeSet::new(),
        };
        deps.insert(name, refs);
    }
    let mut ordered = Vec::new();
    let mut resolved: BTreeSet<String> = BTreeSet::new();
    while ordered.len() < deps.len() {
        let ready: Vec<&String> = deps
            .iter()
            .filter(|(n, d)| !resolved.contains(**n) && d.iter().all(|r| resolved.contains(r)))
            .map(|(n, _)| *n)
            .collect();
        if ready.is_empty() {
            let cycle: Vec<String> = deps
                .keys()
                .filter(|n| !resolved.contains(**n))
                .map(|n| n.to_string())
                .collect();
            return Err(cycle);
        }
        for name in ready {
            resolved.insert(name.clone());
            if let Some(expr) = compiled.get(name) {
                ordered.push((name.clone(), expr.clone()));
            }
        }
    }
    Ok(ordered)
}

/// Dry-run a program against a dataset's schema and lengths.
pub fn validate(program: &TemplateProgram, dataset: &dyn DatasetAdapter) -> Result<()> {
    let mut errors = Vec::new();
    let schema = dataset.schema();

    if program.options.len() < 2 || program.options.len() > 4 {
        errors.push(DslError::new(
            DslErrorCode::BadOptionCount,
            "options",
            format!("expected 2-4 options, got {}", program.options.len()),
        ));
    }

    let effective_columns: Vec<String> = match &program.selection.columns {
        Some(cols) => {
            for col in cols {
                if !schema.value_columns.contains(col) {
                    errors.push(DslError::new(
                        DslErrorCode::SchemaMismatch,
                        "selection.columns",
                        format!("dataset has no value column `{col}`"),
                    ));
                }
            }
            cols.clone()
        }
        None => schema.value_columns.iter().take(1).cloned().collect(),
    };

    for col in &program.selection.metadata {
        if !schema.metadata_columns.contains(col) {
            errors.push(DslError::new(
                DslErrorCode::SchemaMismatch,
                "selection.metadata",
                format!("dataset has no metadata column `{col}`"),
            ));
        }
    }
    if let Some(filter) = &program.selection.filter {
        let mut cols = Vec::new();
        filter.meta_columns(&mut cols);
        for col in cols {
            if !schema.metadata_columns.contains(&col) {
                errors.push(DslError::new(
                    DslErrorCode::SchemaMismatch,
                    "selection.filter",
                    format!("dataset has no metadata column `{col}`"),
                ));
            }
        }
    }

    let schema_ok = errors.is_empty();

    // A window must fit in at least one sample.
    if schema_ok {
        let mut feasible = false;
        for i in 0..dataset.size() {
            let sample = dataset.query(i)?;
            let len = effective_columns
                .iter()
                .filter_map(|c| sample.series.iter().find(|s| &s.name == c))
                .map(|s| s.values.len())
                .min()
                .unwrap_or(0);
            if len >= program.selection.min_window {
                feasible = true;
                break;
            }
        }
        if !feasible {
            errors.push(DslError::new(
                DslErrorCode::WindowInfeasible,
                "selection.min_window",
                format!(
                    "no dataset sample offers {} steps in columns {:?}",
                    program.selection.min_window, effective_columns
                ),
            ));
        }
    }

    let per_series_budget = program.selection.max_total_length / effective_columns.len().max(1);
    if per_series_budget < program.selection.min_window {
        errors.push(DslError::new(
            DslErrorCode::BadSelection,
            "selection.max_total_length",
            "total length cap cannot fit min_window in every series",
        ));
    }

    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::Dsl(errors))
    }
}

/// Materialize up to `num_samples` question instances.
///
/// Samples dataset indices without replacement where possible (cycling with
/// fresh windows when the dataset is smaller than the request), capping total
/// attempts at `10 * num_samples`. A shortfall is reported, not an error.
pub fn evaluate(
    program: &TemplateProgram,
    dataset: &dyn DatasetAdapter,
    num_samples: usize,
    seed: u64,
    verbose: bool,
) -> Result<(Vec<QuestionInstance>, EvalReport)> {
    let mut report = EvalReport::default();
    let mut questions = Vec::new();
    if num_samples == 0 || dataset.size() == 0 {
        return Ok((questions, report));
    }

    let schema = dataset.schema();
    let effective_columns: Vec<String> = match &program.selection.columns {
        Some(cols) => cols.clone(),
        None => schema.value_columns.iter().take(1).cloned().collect(),
    };

    let mut order: Vec<usize> = (0..dataset.size()).collect();
    let mut shuffle_rng = rng_for(child_seed(seed, "dsl-order", fnv1a(program.name.as_bytes())));
    order.shuffle(&mut shuffle_rng);

    let max_attempts = num_samples.saturating_mul(10);
    let mut attempt = 0usize;
    'outer: loop {
        for &index in &order {
            if questions.len() >= num_samples || attempt >= max_attempts {
                break 'outer;
            }
            attempt += 1;
            report.attempted = attempt;
            let skip = |reason: String, report: &mut EvalReport| {
                if verbose {
                    log::debug!("template `{}` skipped sample {index}: {reason}", program.name);
                }
                report.skips.push(SkipRecord {
                    dataset_index: index,
                    reason,
                });
            };

            let sample = dataset.query(index)?;
            let meta_env: BTreeMap<String, Value> = sample
                .metadata
                .iter()
                .map(|(k, v)| {
                    let value = match v {
                        MetaValue::Number(n) => Value::Number(*n),
                        MetaValue::Text(t) => Value::Text(t.clone()),
                    };
                    (k.clone(), value)
                })
                .collect();

            // Filter runs before windowing, over metadata and hyperparameters.
            if let Some(filter) = &program.selection.filter {
                let hyper_env: BTreeMap<String, Value> = program
                    .hyperparameters
                    .iter()
                    .map(|(k, v)| (k.clone(), Value::Number(*v)))
                    .collect();
                match filter.eval(&hyper_env, &meta_env) {
                    Ok(Value::Bool(true)) => {}
                    Ok(Value::Bool(false)) => {
                        skip("filter rejected sample".into(), &mut report);
                        continue;
                    }
                    Ok(other) => {
                        skip(
                            format!("filter returned {}, expected bool", other.type_name()),
                            &mut report,
                        );
                        continue;
                    }
                    Err(e) => {
                        skip(format!("filter error: {e}"), &mut report);
                        continue;
                    }
                }
            }

            let mut columns = Vec::new();
            let mut missing = false;
            for col in &effective_columns {
                match sample.series.iter().find(|s| &s.name == col) {
                    Some(s) => columns.push(s),
                    None => {
                        skip(format!("sample has no series column `{col}`"), &mut report);
                        missing = true;
                        break;
                    }
                }
            }
            if missing {
                continue;
            }
            let len = columns.iter().map(|s| s.values.len()).min().unwrap_or(0);
            let budget = program.selection.max_total_length / effective_columns.len();
            let w_max = program.selection.max_window.min(len).min(budget);
            if w_max < program.selection.min_window {
                skip(
                    format!("series too short: {len} < min_window {}", program.selection.min_window),
                    &mut report,
                );
                continue;
            }

            let mut window_rng = rng_for(child_seed(seed, "dsl-window", attempt as u64));
            let w = window_rng.random_range(program.selection.min_window..=w_max);
            let start = window_rng.random_range(0..=len - w);

            let mut bindings: BTreeMap<String, Value> = program
                .hyperparameters
                .iter()
                .map(|(k, v)| (k.clone(), Value::Number(*v)))
                .collect();
            bindings.insert(
                "window".to_string(),
                Value::Series(columns[0].values[start..start + w].to_vec()),
            );
            if columns.len() == 2 {
                bindings.insert(
                    "window2".to_string(),
                    Value::Series(columns[1].values[start..start + w].to_vec()),
                );
            }

            let mut feature_failure = None;
            for (name, expr) in &program.features {
                match expr.eval(&bindings, &meta_env) {
                    Ok(v) => {
                        bindings.insert(name.clone(), v);
                    }
                    Err(e) => {
                        feature_failure = Some(format!("feature `{name}`: {e}"));
                        break;
                    }
                }
            }
            if let Some(reason) = feature_failure {
                skip(reason, &mut report);
                continue;
            }

            // First-match rule semantics with the trailing default.
            let mut matched = None;
            let mut rule_failure = None;
            for (i, rule) in program.rules.iter().enumerate() {
                match &rule.condition {
                    Some(cond) => match cond.eval(&bindings, &meta_env).and_then(|v| v.as_bool()) {
                        Ok(true) => {
                            matched = Some((i, rule.choose));
                            break;
                        }
                        Ok(false) => {}
                        Err(e) => {
                            rule_failure = Some(format!("rule {i}: {e}"));
                            break;
                        }
                    },
                    None => {
                        matched = Some((i, rule.choose));
                        break;
                    }
                }
            }
            if let Some(reason) = rule_failure {
                skip(reason, &mut report);
                continue;
            }
            let (matched_rule, correct_index) = matched.expect("default rule always matches");

            let fill = |text: &str| fill_placeholders(text, &bindings, &meta_env);
            let question_text = match fill(&program.question_text) {
                Ok(t) => t,
                Err(e) => {
                    skip(format!("question text: {e}"), &mut report);
                    continue;
                }
            };
            let mut options = Vec::with_capacity(program.options.len());
            let mut option_failure = None;
            for opt in &program.options {
                match fill(opt) {
                    Ok(t) => options.push(t),
                    Err(e) => {
                        option_failure = Some(format!("option text: {e}"));
                        break;
                    }
                }
            }
            if let Some(reason) = option_failure {
                skip(reason, &mut report);
                continue;
            }

            let series: Vec<TimeSeries> = match columns
                .iter()
                .map(|c| {
                    TimeSeries::external(
                        c.values[start..start + w].to_vec(),
                        format!("dataset[{index}].{}[{start}..{}]", c.name, start + w),
                    )
                })
                .collect::<Result<_>>()
            {
                Ok(s) => s,
                Err(e) => {
                    skip(format!("series window: {e}"), &mut report);
                    continue;
                }
            };

            let question = QuestionInstance {
                id: format!("{}-{:03}", program.name, questions.len()),
                category: program.category.clone(),
                question: question_text,
                options,
                correct_index,
                series,
                icl_example: None,
                hint: None,
                concept_notes: None,
                relevant_concepts: program.relevant_concepts.clone(),
                detractor_types: program.detractor_types.clone(),
                format_hint: program.format_hint.clone(),
                domain: program.domain.clone(),
            };
            if let Err(e) = question.validate() {
                skip(format!("instance invalid: {e}"), &mut report);
                continue;
            }

            report.traces.push(SampleTrace {
                dataset_index: index,
                window_start: start,
                window_len: w,
                features: bindings.clone(),
                matched_rule,
                correct_index,
            });
            questions.push(question);
        }
        if questions.len() >= num_samples || attempt >= max_attempts {
            break;
        }
    }

    report.produced = questions.len();
    Ok((questions, report))
}

fn fill_placeholders(
    text: &str,
    bindings: &BTreeMap<String, Value>,
    meta: &BTreeMap<String, Value>,
) -> std::result::Result<String, EvalError> {
    let re = regex::Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap();
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for cap in re.captures_iter(text) {
        let whole = cap.get(0).unwrap();
        let name = &cap[1];
        out.push_str(&text[last..whole.start()]);
        let value = bindings
            .get(name)
            .or_else(|| meta.get(name))
            .ok_or_else(|| EvalError(format!("placeholder `{{{name}}}` is unbound")))?;
        match value {
            Value::Number(n) => out.push_str(&format_number(*n)),
            Value::Text(t) => out.push_str(t),
            Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Value::Series(_) => {
                return Err(EvalError(format!(
                    "placeholder `{{{name}}}` is series-valued and cannot be interpolated"
                )))
            }
        }
        last = whole.end();
    }
    out.push_str(&text[last..]);
    Ok(out)
}

fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e12 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    }
}
