//! Subcommand implementations. Each writes its artifacts under the run
//! directory and finishes by writing a manifest with content digests.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use tsexam::agent::{run_pipeline, ConceptMode, PipelineConfig};
use tsexam::evaluation::{
    accuracy, accuracy_by, administer as administer_exam, build_response_matrix,
    diversity as diversity_metric, jury_score, AdministerOptions, Modality, ResponseRecord,
};
use tsexam::exam::{load_exam, save_exam, CategoryKind, Exam};
use tsexam::gateway::render_plot;
use tsexam::irt::{refine as refine_exam, FitConfig, RefineConfig};
use tsexam::rng::{child_seed, fnv1a};
use tsexam::templates::{Registry, RegistryResampler};

use crate::config::Config;

#[derive(Serialize)]
struct Manifest {
    command: String,
    seed: u64,
    config_digest: String,
    artifacts: Vec<Artifact>,
}

#[derive(Serialize)]
struct Artifact {
    path: String,
    bytes: u64,
    fnv64: String,
}

/// Write `out_dir/manifest.json` describing this run's artifacts.
fn write_manifest(config: &Config, command: &str, paths: &[PathBuf]) -> Result<()> {
    let mut artifacts = Vec::new();
    for path in paths {
        let bytes = std::fs::read(path)
            .with_context(|| format!("manifest: cannot re-read `{}`", path.display()))?;
        let relative = path
            .strip_prefix(&config.out_dir)
            .unwrap_or(path)
            .display()
            .to_string();
        artifacts.push(Artifact {
            path: relative,
            bytes: bytes.len() as u64,
            fnv64: format!("{:016x}", fnv1a(&bytes)),
        });
    }
    artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        command: command.to_string(),
        seed: config.seed,
        config_digest: format!("{:016x}", fnv1a(config.source.as_bytes())),
        artifacts,
    };
    let path = config.out_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(())
}

fn parse_counts(counts: &[String]) -> Result<Option<BTreeMap<CategoryKind, usize>>> {
    if counts.is_empty() {
        return Ok(None);
    }
    let mut map = BTreeMap::new();
    for entry in counts {
        let (category, count) = entry
            .split_once('=')
            .with_context(|| format!("expected CATEGORY=N, got `{entry}`"))?;
        let kind = CategoryKind::parse(category.trim())?;
        let count: usize = count
            .trim()
            .parse()
            .with_context(|| format!("bad count in `{entry}`"))?;
        map.insert(kind, count);
    }
    Ok(Some(map))
}

pub fn gen(config: &Config, counts: &[String]) -> Result<()> {
    let registry = Registry::builtin();
    let counts = parse_counts(counts)?;
    let exam = registry.generate_exam(counts.as_ref(), config.seed)?;
    let path = config.out_dir.join("exam.jsonl");
    save_exam(&exam, &path)?;
    write_manifest(config, "gen", &[path.clone()])?;
    println!("wrote {} questions to {}", exam.len(), path.display());
    Ok(())
}

pub fn refine(config: &Config, exam_path: &Path) -> Result<()> {
    if config.refine.candidates.is_empty() {
        bail!("[refine].candidates must name at least one model role");
    }
    let exam = load_exam(exam_path)?;
    let gateway = config.gateway()?;
    let registry = Registry::builtin();
    let modality = config.administer.modality()?;
    let options = AdministerOptions {
        modality,
        dpi: config.administer.dpi,
        ..Default::default()
    };

    let candidates: Vec<_> = config
        .refine
        .candidates
        .iter()
        .map(|role| config.model(role))
        .collect::<Result<_>>()?;

    let mut take_exam = |current: &Exam| {
        let mut runs = Vec::new();
        for candidate in &candidates {
            let records = administer_exam(&gateway, current, candidate, &options)?;
            runs.push((candidate.model_id.clone(), records));
        }
        build_response_matrix(current, &runs)
    };
    let initial = take_exam(&exam)?;

    let refine_config = RefineConfig {
        drop_percentage: config.refine.drop_percentage,
        num_iterations: config.refine.rounds,
        fit: FitConfig {
            epochs: config.refine.epochs,
            ..Default::default()
        },
    };
    let mut resampler =
        RegistryResampler::new(&registry, child_seed(config.seed, "cli-resample", 0));
    let outcome = refine_exam(&exam, &initial, &refine_config, &mut resampler, &mut take_exam)?;

    let mut refined = outcome.exam;
    refined.metadata.round = config.refine.rounds as u32;
    let exam_out = config.out_dir.join("exam_refined.jsonl");
    save_exam(&refined, &exam_out)?;
    let trace_out = config.out_dir.join("refine_trace.json");
    let mut trace = serde_json::to_string_pretty(&outcome.rounds)?;
    trace.push('\n');
    std::fs::write(&trace_out, trace)?;
    write_manifest(config, "refine", &[exam_out.clone(), trace_out])?;
    for round in &outcome.rounds {
        println!(
            "round {}: dropped {}, mean discrimination {:.4}",
            round.round,
            round.dropped_ids.len(),
            round.mean_discrimination
        );
    }
    println!("wrote refined exam to {}", exam_out.display());
    Ok(())
}

pub fn agent(config: &Config, num_templates: Option<usize>) -> Result<()> {
    let gateway = config.gateway()?;
    let dataset = config.dataset()?;
    let section = &config.pipeline;
    let concept_mode = match section.concept_mode.as_str() {
        "llm" => ConceptMode::Llm,
        "rag" => ConceptMode::Rag,
        other => bail!("unknown concept_mode `{other}` (expected `llm` or `rag`)"),
    };
    let mut pipeline = PipelineConfig::new(
        config.task_description()?,
        section.domain.clone(),
        config.model("generator")?,
        config.model("verifier")?,
        config.model("strong")?,
        config.model("weak")?,
    );
    pipeline.concept_mode = concept_mode;
    pipeline.structure_samples = section.structure_samples;
    pipeline.regeneration_patience = section.patience;
    pipeline.few_shot_per_prompt = section.few_shot_per_prompt;
    pipeline.instances_per_template = section.instances_per_template;
    pipeline.num_concepts = section.num_concepts;
    pipeline.filter_modality = config.administer.modality()?;
    pipeline.seed = config.seed;
    pipeline.parallelism = config.parallelism;

    let rag_document = match &section.rag_document {
        Some(path) => Some(std::fs::read_to_string(config.resolve(path))?),
        None => None,
    };
    let num_templates = num_templates.unwrap_or(section.num_templates);

    let outcome = run_pipeline(
        &gateway,
        &pipeline,
        dataset.as_ref(),
        num_templates,
        rag_document.as_deref(),
    )?;

    let mut artifacts = Vec::new();
    let template_dir = config.out_dir.join("templates");
    std::fs::create_dir_all(&template_dir)?;
    for accepted in &outcome.templates {
        let path = template_dir.join(format!("s{:02}-{}.toml", accepted.slot, accepted.program.name));
        std::fs::write(&path, &accepted.document)?;
        artifacts.push(path);
    }
    let exam_out = config.out_dir.join("exam.jsonl");
    save_exam(&outcome.exam, &exam_out)?;
    artifacts.push(exam_out.clone());
    let report_out = config.out_dir.join("report.json");
    let mut report = serde_json::to_string_pretty(&outcome.report)?;
    report.push('\n');
    std::fs::write(&report_out, report)?;
    artifacts.push(report_out);
    write_manifest(config, "agent", &artifacts)?;

    println!(
        "accepted {}/{} templates ({} questions): semantic {}, syntactic {}, content {}",
        outcome.report.success,
        outcome.report.attempted,
        outcome.exam.len(),
        outcome.report.semantic_failure,
        outcome.report.syntactic_failure,
        outcome.report.content_rejection,
    );
    println!("wrote exam to {}", exam_out.display());
    Ok(())
}

pub fn administer(
    config: &Config,
    exam_path: &Path,
    model_role: &str,
    modality: Option<&str>,
    dpi: Option<u32>,
) -> Result<()> {
    let exam = load_exam(exam_path)?;
    let gateway = config.gateway()?;
    let candidate = config.model(model_role)?;
    let modality = match modality {
        Some("vision") => Modality::Vision,
        Some("text") => Modality::Text,
        Some(other) => bail!("unknown modality `{other}`"),
        None => config.administer.modality()?,
    };
    let options = AdministerOptions {
        modality,
        dpi: dpi.unwrap_or(config.administer.dpi),
        ..Default::default()
    };
    let records = administer_exam(&gateway, &exam, &candidate, &options)?;

    let path = config
        .out_dir
        .join(format!("responses-{}.jsonl", sanitize(&candidate.model_id)));
    let mut out = Vec::new();
    for record in &records {
        serde_json::to_writer(&mut out, record)?;
        out.push(b'\n');
    }
    std::fs::write(&path, out)?;
    write_manifest(config, "administer", &[path.clone()])?;
    let acc = accuracy(&records)?;
    println!(
        "administered {} questions: general accuracy {:.4}, parsable {}",
        records.len(),
        acc.general,
        acc.parsable_only
            .map(|p| format!("{p:.4}"))
            .unwrap_or_else(|| "n/a".into())
    );
    println!("wrote responses to {}", path.display());
    Ok(())
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn score(config: &Config, exam_path: &Path, responses_path: &Path) -> Result<()> {
    let exam = load_exam(exam_path)?;
    let text = std::fs::read_to_string(responses_path)
        .with_context(|| format!("cannot read `{}`", responses_path.display()))?;
    let mut records: Vec<ResponseRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ResponseRecord = serde_json::from_str(line)
            .with_context(|| format!("bad response record at line {}", i + 1))?;
        records.push(record);
    }
    // Every response must reference a question in this exam.
    for record in &records {
        if exam.question(&record.question_id).is_none() {
            bail!(
                "response references question id `{}` that is not in the exam",
                record.question_id
            );
        }
    }

    let overall = accuracy(&records)?;
    let by_category = accuracy_by(&records, |r| {
        exam.question(&r.question_id)
            .map(|q| q.category.kind.to_string())
            .unwrap_or_default()
    })?;

    #[derive(Serialize)]
    struct ScoreReport<'a> {
        overall: tsexam::evaluation::Accuracy,
        by_category: &'a BTreeMap<String, tsexam::evaluation::Accuracy>,
        responses: usize,
    }
    let path = config.out_dir.join("score.json");
    let mut out = serde_json::to_string_pretty(&ScoreReport {
        overall,
        by_category: &by_category,
        responses: records.len(),
    })?;
    out.push('\n');
    std::fs::write(&path, out)?;
    write_manifest(config, "score", &[path.clone()])?;

    println!(
        "general {:.4} | parsable {}",
        overall.general,
        overall
            .parsable_only
            .map(|p| format!("{p:.4}"))
            .unwrap_or_else(|| "n/a".into())
    );
    for (category, acc) in &by_category {
        println!("  {category}: general {:.4}", acc.general);
    }
    println!("wrote score report to {}", path.display());
    Ok(())
}

pub fn jury(config: &Config, exam_path: &Path) -> Result<()> {
    if config.jury.panel.is_empty() {
        bail!("[jury].panel must name at least one judge model role");
    }
    let exam = load_exam(exam_path)?;
    let gateway = config.gateway()?;
    let panel: Vec<_> = config
        .jury
        .panel
        .iter()
        .map(|role| config.model(role))
        .collect::<Result<_>>()?;
    let domain = config
        .jury
        .domain
        .clone()
        .unwrap_or_else(|| config.pipeline.domain.clone());

    // Deterministic cap at sample_n questions: a seeded pseudo-random order
    // keyed by question id.
    let mut questions = exam.questions.clone();
    if questions.len() > config.jury.sample_n {
        questions.sort_by_key(|q| fnv1a(format!("{}:{}", config.seed, q.id).as_bytes()));
        questions.truncate(config.jury.sample_n);
    }

    let report = jury_score(&gateway, &questions, &panel, &domain)?;
    let path = config.out_dir.join("jury.json");
    let mut out = serde_json::to_string_pretty(&report)?;
    out.push('\n');
    std::fs::write(&path, out)?;
    write_manifest(config, "jury", &[path.clone()])?;
    for (criterion, mean) in &report.criterion_means {
        println!("{criterion}: {mean:.2}");
    }
    println!(
        "combined {:.2} (coverage {:.2})",
        report.combined_mean, report.coverage
    );
    println!("wrote jury report to {}", path.display());
    Ok(())
}

pub fn diversity(
    config: &Config,
    exam_path: &Path,
    sample: Option<usize>,
    embedder_role: Option<&str>,
) -> Result<()> {
    let exam = load_exam(exam_path)?;
    let gateway = config.gateway()?;
    let embedder = config.model(embedder_role.unwrap_or("embedder"))?;
    let report = diversity_metric(
        &gateway,
        &exam.questions,
        sample.unwrap_or(50),
        &embedder,
        config.seed,
    )?;
    let path = config.out_dir.join("diversity.json");
    let mut out = serde_json::to_string_pretty(&report)?;
    out.push('\n');
    std::fs::write(&path, out)?;
    write_manifest(config, "diversity", &[path.clone()])?;
    if let Some(embedding) = &report.embedding {
        println!("embedding distance: {:.4} +- {:.4}", embedding.mean, embedding.std);
    }
    println!(
        "normalized levenshtein: {:.4} +- {:.4} over {} pairs",
        report.levenshtein.mean, report.levenshtein.std, report.pairs
    );
    println!("wrote diversity report to {}", path.display());
    Ok(())
}

pub fn render(config: &Config, exam_path: &Path, dpi: Option<u32>) -> Result<()> {
    let exam = load_exam(exam_path)?;
    let dpi = dpi.unwrap_or(config.administer.dpi);
    let plot_dir = config.out_dir.join("plots");
    std::fs::create_dir_all(&plot_dir)?;
    let mut artifacts = Vec::new();
    for question in &exam.questions {
        let png = render_plot(&question.series, dpi)?;
        let path = plot_dir.join(format!("{}.png", sanitize(&question.id)));
        std::fs::write(&path, png)?;
        artifacts.push(path);
    }
    write_manifest(config, "render", &artifacts)?;
    println!("rendered {} plots at {dpi} dpi into {}", exam.len(), plot_dir.display());
    Ok(())
}

/// Interactive approve/reject pass over template documents: the optional
/// human-in-the-loop stage. Approved documents are copied into
/// `out_dir/approved/`.
pub fn review(
    config: &Config,
    paths: &[PathBuf],
    input: impl BufRead,
    mut output: impl Write,
) -> Result<()> {
    let mut files = Vec::new();
    for path in paths {
        let path = path.clone();
        if path.is_dir() {
            let mut entries: Vec<_> = std::fs::read_dir(&path)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|e| e == "toml"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(path);
        }
    }
    if files.is_empty() {
        bail!("no template documents to review");
    }

    let approved_dir = config.out_dir.join("approved");
    std::fs::create_dir_all(&approved_dir)?;
    let mut decisions: BTreeMap<String, String> = BTreeMap::new();
    let mut artifacts = Vec::new();
    let mut lines = input.lines();
    for file in &files {
        let document = std::fs::read_to_string(file)?;
        let name = file.file_name().unwrap().to_string_lossy().to_string();
        writeln!(output, "--- {name} ---")?;
        match tsexam::dsl::parse(&document) {
            Ok(program) => {
                writeln!(output, "question: {}", program.question_text)?;
                for (i, option) in program.options.iter().enumerate() {
                    writeln!(output, "  [{}] {option}", (b'A' + i as u8) as char)?;
                }
            }
            Err(e) => writeln!(output, "(does not parse: {e})")?,
        }
        writeln!(output, "approve? [y/n/q]")?;
        let decision = loop {
            let Some(line) = lines.next() else {
                break "q".to_string();
            };
            let line = line?;
            match line.trim().to_lowercase().as_str() {
                "y" | "yes" => break "approved".to_string(),
                "n" | "no" => break "rejected".to_string(),
                "q" | "quit" => break "q".to_string(),
                _ => writeln!(output, "please answer y, n, or q")?,
            }
        };
        if decision == "q" {
            writeln!(output, "stopping review")?;
            break;
        }
        if decision == "approved" {
            let target = approved_dir.join(&name);
            std::fs::write(&target, &document)?;
            artifacts.push(target);
        }
        decisions.insert(name, decision);
    }

    let review_path = config.out_dir.join("review.json");
    let mut out = serde_json::to_string_pretty(&decisions)?;
    out.push('\n');
    std::fs::write(&review_path, out)?;
    artifacts.push(review_path.clone());
    write_manifest(config, "review", &artifacts)?;
    writeln!(
        output,
        "reviewed {} templates; decisions in {}",
        decisions.len(),
        review_path.display()
    )?;
    Ok(())
}
