//! Run configuration: one TOML file, flag overrides, credentials only via
//! environment variables. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use tsexam::datasets::{synthetic_adapter, ColumnMapping, DatasetAdapter, MetaValue};
use tsexam::evaluation::Modality;
use tsexam::gateway::{MockRule, MockScript, ModelRef, Provider, RateLimit};
use tsexam::synth::{PatternSpec, Provenance};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Named models; commands refer to them by role name.
    #[serde(default)]
    pub models: BTreeMap<String, ModelConfig>,
    #[serde(default)]
    pub gateway: GatewayConfig,
    #[serde(default)]
    pub mock: MockConfig,
    #[serde(default)]
    pub dataset: Option<DatasetConfig>,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub refine: RefineSection,
    #[serde(default)]
    pub administer: AdministerSection,
    #[serde(default)]
    pub jury: JurySection,
    /// Directory config-relative paths resolve against (set on load).
    #[serde(skip)]
    pub base_dir: PathBuf,
    /// The raw config text (digested into run manifests).
    #[serde(skip)]
    pub source: String,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/out")
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub provider: String,
    pub model_id: String,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Environment variable holding the API key, e.g. `TSEXAM_API_KEY_OPENAI`.
    #[serde(default)]
    pub credential_env: Option<String>,
}

impl ModelConfig {
    pub fn to_ref(&self) -> Result<ModelRef> {
        let provider = match self.provider.as_str() {
            "mock" => Provider::Mock,
            "http" | "http_compatible" => Provider::HttpCompatible,
            other => bail!("unknown provider `{other}` (expected `mock` or `http`)"),
        };
        let model = ModelRef {
            provider,
            model_id: self.model_id.clone(),
            endpoint: self.endpoint.clone(),
            credential_env: self.credential_env.clone(),
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default)]
    pub max_in_flight: Option<usize>,
    #[serde(default)]
    pub min_interval_ms: Option<u64>,
    /// Append request/latency audit records here (off by default; audit
    /// records carry latencies and are not reproducible byte-for-byte).
    #[serde(default)]
    pub audit_path: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockConfig {
    #[serde(default)]
    pub rules: Vec<MockRuleConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRuleConfig {
    #[serde(default = "wildcard")]
    pub model: String,
    #[serde(default = "wildcard")]
    pub pattern: String,
    #[serde(default)]
    pub replies: Vec<String>,
    /// Files whose contents are appended to `replies`, resolved relative to
    /// the config file.
    #[serde(default)]
    pub reply_files: Vec<PathBuf>,
}

fn wildcard() -> String {
    "*".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// `tabular` (default) or `synthetic_demo`.
    #[serde(default = "default_dataset_kind")]
    pub kind: String,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub value_columns: Vec<String>,
    #[serde(default)]
    pub metadata_columns: Vec<String>,
    #[serde(default)]
    pub group_by: Option<String>,
    #[serde(default)]
    pub sort_by: Option<String>,
}

fn default_dataset_kind() -> String {
    "tabular".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    #[serde(default)]
    pub task_description: Option<String>,
    #[serde(default)]
    pub task_description_file: Option<PathBuf>,
    #[serde(default = "default_domain")]
    pub domain: String,
    #[serde(default = "default_concept_mode")]
    pub concept_mode: String,
    #[serde(default)]
    pub rag_document: Option<PathBuf>,
    #[serde(default = "default_structure_samples")]
    pub structure_samples: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_few_shot")]
    pub few_shot_per_prompt: usize,
    #[serde(default = "default_instances")]
    pub instances_per_template: usize,
    #[serde(default = "default_num_templates")]
    pub num_templates: usize,
    #[serde(default = "default_num_concepts")]
    pub num_concepts: usize,
}

fn default_domain() -> String {
    "general".into()
}
fn default_concept_mode() -> String {
    "llm".into()
}
fn default_structure_samples() -> usize {
    3
}
fn default_patience() -> usize {
    3
}
fn default_few_shot() -> usize {
    3
}
fn default_instances() -> usize {
    4
}
fn default_num_templates() -> usize {
    3
}
fn default_num_concepts() -> usize {
    8
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            task_description: None,
            task_description_file: None,
            domain: default_domain(),
            concept_mode: default_concept_mode(),
            rag_document: None,
            structure_samples: default_structure_samples(),
            patience: default_patience(),
            few_shot_per_prompt: default_few_shot(),
            instances_per_template: default_instances(),
            num_templates: default_num_templates(),
            num_concepts: default_num_concepts(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineSection {
    /// Role names (keys of `[models.*]`) of the candidate models.
    #[serde(default)]
    pub candidates: Vec<String>,
    #[serde(default = "default_drop")]
    pub drop_percentage: f64,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
}

fn default_drop() -> f64 {
    0.2
}
fn default_rounds() -> usize {
    3
}
fn default_epochs() -> usize {
    2000
}

impl Default for RefineSection {
    fn default() -> Self {
        RefineSection {
            candidates: Vec::new(),
            drop_percentage: default_drop(),
            rounds: default_rounds(),
            epochs: default_epochs(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdministerSection {
    #[serde(default = "default_modality")]
    pub modality: String,
    #[serde(default = "default_dpi")]
    pub dpi: u32,
}

fn default_modality() -> String {
    "vision".into()
}
fn default_dpi() -> u32 {
    50
}

impl Default for AdministerSection {
    fn default() -> Self {
        AdministerSection {
            modality: default_modality(),
            dpi: default_dpi(),
        }
    }
}

impl AdministerSection {
    pub fn modality(&self) -> Result<Modality> {
        match self.modality.as_str() {
            "vision" => Ok(Modality::Vision),
            "text" => Ok(Modality::Text),
            other => bail!("unknown modality `{other}` (expected `vision` or `text`)"),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JurySection {
    /// Role names of the judge panel.
    #[serde(default)]
    pub panel: Vec<String>,
    #[serde(default)]
    pub domain: Option<String>,
    #[serde(default = "default_sample_n")]
    pub sample_n: usize,
}

fn default_sample_n() -> usize {
    50
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let source = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config `{}`", path.display()))?;
        let mut config: Config = toml::from_str(&source)
            .with_context(|| format!("config `{}` failed to parse", path.display()))?;
        config.base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        config.source = source;
        Ok(config)
    }

    /// Resolve a config-relative path.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn model(&self, role: &str) -> Result<ModelRef> {
        let model = self
            .models
            .get(role)
            .with_context(|| format!("config has no [models.{role}] entry"))?;
        model.to_ref()
    }

    pub fn mock_script(&self) -> Result<MockScript> {
        let mut rules = Vec::new();
        for rule in &self.mock.rules {
            let mut replies = rule.replies.clone();
            for file in &rule.reply_files {
                let path = self.resolve(file);
                replies.push(std::fs::read_to_string(&path).with_context(|| {
                    format!("cannot read mock reply file `{}`", path.display())
                })?);
            }
            if replies.is_empty() {
                bail!("mock rule for model `{}` has no replies", rule.model);
            }
            rules.push(MockRule {
                model: rule.model.clone(),
                pattern: rule.pattern.clone(),
                replies,
            });
        }
        Ok(MockScript { rules })
    }

    pub fn gateway(&self) -> Result<tsexam::gateway::Gateway> {
        let mut gateway = tsexam::gateway::Gateway::with_mock_script(self.mock_script()?);
        let mut limit = RateLimit::default();
        if let Some(max) = self.gateway.max_in_flight {
            limit.max_in_flight = max;
        }
        if let Some(interval) = self.gateway.min_interval_ms {
            limit.min_interval_ms = interval;
        }
        gateway.set_rate_limit(limit);
        if let Some(path) = &self.gateway.audit_path {
            gateway.set_audit_path(self.resolve(path))?;
        }
        Ok(gateway)
    }

    pub fn dataset(&self) -> Result<Box<dyn DatasetAdapter>> {
        let section = self
            .dataset
            .as_ref()
            .context("config has no [dataset] section")?;
        match section.kind.as_str() {
            "tabular" => {
                let path = section
                    .path
                    .as_ref()
                    .context("[dataset] with kind `tabular` needs a `path`")?;
                let mapping = ColumnMapping {
                    value_columns: section.value_columns.clone(),
                    metadata_columns: section.metadata_columns.clone(),
                    group_by: section.group_by.clone(),
                    sort_by: section.sort_by.clone(),
                };
                let dataset = tsexam::datasets::load_tabular(self.resolve(path), &mapping)?;
                Ok(Box::new(dataset))
            }
            "synthetic_demo" => Ok(Box::new(demo_dataset()?)),
            other => bail!("unknown dataset kind `{other}`"),
        }
    }

    pub fn task_description(&self) -> Result<String> {
        if let Some(text) = &self.pipeline.task_description {
            return Ok(text.clone());
        }
        if let Some(file) = &self.pipeline.task_description_file {
            let path = self.resolve(file);
            return std::fs::read_to_string(&path)
                .with_context(|| format!("cannot read task description `{}`", path.display()));
        }
        bail!("config needs [pipeline].task_description or task_description_file")
    }
}

/// Small labeled synthetic dataset so the agent pipeline can run offline
/// from a config alone.
fn demo_dataset() -> Result<tsexam::datasets::SyntheticDataset> {
    let mut specs = Vec::new();
    for i in 0..4u64 {
        let spec = PatternSpec::LinearTrend {
            slope: 0.8,
            intercept: 10.0,
        };
        let mut meta = BTreeMap::new();
        meta.insert("label".to_string(), MetaValue::Text("uptrend".into()));
        specs.push((
            Provenance::Composite {
                method: tsexam::synth::Composition::Additive,
                parts: vec![
                    Provenance::Pattern {
                        spec,
                        length: 96,
                        seed: i,
                    },
                    Provenance::Pattern {
                        spec: PatternSpec::WhiteNoise { std: 0.5 },
                        length: 96,
                        seed: 100 + i,
                    },
                ],
            },
            meta,
        ));
    }
    for i in 0..4u64 {
        let mut meta = BTreeMap::new();
        meta.insert("label".to_string(), MetaValue::Text("noise".into()));
        specs.push((
            Provenance::Pattern {
                spec: PatternSpec::WhiteNoise { std: 1.0 },
                length: 96,
                seed: 200 + i,
            },
            meta,
        ));
    }
    Ok(synthetic_adapter(specs)?)
}
