//! Run configuration: one JSON document covering the optimizer, task,
//! operator, and provider, mirrored by CLI flag overrides.
//!
//! Validation is total: every invalid field is reported with its path in a
//! single pass, and nothing touches the network before validation succeeds.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::EvoError;
use crate::metrics::Tokenizer;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    #[default]
    Ga,
    De,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SelectionStrategy {
    Roulette,
    Tournament {
        #[serde(default = "default_tournament_size")]
        size: usize,
    },
    Random,
}

impl Default for SelectionStrategy {
    fn default() -> Self {
        SelectionStrategy::Roulette
    }
}

fn default_tournament_size() -> usize {
    2
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutateScope {
    #[default]
    Diff,
    All,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Prompt3Source {
    #[default]
    Best,
    Random,
    Eliminate,
}

/// The two ablation axes of the DE operator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeVariant {
    #[serde(default)]
    pub mutate_scope: MutateScope,
    #[serde(default)]
    pub prompt3_source: Prompt3Source,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitPick {
    #[default]
    Top,
    Random,
    Bottom,
}

/// How the initial population is assembled from the manual prompt list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Keep N manual prompts, chosen by `pick` when more are supplied.
    ManualOnly {
        #[serde(default)]
        pick: InitPick,
    },
    /// Keep `manual_count` manual prompts and add `resampled_count`
    /// generated variations of them; the counts must sum to N.
    ManualPlusResampled {
        manual_count: usize,
        resampled_count: usize,
        #[serde(default)]
        pick: InitPick,
    },
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy::ManualOnly {
            pick: InitPick::Top,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    #[serde(default = "default_population_size")]
    pub population_size: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub engine: EngineKind,
    #[serde(default)]
    pub selection: SelectionStrategy,
    #[serde(default)]
    pub de_variant: DeVariant,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub init: InitStrategy,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            population_size: default_population_size(),
            iterations: default_iterations(),
            engine: EngineKind::default(),
            selection: SelectionStrategy::default(),
            de_variant: DeVariant::default(),
            rng_seed: 0,
            init: InitStrategy::default(),
        }
    }
}

fn default_population_size() -> usize {
    10
}

fn default_iterations() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Classification,
    Summarization,
    Simplification,
    Bbh,
    SyntheticKeywords,
    SyntheticTarget,
}

impl TaskKind {
    pub fn is_synthetic(self) -> bool {
        matches!(
            self,
            TaskKind::SyntheticKeywords | TaskKind::SyntheticTarget
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricId {
    #[serde(rename = "accuracy")]
    Accuracy,
    #[serde(rename = "rouge-1")]
    Rouge1,
    #[serde(rename = "rouge-2")]
    Rouge2,
    #[serde(rename = "rouge-l")]
    RougeL,
    #[serde(rename = "rouge-avg")]
    RougeAvg,
    #[serde(rename = "sari")]
    Sari,
}

impl MetricId {
    /// Convergence threshold matching "0.3% improvement" on the metric's own
    /// scale: 0.003 on [0,1] metrics, 0.3 on the [0,100] SARI scale.
    pub fn convergence_threshold(self) -> f64 {
        match self {
            MetricId::Sari => 0.3,
            _ => 0.003,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::Accuracy => "accuracy",
            MetricId::Rouge1 => "rouge-1",
            MetricId::Rouge2 => "rouge-2",
            MetricId::RougeL => "rouge-l",
            MetricId::RougeAvg => "rouge-avg",
            MetricId::Sari => "sari",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub kind: TaskKind,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub metric: Option<MetricId>,
    #[serde(default)]
    pub dev_size: Option<usize>,
    #[serde(default)]
    pub shots: Option<usize>,
    #[serde(default)]
    pub tokenizer: Tokenizer,
    /// synthetic-keywords only
    #[serde(default)]
    pub keywords: Vec<String>,
    /// synthetic-target only
    #[serde(default)]
    pub target_text: Option<String>,
}

impl TaskConfig {
    pub fn resolved_metric(&self) -> MetricId {
        self.metric.unwrap_or(match self.kind {
            TaskKind::Classification | TaskKind::Bbh => MetricId::Accuracy,
            TaskKind::Summarization => MetricId::RougeAvg,
            TaskKind::Simplification => MetricId::Sari,
            TaskKind::SyntheticKeywords | TaskKind::SyntheticTarget => MetricId::Accuracy,
        })
    }

    pub fn resolved_dev_size(&self) -> usize {
        self.dev_size.unwrap_or(match self.kind {
            TaskKind::Classification => 200,
            TaskKind::Summarization | TaskKind::Simplification => 100,
            TaskKind::Bbh => 50,
            TaskKind::SyntheticKeywords | TaskKind::SyntheticTarget => 0,
        })
    }

    pub fn resolved_shots(&self) -> usize {
        self.shots.unwrap_or(match self.kind {
            TaskKind::Bbh => 3,
            _ => 0,
        })
    }

    /// Stable identifier used for score caching and ledger records.
    pub fn task_id(&self) -> String {
        match (&self.data_dir, self.kind) {
            (Some(dir), _) => dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| dir.to_string_lossy().into_owned()),
            (None, TaskKind::SyntheticKeywords) => "synthetic-keywords".into(),
            (None, TaskKind::SyntheticTarget) => "synthetic-target".into(),
            (None, _) => "unnamed-task".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorMode {
    #[default]
    Llm,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    #[serde(default)]
    pub mode: OperatorMode,
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
    /// Attempts per operator call before giving up on unusable completions.
    #[serde(default = "default_operator_retries")]
    pub max_retries: u32,
    /// simulated mode: per-token mutation probability
    #[serde(default = "default_mutation_rate")]
    pub mutation_rate: f64,
    /// simulated mode: replacement vocabulary, inline or from a word file
    #[serde(default)]
    pub vocabulary: Vec<String>,
    #[serde(default)]
    pub vocabulary_file: Option<PathBuf>,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            mode: OperatorMode::default(),
            templates_dir: None,
            max_retries: default_operator_retries(),
            mutation_rate: default_mutation_rate(),
            vocabulary: Vec::new(),
            vocabulary_file: None,
        }
    }
}

fn default_operator_retries() -> u32 {
    3
}

fn default_mutation_rate() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    #[serde(default)]
    pub base_url: String,
    #[serde(default)]
    pub model: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    #[serde(default = "default_operator_max_tokens")]
    pub operator_max_tokens: u32,
    #[serde(default = "default_eval_max_tokens")]
    pub eval_max_tokens: u32,
    #[serde(default = "default_cache")]
    pub cache: bool,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            base_url: String::new(),
            model: String::new(),
            api_key_env: default_api_key_env(),
            requests_per_minute: None,
            operator_max_tokens: default_operator_max_tokens(),
            eval_max_tokens: default_eval_max_tokens(),
            cache: default_cache(),
            backoff_ms: default_backoff_ms(),
            timeout_s: default_timeout_s(),
        }
    }
}

fn default_api_key_env() -> String {
    "EVOFORGE_API_KEY".into()
}

fn default_operator_max_tokens() -> u32 {
    512
}

fn default_eval_max_tokens() -> u32 {
    128
}

fn default_cache() -> bool {
    true
}

fn default_backoff_ms() -> u64 {
    500
}

fn default_timeout_s() -> u64 {
    60
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// The whole run configuration; `run_id` is a digest of it, so a run
/// directory pins every knob that shaped its artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub task: TaskConfig,
    #[serde(default)]
    pub operator: OperatorConfig,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub manual_prompts: Vec<String>,
    #[serde(default)]
    pub manual_prompts_file: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, EvoError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| EvoError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&raw)
            .map_err(|e| EvoError::Config(format!("{}: {e}", path.display())))
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Deterministic run identifier: digest of the config, seed included
    /// but output location excluded, so reruns of one config land in the
    /// same directory wherever that directory lives.
    pub fn run_id(&self) -> String {
        let mut keyed = self.clone();
        keyed.out_dir = default_out_dir();
        let digest = Sha256::digest(keyed.canonical_json().as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        format!("run-{}", &hex[..12])
    }

    pub fn validate(&self) -> Result<(), EvoError> {
        let mut issues = Vec::new();
        let n = self.optimizer.population_size;

        match self.optimizer.engine {
            EngineKind::Ga if n < 2 => issues.push(
                "optimizer.population_size: GA needs at least 2 members (two distinct parents)"
                    .into(),
            ),
            EngineKind::De if n < 3 => issues.push(
                "optimizer.population_size: DE needs at least 3 members (two donors distinct from the basic prompt)"
                    .into(),
            ),
            _ => {}
        }
        if self.optimizer.iterations < 1 {
            issues.push("optimizer.iterations: must be at least 1".into());
        }
        if let SelectionStrategy::Tournament { size } = self.optimizer.selection {
            if size < 1 || size > n {
                issues.push(format!(
                    "optimizer.selection.size: tournament size must be in 1..={n}, got {size}"
                ));
            }
        }
        if self.optimizer.de_variant.mutate_scope == MutateScope::All
            && self.optimizer.de_variant.prompt3_source == Prompt3Source::Eliminate
        {
            issues.push(
                "optimizer.de_variant: mutate_scope=all with prompt3_source=eliminate has no operator instruction; choose another combination"
                    .into(),
            );
        }
        if let InitStrategy::ManualPlusResampled {
            manual_count,
            resampled_count,
            ..
        } = self.optimizer.init
        {
            if manual_count == 0 {
                issues.push(
                    "optimizer.init.manual_count: needs at least 1 manual prompt to resample from"
                        .into(),
                );
            }
            if manual_count + resampled_count != n {
                issues.push(format!(
                    "optimizer.init: manual_count + resampled_count must equal population_size ({manual_count} + {resampled_count} != {n})"
                ));
            }
        }

        match self.task.kind {
            TaskKind::SyntheticKeywords => {
                if self.task.keywords.is_empty() {
                    issues.push("task.keywords: synthetic-keywords needs a non-empty list".into());
                }
            }
            TaskKind::SyntheticTarget => {
                if self
                    .task
                    .target_text
                    .as_deref()
                    .map_or(true, |t| t.trim().is_empty())
                {
                    issues.push("task.target_text: synthetic-target needs a non-empty target".into());
                }
            }
            _ => {
                if self.task.data_dir.is_none() {
                    issues.push(format!(
                        "task.data_dir: required for {} tasks",
                        kind_name(self.task.kind)
                    ));
                }
            }
        }
        if let Some(metric) = self.task.metric {
            let ok = match self.task.kind {
                TaskKind::Classification | TaskKind::Bbh => metric == MetricId::Accuracy,
                TaskKind::Summarization => matches!(
                    metric,
                    MetricId::Rouge1 | MetricId::Rouge2 | MetricId::RougeL | MetricId::RougeAvg
                ),
                TaskKind::Simplification => metric == MetricId::Sari,
                TaskKind::SyntheticKeywords | TaskKind::SyntheticTarget => {
                    metric == MetricId::Accuracy
                }
            };
            if !ok {
                issues.push(format!(
                    "task.metric: {} does not apply to {} tasks",
                    metric.as_str(),
                    kind_name(self.task.kind)
                ));
            }
        }

        if !(0.0..=1.0).contains(&self.operator.mutation_rate) {
            issues.push(format!(
                "operator.mutation_rate: must be in [0, 1], got {}",
                self.operator.mutation_rate
            ));
        }
        if self.operator.mode == OperatorMode::Simulated
            && self.operator.vocabulary.is_empty()
            && self.operator.vocabulary_file.is_none()
        {
            issues.push(
                "operator.vocabulary: simulated mode needs an inline vocabulary or a vocabulary_file"
                    .into(),
            );
        }
        // llm operators and dataset evaluation both go through the provider
        let needs_provider =
            self.operator.mode == OperatorMode::Llm || !self.task.kind.is_synthetic();
        if needs_provider {
            if self.provider.base_url.trim().is_empty() {
                issues.push("provider.base_url: required for llm operators and dataset tasks".into());
            }
            if self.provider.model.trim().is_empty() {
                issues.push("provider.model: required for llm operators and dataset tasks".into());
            }
        }

        if issues.is_empty() {
            Ok(())
        } else {
            Err(EvoError::Config(issues.join("\n")))
        }
    }
}

fn kind_name(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Classification => "classification",
        TaskKind::Summarization => "summarization",
        TaskKind::Simplification => "simplification",
        TaskKind::Bbh => "bbh",
        TaskKind::SyntheticKeywords => "synthetic-keywords",
        TaskKind::SyntheticTarget => "synthetic-target",
    }
}
