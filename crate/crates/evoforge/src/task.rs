//! Task specifications: dataset, rendering template, label parsing, and the
//! metric aggregation that together implement the dev-set fitness function.
//!
//! Dataset layout on disk: `<task>/{train,dev,test}.jsonl` plus a held-out
//! `demo.jsonl` pool for demonstrations and an optional `task.json`
//! descriptor (`description`, `baseline_prompt`, `label_space`, `kind`).
//! Two-column TSV is accepted for classification splits.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::{MetricId, TaskConfig, TaskKind};
use crate::error::{EvoError, TaskError};
use crate::fitness::FitnessFunction;
use crate::metrics::{accuracy, rouge_l, rouge_n, sari, Tokenizer};
use crate::prompt::{Prompt, Score};
use crate::provider::{ChatMessage, CompletionRequest, Provider, Purpose};
use crate::seed::SeedPath;

/// Designated outcome for completions no label could be parsed from.
/// It is a value, not an error; it simply never matches a gold label.
pub const UNPARSED: &str = "<unparsed>";

/// One dataset row. Classification and BBH rows carry `label`; generation
/// rows carry `references`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub input: String,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub references: Vec<String>,
}

impl Example {
    /// Output text a demonstration should show: the first reference when one
    /// exists (chain-of-thought demos carry the worked answer there), else the
    /// bare label.
    pub fn gold_output(&self) -> Option<&str> {
        self.references
            .first()
            .map(|s| s.as_str())
            .or(self.label.as_deref())
    }
}

/// Rendering scheme for one task: the scored body, its trailing completion
/// anchor, and the shape of one demonstration block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTemplate {
    /// Contains `<PROMPT>` and `<INPUT>` exactly once each (plus `<DESC>`
    /// for BBH) and ends with `completion_anchor`.
    pub body: String,
    pub completion_anchor: String,
    /// Demonstration block with `<INPUT>` and `<OUTPUT>` placeholders.
    pub demo_body: String,
}

impl TaskTemplate {
    pub fn new(
        body: impl Into<String>,
        completion_anchor: impl Into<String>,
        demo_body: impl Into<String>,
    ) -> Result<TaskTemplate, EvoError> {
        let t = TaskTemplate {
            body: body.into(),
            completion_anchor: completion_anchor.into(),
            demo_body: demo_body.into(),
        };
        for ph in ["<PROMPT>", "<INPUT>"] {
            let count = t.body.matches(ph).count();
            if count != 1 {
                return Err(TaskError::Template(format!(
                    "body must contain {ph} exactly once, found {count}"
                ))
                .into());
            }
        }
        if !t.body.trim_end().ends_with(t.completion_anchor.trim_end()) {
            return Err(TaskError::Template(format!(
                "body must end with the completion anchor {:?}",
                t.completion_anchor
            ))
            .into());
        }
        Ok(t)
    }

    pub fn for_kind(kind: TaskKind) -> TaskTemplate {
        let t = match kind {
            TaskKind::Classification => TaskTemplate {
                body: "Below is an instruction that describes a task, paired with an input that provides further context. Write a response that appropriately completes the request.\n\n### Instruction:\n<PROMPT>\n\n### Input:\n<INPUT>\n\n### Response:".into(),
                completion_anchor: "### Response:".into(),
                demo_body: "### Input:\n<INPUT>\n\n### Response:\n<OUTPUT>".into(),
            },
            TaskKind::Summarization => TaskTemplate {
                body: "<PROMPT>\n<INPUT>\nTL;DR:".into(),
                completion_anchor: "TL;DR:".into(),
                demo_body: "<INPUT>\nTL;DR: <OUTPUT>".into(),
            },
            TaskKind::Simplification => TaskTemplate {
                body: "<PROMPT>\n<INPUT>\nThe simplification of the sentence is".into(),
                completion_anchor: "The simplification of the sentence is".into(),
                demo_body: "<INPUT>\nThe simplification of the sentence is <OUTPUT>".into(),
            },
            TaskKind::Bbh => TaskTemplate {
                body: "<DESC>\nQ: <INPUT>\nA: <PROMPT>".into(),
                completion_anchor: "A: <PROMPT>".into(),
                demo_body: "Q: <INPUT>\nA: <OUTPUT>".into(),
            },
            TaskKind::SyntheticKeywords | TaskKind::SyntheticTarget => TaskTemplate {
                body: "<PROMPT>\n<INPUT>".into(),
                completion_anchor: "<INPUT>".into(),
                demo_body: "Input: <INPUT>\nOutput: <OUTPUT>".into(),
            },
        };
        debug_assert!(TaskTemplate::new(
            t.body.clone(),
            t.completion_anchor.clone(),
            t.demo_body.clone()
        )
        .is_ok());
        t
    }
}

/// Optional per-dataset descriptor, `<task>/task.json`.
#[derive(Debug, Clone, Default, Deserialize)]
struct TaskDescriptor {
    #[serde(default)]
    kind: Option<TaskKind>,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    baseline_prompt: Option<String>,
    #[serde(default)]
    label_space: Vec<String>,
}

/// A fully loaded task: splits, template, label space, metric, and the
/// pre-built demonstration block.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub task_id: String,
    pub kind: TaskKind,
    pub template: TaskTemplate,
    pub label_space: Vec<String>,
    pub metric: MetricId,
    pub shots: usize,
    pub tokenizer: Tokenizer,
    pub description: Option<String>,
    pub baseline_prompt: Option<String>,
    pub demonstration: String,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
}

impl TaskSpec {
    /// Loads a dataset task. Dev subsampling and demonstration draws are
    /// seeded by `run_seed`, so one config+seed pins the whole dev set.
    pub fn load(config: &TaskConfig, run_seed: u64) -> Result<TaskSpec, EvoError> {
        if config.kind.is_synthetic() {
            return Err(TaskError::Dataset(
                "synthetic tasks have no dataset directory".into(),
            )
            .into());
        }
        let dir = config.data_dir.as_deref().ok_or_else(|| {
            EvoError::from(TaskError::Dataset("task.data_dir is not set".into()))
        })?;
        let descriptor = read_descriptor(dir)?;
        let kind = descriptor.kind.unwrap_or(config.kind);
        if kind.is_synthetic() {
            return Err(TaskError::Dataset(format!(
                "descriptor in {} names a synthetic kind",
                dir.display()
            ))
            .into());
        }
        if kind == TaskKind::Bbh && descriptor.description.is_none() {
            return Err(TaskError::Dataset(format!(
                "{} needs a task.json descriptor with a description",
                dir.display()
            ))
            .into());
        }

        let mut dev = read_split(dir, "dev")?
            .ok_or_else(|| missing_split(dir, "dev"))?;
        let test = read_split(dir, "test")?.unwrap_or_default();
        let demo = read_split(dir, "demo")?.unwrap_or_default();

        validate_rows(kind, &dev, "dev")?;
        validate_rows(kind, &test, "test")?;
        validate_rows(kind, &demo, "demo")?;
        check_demo_disjoint(&demo, &dev, &test)?;

        let label_space = if descriptor.label_space.is_empty() {
            derive_label_space(kind, &dev, &demo)
        } else {
            descriptor.label_space.clone()
        };
        if matches!(kind, TaskKind::Classification | TaskKind::Bbh) {
            if label_space.is_empty() {
                return Err(TaskError::Dataset(format!(
                    "{}: no label space (none declared, none derivable)",
                    dir.display()
                ))
                .into());
            }
            check_labels_in_space(&dev, &label_space, "dev")?;
            check_labels_in_space(&demo, &label_space, "demo")?;
        }

        let dev_size = {
            let mut c = config.clone();
            c.kind = kind;
            c.dev_size = config.dev_size;
            c.resolved_dev_size()
        };
        if dev_size > 0 && dev.len() > dev_size {
            dev = subsample(dev, dev_size, run_seed);
        }

        let shots = config.shots.unwrap_or(match kind {
            TaskKind::Bbh => 3,
            _ => 0,
        });
        let template = TaskTemplate::for_kind(kind);
        let demonstration = build_demonstration(
            kind,
            &template,
            &label_space,
            shots,
            &demo,
            run_seed,
        )?;

        Ok(TaskSpec {
            task_id: config.task_id(),
            kind,
            template,
            label_space,
            metric: {
                let mut c = config.clone();
                c.kind = kind;
                c.resolved_metric()
            },
            shots,
            tokenizer: config.tokenizer,
            description: descriptor.description,
            baseline_prompt: descriptor.baseline_prompt,
            demonstration,
            dev,
            test,
        })
    }

    pub fn split(&self, name: &str) -> Result<&[Example], EvoError> {
        match name {
            "dev" => Ok(&self.dev),
            "test" if !self.test.is_empty() => Ok(&self.test),
            "test" => Err(TaskError::Dataset(format!(
                "{}: test split is empty or missing",
                self.task_id
            ))
            .into()),
            other => Err(TaskError::Dataset(format!(
                "unknown split {other:?}; expected dev or test"
            ))
            .into()),
        }
    }

    /// Metric aggregate over parallel (completion, example) pairs.
    pub fn aggregate(&self, completions: &[String], examples: &[Example]) -> Result<Score, EvoError> {
        debug_assert_eq!(completions.len(), examples.len());
        let value = match self.metric {
            MetricId::Accuracy => {
                let preds: Vec<String> = completions
                    .iter()
                    .map(|c| parse_label(c, &self.label_space))
                    .collect();
                let golds: Vec<String> = examples
                    .iter()
                    .map(|e| e.label.clone().unwrap_or_default())
                    .collect();
                accuracy(&preds, &golds)?
            }
            MetricId::Rouge1 => self.mean_over(completions, examples, |c, e| {
                rouge_n(&self.tokenizer, c, &e.references, 1)
            }),
            MetricId::Rouge2 => self.mean_over(completions, examples, |c, e| {
                rouge_n(&self.tokenizer, c, &e.references, 2)
            }),
            MetricId::RougeL => self.mean_over(completions, examples, |c, e| {
                rouge_l(&self.tokenizer, c, &e.references)
            }),
            MetricId::RougeAvg => self.mean_over(completions, examples, |c, e| {
                (rouge_n(&self.tokenizer, c, &e.references, 1)
                    + rouge_n(&self.tokenizer, c, &e.references, 2)
                    + rouge_l(&self.tokenizer, c, &e.references))
                    / 3.0
            }),
            MetricId::Sari => self.mean_over(completions, examples, |c, e| {
                sari(&self.tokenizer, &e.input, c, &e.references)
            }),
        };
        Score::new(value)
    }

    fn mean_over(
        &self,
        completions: &[String],
        examples: &[Example],
        f: impl Fn(&str, &Example) -> f64,
    ) -> f64 {
        if completions.is_empty() {
            return 0.0;
        }
        let sum: f64 = completions
            .iter()
            .zip(examples)
            .map(|(c, e)| f(c, e))
            .sum();
        sum / completions.len() as f64
    }
}

fn missing_split(dir: &Path, name: &str) -> EvoError {
    TaskError::Dataset(format!(
        "{}: missing {name}.jsonl (or {name}.tsv)",
        dir.display()
    ))
    .into()
}

fn read_descriptor(dir: &Path) -> Result<TaskDescriptor, EvoError> {
    let path = dir.join("task.json");
    if !path.exists() {
        return Ok(TaskDescriptor::default());
    }
    let raw = fs::read_to_string(&path)
        .map_err(|e| EvoError::Io(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&raw)
        .map_err(|e| TaskError::Dataset(format!("{}: {e}", path.display())).into())
}

fn read_split(dir: &Path, name: &str) -> Result<Option<Vec<Example>>, EvoError> {
    let jsonl = dir.join(format!("{name}.jsonl"));
    if jsonl.exists() {
        return read_jsonl(&jsonl).map(Some);
    }
    let tsv = dir.join(format!("{name}.tsv"));
    if tsv.exists() {
        return read_tsv(&tsv).map(Some);
    }
    Ok(None)
}

fn read_jsonl(path: &PathBuf) -> Result<Vec<Example>, EvoError> {
    let raw = fs::read_to_string(path)
        .map_err(|e| EvoError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example = serde_json::from_str(line).map_err(|e| {
            EvoError::from(TaskError::Dataset(format!(
                "{}:{}: {e}",
                path.display(),
                lineno + 1
            )))
        })?;
        rows.push(ex);
    }
    Ok(rows)
}

fn read_tsv(path: &PathBuf) -> Result<Vec<Example>, EvoError> {
    let raw = fs::read_to_string(path)
        .map_err(|e| EvoError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (input, label) = line.split_once('\t').ok_or_else(|| {
            EvoError::from(TaskError::Dataset(format!(
                "{}:{}: expected two tab-separated columns",
                path.display(),
                lineno + 1
            )))
        })?;
        rows.push(Example {
            input: input.to_string(),
            label: Some(label.trim().to_string()),
            references: Vec::new(),
        });
    }
    Ok(rows)
}

fn validate_rows(kind: TaskKind, rows: &[Example], split: &str) -> Result<(), EvoError> {
    for (i, ex) in rows.iter().enumerate() {
        if ex.input.trim().is_empty() {
            return Err(TaskError::Dataset(format!("{split} row {i}: empty input")).into());
        }
        match kind {
            TaskKind::Classification | TaskKind::Bbh => {
                if ex.gold_output().is_none() {
                    return Err(TaskError::Dataset(format!(
                        "{split} row {i}: needs a label (or references for chain-of-thought demos)"
                    ))
                    .into());
                }
            }
            TaskKind::Summarization | TaskKind::Simplification => {
                if ex.references.is_empty() {
                    return Err(TaskError::Dataset(format!(
                        "{split} row {i}: generation rows need at least one reference"
                    ))
                    .into());
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Demonstration examples must never appear in the scored splits.
fn check_demo_disjoint(demo: &[Example], dev: &[Example], test: &[Example]) -> Result<(), EvoError> {
    let scored: BTreeSet<&str> = dev
        .iter()
        .chain(test.iter())
        .map(|e| e.input.as_str())
        .collect();
    for ex in demo {
        if scored.contains(ex.input.as_str()) {
            return Err(TaskError::Dataset(format!(
                "demo example leaks into dev/test: {:?}",
                truncate(&ex.input, 60)
            ))
            .into());
        }
    }
    Ok(())
}

fn truncate(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        s.to_string()
    } else {
        let cut: String = s.chars().take(max).collect();
        format!("{cut}…")
    }
}

/// Distinct labels in first-seen order across dev then demo rows.
fn derive_label_space(kind: TaskKind, dev: &[Example], demo: &[Example]) -> Vec<String> {
    if !matches!(kind, TaskKind::Classification | TaskKind::Bbh) {
        return Vec::new();
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for ex in dev.iter().chain(demo.iter()) {
        if let Some(label) = &ex.label {
            if seen.insert(label.clone()) {
                out.push(label.clone());
            }
        }
    }
    out
}

fn check_labels_in_space(
    rows: &[Example],
    label_space: &[String],
    split: &str,
) -> Result<(), EvoError> {
    for (i, ex) in rows.iter().enumerate() {
        if let Some(label) = &ex.label {
            if !label_space.iter().any(|l| l == label) {
                return Err(TaskError::Dataset(format!(
                    "{split} row {i}: label {label:?} is outside the label space"
                ))
                .into());
            }
        }
    }
    Ok(())
}

/// The demonstration block prepended to every rendered prompt.
///
/// Classification: one example per label, in label-space order, each drawn
/// from the demo pool by seed. BBH: the first `shots` demo rows as a fixed
/// chain-of-thought block. Zero-shot tasks: empty.
pub fn build_demonstration(
    kind: TaskKind,
    template: &TaskTemplate,
    label_space: &[String],
    shots: usize,
    demo_pool: &[Example],
    run_seed: u64,
) -> Result<String, EvoError> {
    let blocks: Vec<String> = match kind {
        TaskKind::Classification => {
            let mut blocks = Vec::with_capacity(label_space.len());
            for (li, label) in label_space.iter().enumerate() {
                let pool: Vec<&Example> = demo_pool
                    .iter()
                    .filter(|e| e.label.as_deref() == Some(label.as_str()))
                    .collect();
                if pool.is_empty() {
                    return Err(TaskError::MissingDemoLabel(label.clone()).into());
                }
                let mut rng = SeedPath::new(run_seed).child("demo").child(li).rng();
                let ex = pool[rand::Rng::gen_range(&mut rng, 0..pool.len())];
                blocks.push(render_demo(template, ex)?);
            }
            blocks
        }
        TaskKind::Bbh if shots > 0 => {
            if demo_pool.len() < shots {
                return Err(TaskError::Dataset(format!(
                    "demo pool holds {} examples, {shots}-shot demonstrations need {shots}",
                    demo_pool.len()
                ))
                .into());
            }
            demo_pool[..shots]
                .iter()
                .map(|ex| render_demo(template, ex))
                .collect::<Result<_, _>>()?
        }
        _ => Vec::new(),
    };
    Ok(blocks.join("\n\n"))
}

fn render_demo(template: &TaskTemplate, ex: &Example) -> Result<String, EvoError> {
    let output = ex.gold_output().ok_or_else(|| {
        EvoError::from(TaskError::Dataset(
            "demo example has neither label nor references".into(),
        ))
    })?;
    Ok(template
        .demo_body
        .replace("<INPUT>", &ex.input)
        .replace("<OUTPUT>", output))
}

/// Demonstration plus the task body with PROMPT/INPUT (and DESC) filled in;
/// the result ends at the completion anchor.
pub fn render_task_prompt(
    task: &TaskSpec,
    prompt: &Prompt,
    example: &Example,
) -> Result<String, EvoError> {
    let mut body = task.template.body.clone();
    if body.contains("<DESC>") {
        let desc = task.description.as_deref().ok_or_else(|| {
            EvoError::from(TaskError::Template(
                "template uses <DESC> but the task has no description".into(),
            ))
        })?;
        body = body.replace("<DESC>", desc);
    }
    body = body.replace("<PROMPT>", &prompt.text);
    body = body.replace("<INPUT>", &example.input);
    if task.demonstration.is_empty() {
        Ok(body)
    } else {
        Ok(format!("{}\n\n{}", task.demonstration, body))
    }
}

/// Case-insensitive exact match of the trimmed first line against the label
/// space; else the first label appearing as a whole word anywhere in the
/// completion; else [`UNPARSED`].
pub fn parse_label(completion: &str, label_space: &[String]) -> String {
    let first_line = completion.trim().lines().next().unwrap_or("").trim();
    let first_lower = first_line.to_lowercase();
    for label in label_space {
        if first_lower == label.to_lowercase() {
            return label.clone();
        }
    }
    let completion_lower = completion.to_lowercase();
    for label in label_space {
        if contains_whole_word(&completion_lower, &label.to_lowercase()) {
            return label.clone();
        }
    }
    UNPARSED.to_string()
}

fn contains_whole_word(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let mut start = 0;
    while let Some(pos) = haystack[start..].find(needle) {
        let at = start + pos;
        let end = at + needle.len();
        let left_ok = at == 0
            || !haystack[..at]
                .chars()
                .next_back()
                .is_some_and(|c| c.is_alphanumeric());
        let right_ok = end == haystack.len()
            || !haystack[end..]
                .chars()
                .next()
                .is_some_and(|c| c.is_alphanumeric());
        if left_ok && right_ok {
            return true;
        }
        start = at + needle.len().max(1);
    }
    false
}

/// Renders and completes every example of a split, then aggregates with the
/// task metric. Evaluation sampling is greedy (temperature 0).
pub fn score_prompt_on(
    task: &TaskSpec,
    prompt: &Prompt,
    examples: &[Example],
    provider: &Provider,
    model: &str,
    max_tokens: u32,
) -> Result<Score, EvoError> {
    let mut completions = Vec::with_capacity(examples.len());
    for example in examples {
        let rendered = render_task_prompt(task, prompt, example)?;
        let request = CompletionRequest {
            model: model.to_string(),
            messages: vec![ChatMessage::user(rendered)],
            temperature: 0.0,
            top_p: 1.0,
            max_tokens,
            purpose: Purpose::TaskEval,
        };
        completions.push(provider.complete(&request)?);
    }
    task.aggregate(&completions, examples)
}

/// Dev-set fitness backed by a provider.
pub struct LlmFitness {
    pub task: Arc<TaskSpec>,
    pub provider: Arc<Provider>,
    pub model: String,
    pub max_tokens: u32,
}

impl FitnessFunction for LlmFitness {
    fn evaluate(&self, prompt: &Prompt) -> Result<Score, EvoError> {
        score_prompt_on(
            &self.task,
            prompt,
            &self.task.dev,
            &self.provider,
            &self.model,
            self.max_tokens,
        )
    }

    fn dev_size(&self) -> usize {
        self.task.dev.len()
    }
}

/// Subsample to `k` rows by seed, preserving original row order.
fn subsample(rows: Vec<Example>, k: usize, run_seed: u64) -> Vec<Example> {
    let mut rng = SeedPath::new(run_seed).child("dev-subsample").rng();
    let mut picked = rand::seq::index::sample(&mut rng, rows.len(), k).into_vec();
    picked.sort_unstable();
    let keep: BTreeSet<usize> = picked.into_iter().collect();
    rows.into_iter()
        .enumerate()
        .filter_map(|(i, ex)| keep.contains(&i).then_some(ex))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{IdGen, Origin};
    use std::io::Write as _;

    fn prompt(text: &str) -> Prompt {
        Prompt::new(
            IdGen::new().next_id(),
            text.to_string(),
            Origin::Manual,
            vec![],
        )
        .unwrap()
    }

    fn classification_dir(dev_rows: usize) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let mut dev = fs::File::create(dir.path().join("dev.jsonl")).unwrap();
        for i in 0..dev_rows {
            let label = if i % 2 == 0 { "positive" } else { "negative" };
            writeln!(
                dev,
                r#"{{"input": "dev sentence {i}", "label": "{label}"}}"#
            )
            .unwrap();
        }
        let mut test = fs::File::create(dir.path().join("test.jsonl")).unwrap();
        writeln!(test, r#"{{"input": "test sentence", "label": "positive"}}"#).unwrap();
        let mut demo = fs::File::create(dir.path().join("demo.jsonl")).unwrap();
        writeln!(demo, r#"{{"input": "a delight", "label": "positive"}}"#).unwrap();
        writeln!(demo, r#"{{"input": "a bore", "label": "negative"}}"#).unwrap();
        fs::write(
            dir.path().join("task.json"),
            r#"{"label_space": ["positive", "negative"]}"#,
        )
        .unwrap();
        dir
    }

    fn load(dir: &tempfile::TempDir, kind: TaskKind) -> TaskSpec {
        let config = TaskConfig {
            kind,
            data_dir: Some(dir.path().to_path_buf()),
            metric: None,
            dev_size: None,
            shots: None,
            tokenizer: Tokenizer::default(),
            keywords: vec![],
            target_text: None,
        };
        TaskSpec::load(&config, 7).unwrap()
    }

    #[test]
    fn classification_demo_has_one_block_per_label_in_order() {
        let dir = classification_dir(4);
        let task = load(&dir, TaskKind::Classification);
        let pos = task.demonstration.find("a delight").unwrap();
        let neg = task.demonstration.find("a bore").unwrap();
        assert!(pos < neg, "label-space order");
        assert_eq!(task.demonstration.matches("### Response:").count(), 2);
    }

    #[test]
    fn rendered_prompt_embeds_demonstration_prompt_and_input() {
        let dir = classification_dir(2);
        let task = load(&dir, TaskKind::Classification);
        let p = prompt("Classify the sentiment.");
        let text = render_task_prompt(&task, &p, &task.dev[0]).unwrap();
        assert!(text.starts_with("### Input:\na delight"), "{text}");
        assert!(text.contains("Below is an instruction that describes a task"));
        let ip = text.rfind("Classify the sentiment.").unwrap();
        let ix = text.rfind("dev sentence 0").unwrap();
        assert!(ip < ix, "prompt before input");
        assert!(text.trim_end().ends_with("### Response:"));
    }

    #[test]
    fn generation_templates_end_at_their_anchors() {
        let t = TaskTemplate::for_kind(TaskKind::Simplification);
        assert!(t.body.ends_with("The simplification of the sentence is"));
        let t = TaskTemplate::for_kind(TaskKind::Summarization);
        assert!(t.body.ends_with("TL;DR:"));
    }

    #[test]
    fn bbh_render_follows_desc_q_a_shape() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("task.json"),
            r#"{"description": "Count the objects.", "baseline_prompt": "Let's think step by step.", "label_space": ["1", "2", "3"]}"#,
        )
        .unwrap();
        let mut dev = fs::File::create(dir.path().join("dev.jsonl")).unwrap();
        writeln!(dev, r#"{{"input": "one drum and one flute", "label": "2"}}"#).unwrap();
        let mut demo = fs::File::create(dir.path().join("demo.jsonl")).unwrap();
        for i in 0..3 {
            writeln!(
                demo,
                r#"{{"input": "demo question {i}", "label": "1", "references": ["Count: the answer is 1."]}}"#
            )
            .unwrap();
        }
        let task = load(&dir, TaskKind::Bbh);
        assert_eq!(task.shots, 3);
        assert_eq!(task.demonstration.matches("Q: demo question").count(), 3);
        // demos favor the chain-of-thought reference over the bare label
        assert!(task.demonstration.contains("the answer is 1."));
        let text = render_task_prompt(&task, &prompt("Let's count."), &task.dev[0]).unwrap();
        assert!(text.contains("Count the objects.\nQ: one drum and one flute\nA: Let's count."));
    }

    #[test]
    fn zero_shot_generation_has_empty_demonstration() {
        let dir = tempfile::tempdir().unwrap();
        let mut dev = fs::File::create(dir.path().join("dev.jsonl")).unwrap();
        writeln!(
            dev,
            r#"{{"input": "a long sentence", "references": ["short"]}}"#
        )
        .unwrap();
        let task = load(&dir, TaskKind::Summarization);
        assert_eq!(task.demonstration, "");
        let text = render_task_prompt(&task, &prompt("Summarize."), &task.dev[0]).unwrap();
        assert_eq!(text, "Summarize.\na long sentence\nTL;DR:");
    }

    #[test]
    fn missing_demo_label_is_an_error() {
        let dir = classification_dir(2);
        fs::write(
            dir.path().join("demo.jsonl"),
            r#"{"input": "a delight", "label": "positive"}"#,
        )
        .unwrap();
        let config = TaskConfig {
            kind: TaskKind::Classification,
            data_dir: Some(dir.path().to_path_buf()),
            metric: None,
            dev_size: None,
            shots: None,
            tokenizer: Tokenizer::default(),
            keywords: vec![],
            target_text: None,
        };
        let err = TaskSpec::load(&config, 7).unwrap_err().to_string();
        assert!(err.contains("negative"), "{err}");
    }

    #[test]
    fn demo_leak_into_dev_is_rejected() {
        let dir = classification_dir(2);
        let mut demo = fs::OpenOptions::new()
            .append(true)
            .open(dir.path().join("demo.jsonl"))
            .unwrap();
        writeln!(demo, r#"{{"input": "dev sentence 0", "label": "positive"}}"#).unwrap();
        let config = TaskConfig {
            kind: TaskKind::Classification,
            data_dir: Some(dir.path().to_path_buf()),
            metric: None,
            dev_size: None,
            shots: None,
            tokenizer: Tokenizer::default(),
            keywords: vec![],
            target_text: None,
        };
        let err = TaskSpec::load(&config, 7).unwrap_err().to_string();
        assert!(err.contains("leak"), "{err}");
    }

    #[test]
    fn parse_label_first_line_exact_beats_fallback() {
        let space = vec!["positive".to_string(), "negative".to_string()];
        assert_eq!(parse_label("positive", &space), "positive");
        assert_eq!(parse_label("  Negative \nmore text", &space), "negative");
        assert_eq!(
            parse_label("The answer is Negative.", &space),
            "negative",
            "whole-word fallback"
        );
        assert_eq!(parse_label("maybe", &space), UNPARSED);
        // substring inside a longer word does not count
        assert_eq!(parse_label("unpositively vague", &space), UNPARSED);
    }

    #[test]
    fn parse_label_handles_bracketed_choices() {
        let space = vec!["(A)".to_string(), "(B)".to_string()];
        assert_eq!(parse_label("reasoning first. The answer is (B).", &space), "(B)");
    }

    #[test]
    fn dev_subsampling_is_seeded_and_order_preserving() {
        let dir = classification_dir(12);
        let config = TaskConfig {
            kind: TaskKind::Classification,
            data_dir: Some(dir.path().to_path_buf()),
            metric: None,
            dev_size: Some(5),
            shots: None,
            tokenizer: Tokenizer::default(),
            keywords: vec![],
            target_text: None,
        };
        let a = TaskSpec::load(&config, 7).unwrap();
        let b = TaskSpec::load(&config, 7).unwrap();
        let c = TaskSpec::load(&config, 8).unwrap();
        assert_eq!(a.dev.len(), 5);
        assert_eq!(
            a.dev.iter().map(|e| &e.input).collect::<Vec<_>>(),
            b.dev.iter().map(|e| &e.input).collect::<Vec<_>>()
        );
        assert_ne!(
            a.dev.iter().map(|e| &e.input).collect::<Vec<_>>(),
            c.dev.iter().map(|e| &e.input).collect::<Vec<_>>()
        );
        // original dataset order is preserved within the subsample
        let indices: Vec<usize> = a
            .dev
            .iter()
            .map(|e| {
                e.input
                    .rsplit(' ')
                    .next()
                    .unwrap()
                    .parse::<usize>()
                    .unwrap()
            })
            .collect();
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        assert_eq!(indices, sorted);
    }

    #[test]
    fn tsv_classification_split_loads_and_derives_labels() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("dev.tsv"),
            "a fine film\tpositive\na dull film\tnegative\n",
        )
        .unwrap();
        fs::write(
            dir.path().join("demo.tsv"),
            "a joy\tpositive\na slog\tnegative\n",
        )
        .unwrap();
        let task = load(&dir, TaskKind::Classification);
        assert_eq!(task.dev.len(), 2);
        assert_eq!(task.dev[1].label.as_deref(), Some("negative"));
        assert_eq!(task.label_space, vec!["positive", "negative"]);
    }

    #[test]
    fn aggregate_accuracy_counts_unparsed_as_wrong() {
        let dir = classification_dir(2);
        let task = load(&dir, TaskKind::Classification);
        let completions = vec!["positive".to_string(), "gibberish".to_string()];
        let score = task.aggregate(&completions, &task.dev).unwrap();
        assert_eq!(score.value(), 0.5);
    }

    #[test]
    fn aggregate_rouge_avg_rewards_echoing_the_reference() {
        let dir = tempfile::tempdir().unwrap();
        let mut dev = fs::File::create(dir.path().join("dev.jsonl")).unwrap();
        writeln!(
            dev,
            r#"{{"input": "long text here", "references": ["the short gist"]}}"#
        )
        .unwrap();
        let task = load(&dir, TaskKind::Summarization);
        let score = task
            .aggregate(&["the short gist".to_string()], &task.dev)
            .unwrap();
        assert!((score.value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_split_is_an_error() {
        let dir = classification_dir(2);
        let task = load(&dir, TaskKind::Classification);
        assert!(task.split("dev").is_ok());
        assert!(task.split("test").is_ok());
        assert!(task.split("validation").is_err());
    }
}
