//! Turns a validated [`RunConfig`] into live components and drives a full
//! run, writing every artifact under `<out_dir>/<run_id>/`:
//!
//! - `config.json`: the exact configuration that produced the run
//! - `cache.jsonl`: completion cache (when enabled); reruns replay it
//! - `ledger.jsonl`: one record per iteration, including record 0
//! - `best_prompt.txt`, `curves.csv`, `diversity.csv`, `summary.json`

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::{EngineKind, MetricId, OperatorMode, RunConfig, TaskKind};
use crate::error::EvoError;
use crate::fitness::{CachedFitness, FitnessFunction, SyntheticFitness};
use crate::ledger::{
    convergence_summary, diversity_stats, read_ledger, write_curves_csv, write_diversity_csv,
    IterationRecord, LedgerWriter,
};
use crate::operator::{EvolutionOperator, LlmOperator, SimulatedOperator};
use crate::optimizer::{initialize_population, run_optimization};
use crate::prompt::{Prompt, IdGen};
use crate::provider::{expected_requests, BudgetSnapshot, HttpTransport, Provider, Transport};
use crate::seed::SeedPath;
use crate::sim::SyntheticTask;
use crate::task::{score_prompt_on, LlmFitness, TaskSpec};
use crate::templates::TemplateSet;

/// A fully wired run: config checked, directory created, provider and
/// operator constructed, task loaded. Build one with [`prepare`].
pub struct PreparedRun {
    pub config: RunConfig,
    pub run_id: String,
    pub run_dir: PathBuf,
    provider: Option<Arc<Provider>>,
    operator: Box<dyn EvolutionOperator>,
    fitness: CachedFitness,
    task: Option<Arc<TaskSpec>>,
    ids: IdGen,
    path: SeedPath,
}

fn write_text(path: &Path, text: &str) -> Result<(), EvoError> {
    fs::write(path, text).map_err(|e| EvoError::Io(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, EvoError> {
    fs::read_to_string(path).map_err(|e| EvoError::Io(format!("{}: {e}", path.display())))
}

fn simulated_vocabulary(config: &RunConfig) -> Result<Vec<String>, EvoError> {
    let mut vocabulary = config.operator.vocabulary.clone();
    if let Some(file) = &config.operator.vocabulary_file {
        for line in read_text(file)?.lines() {
            let word = line.trim();
            if !word.is_empty() {
                vocabulary.push(word.to_string());
            }
        }
    }
    Ok(vocabulary)
}

/// Validates the config, creates the run directory, and wires everything up.
/// `transport` overrides the HTTP transport (tests inject canned ones); pass
/// `None` to talk to the configured endpoint.
pub fn prepare(
    config: RunConfig,
    transport: Option<Box<dyn Transport>>,
) -> Result<PreparedRun, EvoError> {
    config.validate()?;
    let run_id = config.run_id();
    let run_dir = config.out_dir.join(&run_id);
    fs::create_dir_all(&run_dir).map_err(|e| EvoError::Io(format!("{}: {e}", run_dir.display())))?;
    write_text(
        &run_dir.join("config.json"),
        &format!("{}\n", serde_json::to_string_pretty(&config).expect("config serializes")),
    )?;

    let needs_provider =
        config.operator.mode == OperatorMode::Llm || !config.task.kind.is_synthetic();
    let provider = if needs_provider {
        let transport = match transport {
            Some(t) => t,
            None => Box::new(HttpTransport::new(&config.provider)?) as Box<dyn Transport>,
        };
        let cache_path = run_dir.join("cache.jsonl");
        Some(Arc::new(Provider::new(
            &config.provider,
            transport,
            Some(&cache_path),
        )?))
    } else {
        None
    };

    let operator: Box<dyn EvolutionOperator> = match config.operator.mode {
        OperatorMode::Simulated => Box::new(SimulatedOperator::new(
            simulated_vocabulary(&config)?,
            config.operator.mutation_rate,
        )?),
        OperatorMode::Llm => {
            let templates = match &config.operator.templates_dir {
                Some(dir) => TemplateSet::from_dir(dir)?,
                None => TemplateSet::builtin(),
            };
            let provider = provider.clone().expect("llm mode implies a provider");
            Box::new(LlmOperator::new(
                provider,
                templates,
                config.provider.model.clone(),
                config.provider.operator_max_tokens,
                config.operator.max_retries,
            ))
        }
    };

    let run_seed = config.optimizer.rng_seed;
    let (task, inner): (Option<Arc<TaskSpec>>, Box<dyn FitnessFunction>) = match config.task.kind {
        TaskKind::SyntheticKeywords => (
            None,
            Box::new(SyntheticFitness {
                task: SyntheticTask::KeywordCoverage {
                    keywords: config.task.keywords.clone(),
                },
            }),
        ),
        TaskKind::SyntheticTarget => (
            None,
            Box::new(SyntheticFitness {
                task: SyntheticTask::TargetDistance {
                    target: config.task.target_text.clone().unwrap_or_default(),
                },
            }),
        ),
        _ => {
            let spec = Arc::new(TaskSpec::load(&config.task, run_seed)?);
            let fitness = LlmFitness {
                task: spec.clone(),
                provider: provider.clone().expect("dataset tasks need a provider"),
                model: config.provider.model.clone(),
                max_tokens: config.provider.eval_max_tokens,
            };
            (Some(spec), Box::new(fitness))
        }
    };
    let task_id = config.task.task_id();
    let fitness = if config.provider.cache {
        CachedFitness::new(inner, task_id)
    } else {
        CachedFitness::disabled(inner, task_id)
    };

    Ok(PreparedRun {
        run_id,
        run_dir,
        provider,
        operator,
        fitness,
        task,
        ids: IdGen::new(),
        path: SeedPath::new(run_seed),
        config,
    })
}

/// What `summary.json` holds and what a finished run returns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub task_id: String,
    pub engine: EngineKind,
    pub metric: MetricId,
    pub population_size: usize,
    pub iterations: usize,
    pub dev_size: usize,
    pub best_prompt_id: String,
    pub best_score: f64,
    pub converged_at: Option<usize>,
    pub expected_requests: u64,
    pub budget: BudgetSnapshot,
    pub score_cache_hits: u64,
}

/// Result of scoring one prompt on one split.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub split: String,
    pub examples: usize,
    pub metric: MetricId,
    pub score: f64,
}

impl PreparedRun {
    /// Starting prompts: the inline list, then lines of `manual_prompts_file`,
    /// falling back to the task's baseline prompt when both are empty.
    pub fn manual_prompts(&self) -> Result<Vec<Prompt>, EvoError> {
        let mut texts: Vec<String> = self.config.manual_prompts.clone();
        if let Some(file) = &self.config.manual_prompts_file {
            for line in read_text(file)?.lines() {
                let line = line.trim();
                if !line.is_empty() {
                    texts.push(line.to_string());
                }
            }
        }
        if texts.is_empty() {
            if let Some(baseline) = self.task.as_ref().and_then(|t| t.baseline_prompt.clone()) {
                texts.push(baseline);
            }
        }
        if texts.is_empty() {
            return Err(EvoError::config(
                "manual_prompts: at least one starting prompt is required \
                 (inline, via manual_prompts_file, or a baseline_prompt in task.json)",
            ));
        }
        texts
            .into_iter()
            .map(|t| Prompt::manual(self.ids.next_id(), t))
            .collect()
    }

    fn budget(&self) -> BudgetSnapshot {
        self.provider
            .as_ref()
            .map(|p| p.snapshot())
            .unwrap_or_default()
    }

    /// Runs the full optimization and writes every artifact.
    pub fn run(&self) -> Result<RunReport, EvoError> {
        let manual = self.manual_prompts()?;
        let init = initialize_population(
            &manual,
            &self.config.optimizer,
            self.operator.as_ref(),
            &self.fitness,
            &self.ids,
            &self.path,
        )?;

        let mut ledger = LedgerWriter::create(&self.run_dir.join("ledger.jsonl"))?;
        let outcome = run_optimization(
            &self.config.optimizer,
            init,
            self.operator.as_ref(),
            &self.fitness,
            &self.ids,
            &self.path,
            &|| self.budget(),
            &mut |record| ledger.append(record),
        )?;

        write_text(
            &self.run_dir.join("best_prompt.txt"),
            &format!("{}\n", outcome.best.prompt.text),
        )?;
        write_curves_csv(&self.run_dir.join("curves.csv"), &outcome.records)?;
        write_diversity_csv(
            &self.run_dir.join("diversity.csv"),
            &diversity_stats(&outcome.records),
        )?;

        let metric = self.config.task.resolved_metric();
        let convergence = convergence_summary(&outcome.records, metric.convergence_threshold());
        let report = RunReport {
            run_id: self.run_id.clone(),
            task_id: self.fitness.task_id().to_string(),
            engine: self.config.optimizer.engine,
            metric,
            population_size: self.config.optimizer.population_size,
            iterations: self.config.optimizer.iterations,
            dev_size: self.fitness.dev_size(),
            best_prompt_id: outcome.best.prompt.id.to_string(),
            best_score: outcome.best.score.value(),
            converged_at: convergence.converged_at,
            expected_requests: expected_requests(
                self.config.optimizer.population_size as u64,
                self.config.optimizer.iterations as u64,
                self.fitness.dev_size() as u64,
            ),
            budget: self.budget(),
            score_cache_hits: self.fitness.hits(),
        };
        write_text(
            &self.run_dir.join("summary.json"),
            &format!("{}\n", serde_json::to_string_pretty(&report).expect("report serializes")),
        )?;
        Ok(report)
    }

    /// Scores one prompt on `dev` or `test` without running the optimizer.
    /// Synthetic tasks have no splits; the prompt is scored directly.
    pub fn evaluate(&self, prompt_text: &str, split: &str) -> Result<EvalReport, EvoError> {
        let prompt = Prompt::manual(self.ids.next_id(), prompt_text)?;
        let metric = self.config.task.resolved_metric();
        match &self.task {
            Some(spec) => {
                let examples = spec.split(split)?;
                let provider = self
                    .provider
                    .as_ref()
                    .expect("dataset tasks need a provider");
                let score = score_prompt_on(
                    spec,
                    &prompt,
                    examples,
                    provider,
                    &self.config.provider.model,
                    self.config.provider.eval_max_tokens,
                )?;
                Ok(EvalReport {
                    split: split.to_string(),
                    examples: examples.len(),
                    metric,
                    score: score.value(),
                })
            }
            None => {
                let score = self.fitness.evaluate(&prompt)?;
                Ok(EvalReport {
                    split: "synthetic".to_string(),
                    examples: 0,
                    metric,
                    score: score.value(),
                })
            }
        }
    }

    /// Generates `count` fresh variations of the manual prompts, round-robin
    /// over them; the output lines feed back in as a `manual_prompts_file`.
    pub fn resample_init(&self, count: usize) -> Result<Vec<String>, EvoError> {
        let manual = self.manual_prompts()?;
        let mut out = Vec::with_capacity(count);
        for j in 0..count {
            let seed = &manual[j % manual.len()];
            let mut rng = self.path.child("resample-init").child(j).rng();
            let text = self.operator.resample(seed, &mut rng)?;
            // keep the output one prompt per line
            out.push(text.split_whitespace().collect::<Vec<_>>().join(" "));
        }
        Ok(out)
    }
}

/// One run directory's artifacts, reloaded.
#[derive(Debug)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub records: Vec<IterationRecord>,
    pub report: RunReport,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun, EvoError> {
    let config: RunConfig = serde_json::from_str(&read_text(&dir.join("config.json"))?)
        .map_err(|e| EvoError::config(format!("{}: config.json: {e}", dir.display())))?;
    let records = read_ledger(&dir.join("ledger.jsonl"))?;
    let report: RunReport = serde_json::from_str(&read_text(&dir.join("summary.json"))?)
        .map_err(|e| EvoError::config(format!("{}: summary.json: {e}", dir.display())))?;
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        config,
        records,
        report,
    })
}

/// Cross-run aggregation for `report`: per-iteration mean and standard
/// deviation of the best and population-mean curves, plus a cost table row
/// per run.
#[derive(Debug, Serialize)]
pub struct MergedReport {
    pub runs: usize,
    pub task_id: String,
    pub metric: MetricId,
    pub iterations: usize,
    pub best_mean: Vec<f64>,
    pub best_std: Vec<f64>,
    pub mean_mean: Vec<f64>,
    pub mean_std: Vec<f64>,
    pub expected_requests: u64,
    pub costs: Vec<RunCost>,
    pub best_run: String,
    pub best_score: f64,
    pub best_prompt: String,
}

#[derive(Debug, Serialize)]
pub struct RunCost {
    pub run_id: String,
    pub seed: u64,
    pub converged_at: Option<usize>,
    pub best_score: f64,
    /// Requests spent by the optimization loop itself (record 0 to the end).
    pub actual_requests: u64,
    pub cache_hits: u64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Merges runs that differ only in `optimizer.rng_seed`.
pub fn merge_runs(dirs: &[PathBuf]) -> Result<MergedReport, EvoError> {
    if dirs.is_empty() {
        return Err(EvoError::config("report needs at least one run directory"));
    }
    let runs: Vec<LoadedRun> = dirs.iter().map(|d| load_run(d)).collect::<Result<_, _>>()?;

    let fingerprint = |run: &LoadedRun| {
        let mut c = run.config.clone();
        c.optimizer.rng_seed = 0;
        c.canonical_json()
    };
    let base = fingerprint(&runs[0]);
    for run in &runs[1..] {
        if fingerprint(run) != base {
            return Err(EvoError::config(format!(
                "{}: differs from {} in more than optimizer.rng_seed; \
                 a merged report needs otherwise identical configurations",
                run.dir.display(),
                runs[0].dir.display()
            )));
        }
    }
    let len = runs[0].records.len();
    for run in &runs {
        if run.records.len() != len {
            return Err(EvoError::config(format!(
                "{}: ledger has {} records, expected {len}",
                run.dir.display(),
                run.records.len()
            )));
        }
    }

    let mut best_mean = Vec::with_capacity(len);
    let mut best_std = Vec::with_capacity(len);
    let mut mean_mean = Vec::with_capacity(len);
    let mut mean_std_v = Vec::with_capacity(len);
    for t in 0..len {
        let bests: Vec<f64> = runs.iter().map(|r| r.records[t].best_score).collect();
        let means: Vec<f64> = runs.iter().map(|r| r.records[t].mean_score).collect();
        let (bm, bs) = mean_std(&bests);
        let (mm, ms) = mean_std(&means);
        best_mean.push(bm);
        best_std.push(bs);
        mean_mean.push(mm);
        mean_std_v.push(ms);
    }

    let costs: Vec<RunCost> = runs
        .iter()
        .map(|r| {
            let first = r.records.first().map(|x| x.budget.total_requests()).unwrap_or(0);
            let last = r.records.last().map(|x| x.budget.total_requests()).unwrap_or(0);
            RunCost {
                run_id: r.report.run_id.clone(),
                seed: r.config.optimizer.rng_seed,
                converged_at: r.report.converged_at,
                best_score: r.report.best_score,
                actual_requests: last - first,
                cache_hits: r.report.budget.cache_hits,
            }
        })
        .collect();

    let best = runs
        .iter()
        .max_by(|a, b| a.report.best_score.partial_cmp(&b.report.best_score).unwrap())
        .expect("at least one run");
    let best_prompt = read_text(&best.dir.join("best_prompt.txt"))
        .map(|t| t.trim_end().to_string())
        .unwrap_or_default();

    Ok(MergedReport {
        runs: runs.len(),
        task_id: runs[0].report.task_id.clone(),
        metric: runs[0].report.metric,
        iterations: runs[0].report.iterations,
        best_mean,
        best_std,
        mean_mean,
        mean_std: mean_std_v,
        expected_requests: runs[0].report.expected_requests,
        costs,
        best_run: best.report.run_id.clone(),
        best_score: best.report.best_score,
        best_prompt,
    })
}
