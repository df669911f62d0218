//! Command-line interface. Every subcommand starts from a config file;
//! `optimize` additionally accepts flag overrides for the knobs that vary
//! between experiments, so one config file can drive a whole sweep.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{
    EngineKind, MutateScope, OperatorMode, Prompt3Source, RunConfig, SelectionStrategy, TaskKind,
};
use crate::error::EvoError;
use crate::runner::{merge_runs, prepare, MergedReport};

#[derive(Parser, Debug)]
#[command(
    name = "evoforge",
    version,
    about = "Evolutionary optimization of text prompts"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the optimizer; artifacts land under <out-dir>/<run-id>/
    Optimize(OptimizeArgs),
    /// Score one prompt on a data split without optimizing
    Evaluate(EvaluateArgs),
    /// Summarize finished runs; directories must differ only in rng_seed
    Report(ReportArgs),
    /// Generate starting-prompt variations, one per line
    ResampleInit(ResampleInitArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EngineArg {
    Ga,
    De,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SelectionArg {
    Roulette,
    Tournament,
    Random,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MutateArg {
    /// mutate only the difference set of the two donors
    Diff,
    /// mutate every token of both donors
    All,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Prompt3Arg {
    Best,
    Random,
    Eliminate,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OperatorArg {
    Llm,
    Simulated,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    /// Run configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    engine: Option<EngineArg>,
    #[arg(long)]
    selection: Option<SelectionArg>,
    #[arg(long)]
    tournament_size: Option<usize>,
    /// DE mutation scope
    #[arg(long, value_name = "SCOPE")]
    de_mutate: Option<MutateArg>,
    /// Where DE takes its third prompt from
    #[arg(long, value_name = "SOURCE")]
    de_prompt3: Option<Prompt3Arg>,
    #[arg(long)]
    population_size: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    operator: Option<OperatorArg>,
    /// `synthetic-keywords`, `synthetic-target`, or a dataset directory
    #[arg(long, value_name = "TASK")]
    task: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Disable both the completion cache and the score cache
    #[arg(long)]
    no_cache: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Run configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Prompt text to score
    #[arg(long, conflicts_with = "prompt_file")]
    prompt: Option<String>,
    /// File whose entire content is the prompt
    #[arg(long)]
    prompt_file: Option<PathBuf>,
    /// Data split to score on
    #[arg(long, default_value = "dev")]
    split: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_cache: bool,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Finished run directories (each holding ledger.jsonl and summary.json)
    #[arg(required = true)]
    run_dirs: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct ResampleInitArgs {
    /// Run configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Number of variations to generate
    #[arg(long)]
    count: usize,
    /// Write the variations here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn apply_task_override(config: &mut RunConfig, task: &str) {
    match task {
        "synthetic-keywords" => {
            config.task.kind = TaskKind::SyntheticKeywords;
            config.task.data_dir = None;
        }
        "synthetic-target" => {
            config.task.kind = TaskKind::SyntheticTarget;
            config.task.data_dir = None;
        }
        dir => {
            config.task.data_dir = Some(PathBuf::from(dir));
            if config.task.kind.is_synthetic() {
                // provisional; a kind in the directory's task.json wins
                config.task.kind = TaskKind::Classification;
            }
        }
    }
}

impl OptimizeArgs {
    fn into_config(self) -> Result<RunConfig, EvoError> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(engine) = self.engine {
            config.optimizer.engine = match engine {
                EngineArg::Ga => EngineKind::Ga,
                EngineArg::De => EngineKind::De,
            };
        }
        if let Some(selection) = self.selection {
            config.optimizer.selection = match selection {
                SelectionArg::Roulette => SelectionStrategy::Roulette,
                SelectionArg::Tournament => SelectionStrategy::Tournament {
                    size: self.tournament_size.unwrap_or(2),
                },
                SelectionArg::Random => SelectionStrategy::Random,
            };
        } else if let Some(size) = self.tournament_size {
            config.optimizer.selection = SelectionStrategy::Tournament { size };
        }
        if let Some(scope) = self.de_mutate {
            config.optimizer.de_variant.mutate_scope = match scope {
                MutateArg::Diff => MutateScope::Diff,
                MutateArg::All => MutateScope::All,
            };
        }
        if let Some(source) = self.de_prompt3 {
            config.optimizer.de_variant.prompt3_source = match source {
                Prompt3Arg::Best => Prompt3Source::Best,
                Prompt3Arg::Random => Prompt3Source::Random,
                Prompt3Arg::Eliminate => Prompt3Source::Eliminate,
            };
        }
        if let Some(n) = self.population_size {
            config.optimizer.population_size = n;
        }
        if let Some(t) = self.iterations {
            config.optimizer.iterations = t;
        }
        if let Some(seed) = self.seed {
            config.optimizer.rng_seed = seed;
        }
        if let Some(mode) = self.operator {
            config.operator.mode = match mode {
                OperatorArg::Llm => OperatorMode::Llm,
                OperatorArg::Simulated => OperatorMode::Simulated,
            };
        }
        if let Some(task) = &self.task {
            apply_task_override(&mut config, task);
        }
        if let Some(dir) = self.out_dir {
            config.out_dir = dir;
        }
        if self.no_cache {
            config.provider.cache = false;
        }
        Ok(config)
    }
}

fn format_merged(report: &MergedReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "task {}  metric {}  runs {}  iterations {}\n\n",
        report.task_id,
        report.metric.as_str(),
        report.runs,
        report.iterations
    ));
    out.push_str("iter    best (mean +/- std)    population mean (mean +/- std)\n");
    for t in 0..report.best_mean.len() {
        out.push_str(&format!(
            "{t:<7} {:<22} {}\n",
            format!("{:.4} +/- {:.4}", report.best_mean[t], report.best_std[t]),
            format!("{:.4} +/- {:.4}", report.mean_mean[t], report.mean_std[t]),
        ));
    }
    out.push_str(&format!(
        "\ncost: {} requests expected per run (population x iterations x (1 + dev set))\n",
        report.expected_requests
    ));
    for cost in &report.costs {
        let converged = cost
            .converged_at
            .map(|t| format!("t={t}"))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "  {}  seed {:<6} requests {:<8} cache hits {:<6} converged {:<6} best {:.4}\n",
            cost.run_id, cost.seed, cost.actual_requests, cost.cache_hits, converged, cost.best_score
        ));
    }
    out.push_str(&format!(
        "\nbest prompt ({}, score {:.4}):\n{}\n",
        report.best_run, report.best_score, report.best_prompt
    ));
    out
}

/// Executes a parsed command line. Errors bubble up to `main`, which maps
/// them to exit codes.
pub fn run(cli: Cli) -> Result<(), EvoError> {
    match cli.command {
        Command::Optimize(args) => {
            let config = args.into_config()?;
            let prepared = prepare(config, None)?;
            let report = prepared.run()?;
            println!("run {}", report.run_id);
            println!("artifacts: {}", prepared.run_dir.display());
            println!(
                "best {} = {:.4} ({})",
                report.metric.as_str(),
                report.best_score,
                report.best_prompt_id
            );
            match report.converged_at {
                Some(t) => println!("converged at iteration {t}"),
                None => println!("did not converge within {} iterations", report.iterations),
            }
            println!(
                "requests: {} operator, {} eval, {} completion-cache hits, {} score-cache hits",
                report.budget.requests_operator,
                report.budget.requests_task_eval,
                report.budget.cache_hits,
                report.score_cache_hits
            );
            let best = std::fs::read_to_string(prepared.run_dir.join("best_prompt.txt"))
                .map_err(|e| EvoError::Io(e.to_string()))?;
            println!("\n{}", best.trim_end());
            Ok(())
        }
        Command::Evaluate(args) => {
            let mut config = RunConfig::load(&args.config)?;
            if let Some(seed) = args.seed {
                config.optimizer.rng_seed = seed;
            }
            if args.no_cache {
                config.provider.cache = false;
            }
            let text = match (&args.prompt, &args.prompt_file) {
                (Some(text), _) => text.clone(),
                (None, Some(path)) => std::fs::read_to_string(path)
                    .map_err(|e| EvoError::Io(format!("{}: {e}", path.display())))?
                    .trim_end()
                    .to_string(),
                (None, None) => {
                    return Err(EvoError::config("evaluate needs --prompt or --prompt-file"))
                }
            };
            let prepared = prepare(config, None)?;
            let report = prepared.evaluate(&text, &args.split)?;
            println!(
                "{} on {} ({} examples): {:.4}",
                report.metric.as_str(),
                report.split,
                report.examples,
                report.score
            );
            Ok(())
        }
        Command::Report(args) => {
            let merged = merge_runs(&args.run_dirs)?;
            print!("{}", format_merged(&merged));
            Ok(())
        }
        Command::ResampleInit(args) => {
            let mut config = RunConfig::load(&args.config)?;
            if let Some(seed) = args.seed {
                config.optimizer.rng_seed = seed;
            }
            let prepared = prepare(config, None)?;
            let lines = prepared.resample_init(args.count)?;
            let body = format!("{}\n", lines.join("\n"));
            match args.out {
                Some(path) => {
                    std::fs::write(&path, body)
                        .map_err(|e| EvoError::Io(format!("{}: {e}", path.display())))?;
                    println!("wrote {} prompts to {}", lines.len(), path.display());
                }
                None => print!("{body}"),
            }
            Ok(())
        }
    }
}
