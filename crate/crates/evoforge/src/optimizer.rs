//! The outer optimization loop: build an initial population, then run T
//! engine steps, emitting one ledger record per iteration (including a
//! record 0 for the initial population).

use rand::seq::index::sample as index_sample;

use crate::config::{EngineKind, InitPick, InitStrategy, OptimizerConfig};
use crate::de::de_step;
use crate::error::EvoError;
use crate::fitness::FitnessFunction;
use crate::ga::ga_step;
use crate::ledger::IterationRecord;
use crate::operator::EvolutionOperator;
use crate::prompt::{best_of, IdGen, Origin, Population, Prompt, ScoredPrompt};
use crate::provider::BudgetSnapshot;
use crate::seed::SeedPath;

/// Everything a finished run hands back to the caller.
#[derive(Debug)]
pub struct RunOutcome {
    pub population: Population,
    pub best: ScoredPrompt,
    pub records: Vec<IterationRecord>,
}

fn pick_indices(
    scored: &[ScoredPrompt],
    keep: usize,
    pick: InitPick,
    path: &SeedPath,
) -> Vec<usize> {
    let mut chosen: Vec<usize> = match pick {
        InitPick::Top => {
            let mut order: Vec<usize> = (0..scored.len()).collect();
            order.sort_by(|&a, &b| {
                scored[b]
                    .score
                    .value()
                    .partial_cmp(&scored[a].score.value())
                    .unwrap()
                    .then(a.cmp(&b))
            });
            order.truncate(keep);
            order
        }
        InitPick::Bottom => {
            let mut order: Vec<usize> = (0..scored.len()).collect();
            order.sort_by(|&a, &b| {
                scored[a]
                    .score
                    .value()
                    .partial_cmp(&scored[b].score.value())
                    .unwrap()
                    .then(a.cmp(&b))
            });
            order.truncate(keep);
            order
        }
        InitPick::Random => {
            let mut rng = path.child("init").child("pick").rng();
            index_sample(&mut rng, scored.len(), keep).into_vec()
        }
    };
    // kept prompts stay in their submitted order regardless of how they
    // were chosen
    chosen.sort_unstable();
    chosen
}

/// Scores the manual prompts, keeps a subset per the init strategy, and
/// optionally pads the population with generated variations of the kept
/// prompts (round-robin over them).
pub fn initialize_population(
    manual: &[Prompt],
    cfg: &OptimizerConfig,
    operator: &dyn EvolutionOperator,
    fitness: &dyn FitnessFunction,
    ids: &IdGen,
    path: &SeedPath,
) -> Result<Population, EvoError> {
    let n = cfg.population_size;
    let (keep, resampled, pick) = match cfg.init {
        InitStrategy::ManualOnly { pick } => (n, 0, pick),
        InitStrategy::ManualPlusResampled {
            manual_count,
            resampled_count,
            pick,
        } => (manual_count, resampled_count, pick),
    };
    if keep + resampled != n {
        return Err(EvoError::config(format!(
            "init keeps {keep} + resamples {resampled} prompts but the population size is {n}"
        )));
    }
    if manual.len() < keep {
        return Err(EvoError::config(format!(
            "init needs {keep} manual prompts, got {}",
            manual.len()
        )));
    }

    let mut scored = Vec::with_capacity(manual.len());
    for prompt in manual {
        let score = fitness.evaluate(prompt)?;
        scored.push(ScoredPrompt {
            prompt: prompt.clone(),
            score,
        });
    }

    let mut members: Vec<ScoredPrompt> = pick_indices(&scored, keep, pick, path)
        .into_iter()
        .map(|i| scored[i].clone())
        .collect();

    for j in 0..resampled {
        let seed = members[j % keep].prompt.clone();
        let mut rng = path.child("init").child("resample").child(j).rng();
        let text = operator.resample(&seed, &mut rng)?;
        let prompt = Prompt::new(
            ids.next_id(),
            text,
            Origin::LlmResampled,
            vec![seed.id.clone()],
        )?;
        let score = fitness.evaluate(&prompt)?;
        members.push(ScoredPrompt { prompt, score });
    }

    Population::new(members)
}

/// Runs T steps of the configured engine. `budget` is polled once per record
/// so the ledger can show spend as it accumulates; `on_record` sees every
/// record in order, starting with record 0 for the initial population.
pub fn run_optimization(
    cfg: &OptimizerConfig,
    init: Population,
    operator: &dyn EvolutionOperator,
    fitness: &dyn FitnessFunction,
    ids: &IdGen,
    path: &SeedPath,
    budget: &dyn Fn() -> BudgetSnapshot,
    on_record: &mut dyn FnMut(&IterationRecord) -> Result<(), EvoError>,
) -> Result<RunOutcome, EvoError> {
    let mut records = Vec::with_capacity(cfg.iterations + 1);
    let mut population = init;

    let record = IterationRecord::from_population(0, &population, 0, budget());
    on_record(&record)?;
    records.push(record);

    for t in 1..=cfg.iterations {
        let step_path = path.child("iter").child(t);
        let calls = population.len() as u64;
        population = match cfg.engine {
            EngineKind::Ga => ga_step(
                &population,
                &cfg.selection,
                operator,
                fitness,
                ids,
                &step_path,
            ),
            EngineKind::De => de_step(
                &population,
                cfg.de_variant,
                operator,
                fitness,
                ids,
                &step_path,
            ),
        }
        .map_err(|e| e.at_iteration(t))?;

        let record = IterationRecord::from_population(t, &population, calls, budget());
        on_record(&record)?;
        records.push(record);
    }

    let best = best_of(&population).clone();
    Ok(RunOutcome {
        population,
        best,
        records,
    })
}
