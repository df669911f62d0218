//! One GA iteration: N independent parent selections produce N offspring,
//! each is scored, and the top N of the 2N-member union survive.

use crate::config::SelectionStrategy;
use crate::error::EvoError;
use crate::fitness::FitnessFunction;
use crate::operator::EvolutionOperator;
use crate::prompt::{IdGen, Origin, Population, Prompt, ScoredPrompt};
use crate::seed::SeedPath;
use crate::selection::select_parents;

/// Top `n` of old ∪ new by (score desc, incumbent-first, index asc).
pub fn top_n_merge(
    old: &[ScoredPrompt],
    new: &[ScoredPrompt],
    n: usize,
) -> Result<Population, EvoError> {
    if old.len() + new.len() < n {
        return Err(EvoError::Other(format!(
            "top_n_merge needs at least {n} members, got {}",
            old.len() + new.len()
        )));
    }
    let mut ranked: Vec<(usize, usize, &ScoredPrompt)> = old
        .iter()
        .enumerate()
        .map(|(i, m)| (0, i, m))
        .chain(new.iter().enumerate().map(|(i, m)| (1, i, m)))
        .collect();
    ranked.sort_by(|a, b| {
        b.2.score
            .value()
            .partial_cmp(&a.2.score.value())
            .expect("scores are finite")
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    Population::new(ranked.into_iter().take(n).map(|(_, _, m)| m.clone()).collect())
}

/// One GA step. Parents are re-selected for each of the N offspring; each
/// offspring records its parents' ids. Exactly N operator calls are issued.
pub fn ga_step(
    population: &Population,
    strategy: &SelectionStrategy,
    operator: &dyn EvolutionOperator,
    fitness: &dyn FitnessFunction,
    ids: &IdGen,
    path: &SeedPath,
) -> Result<Population, EvoError> {
    let n = population.len();
    let mut offspring = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = path.child("offspring").child(i).rng();
        let (a, b) = select_parents(population, strategy, &mut rng)?;
        let parent1 = &population.get(a).prompt;
        let parent2 = &population.get(b).prompt;
        let text = operator.ga_offspring(parent1, parent2, &mut rng)?;
        let prompt = Prompt::new(
            ids.next_id(),
            text,
            Origin::Evolved,
            vec![parent1.id.clone(), parent2.id.clone()],
        )?;
        let score = fitness.evaluate(&prompt)?;
        offspring.push(ScoredPrompt { prompt, score });
    }
    top_n_merge(population.members(), &offspring, n)
}
