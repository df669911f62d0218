//! Parent selection for the GA engine: roulette wheel (default),
//! tournament, and uniform random.
//!
//! Roulette weights are the raw scores, shifted by `-min + 1e-6` when any
//! score is negative; a zero total falls back to uniform choice. The second
//! parent is drawn with the first excluded, renormalizing the weights, so a
//! prompt never crosses over with itself.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::SelectionStrategy;
use crate::error::EvoError;
use crate::prompt::Population;

const SHIFT_EPSILON: f64 = 1e-6;

fn roulette_over(scores: &[f64], allowed: &[usize], rng: &mut ChaCha8Rng) -> usize {
    debug_assert!(!allowed.is_empty());
    let min = allowed
        .iter()
        .map(|&i| scores[i])
        .fold(f64::INFINITY, f64::min);
    let shift = if min < 0.0 { -min + SHIFT_EPSILON } else { 0.0 };
    let weights: Vec<f64> = allowed.iter().map(|&i| scores[i] + shift).collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return allowed[rng.gen_range(0..allowed.len())];
    }
    let mut x = rng.gen_range(0.0..total);
    for (slot, &w) in weights.iter().enumerate() {
        if x < w {
            return allowed[slot];
        }
        x -= w;
    }
    allowed[allowed.len() - 1]
}

fn tournament_over(scores: &[f64], allowed: &[usize], k: usize, rng: &mut ChaCha8Rng) -> usize {
    debug_assert!(k >= 1 && k <= allowed.len());
    let entrants = rand::seq::index::sample(rng, allowed.len(), k);
    let mut best = allowed[entrants.index(0)];
    for slot in entrants.iter().skip(1) {
        let idx = allowed[slot];
        if scores[idx] > scores[best] || (scores[idx] == scores[best] && idx < best) {
            best = idx;
        }
    }
    best
}

/// Index `i` with probability `s_i / Σ s_j` over the whole population.
pub fn roulette_pick(population: &Population, rng: &mut ChaCha8Rng) -> usize {
    let scores = population.scores();
    let allowed: Vec<usize> = (0..scores.len()).collect();
    roulette_over(&scores, &allowed, rng)
}

/// Best of `k` members sampled without replacement; ties go to the lowest
/// index. `k` equal to the population size always returns the best member.
pub fn tournament_pick(
    population: &Population,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<usize, EvoError> {
    let n = population.len();
    if k < 1 || k > n {
        return Err(EvoError::Config(format!(
            "tournament size must be in 1..={n}, got {k}"
        )));
    }
    let scores = population.scores();
    let allowed: Vec<usize> = (0..n).collect();
    Ok(tournament_over(&scores, &allowed, k, rng))
}

fn pick_one(
    scores: &[f64],
    allowed: &[usize],
    strategy: &SelectionStrategy,
    rng: &mut ChaCha8Rng,
) -> usize {
    match strategy {
        SelectionStrategy::Roulette => roulette_over(scores, allowed, rng),
        SelectionStrategy::Tournament { size } => {
            let k = (*size).min(allowed.len()).max(1);
            tournament_over(scores, allowed, k, rng)
        }
        SelectionStrategy::Random => allowed[rng.gen_range(0..allowed.len())],
    }
}

/// Two distinct parent indices under the given strategy.
pub fn select_parents(
    population: &Population,
    strategy: &SelectionStrategy,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, usize), EvoError> {
    let n = population.len();
    if n < 2 {
        return Err(EvoError::Config(format!(
            "parent selection needs at least 2 members, got {n}"
        )));
    }
    let scores = population.scores();
    let all: Vec<usize> = (0..n).collect();
    let first = pick_one(&scores, &all, strategy, rng);
    let rest: Vec<usize> = (0..n).filter(|&i| i != first).collect();
    let second = pick_one(&scores, &rest, strategy, rng);
    Ok((first, second))
}
