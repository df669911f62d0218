//! One DE sweep: every slot builds a trial child from two distinct donors
//! plus an optional third prompt, and keeps the child only when it scores
//! strictly higher than the incumbent. Replacements are committed at the end
//! of the sweep, so every slot sees the same step-start snapshot.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DeVariant, Prompt3Source};
use crate::error::EvoError;
use crate::fitness::FitnessFunction;
use crate::operator::EvolutionOperator;
use crate::prompt::{IdGen, Origin, Population, Prompt, ScoredPrompt};
use crate::seed::SeedPath;

/// Two distinct donor indices, both different from the slot index, drawn
/// uniformly over ordered pairs.
pub fn sample_donors(n: usize, slot: usize, rng: &mut ChaCha8Rng) -> Result<(usize, usize), EvoError> {
    if n < 3 {
        return Err(EvoError::Config(format!(
            "donor sampling needs at least 3 members, got {n}"
        )));
    }
    if slot >= n {
        return Err(EvoError::Other(format!("slot {slot} out of range 0..{n}")));
    }
    let pool: Vec<usize> = (0..n).filter(|&j| j != slot).collect();
    let r1 = pool[rng.gen_range(0..pool.len())];
    let rest: Vec<usize> = pool.into_iter().filter(|&j| j != r1).collect();
    let r2 = rest[rng.gen_range(0..rest.len())];
    Ok((r1, r2))
}

/// The index backing Prompt 3 for one slot, drawn against the step-start
/// snapshot: the current best, a uniformly random member, or nothing.
pub fn resolve_prompt3(
    snapshot: &Population,
    source: Prompt3Source,
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    match source {
        Prompt3Source::Best => Some(snapshot.best_index()),
        Prompt3Source::Random => Some(rng.gen_range(0..snapshot.len())),
        Prompt3Source::Eliminate => None,
    }
}

/// One DE step over every slot. Exactly N operator calls are issued; a slot
/// changes only when its trial child scores strictly higher.
pub fn de_step(
    population: &Population,
    variant: DeVariant,
    operator: &dyn EvolutionOperator,
    fitness: &dyn FitnessFunction,
    ids: &IdGen,
    path: &SeedPath,
) -> Result<Population, EvoError> {
    let n = population.len();
    if n < 3 {
        return Err(EvoError::Config(format!(
            "differential evolution needs at least 3 members, got {n}"
        )));
    }
    let mut next: Vec<ScoredPrompt> = population.members().to_vec();
    for i in 0..n {
        let mut rng = path.child("slot").child(i).rng();
        let (r1, r2) = sample_donors(n, i, &mut rng)?;
        let p3_index = resolve_prompt3(population, variant.prompt3_source, &mut rng);
        let basic = &population.get(i).prompt;
        let donor1 = &population.get(r1).prompt;
        let donor2 = &population.get(r2).prompt;
        let prompt3 = p3_index.map(|j| &population.get(j).prompt);
        let text = operator.de_child(basic, donor1, donor2, prompt3, variant, &mut rng)?;
        let mut parent_ids = vec![basic.id.clone(), donor1.id.clone(), donor2.id.clone()];
        if let Some(p3) = prompt3 {
            parent_ids.push(p3.id.clone());
        }
        let child = Prompt::new(ids.next_id(), text, Origin::Evolved, parent_ids)?;
        let score = fitness.evaluate(&child)?;
        if score.value() > population.get(i).score.value() {
            next[i] = ScoredPrompt { prompt: child, score };
        }
    }
    Population::new(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitness::FnFitness;
    use crate::prompt::{PromptId, Score};
    use crate::seed::SeedPath;
    use std::collections::HashMap;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn rng(seed: u64) -> ChaCha8Rng {
        SeedPath::new(seed).rng()
    }

    fn member(ids: &IdGen, text: &str, score: f64) -> ScoredPrompt {
        ScoredPrompt {
            prompt: Prompt::new(ids.next_id(), text.to_string(), Origin::Manual, vec![]).unwrap(),
            score: Score::new(score).unwrap(),
        }
    }

    fn toy_population(ids: &IdGen, scores: &[f64]) -> Population {
        Population::new(
            scores
                .iter()
                .enumerate()
                .map(|(i, &s)| member(ids, &format!("member {i}"), s))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn donors_are_distinct_and_exclude_the_slot() {
        let mut r = rng(7);
        for _ in 0..500 {
            let (r1, r2) = sample_donors(5, 2, &mut r).unwrap();
            assert_ne!(r1, r2);
            assert_ne!(r1, 2);
            assert_ne!(r2, 2);
            assert!(r1 < 5 && r2 < 5);
        }
    }

    #[test]
    fn donor_pairs_are_uniform_over_ordered_pairs() {
        let mut r = rng(11);
        let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
        let draws = 24_000;
        for _ in 0..draws {
            let pair = sample_donors(4, 0, &mut r).unwrap();
            *seen.entry(pair).or_default() += 1;
        }
        // 3 choices for r1 times 2 for r2 = 6 ordered pairs
        assert_eq!(seen.len(), 6);
        let expected = draws as f64 / 6.0;
        for (&pair, &count) in &seen {
            let rel = (count as f64 - expected).abs() / expected;
            assert!(rel < 0.05, "pair {pair:?} count {count} vs expected {expected}");
        }
    }

    #[test]
    fn donor_sampling_needs_three_members() {
        let mut r = rng(1);
        assert!(sample_donors(2, 0, &mut r).is_err());
        assert!(sample_donors(3, 0, &mut r).is_ok());
    }

    #[test]
    fn prompt3_best_points_at_the_argmax() {
        let ids = IdGen::new();
        let pop = toy_population(&ids, &[0.1, 0.9, 0.4]);
        let mut r = rng(2);
        assert_eq!(resolve_prompt3(&pop, Prompt3Source::Best, &mut r), Some(1));
        assert_eq!(resolve_prompt3(&pop, Prompt3Source::Eliminate, &mut r), None);
    }

    #[test]
    fn prompt3_random_covers_every_index() {
        let ids = IdGen::new();
        let pop = toy_population(&ids, &[0.1, 0.2, 0.3]);
        let mut r = rng(3);
        let mut seen = [false; 3];
        for _ in 0..200 {
            let j = resolve_prompt3(&pop, Prompt3Source::Random, &mut r).unwrap();
            seen[j] = true;
        }
        assert_eq!(seen, [true, true, true]);
    }

    struct Canned {
        text: String,
        calls: AtomicUsize,
    }

    impl EvolutionOperator for Canned {
        fn ga_offspring(
            &self,
            _p1: &Prompt,
            _p2: &Prompt,
            _rng: &mut ChaCha8Rng,
        ) -> Result<String, EvoError> {
            unreachable!("DE tests never cross parents")
        }

        fn de_child(
            &self,
            _basic: &Prompt,
            _d1: &Prompt,
            _d2: &Prompt,
            _p3: Option<&Prompt>,
            _variant: DeVariant,
            _rng: &mut ChaCha8Rng,
        ) -> Result<String, EvoError> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            Ok(self.text.clone())
        }

        fn resample(&self, _seed: &Prompt, _rng: &mut ChaCha8Rng) -> Result<String, EvoError> {
            Ok(self.text.clone())
        }
    }

    #[test]
    fn better_children_replace_their_slot() {
        let ids = IdGen::new();
        let pop = toy_population(&ids, &[0.2, 0.5, 0.3]);
        let operator = Canned {
            text: "improved".into(),
            calls: AtomicUsize::new(0),
        };
        let fitness = FnFitness(|t: &str| if t == "improved" { 0.9 } else { 0.0 });
        let next = de_step(
            &pop,
            DeVariant::default(),
            &operator,
            &fitness,
            &ids,
            &SeedPath::new(4).child("iter").child("1"),
        )
        .unwrap();
        assert!(next.members().iter().all(|m| m.prompt.text == "improved"));
        assert_eq!(operator.calls.load(Ordering::Relaxed), 3);
    }

    #[test]
    fn equal_scores_keep_the_incumbent() {
        let ids = IdGen::new();
        let pop = toy_population(&ids, &[0.5, 0.5, 0.5]);
        let operator = Canned {
            text: "challenger".into(),
            calls: AtomicUsize::new(0),
        };
        // every text scores the same, so strict > never fires
        let fitness = FnFitness(|_: &str| 0.5);
        let next = de_step(
            &pop,
            DeVariant::default(),
            &operator,
            &fitness,
            &ids,
            &SeedPath::new(5).child("iter").child("1"),
        )
        .unwrap();
        let texts: Vec<&str> = next.members().iter().map(|m| m.prompt.text.as_str()).collect();
        assert_eq!(texts, ["member 0", "member 1", "member 2"]);
    }

    #[test]
    fn slot_scores_never_decrease() {
        let ids = IdGen::new();
        let pop = toy_population(&ids, &[0.4, 0.6, 0.1, 0.8]);
        let operator = Canned {
            text: "mid".into(),
            calls: AtomicUsize::new(0),
        };
        let fitness = FnFitness(|t: &str| if t == "mid" { 0.5 } else { 0.0 });
        let before = pop.scores();
        let next = de_step(
            &pop,
            DeVariant::default(),
            &operator,
            &fitness,
            &ids,
            &SeedPath::new(6).child("iter").child("1"),
        )
        .unwrap();
        for (b, a) in before.iter().zip(next.scores()) {
            assert!(a >= *b);
        }
        // only the slots below 0.5 were replaced
        let texts: Vec<&str> = next.members().iter().map(|m| m.prompt.text.as_str()).collect();
        assert_eq!(texts, ["mid", "member 1", "mid", "member 3"]);
    }

    #[test]
    fn child_lineage_records_basic_donors_and_prompt3() {
        let ids = IdGen::new();
        let pop = toy_population(&ids, &[0.0, 0.0, 0.9]);
        let operator = Canned {
            text: "better".into(),
            calls: AtomicUsize::new(0),
        };
        let fitness = FnFitness(|t: &str| if t == "better" { 1.0 } else { 0.0 });
        let next = de_step(
            &pop,
            DeVariant::default(),
            &operator,
            &fitness,
            &ids,
            &SeedPath::new(7).child("iter").child("1"),
        )
        .unwrap();
        let best_id: PromptId = pop.get(2).prompt.id.clone();
        let replaced = next
            .members()
            .iter()
            .find(|m| m.prompt.origin == Origin::Evolved)
            .unwrap();
        assert_eq!(replaced.prompt.parent_ids.len(), 4);
        // default variant sources prompt3 from the snapshot best
        assert_eq!(replaced.prompt.parent_ids[3], best_id);
        let slot_id = &replaced.prompt.parent_ids[0];
        assert!(pop.members().iter().any(|m| &m.prompt.id == slot_id));
    }

    #[test]
    fn eliminate_variant_omits_prompt3_from_lineage() {
        let ids = IdGen::new();
        let pop = toy_population(&ids, &[0.0, 0.1, 0.2]);
        let operator = Canned {
            text: "better".into(),
            calls: AtomicUsize::new(0),
        };
        let fitness = FnFitness(|t: &str| if t == "better" { 1.0 } else { 0.0 });
        let variant = DeVariant {
            prompt3_source: Prompt3Source::Eliminate,
            ..DeVariant::default()
        };
        let next = de_step(
            &pop,
            variant,
            &operator,
            &fitness,
            &ids,
            &SeedPath::new(8).child("iter").child("1"),
        )
        .unwrap();
        for m in next.members().iter().filter(|m| m.prompt.origin == Origin::Evolved) {
            assert_eq!(m.prompt.parent_ids.len(), 3);
        }
    }

    #[test]
    fn donors_come_from_the_step_start_snapshot() {
        // the best member sits at slot 2; even after slot 0 is replaced by a
        // stronger child, slot 1's prompt3 (best) still resolves to slot 2's
        // snapshot member because commits happen at sweep end
        let ids = IdGen::new();
        let pop = toy_population(&ids, &[0.1, 0.2, 0.6]);
        struct P3Recorder {
            seen: std::sync::Mutex<Vec<PromptId>>,
        }
        impl EvolutionOperator for P3Recorder {
            fn ga_offspring(
                &self,
                _p1: &Prompt,
                _p2: &Prompt,
                _rng: &mut ChaCha8Rng,
            ) -> Result<String, EvoError> {
                unreachable!()
            }
            fn de_child(
                &self,
                _basic: &Prompt,
                _d1: &Prompt,
                _d2: &Prompt,
                p3: Option<&Prompt>,
                _variant: DeVariant,
                _rng: &mut ChaCha8Rng,
            ) -> Result<String, EvoError> {
                self.seen.lock().unwrap().push(p3.unwrap().id.clone());
                Ok("challenger wins".into())
            }
            fn resample(&self, _s: &Prompt, _r: &mut ChaCha8Rng) -> Result<String, EvoError> {
                unreachable!()
            }
        }
        let operator = P3Recorder {
            seen: std::sync::Mutex::new(Vec::new()),
        };
        let fitness = FnFitness(|t: &str| if t == "challenger wins" { 1.0 } else { 0.0 });
        let best_id = pop.get(2).prompt.id.clone();
        de_step(
            &pop,
            DeVariant::default(),
            &operator,
            &fitness,
            &ids,
            &SeedPath::new(9).child("iter").child("1"),
        )
        .unwrap();
        let seen = operator.seen.lock().unwrap();
        assert_eq!(seen.len(), 3);
        assert!(seen.iter().all(|id| *id == best_id));
    }
}
