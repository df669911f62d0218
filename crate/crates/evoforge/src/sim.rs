//! LLM-free evolutionary operators over word-level genomes, plus synthetic
//! fitness tasks, so the engines run offline and seeded runs reproduce
//! byte-for-byte.
//!
//! Children are token sequences joined by single spaces; inputs are
//! tokenized on whitespace. Golden outputs for fixed seeds are frozen in the
//! tests below.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DeVariant, MutateScope, Prompt3Source};

/// Stand-in fitness landscapes for offline runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyntheticTask {
    /// Fraction of target keywords present in the prompt.
    KeywordCoverage { keywords: Vec<String> },
    /// 1 - normalized character edit distance to a target text.
    TargetDistance { target: String },
}

fn tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

fn counts<'a>(tokens: &[&'a str]) -> HashMap<&'a str, usize> {
    let mut m = HashMap::new();
    for &t in tokens {
        *m.entry(t).or_insert(0) += 1;
    }
    m
}

/// Occurrences of `a` beyond `b`'s count for the same token, in `a`'s order.
fn excess<'a>(a: &[&'a str], b: &HashMap<&'a str, usize>) -> Vec<&'a str> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    a.iter()
        .filter(|&&t| {
            let c = seen.entry(t).or_insert(0);
            *c += 1;
            *c > b.get(t).copied().unwrap_or(0)
        })
        .copied()
        .collect()
}

/// Multiset intersection, in `a`'s order.
fn overlap<'a>(a: &[&'a str], b: &HashMap<&'a str, usize>) -> Vec<&'a str> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    a.iter()
        .filter(|&&t| {
            let c = seen.entry(t).or_insert(0);
            *c += 1;
            *c <= b.get(t).copied().unwrap_or(0)
        })
        .copied()
        .collect()
}

fn crossover_tokens(a: &[&str], b: &[&str], rng: &mut ChaCha8Rng) -> Vec<String> {
    let cut = rng.gen_range(0..=a.len());
    a[..cut]
        .iter()
        .chain(b[cut.min(b.len())..].iter())
        .map(|t| t.to_string())
        .collect()
}

fn mutate_tokens(toks: &[&str], vocabulary: &[String], rate: f64, rng: &mut ChaCha8Rng) -> Vec<String> {
    toks.iter()
        .map(|&t| {
            if rng.gen::<f64>() < rate {
                vocabulary[rng.gen_range(0..vocabulary.len())].clone()
            } else {
                t.to_string()
            }
        })
        .collect()
}

/// One-point crossover: a uniform-random prefix of `parent1` followed by the
/// rest of `parent2`.
pub fn sim_crossover(parent1: &str, parent2: &str, rng: &mut ChaCha8Rng) -> String {
    let a = tokens(parent1);
    let b = tokens(parent2);
    assert!(!a.is_empty() && !b.is_empty(), "crossover needs non-empty parents");
    crossover_tokens(&a, &b, rng).join(" ")
}

/// Each token is independently replaced by a uniform vocabulary word with
/// probability `rate`.
pub fn sim_mutate(text: &str, vocabulary: &[String], rate: f64, rng: &mut ChaCha8Rng) -> String {
    assert!(!vocabulary.is_empty(), "mutation needs a vocabulary");
    let toks = tokens(text);
    mutate_tokens(&toks, vocabulary, rate, rng).join(" ")
}

/// DE-style evolution: take the donors' differing parts (or all donor
/// tokens), mutate them, splice the result into `prompt3` (or the donor
/// overlap when prompt3 is absent), then cross over with `basic`.
pub fn sim_de_evolve(
    basic: &str,
    donor1: &str,
    donor2: &str,
    prompt3: Option<&str>,
    variant: DeVariant,
    vocabulary: &[String],
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> String {
    let b = tokens(basic);
    let d1 = tokens(donor1);
    let d2 = tokens(donor2);
    let c1 = counts(&d1);
    let c2 = counts(&d2);

    let diff: Vec<&str> = match variant.mutate_scope {
        MutateScope::Diff => {
            let mut d = excess(&d1, &c2);
            d.extend(excess(&d2, &c1));
            d
        }
        MutateScope::All => d1.iter().chain(d2.iter()).copied().collect(),
    };
    let base: Vec<&str> = match prompt3 {
        Some(p3) => {
            debug_assert!(variant.prompt3_source != Prompt3Source::Eliminate);
            tokens(p3)
        }
        None => overlap(&d1, &c2),
    };

    let combined: Vec<String> = if diff.is_empty() {
        base.iter().map(|t| t.to_string()).collect()
    } else {
        let mutated = mutate_tokens(&diff, vocabulary, rate, rng);
        let pos = rng.gen_range(0..=base.len());
        base[..pos]
            .iter()
            .map(|t| t.to_string())
            .chain(mutated)
            .chain(base[pos..].iter().map(|t| t.to_string()))
            .collect()
    };
    if combined.is_empty() {
        return basic.trim().split_whitespace().collect::<Vec<_>>().join(" ");
    }
    let combined_refs: Vec<&str> = combined.iter().map(|s| s.as_str()).collect();
    crossover_tokens(&b, &combined_refs, rng).join(" ")
}

/// Score a prompt on a synthetic task; always in [0, 1].
pub fn synthetic_fitness(text: &str, task: &SyntheticTask) -> f64 {
    match task {
        SyntheticTask::KeywordCoverage { keywords } => {
            let words: BTreeSet<&str> = tokens(text).into_iter().collect();
            let unique: BTreeSet<&str> = keywords.iter().map(|k| k.as_str()).collect();
            assert!(!unique.is_empty(), "keyword coverage needs keywords");
            let hits = unique.iter().filter(|k| words.contains(**k)).count();
            hits as f64 / unique.len() as f64
        }
        SyntheticTask::TargetDistance { target } => {
            assert!(!target.is_empty(), "target distance needs a target");
            let a: Vec<char> = text.chars().collect();
            let b: Vec<char> = target.chars().collect();
            let longest = a.len().max(b.len());
            if longest == 0 {
                return 1.0;
            }
            1.0 - levenshtein(&a, &b) as f64 / longest as f64
        }
    }
}

fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}
