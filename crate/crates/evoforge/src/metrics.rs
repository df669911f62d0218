//! Text evaluation metrics: accuracy, ROUGE-n, ROUGE-L, SARI, and the
//! normalized accuracy delta used for reasoning tasks.
//!
//! One [`Tokenizer`] instance is shared by every metric in a run so that
//! n-gram boundaries are identical everywhere. SARI is reported on the
//! [0, 100] scale; ROUGE and accuracy on [0, 1].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::EvoError;

/// Lowercase + whitespace split. Punctuation stripping is a declared config
/// flag, off by default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    #[serde(default)]
    pub strip_punctuation: bool,
}

impl Tokenizer {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split_whitespace()
            .filter_map(|w| {
                let w = w.to_lowercase();
                let w = if self.strip_punctuation {
                    w.chars().filter(|c| c.is_alphanumeric()).collect()
                } else {
                    w
                };
                if w.is_empty() {
                    None
                } else {
                    Some(w)
                }
            })
            .collect()
    }
}

/// Fraction of exact matches. Unparsed predictions are passed through as a
/// value that matches no gold label, so they count as mismatches.
pub fn accuracy(predictions: &[String], golds: &[String]) -> Result<f64, EvoError> {
    if predictions.len() != golds.len() {
        return Err(EvoError::Other(format!(
            "accuracy: {} predictions vs {} golds",
            predictions.len(),
            golds.len()
        )));
    }
    if predictions.is_empty() {
        return Err(EvoError::Other("accuracy over empty lists".into()));
    }
    let hits = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| p == g)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

// BTreeMap keeps iteration order deterministic, so fractional sums are
// reproducible across processes
type Counter = BTreeMap<Vec<String>, usize>;

fn ngram_counts(tokens: &[String], n: usize) -> Counter {
    let mut counts = Counter::new();
    if tokens.len() >= n && n > 0 {
        for window in tokens.windows(n) {
            *counts.entry(window.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn rouge_n_single(cand: &Counter, cand_total: usize, rf: &Counter, ref_total: usize) -> f64 {
    if cand_total == 0 && ref_total == 0 {
        return 1.0;
    }
    if cand_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let matched: usize = cand
        .iter()
        .map(|(g, &c)| c.min(rf.get(g).copied().unwrap_or(0)))
        .sum();
    f1(
        matched as f64 / cand_total as f64,
        matched as f64 / ref_total as f64,
    )
}

/// ROUGE-n F1 against the best reference, with clipped multiset n-gram
/// matching.
pub fn rouge_n(tok: &Tokenizer, candidate: &str, references: &[String], n: usize) -> f64 {
    assert!(n >= 1, "rouge_n needs n >= 1");
    let cand_tokens = tok.tokenize(candidate);
    let cand = ngram_counts(&cand_tokens, n);
    let cand_total = cand_tokens.len().saturating_sub(n - 1);
    references
        .iter()
        .map(|r| {
            let ref_tokens = tok.tokenize(r);
            let rf = ngram_counts(&ref_tokens, n);
            let ref_total = ref_tokens.len().saturating_sub(n - 1);
            rouge_n_single(&cand, cand_total, &rf, ref_total)
        })
        .fold(0.0, f64::max)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    // standard DP over two rows
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            cur[j + 1] = if ai == bj {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 from longest-common-subsequence length over word tokens,
/// against the best reference.
pub fn rouge_l(tok: &Tokenizer, candidate: &str, references: &[String]) -> f64 {
    let cand = tok.tokenize(candidate);
    references
        .iter()
        .map(|r| {
            let rf = tok.tokenize(r);
            if cand.is_empty() && rf.is_empty() {
                return 1.0;
            }
            if cand.is_empty() || rf.is_empty() {
                return 0.0;
            }
            let lcs = lcs_len(&cand, &rf) as f64;
            f1(lcs / cand.len() as f64, lcs / rf.len() as f64)
        })
        .fold(0.0, f64::max)
}

fn scale(counter: &Counter, k: usize) -> Counter {
    counter.iter().map(|(g, &c)| (g.clone(), c * k)).collect()
}

fn counter_min(a: &Counter, b: &Counter) -> Counter {
    a.iter()
        .filter_map(|(g, &c)| {
            let m = c.min(b.get(g).copied().unwrap_or(0));
            (m > 0).then(|| (g.clone(), m))
        })
        .collect()
}

fn counter_sub(a: &Counter, b: &Counter) -> Counter {
    a.iter()
        .filter_map(|(g, &c)| {
            let m = c.saturating_sub(b.get(g).copied().unwrap_or(0));
            (m > 0).then(|| (g.clone(), m))
        })
        .collect()
}

/// One SARI n-gram order: (keep-F1, delete-precision, add-F1).
///
/// The 0/0 convention scores a component 1 when its operation set is empty,
/// so exact matches against references are not penalized.
fn sari_ngram(
    src_tokens: &[String],
    cand_tokens: &[String],
    ref_token_lists: &[Vec<String>],
    n: usize,
) -> (f64, f64, f64) {
    let numref = ref_token_lists.len();
    let src = ngram_counts(src_tokens, n);
    let cand = ngram_counts(cand_tokens, n);
    let mut refs = Counter::new();
    for tokens in ref_token_lists {
        for (g, c) in ngram_counts(tokens, n) {
            *refs.entry(g).or_insert(0) += c;
        }
    }
    let src_rep = scale(&src, numref);
    let cand_rep = scale(&cand, numref);

    // keep: n-grams present in both source and candidate
    let keep_rep = counter_min(&src_rep, &cand_rep);
    let keep_good = counter_min(&keep_rep, &refs);
    let keep_all = counter_min(&src_rep, &refs);
    let keep_p = if keep_rep.is_empty() {
        1.0
    } else {
        let s: f64 = keep_good
            .iter()
            .map(|(g, &c)| c as f64 / keep_rep[g] as f64)
            .sum();
        s / keep_rep.len() as f64
    };
    let keep_all_total: usize = keep_all.values().sum();
    let keep_r = if keep_all_total == 0 {
        1.0
    } else {
        let s: f64 = keep_good.values().map(|&c| c as f64).sum();
        s / keep_all_total as f64
    };
    let keep = f1(keep_p, keep_r);

    // delete: n-grams removed from the source; only precision is scored
    let del_rep = counter_sub(&src_rep, &cand_rep);
    let del_good = counter_sub(&del_rep, &refs);
    let del_p = if del_rep.is_empty() {
        1.0
    } else {
        let s: f64 = del_good
            .iter()
            .map(|(g, &c)| c as f64 / del_rep[g] as f64)
            .sum();
        s / del_rep.len() as f64
    };

    // add: n-grams newly introduced by the candidate (set semantics)
    let add: f64 = {
        let added: Vec<&Vec<String>> =
            cand.keys().filter(|g| !src.contains_key(*g)).collect();
        let good = added.iter().filter(|g| refs.contains_key(**g)).count();
        let all = refs.keys().filter(|g| !src.contains_key(*g)).count();
        let p = if added.is_empty() {
            1.0
        } else {
            good as f64 / added.len() as f64
        };
        let r = if all == 0 { 1.0 } else { good as f64 / all as f64 };
        f1(p, r)
    };

    (keep, del_p, add)
}

/// Averaged SARI components over n = 1..4: (keep-F1, delete-precision, add-F1).
pub fn sari_components(
    tok: &Tokenizer,
    source: &str,
    candidate: &str,
    references: &[String],
) -> (f64, f64, f64) {
    let src = tok.tokenize(source);
    let cand = tok.tokenize(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tok.tokenize(r)).collect();
    let mut keep = 0.0;
    let mut del = 0.0;
    let mut add = 0.0;
    for n in 1..=4 {
        let (k, d, a) = sari_ngram(&src, &cand, &refs, n);
        keep += k;
        del += d;
        add += a;
    }
    (keep / 4.0, del / 4.0, add / 4.0)
}

/// SARI on the [0, 100] scale: mean over n of 1..4 of the average of
/// add-F1, keep-F1 and delete-precision relative to source and references.
pub fn sari(tok: &Tokenizer, source: &str, candidate: &str, references: &[String]) -> f64 {
    assert!(!references.is_empty(), "sari needs at least one reference");
    let (keep, del, add) = sari_components(tok, source, candidate, references);
    (keep + del + add) / 3.0 * 100.0
}

/// Accuracy delta versus a baseline prompt, in percentage points. The
/// baseline maps to exactly 0.
pub fn normalized_score(prompt_acc: f64, baseline_acc: f64) -> f64 {
    (prompt_acc - baseline_acc) * 100.0
}
