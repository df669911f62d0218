//! Shared helpers for the integration suites: independent metric oracles,
//! a brute-force merge oracle, a minimal HTTP endpoint serving scripted
//! completions, and dataset scaffolding.

#![allow(dead_code)]

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;

// ---------------------------------------------------------------------------
// metric oracles: direct formula evaluation with plain loops and hash maps,
// sharing no code with the library
// ---------------------------------------------------------------------------

pub fn o_tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|w| w.to_lowercase()).collect()
}

fn o_ngram_list(tokens: &[String], n: usize) -> Vec<String> {
    if n == 0 || tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n)
        .map(|i| tokens[i..i + n].join("\u{1f}"))
        .collect()
}

fn o_counts(grams: &[String]) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for g in grams {
        *m.entry(g.clone()).or_insert(0) += 1;
    }
    m
}

fn o_f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

pub fn o_rouge_n(candidate: &str, references: &[String], n: usize) -> f64 {
    let cand_grams = o_ngram_list(&o_tokenize(candidate), n);
    let cand = o_counts(&cand_grams);
    let mut best = 0.0f64;
    for reference in references {
        let ref_grams = o_ngram_list(&o_tokenize(reference), n);
        let score = if cand_grams.is_empty() && ref_grams.is_empty() {
            1.0
        } else if cand_grams.is_empty() || ref_grams.is_empty() {
            0.0
        } else {
            let rf = o_counts(&ref_grams);
            let mut matched = 0usize;
            for (g, c) in &cand {
                matched += (*c).min(rf.get(g).copied().unwrap_or(0));
            }
            o_f1(
                matched as f64 / cand_grams.len() as f64,
                matched as f64 / ref_grams.len() as f64,
            )
        };
        best = best.max(score);
    }
    best
}

fn o_lcs(a: &[String], b: &[String]) -> usize {
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            table[i][j] = if a[i - 1] == b[j - 1] {
                table[i - 1][j - 1] + 1
            } else {
                table[i - 1][j].max(table[i][j - 1])
            };
        }
    }
    table[a.len()][b.len()]
}

pub fn o_rouge_l(candidate: &str, references: &[String]) -> f64 {
    let cand = o_tokenize(candidate);
    let mut best = 0.0f64;
    for reference in references {
        let rf = o_tokenize(reference);
        let score = if cand.is_empty() && rf.is_empty() {
            1.0
        } else if cand.is_empty() || rf.is_empty() {
            0.0
        } else {
            let lcs = o_lcs(&cand, &rf) as f64;
            o_f1(lcs / cand.len() as f64, lcs / rf.len() as f64)
        };
        best = best.max(score);
    }
    best
}

fn o_sari_order(
    src_tokens: &[String],
    cand_tokens: &[String],
    ref_token_lists: &[Vec<String>],
    n: usize,
) -> (f64, f64, f64) {
    let numref = ref_token_lists.len();
    let src = o_counts(&o_ngram_list(src_tokens, n));
    let cand = o_counts(&o_ngram_list(cand_tokens, n));
    let mut refs: HashMap<String, usize> = HashMap::new();
    for tokens in ref_token_lists {
        for (g, c) in o_counts(&o_ngram_list(tokens, n)) {
            *refs.entry(g).or_insert(0) += c;
        }
    }

    // every source/candidate count is replicated numref times so the
    // summed reference counts are on the same scale
    let rep = |m: &HashMap<String, usize>| -> HashMap<String, usize> {
        m.iter().map(|(g, c)| (g.clone(), c * numref)).collect()
    };
    let src_rep = rep(&src);
    let cand_rep = rep(&cand);

    let min_of = |a: &HashMap<String, usize>, b: &HashMap<String, usize>| {
        let mut out = HashMap::new();
        for (g, c) in a {
            let m = (*c).min(b.get(g).copied().unwrap_or(0));
            if m > 0 {
                out.insert(g.clone(), m);
            }
        }
        out
    };
    let sub_of = |a: &HashMap<String, usize>, b: &HashMap<String, usize>| {
        let mut out = HashMap::new();
        for (g, c) in a {
            let m = c.saturating_sub(b.get(g).copied().unwrap_or(0));
            if m > 0 {
                out.insert(g.clone(), m);
            }
        }
        out
    };

    // keep
    let keep_rep = min_of(&src_rep, &cand_rep);
    let keep_good = min_of(&keep_rep, &refs);
    let keep_all = min_of(&src_rep, &refs);
    let keep_p = if keep_rep.is_empty() {
        1.0
    } else {
        let mut s = 0.0;
        for (g, c) in &keep_good {
            s += *c as f64 / keep_rep[g] as f64;
        }
        s / keep_rep.len() as f64
    };
    let keep_all_total: usize = keep_all.values().sum();
    let keep_r = if keep_all_total == 0 {
        1.0
    } else {
        keep_good.values().sum::<usize>() as f64 / keep_all_total as f64
    };
    let keep = o_f1(keep_p, keep_r);

    // delete: precision only
    let del_rep = sub_of(&src_rep, &cand_rep);
    let del_good = sub_of(&del_rep, &refs);
    let del_p = if del_rep.is_empty() {
        1.0
    } else {
        let mut s = 0.0;
        for (g, c) in &del_good {
            s += *c as f64 / del_rep[g] as f64;
        }
        s / del_rep.len() as f64
    };

    // add: set semantics
    let added: Vec<&String> = cand.keys().filter(|g| !src.contains_key(*g)).collect();
    let addable: Vec<&String> = refs.keys().filter(|g| !src.contains_key(*g)).collect();
    let good = added.iter().filter(|g| refs.contains_key(**g)).count();
    let add_p = if added.is_empty() {
        1.0
    } else {
        good as f64 / added.len() as f64
    };
    let add_r = if addable.is_empty() {
        1.0
    } else {
        good as f64 / addable.len() as f64
    };
    let add = o_f1(add_p, add_r);

    (keep, del_p, add)
}

pub fn o_sari(source: &str, candidate: &str, references: &[String]) -> f64 {
    let src = o_tokenize(source);
    let cand = o_tokenize(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| o_tokenize(r)).collect();
    let mut total = 0.0;
    for n in 1..=4 {
        let (keep, del, add) = o_sari_order(&src, &cand, &refs, n);
        total += (keep + del + add) / 3.0;
    }
    total / 4.0 * 100.0
}

// ---------------------------------------------------------------------------
// brute-force merge oracle: selection sort with the documented tie-breaks,
// written as explicit comparisons rather than a sort key
// ---------------------------------------------------------------------------

/// Returns the (cohort, index) winners: cohort 0 is the incumbent
/// population, cohort 1 the offspring. Highest score wins; on ties the
/// incumbent cohort wins, then the lower index.
pub fn oracle_merge(old: &[f64], new: &[f64], n: usize) -> Vec<(usize, usize)> {
    let mut pool: Vec<(usize, usize, f64)> = old
        .iter()
        .enumerate()
        .map(|(i, &s)| (0usize, i, s))
        .chain(new.iter().enumerate().map(|(i, &s)| (1usize, i, s)))
        .collect();
    let mut winners = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best = 0usize;
        for i in 1..pool.len() {
            let (bc, bi, bs) = pool[best];
            let (cc, ci, cs) = pool[i];
            let better = cs > bs || (cs == bs && (cc < bc || (cc == bc && ci < bi)));
            if better {
                best = i;
            }
        }
        let (c, i, _) = pool.remove(best);
        winners.push((c, i));
    }
    winners
}

// ---------------------------------------------------------------------------
// scripted HTTP endpoint
// ---------------------------------------------------------------------------

pub type Behavior = Arc<dyn Fn(&serde_json::Value) -> String + Send + Sync>;

/// A tiny chat-completions endpoint on a loopback port. Responses are a pure
/// function of the request body, so repeated runs see identical completions.
pub struct MockServer {
    pub base_url: String,
    pub hits: Arc<AtomicU64>,
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
}

impl MockServer {
    pub fn spawn() -> MockServer {
        MockServer::spawn_with(Arc::new(scripted_completion))
    }

    pub fn spawn_with(behavior: Behavior) -> MockServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let addr = listener.local_addr().expect("local addr");
        let hits = Arc::new(AtomicU64::new(0));
        let shutdown = Arc::new(AtomicBool::new(false));
        {
            let hits = hits.clone();
            let shutdown = shutdown.clone();
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let hits = hits.clone();
                    let behavior = behavior.clone();
                    thread::spawn(move || serve_connection(stream, hits, behavior));
                }
            });
        }
        MockServer {
            base_url: format!("http://{addr}"),
            hits,
            addr,
            shutdown,
        }
    }

    pub fn request_count(&self) -> u64 {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // wake the accept loop so the thread can exit
        let _ = TcpStream::connect(self.addr);
    }
}

fn serve_connection(stream: TcpStream, hits: Arc<AtomicU64>, behavior: Behavior) {
    let Ok(read_half) = stream.try_clone() else {
        return;
    };
    let mut reader = BufReader::new(read_half);
    let mut writer = stream;
    loop {
        let mut request_line = String::new();
        match reader.read_line(&mut request_line) {
            Ok(0) | Err(_) => return,
            Ok(_) => {}
        }
        let mut content_length = 0usize;
        loop {
            let mut header = String::new();
            match reader.read_line(&mut header) {
                Ok(0) | Err(_) => return,
                Ok(_) => {}
            }
            let header = header.trim_end().to_ascii_lowercase();
            if header.is_empty() {
                break;
            }
            if let Some(v) = header.strip_prefix("content-length:") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
        let mut body = vec![0u8; content_length];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        hits.fetch_add(1, Ordering::SeqCst);
        let parsed: serde_json::Value =
            serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
        let content = behavior(&parsed);
        let payload = serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": content}}],
            "usage": {"prompt_tokens": 10, "completion_tokens": 5},
        })
        .to_string();
        let response = format!(
            "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{payload}",
            payload.len()
        );
        if writer.write_all(response.as_bytes()).is_err() {
            return;
        }
    }
}

pub fn fnv(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Scripted reply for one request's content. Operator instructions (they ask
/// for a marker-wrapped prompt) get a fresh marker-wrapped variation derived
/// from the content digest; task evaluations get a label derived the same
/// way, so identical requests always see identical completions.
pub fn scripted_reply(content: &str) -> String {
    let digest = fnv(content.as_bytes());
    if content.contains("<prompt>") {
        const WORDS: [&str; 8] = [
            "classify", "the", "overall", "sentiment", "carefully", "review", "text", "tone",
        ];
        let words: Vec<&str> = (0..6)
            .map(|i| WORDS[((digest >> (i * 8)) & 0xff) as usize % WORDS.len()])
            .collect();
        format!(
            "Step 1: considered both prompts.\n<prompt>{}</prompt>",
            words.join(" ")
        )
    } else if digest % 2 == 0 {
        "positive".into()
    } else {
        "negative".into()
    }
}

pub fn scripted_completion(body: &serde_json::Value) -> String {
    let content = body["messages"]
        .as_array()
        .and_then(|m| m.last())
        .and_then(|m| m["content"].as_str())
        .unwrap_or("");
    scripted_reply(content)
}

// ---------------------------------------------------------------------------
// dataset scaffolding
// ---------------------------------------------------------------------------

/// Writes a small sentiment classification dataset: dev/test splits, a demo
/// pool covering both labels, and a descriptor with a baseline prompt.
pub fn write_classification_dataset(dir: &Path, dev_rows: usize, test_rows: usize) {
    std::fs::create_dir_all(dir).unwrap();
    let label = |i: usize| if i % 2 == 0 { "positive" } else { "negative" };
    let mut dev = String::new();
    for i in 0..dev_rows {
        dev.push_str(&format!(
            "{}\n",
            serde_json::json!({"input": format!("dev sentence number {i}"), "label": label(i)})
        ));
    }
    std::fs::write(dir.join("dev.jsonl"), dev).unwrap();
    let mut test = String::new();
    for i in 0..test_rows {
        test.push_str(&format!(
            "{}\n",
            serde_json::json!({"input": format!("test sentence number {i}"), "label": label(i)})
        ));
    }
    std::fs::write(dir.join("test.jsonl"), test).unwrap();
    let mut demo = String::new();
    for i in 0..4 {
        demo.push_str(&format!(
            "{}\n",
            serde_json::json!({"input": format!("demo sentence number {i}"), "label": label(i)})
        ));
    }
    std::fs::write(dir.join("demo.jsonl"), demo).unwrap();
    std::fs::write(
        dir.join("task.json"),
        serde_json::json!({
            "kind": "classification",
            "description": "Binary sentiment classification.",
            "baseline_prompt": "Classify the sentiment of the sentence.",
            "label_space": ["positive", "negative"],
        })
        .to_string(),
    )
    .unwrap();
}
