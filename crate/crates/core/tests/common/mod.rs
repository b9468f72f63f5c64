#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

use rand::seq::SliceRandom;
use rand::Rng;
use rtk_core::alignment::AttentionTensor;
use rtk_core::index::Document;

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "tu", "ren", "vor", "pal", "dim", "gul", "zen", "bor", "fa", "nix", "qua", "jo", "wel",
];

pub fn pseudo_word<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(2..=3);
    (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

/// `n` distinct pseudo words, none of them in `exclude`.
pub fn vocabulary<R: Rng>(rng: &mut R, n: usize, exclude: &BTreeSet<String>) -> Vec<String> {
    let mut seen = exclude.clone();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = pseudo_word(rng);
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

pub fn random_text<R: Rng>(rng: &mut R, vocab: &[String], len: usize) -> String {
    (0..len).map(|_| vocab.choose(rng).unwrap().as_str()).collect::<Vec<_>>().join(" ")
}

pub fn random_corpus<R: Rng>(rng: &mut R, vocab: &[String], n_docs: usize, min_len: usize, max_len: usize) -> Vec<Document> {
    (0..n_docs)
        .map(|i| {
            let len = rng.gen_range(min_len..=max_len);
            Document::new(format!("d{i:03}"), random_text(rng, vocab, len))
        })
        .collect()
}

/// Word ids for `n` subword tokens: starts at word 0 and either stays on
/// the current word or moves to the next one.
pub fn random_word_ids<R: Rng>(rng: &mut R, n: usize) -> Vec<Option<u32>> {
    let mut ids = Vec::with_capacity(n);
    let mut w = 0u32;
    for i in 0..n {
        if i > 0 && rng.gen_bool(0.6) {
            w += 1;
        }
        ids.push(Some(w));
    }
    ids
}

/// Row-stochastic random attention over the `[CLS] q [SEP] d [SEP]` layout.
pub fn random_tensor<R: Rng>(rng: &mut R, layers: usize, heads: usize, q_len: usize, d_len: usize) -> AttentionTensor {
    let l = q_len + d_len + 3;
    let mut ids = vec![None];
    ids.extend(random_word_ids(rng, q_len));
    ids.push(None);
    ids.extend(random_word_ids(rng, d_len));
    ids.push(None);
    let mut values = Vec::with_capacity(layers * heads * l * l);
    for _ in 0..layers * heads * l {
        let row: Vec<f64> = (0..l).map(|_| rng.gen_range(0.01..1.0)).collect();
        let sum: f64 = row.iter().sum();
        values.extend(row.iter().map(|v| (v / sum) as f32));
    }
    AttentionTensor::new(layers, heads, q_len, d_len, ids, values).expect("valid random tensor")
}

/// A random tensor whose query and document each span at least two words,
/// so it can be split into partial segments.
pub fn random_splittable_tensor<R: Rng>(rng: &mut R, layers: usize, heads: usize, q_len: usize, d_len: usize) -> AttentionTensor {
    assert!(q_len >= 2 && d_len >= 2);
    loop {
        let t = random_tensor(rng, layers, heads, q_len, d_len);
        if t.num_query_words() >= 2 && t.num_doc_words() >= 2 {
            return t;
        }
    }
}

pub fn write_attention_file(path: &Path, tensors: &[AttentionTensor]) {
    let mut bytes = Vec::new();
    for t in tensors {
        t.write_to(&mut bytes).unwrap();
    }
    std::fs::write(path, bytes).unwrap();
}

pub fn write_corpus_jsonl(path: &Path, docs: &[Document]) {
    let mut text = String::new();
    for d in docs {
        text.push_str(&serde_json::to_string(d).unwrap());
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

pub fn rtk(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtk"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RTK_CONFIG")
        .env_remove("RUST_LOG")
        .output()
        .expect("rtk binary runs")
}

pub fn rtk_ok(args: &[&str], cwd: &Path) -> Output {
    let out = rtk(args, cwd);
    assert!(
        out.status.success(),
        "rtk {} exited with {:?}\nstderr: {}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}
