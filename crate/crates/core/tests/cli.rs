mod common;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny")
}

fn stderr(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn build_tiny_index(dir: &Path) -> PathBuf {
    let idx = dir.join("tiny.rtk");
    rtk_ok(&["index", "build", "--corpus", "corpus.tsv", "--out", p(&idx)], &fixtures());
    idx
}

#[test]
fn help_and_version_exit_zero() {
    let dir = fixtures();
    for args in [&["--help"][..], &["search", "--help"], &["probe", "years", "--help"], &["--version"]] {
        let out = rtk(args, &dir);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = fixtures();
    let out = rtk(&["search", "--queries", "queries.tsv"], &dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--index"), "{}", stderr(&out));

    assert_eq!(rtk(&["frobnicate"], &dir).status.code(), Some(1));
    assert_eq!(rtk(&[], &dir).status.code(), Some(1));
    assert_eq!(rtk(&["search", "--index", "x", "--queries", "q", "--scorer", "nope"], &dir).status.code(), Some(1));

    let tmp = tempfile::tempdir().unwrap();
    let idx = build_tiny_index(tmp.path());
    let out = rtk(&["search", "--index", p(&idx), "--queries", "queries.tsv", "--scorer", "bm25t"], &dir);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--thesaurus"));

    let out = rtk(&["search", "--index", p(&idx), "--queries", "queries.tsv", "--k1", "-2"], &dir);
    assert_eq!(out.status.code(), Some(1));

    let out = rtk(&["eval", "effectiveness", "--run", "bm25t.run", "--qrels", "qrels.txt", "--metric", "map"], &dir);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    let dir = fixtures();
    let tmp = tempfile::tempdir().unwrap();
    let out = rtk(&["index", "build", "--corpus", "missing.tsv", "--out", p(&tmp.path().join("x"))], &dir);
    assert_eq!(out.status.code(), Some(2));

    let bogus = tmp.path().join("bogus.rtk");
    std::fs::write(&bogus, b"not an index").unwrap();
    let out = rtk(&["index", "stats", "--index", p(&bogus)], &dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("magic"), "{}", stderr(&out));

    let idx = build_tiny_index(tmp.path());
    let mut bytes = std::fs::read(&idx).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    std::fs::write(&idx, bytes).unwrap();
    assert_eq!(rtk(&["index", "stats", "--index", p(&idx)], &dir).status.code(), Some(2));

    let bad_th = tmp.path().join("bad.tsv");
    std::fs::write(&bad_th, "car\tvehicle\t1.7\n").unwrap();
    let idx = build_tiny_index(tmp.path());
    let out = rtk(
        &["search", "--index", p(&idx), "--thesaurus", p(&bad_th), "--scorer", "bm25t", "--queries", "queries.tsv"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(2));
}

const STOPWORDS: [&str; 8] = ["the", "a", "by", "on", "of", "in", "with", "and"];

/// BM25T over the tiny corpus computed directly from whitespace tokens.
/// The fixture avoids inflected query and thesaurus words, so no stemming
/// is needed for the terms that matter.
fn oracle_bm25t(k1: f64, b: f64) -> BTreeMap<String, Vec<(String, f64)>> {
    let corpus = std::fs::read_to_string(fixtures().join("corpus.tsv")).unwrap();
    let docs: Vec<(String, Vec<String>)> = corpus
        .lines()
        .map(|l| {
            let (id, text) = l.split_once('\t').unwrap();
            let toks = text.split_whitespace().filter(|t| !STOPWORDS.contains(t)).map(str::to_owned).collect();
            (id.to_owned(), toks)
        })
        .collect();
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.1.len()).sum::<usize>() as f64 / n;
    let mut th: HashMap<String, Vec<(String, f64)>> = HashMap::new();
    for l in std::fs::read_to_string(fixtures().join("thesaurus.tsv")).unwrap().lines() {
        let f: Vec<&str> = l.split('\t').collect();
        th.entry(f[0].into()).or_default().push((f[1].into(), f[2].parse().unwrap()));
    }
    let queries = std::fs::read_to_string(fixtures().join("queries.tsv")).unwrap();
    let mut out = BTreeMap::new();
    for l in queries.lines() {
        let (qid, text) = l.split_once('\t').unwrap();
        let mut scored = Vec::new();
        for (id, toks) in &docs {
            let k = k1 * (1.0 - b + b * toks.len() as f64 / avgdl);
            let mut s = 0.0;
            for qt in text.split_whitespace() {
                let tf = toks.iter().filter(|t| *t == qt).count() as f64;
                let f = if tf > 0.0 {
                    tf
                } else {
                    th.get(qt)
                        .into_iter()
                        .flatten()
                        .filter(|(dt, _)| toks.contains(dt))
                        .map(|(_, s)| *s)
                        .fold(0.0, f64::max)
                };
                let df = docs.iter().filter(|d| d.1.iter().any(|t| t == qt)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                s += idf * f * (k1 + 1.0) / (f + k);
            }
            if s > 0.0 {
                scored.push((id.clone(), s));
            }
        }
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        out.insert(qid.to_owned(), scored);
    }
    out
}

fn parse_run(text: &str) -> BTreeMap<String, Vec<(String, f64)>> {
    let mut out: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for l in text.lines() {
        let f: Vec<&str> = l.split_whitespace().collect();
        out.entry(f[0].into()).or_default().push((f[2].into(), f[4].parse().unwrap()));
    }
    out
}

#[test]
fn tiny_pipeline_matches_golden_run_and_oracle() {
    let dir = fixtures();
    let tmp = tempfile::tempdir().unwrap();
    let idx = build_tiny_index(tmp.path());
    let run = tmp.path().join("bm25t.run");
    rtk_ok(
        &[
            "search", "--index", p(&idx), "--thesaurus", "thesaurus.tsv", "--scorer", "bm25t", "--queries", "queries.tsv",
            "--k", "10", "--out", p(&run),
        ],
        &dir,
    );
    let got = std::fs::read_to_string(&run).unwrap();
    let golden = std::fs::read_to_string(dir.join("bm25t.run")).unwrap();
    assert_eq!(got, golden);

    let oracle = oracle_bm25t(0.9, 0.4);
    let parsed = parse_run(&got);
    assert_eq!(parsed.len(), oracle.len());
    for (qid, want) in &oracle {
        let have = &parsed[qid];
        assert_eq!(have.len(), want.len(), "{qid}");
        for ((hd, hs), (wd, ws)) in have.iter().zip(want) {
            assert_eq!(hd, wd, "{qid}");
            assert!((hs - ws).abs() < 1e-12 * ws.abs().max(1.0), "{qid} {hd}: {hs} vs {ws}");
        }
    }

    let bm25 = tmp.path().join("bm25.run");
    rtk_ok(&["search", "--index", p(&idx), "--queries", "queries.tsv", "--out", p(&bm25)], &dir);
    let report = tmp.path().join("fid.tsv");
    rtk_ok(
        &["eval", "fidelity", "--run-e", p(&run), "--run-b", p(&bm25), "--metric", "pearson", "--out", p(&report)],
        &dir,
    );
    let text = std::fs::read_to_string(&report).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config: {"));
    assert_eq!(lines.next().unwrap(), "metric\tqid\tvalue");
    assert!(text.lines().any(|l| l.starts_with("pearson\tall\t")));

    let eff = rtk_ok(&["eval", "effectiveness", "--run", p(&run), "--qrels", "qrels.txt", "--baseline", p(&bm25)], &dir);
    let eff = String::from_utf8(eff.stdout).unwrap();
    assert!(eff.contains("mrr@10\tall\t1\n"), "{eff}");
    assert!(eff.contains("ndcg@10\tp_value\t"));
}

#[test]
fn config_file_env_and_flag_precedence() {
    let dir = fixtures();
    let tmp = tempfile::tempdir().unwrap();
    let idx = build_tiny_index(tmp.path());
    let cfg = tmp.path().join("rtk.toml");
    std::fs::write(
        &cfg,
        format!("seed = 3\n[bm25]\nk1 = 1.5\nb = 0.75\n[paths]\nindex = {:?}\nthesaurus = \"thesaurus.tsv\"\n", p(&idx)),
    )
    .unwrap();

    let search = |extra: &[&str]| {
        let mut args = vec!["search", "--scorer", "bm25t", "--queries", "queries.tsv", "--k", "10"];
        args.extend_from_slice(extra);
        String::from_utf8(rtk_ok(&args, &dir).stdout).unwrap()
    };
    let via_config = search(&["--config", p(&cfg)]);
    let parsed = parse_run(&via_config);
    let oracle = oracle_bm25t(1.5, 0.75);
    for (qid, want) in &oracle {
        for ((hd, hs), (wd, ws)) in parsed[qid].iter().zip(want) {
            assert_eq!(hd, wd);
            assert!((hs - ws).abs() < 1e-12 * ws.max(1.0));
        }
    }

    let overridden = search(&["--config", p(&cfg), "--k1", "0.9", "--b", "0.4", "--tag", "bm25t"]);
    assert_eq!(overridden, std::fs::read_to_string(dir.join("bm25t.run")).unwrap());

    let out = Command::new(env!("CARGO_BIN_EXE_rtk"))
        .args(["search", "--scorer", "bm25t", "--queries", "queries.tsv", "--k", "10"])
        .current_dir(&dir)
        .env("RTK_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout), via_config);
    assert!(stderr(&out).contains("\"k1\":1.5"));

    let broken = tmp.path().join("broken.toml");
    std::fs::write(&broken, "[bm25]\nk9 = 1\n").unwrap();
    let out = rtk(&["search", "--config", p(&broken), "--queries", "queries.tsv"], &dir);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn thesaurus_subcommands() {
    let dir = fixtures();
    let tmp = tempfile::tempdir().unwrap();
    let idx = build_tiny_index(tmp.path());

    let scores = tmp.path().join("scores.tsv");
    std::fs::write(&scores, "car\tvehicle\t0.68\ncar\tford\t0.05\nlake\triver\t0.3\n").unwrap();
    let out = rtk_ok(&["thesaurus", "filter", "--scores", p(&scores), "--min-score", "0.1", "--index", p(&idx)], &dir);
    let text = String::from_utf8(out.stdout).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body, ["car\tvehicle\t0.68", "lake\triver\t0.3"]);

    let out = rtk_ok(&["thesaurus", "top", "--index", p(&idx), "--thesaurus", "thesaurus.tsv", "--k", "3"], &dir);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l == "qt\tdt\tscore\tweight"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 4);

    let out = rtk_ok(&["thesaurus", "candidates", "--index", p(&idx), "--n-query-terms", "2", "--n-doc-terms", "3"], &dir);
    let pairs = String::from_utf8(out.stdout).unwrap().lines().filter(|l| !l.starts_with('#')).count();
    assert!(pairs > 0 && pairs <= 6);

    let align = tmp.path().join("align.jsonl");
    std::fs::write(
        &align,
        concat!(
            r#"{"query_terms":["car","road"],"alignments":[["car","vehicle"],["car","vehicle"]]}"#,
            "\n",
            r#"{"query_terms":["car"],"alignments":[["car","ford"]]}"#,
            "\n"
        ),
    )
    .unwrap();
    let out = rtk_ok(&["thesaurus", "ltog", "--alignments", p(&align), "--min-count", "0"], &dir);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("car\tvehicle\t")));
}

#[test]
fn align_and_traindata_subcommands() {
    let dir = fixtures();
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let attn_dir = tmp.path().join("attn");
    std::fs::create_dir(&attn_dir).unwrap();
    for name in ["p.bin", "n.bin"] {
        write_attention_file(&attn_dir.join(name), &[random_splittable_tensor(&mut rng, 2, 2, 3, 6)]);
    }
    let out = rtk_ok(&["align", "extract", "--attn", p(&attn_dir.join("p.bin")), "--seed", "9"], tmp.path());
    let line = String::from_utf8(out.stdout).unwrap();
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(v["record"], 0);
    assert!(v["segments"].is_object());
    assert!(v.get("affinity").is_none());

    let inputs = tmp.path().join("inputs.jsonl");
    std::fs::write(
        &inputs,
        r#"{"qid":"q1","pos_doc_id":"d01","neg_doc_id":"d07","attn_pos":"attn/p.bin","attn_neg":"attn/n.bin"}"#.to_owned() + "\n",
    )
    .unwrap();
    let out = rtk_ok(
        &["traindata", "phase1", "--inputs", p(&inputs), "--teacher", p(&fixtures().join("bm25t.run"))],
        &dir,
    );
    let rec: serde_json::Value = serde_json::from_str(String::from_utf8(out.stdout).unwrap().trim()).unwrap();
    assert_eq!(rec["teacher_pos"], 3.002904762925041);

    let out = rtk(&["traindata", "phase1", "--inputs", p(&inputs), "--teacher", "queries.tsv"], &dir);
    assert_eq!(out.status.code(), Some(2));

    let idx = build_tiny_index(tmp.path());
    let triplets = tmp.path().join("triplets.tsv");
    std::fs::write(&triplets, "q1\tcar repair\td02\td08\nq2\tlake boat\td04\td05\n").unwrap();
    let out = rtk_ok(
        &[
            "traindata", "phase2", "--index", p(&idx), "--corpus", "corpus.tsv", "--triplets", p(&triplets),
            "--thesaurus", "thesaurus.tsv",
        ],
        &dir,
    );
    let recs: Vec<serde_json::Value> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0]["qt"], "car");
    assert_eq!(recs[0]["dt_pos"], "vehicle");
    assert_eq!(recs[0]["dt_neg"], "vehicle");
}

#[test]
fn probe_subcommands_write_reports_and_charts() {
    let dir = fixtures();
    let tmp = tempfile::tempdir().unwrap();
    let idx = build_tiny_index(tmp.path());

    let svg = tmp.path().join("years.svg");
    let out = rtk_ok(
        &[
            "probe", "years", "--index", p(&idx), "--thesaurus", "thesaurus.tsv", "--query", "car road", "--template",
            "{year} car road", "--from", "2000", "--to", "2004", "--svg", p(&svg),
        ],
        &dir,
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# config: "));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 6);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<polyline"));

    let rows = tmp.path().join("postfix.jsonl");
    std::fs::write(&rows, r#"{"query":"lake boat","doc":"a boat on the lake","common_term":"boat"}"#.to_owned() + "\n").unwrap();
    let out = rtk_ok(
        &["probe", "postfix", "--scorer", "bm25", "--index", p(&idx), "--in", p(&rows), "--chars", "xyz"],
        &dir,
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 4);

    let grid = tmp.path().join("grid.jsonl");
    std::fs::write(&grid, r#"{"query":"car dealer","template":"the {X} dealer","original_value":"honda"}"#.to_owned() + "\n").unwrap();
    let cols = tmp.path().join("cols.txt");
    std::fs::write(&cols, "ford\nhonda\ntoyota\n").unwrap();
    let reference = tmp.path().join("ref.tsv");
    std::fs::write(&reference, "ford\t3\nhonda\t2\ntoyota\t1\n").unwrap();
    let out = rtk_ok(
        &[
            "probe", "grid", "--index", p(&idx), "--thesaurus", "thesaurus.tsv", "--in", p(&grid), "--columns", p(&cols),
            "--reference", p(&reference),
        ],
        &dir,
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# bias_correlation\t"), "{text}");

    let ext = tmp.path().join("ext.tsv");
    std::fs::write(&ext, "car road\t2000 car road\t1.5\n").unwrap();
    let out = rtk(
        &["probe", "years", "--scorer", "external", "--scores", p(&ext), "--query", "car road", "--template", "{year} car road", "--from", "2000", "--to", "2001"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}
