//! Ranking effectiveness and explanation fidelity over TREC runs.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::trec::{Qrels, RankedDoc, ScoredRun};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "name", content = "k", rename_all = "lowercase")]
pub enum EffectivenessMetric {
    Mrr(usize),
    Ndcg(usize),
}

impl FromStr for EffectivenessMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, k) = split_cutoff(s)?;
        let k = k.unwrap_or(10);
        match name {
            "mrr" => Ok(EffectivenessMetric::Mrr(k)),
            "ndcg" => Ok(EffectivenessMetric::Ndcg(k)),
            _ => Err(Error::invalid(format!("unknown metric `{s}` (expected mrr@k or ndcg@k)"))),
        }
    }
}

impl fmt::Display for EffectivenessMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EffectivenessMetric::Mrr(k) => write!(f, "mrr@{k}"),
            EffectivenessMetric::Ndcg(k) => write!(f, "ndcg@{k}"),
        }
    }
}

fn split_cutoff(s: &str) -> Result<(&str, Option<usize>)> {
    match s.split_once('@') {
        None => Ok((s, None)),
        Some((name, k)) => {
            let k: usize = k
                .parse()
                .ok()
                .filter(|&k| k >= 1)
                .ok_or_else(|| Error::invalid(format!("bad cutoff in `{s}`")))?;
            Ok((name, Some(k)))
        }
    }
}

/// Per-query values, their mean, and the queries left out.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricReport {
    pub metric: String,
    pub mean: f64,
    pub per_query: BTreeMap<String, f64>,
    /// Queries that were left out, with the reason.
    pub skipped: BTreeMap<String, String>,
    /// Queries that count toward the mean but carry a caveat.
    pub flagged: BTreeMap<String, String>,
}

impl MetricReport {
    fn finish(metric: String, per_query: BTreeMap<String, f64>, skipped: BTreeMap<String, String>, flagged: BTreeMap<String, String>) -> Result<Self> {
        if per_query.is_empty() {
            return Err(Error::invalid(format!("no query could be evaluated for {metric}")));
        }
        let mean = per_query.values().sum::<f64>() / per_query.len() as f64;
        Ok(MetricReport {
            metric,
            mean,
            per_query,
            skipped,
            flagged,
        })
    }
}

/// Reciprocal rank of the first document with grade >= 1 within `cutoff`.
pub fn reciprocal_rank(docs: &[RankedDoc], qrels: &Qrels, qid: &str, cutoff: usize) -> f64 {
    docs.iter()
        .take(cutoff)
        .position(|d| qrels.grade(qid, &d.doc_id) >= 1)
        .map_or(0.0, |p| 1.0 / (p + 1) as f64)
}

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

fn discount(rank0: usize) -> f64 {
    1.0 / ((rank0 + 2) as f64).log2()
}

/// NDCG@k with gain `2^grade - 1`; zero when the query has no relevant
/// judgments.
pub fn ndcg_at(docs: &[RankedDoc], qrels: &Qrels, qid: &str, k: usize) -> f64 {
    let dcg: f64 = docs
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain(qrels.grade(qid, &d.doc_id)) * discount(i))
        .sum();
    let mut ideal: Vec<u32> = qrels.grades(qid).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal.iter().take(k).enumerate().map(|(i, &g)| gain(g) * discount(i)).sum();
    if idcg > 0.0 {
        dcg / idcg
    } else {
        0.0
    }
}

pub fn effectiveness(run: &ScoredRun, qrels: &Qrels, metric: EffectivenessMetric) -> Result<MetricReport> {
    let mut per_query = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    let mut flagged = BTreeMap::new();
    for (qid, docs) in run.iter() {
        if !qrels.contains_query(qid) {
            skipped.insert(qid.to_owned(), "no judgments".to_owned());
            continue;
        }
        if qrels.grades(qid).all(|g| g == 0) {
            flagged.insert(qid.to_owned(), "no relevant judgments".to_owned());
        }
        let v = match metric {
            EffectivenessMetric::Mrr(k) => reciprocal_rank(docs, qrels, qid, k),
            EffectivenessMetric::Ndcg(k) => ndcg_at(docs, qrels, qid, k),
        };
        per_query.insert(qid.to_owned(), v);
    }
    MetricReport::finish(metric.to_string(), per_query, skipped, flagged)
}

pub fn mrr(run: &ScoredRun, qrels: &Qrels, cutoff: usize) -> Result<MetricReport> {
    effectiveness(run, qrels, EffectivenessMetric::Mrr(cutoff.max(1)))
}

pub fn ndcg(run: &ScoredRun, qrels: &Qrels, k: usize) -> Result<MetricReport> {
    effectiveness(run, qrels, EffectivenessMetric::Ndcg(k.max(1)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "name", content = "k", rename_all = "lowercase")]
pub enum FidelityMetric {
    Pearson,
    Kendall,
    Topk(usize),
    Pairwise,
}

impl FromStr for FidelityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, k) = split_cutoff(s)?;
        match (name, k) {
            ("pearson", None) => Ok(FidelityMetric::Pearson),
            ("kendall", None) => Ok(FidelityMetric::Kendall),
            ("pairwise", None) => Ok(FidelityMetric::Pairwise),
            ("topk", k) => Ok(FidelityMetric::Topk(k.unwrap_or(10))),
            _ => Err(Error::invalid(format!(
                "unknown metric `{s}` (expected pearson, kendall, topk@k or pairwise)"
            ))),
        }
    }
}

impl fmt::Display for FidelityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FidelityMetric::Pearson => f.write_str("pearson"),
            FidelityMetric::Kendall => f.write_str("kendall"),
            FidelityMetric::Topk(k) => write!(f, "topk@{k}"),
            FidelityMetric::Pairwise => f.write_str("pairwise"),
        }
    }
}

impl FidelityMetric {
    /// The metric on two aligned score vectors; `None` when undefined.
    pub fn compute(self, e: &[f64], b: &[f64]) -> Option<f64> {
        match self {
            FidelityMetric::Pearson => pearson(e, b),
            FidelityMetric::Kendall => kendall_tau_b(e, b),
            FidelityMetric::Topk(k) => topk_overlap(e, b, k),
            FidelityMetric::Pairwise => pairwise_agreement(e, b),
        }
    }
}

/// Pearson correlation; `None` for fewer than two points or zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "vectors must be aligned");
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn tie_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` and returns the number of inversions removed.
fn merge_count(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall tau-b in O(n log n); `None` when either ranking is constant.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "vectors must be aligned");
    let n = x.len() as u64;
    if n < 2 {
        return None;
    }
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = n * (n - 1) / 2;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let n1 = tie_pairs(&xs);
    let mut n3 = 0u64;
    let mut run = 1u64;
    for w in pairs.windows(2) {
        if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
            run += 1;
        } else {
            n3 += run * (run - 1) / 2;
            run = 1;
        }
    }
    n3 += run * (run - 1) / 2;

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = Vec::with_capacity(ys.len());
    let swaps = merge_count(&mut ys, &mut buf);
    let n2 = tie_pairs(&ys);

    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    if denom == 0.0 {
        return None;
    }
    let num = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    Some((num / denom).clamp(-1.0, 1.0))
}

fn top_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// `|top_k(e) ∩ top_k(b)| / min(k, n)`. Ties are broken by position, so
/// callers should pass vectors in a fixed document order.
pub fn topk_overlap(e: &[f64], b: &[f64], k: usize) -> Option<f64> {
    assert_eq!(e.len(), b.len(), "vectors must be aligned");
    let depth = k.min(e.len());
    if depth == 0 {
        return None;
    }
    let te = top_indices(e, depth);
    let mut in_b = vec![false; b.len()];
    for i in top_indices(b, depth) {
        in_b[i] = true;
    }
    let hits = te.iter().filter(|&&i| in_b[i]).count();
    Some(hits as f64 / depth as f64)
}

/// Share of document pairs ordered the same way by both score vectors,
/// among pairs untied in both; `None` when no pair is comparable.
pub fn pairwise_agreement(e: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(e.len(), b.len(), "vectors must be aligned");
    let (mut agree, mut total) = (0u64, 0u64);
    for i in 0..e.len() {
        for j in i + 1..e.len() {
            let de = e[i].total_cmp(&e[j]);
            let db = b[i].total_cmp(&b[j]);
            if de.is_eq() || db.is_eq() {
                continue;
            }
            total += 1;
            if de == db {
                agree += 1;
            }
        }
    }
    (total > 0).then(|| agree as f64 / total as f64)
}

/// Aligned score vectors for one query, ordered by doc id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AlignedScores {
    pub doc_ids: Vec<String>,
    pub e: Vec<f64>,
    pub b: Vec<f64>,
    /// Candidates present in only one of the runs.
    pub missing: usize,
}

/// Pairs up scores for the documents both runs hold for `qid`, optionally
/// restricted to a candidate list.
pub fn align_scores(e: &[RankedDoc], b: &[RankedDoc], candidates: Option<&[RankedDoc]>) -> AlignedScores {
    let em: HashMap<&str, f64> = e.iter().map(|d| (d.doc_id.as_str(), d.score)).collect();
    let bm: HashMap<&str, f64> = b.iter().map(|d| (d.doc_id.as_str(), d.score)).collect();
    let mut ids: Vec<&str> = match candidates {
        Some(c) => c.iter().map(|d| d.doc_id.as_str()).collect(),
        None => {
            let mut all: Vec<&str> = em.keys().chain(bm.keys()).copied().collect();
            all.sort_unstable();
            all.dedup();
            all
        }
    };
    ids.sort_unstable();
    let mut out = AlignedScores::default();
    for id in ids {
        match (em.get(id), bm.get(id)) {
            (Some(&se), Some(&sb)) => {
                out.doc_ids.push(id.to_owned());
                out.e.push(se);
                out.b.push(sb);
            }
            _ => out.missing += 1,
        }
    }
    out
}

/// Per-query fidelity between an explanation run `e` and a target run `b`,
/// averaged over queries. With `candidates`, each query is restricted to
/// that run's documents for the query.
pub fn fidelity(run_e: &ScoredRun, run_b: &ScoredRun, metric: FidelityMetric, candidates: Option<&ScoredRun>) -> Result<MetricReport> {
    let qids: Vec<&str> = run_b.qids().collect();
    type Outcome = std::result::Result<(f64, usize), String>;
    let results: Vec<(String, Outcome)> = qids
        .par_iter()
        .map(|&qid| {
            let outcome = (|| {
                let e = run_e.get(qid).ok_or("query missing from explanation run")?;
                let b = run_b.get(qid).expect("qid from run_b");
                let cand = match candidates {
                    Some(c) => Some(c.get(qid).ok_or("query missing from candidate run")?),
                    None => None,
                };
                let aligned = align_scores(e, b, cand);
                if aligned.doc_ids.is_empty() {
                    return Err("no overlapping documents");
                }
                metric
                    .compute(&aligned.e, &aligned.b)
                    .map(|v| (v, aligned.missing))
                    .ok_or("metric undefined (constant scores or too few documents)")
            })();
            (qid.to_owned(), outcome.map_err(str::to_owned))
        })
        .collect();

    let mut per_query = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    let mut flagged = BTreeMap::new();
    for (qid, r) in results {
        match r {
            Ok((v, missing)) => {
                if missing > 0 {
                    flagged.insert(qid.clone(), format!("{missing} candidate(s) not scored by both runs"));
                }
                per_query.insert(qid, v);
            }
            Err(reason) => {
                log::warn!("fidelity: query {qid} skipped: {reason}");
                skipped.insert(qid, reason);
            }
        }
    }
    MetricReport::finish(metric.to_string(), per_query, skipped, flagged)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairedTTest {
    pub n: usize,
    pub mean_diff: f64,
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p_value: f64,
}

/// Student's paired t-test on `a - b`, `df = n - 1`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("{} vs {} paired values", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid("a paired t-test needs at least two pairs"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = (n - 1) as f64;
    let (t, p_value) = if var == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = mean / (var / n as f64).sqrt();
        (t, t_two_sided_p(t, df))
    };
    Ok(PairedTTest {
        n,
        mean_diff: mean,
        t,
        df,
        p_value,
    })
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    statrs::function::beta::beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Paired t-test over the queries two reports share.
pub fn compare_reports(a: &MetricReport, b: &MetricReport) -> Result<PairedTTest> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .per_query
        .iter()
        .filter_map(|(q, x)| b.per_query.get(q).map(|y| (*x, *y)))
        .unzip();
    paired_t_test(&xs, &ys)
}
