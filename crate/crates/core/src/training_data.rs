//! Supervision records for external trainers, the two training losses, and
//! the local-to-global (L-to-G) thesaurus builder.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{build_segments, partition_query, AttentionTensor, PartitionReduce, SegmentPair};
use crate::analyzer::{Analyzer, Term};
use crate::error::{Error, Result};
use crate::index::CorpusIndex;
use crate::scoring::{best_doc_match, bm25_doc, length_norm, Bm25Params, DocStats, IndexedDoc, TextDoc};
use crate::thesaurus::Thesaurus;
use crate::trec::ScoredRun;

/// `((se_pos - se_neg) - (sb_pos - sb_neg))^2`.
pub fn margin_mse(se_pos: f64, se_neg: f64, sb_pos: f64, sb_neg: f64) -> f64 {
    let diff = (se_pos - se_neg) - (sb_pos - sb_neg);
    diff * diff
}

/// `max(0, 1 - se_pos + se_neg)`.
pub fn hinge_loss(se_pos: f64, se_neg: f64) -> f64 {
    (1.0 - se_pos + se_neg).max(0.0)
}

/// The free pair scores injected for one query term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairInjection<'a> {
    pub qt: &'a str,
    /// Score standing in for `qt`'s frequency in the positive document.
    pub score_pos: f64,
    /// Score for the negative document. Used only when `qt` is absent from
    /// it; when `None` the thesaurus best match (or zero) applies.
    pub score_neg: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossSurface {
    pub loss: f64,
    pub score_pos: f64,
    pub score_neg: f64,
    /// d loss / d `score_pos`.
    pub grad_pos: f64,
    /// d loss / d `score_neg`; zero when the negative score was not injected.
    pub grad_neg: f64,
}

/// Hinge loss of BM25T scores for a positive and negative document with
/// the pair score for `qt` treated as a free variable, plus its analytic
/// gradient.
pub fn bm25t_loss_surface(
    index: &CorpusIndex,
    params: &Bm25Params,
    thesaurus: Option<&Thesaurus>,
    query: &[Term],
    d_pos: &str,
    d_neg: &str,
    injection: PairInjection<'_>,
) -> Result<LossSurface> {
    params.validate()?;
    let qt = injection.qt;
    let pos = IndexedDoc::by_id(index, d_pos)?;
    let neg = IndexedDoc::by_id(index, d_neg)?;
    let count = query.iter().filter(|t| t.as_str() == qt).count();
    if count == 0 {
        return Err(Error::invalid(format!("`{qt}` is not a query term")));
    }
    if pos.contains(qt) {
        return Err(Error::invalid(format!("`{qt}` occurs in the positive document `{d_pos}`")));
    }
    for s in std::iter::once(injection.score_pos).chain(injection.score_neg) {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::ScoreOutOfRange {
                qt: qt.to_owned(),
                dt: String::new(),
                score: s,
            });
        }
    }

    let rest: Vec<Term> = query.iter().filter(|t| t.as_str() != qt).cloned().collect();
    let idf = index.idf(qt);
    let c = count as f64;
    let k1 = params.k1;
    let k_pos = length_norm(params, pos.len(), index.avgdl());
    let k_neg = length_norm(params, neg.len(), index.avgdl());
    let weight = |f: f64, k: f64| f * (k1 + 1.0) / (f + k);
    let slope = |f: f64, k: f64| (k1 + 1.0) * k / ((f + k) * (f + k));

    let score_pos = bm25_doc(index, params, thesaurus, &rest, &pos) + c * idf * weight(injection.score_pos, k_pos);

    let tf_neg = neg.tf(qt);
    let (f_neg, injected) = if tf_neg > 0 {
        (f64::from(tf_neg), false)
    } else if let Some(s) = injection.score_neg {
        (s, true)
    } else {
        let f = thesaurus.and_then(|t| best_doc_match(t, qt, &neg)).map_or(0.0, |(_, s)| s);
        (f, false)
    };
    let score_neg = bm25_doc(index, params, thesaurus, &rest, &neg) + c * idf * weight(f_neg, k_neg);

    let margin = 1.0 - score_pos + score_neg;
    let active = margin > 0.0;
    Ok(LossSurface {
        loss: margin.max(0.0),
        score_pos,
        score_neg,
        grad_pos: if active { -c * idf * slope(injection.score_pos, k_pos) } else { 0.0 },
        grad_neg: if active && injected { c * idf * slope(f_neg, k_neg) } else { 0.0 },
    })
}

/// A scorer of (query term, document term) pairs with outputs in `[0, 1]`.
/// `None` means the pair has no score.
pub trait TermPairScorer: Sync {
    fn pair_score(&self, qt: &str, dt: &str) -> Option<f64>;

    /// Highest-scoring document term for `qt`; the smallest term wins ties.
    fn best_match(&self, qt: &str, doc: &dyn DocStats) -> Result<Option<(String, f64)>> {
        let mut best: Option<(&str, f64)> = None;
        for (dt, _) in doc.terms() {
            let Some(s) = self.pair_score(qt, dt) else { continue };
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::ScoreOutOfRange {
                    qt: qt.to_owned(),
                    dt: dt.to_owned(),
                    score: s,
                });
            }
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((dt, s));
            }
        }
        Ok(best.map(|(d, s)| (d.to_owned(), s)))
    }
}

impl TermPairScorer for Thesaurus {
    fn pair_score(&self, qt: &str, dt: &str) -> Option<f64> {
        self.score(qt, dt)
    }

    fn best_match(&self, qt: &str, doc: &dyn DocStats) -> Result<Option<(String, f64)>> {
        Ok(best_doc_match(self, qt, doc))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub qid: String,
    pub query: String,
    pub pos_doc_id: String,
    pub neg_doc_id: String,
}

/// Reads `query \t pos_doc_id \t neg_doc_id` lines. A four-column form with
/// a leading qid is also accepted; otherwise the line number is the qid.
pub fn read_triplets<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<Triplet>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let (qid, rest) = match fields.len() {
            3 => ((i + 1).to_string(), &fields[..]),
            4 => (fields[0].to_owned(), &fields[1..]),
            _ => {
                return Err(Error::parse(
                    source_name,
                    i + 1,
                    "expected `query<TAB>pos_doc_id<TAB>neg_doc_id`",
                ))
            }
        };
        out.push(Triplet {
            qid,
            query: rest[0].to_owned(),
            pos_doc_id: rest[1].to_owned(),
            neg_doc_id: rest[2].to_owned(),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase2Record {
    pub qid: String,
    pub qt: Term,
    pub dt_pos: Term,
    pub dt_neg: Term,
    pub doc_pos_id: String,
    pub doc_neg_id: String,
}

/// Builds the phase-2 record for one triplet, or `None` when no query term
/// qualifies. Query and documents are analyzed with stopwords kept. The
/// qualifying terms are those absent from both documents that have a scored
/// candidate in each; one is drawn uniformly.
pub fn phase2_record<S, R>(
    analyzer: &Analyzer,
    scorer: &S,
    docs: &HashMap<String, String>,
    triplet: &Triplet,
    rng: &mut R,
) -> Result<Option<Phase2Record>>
where
    S: TermPairScorer + ?Sized,
    R: Rng + ?Sized,
{
    let text = |id: &str| docs.get(id).ok_or_else(|| Error::UnknownDoc(id.to_owned()));
    let pos = TextDoc::from_terms(analyzer.analyze(text(&triplet.pos_doc_id)?, true));
    let neg = TextDoc::from_terms(analyzer.analyze(text(&triplet.neg_doc_id)?, true));
    let query: BTreeSet<Term> = analyzer.analyze(&triplet.query, true).into_iter().collect();

    let mut candidates = Vec::new();
    for qt in query.iter().filter(|t| !pos.contains(t) && !neg.contains(t)) {
        let Some((dt_pos, _)) = scorer.best_match(qt, &pos)? else { continue };
        let Some((dt_neg, _)) = scorer.best_match(qt, &neg)? else { continue };
        candidates.push((qt.clone(), dt_pos, dt_neg));
    }
    if candidates.is_empty() {
        log::debug!("triplet {} skipped: no qualifying query term", triplet.qid);
        return Ok(None);
    }
    let (qt, dt_pos, dt_neg) = candidates.swap_remove(rng.gen_range(0..candidates.len()));
    Ok(Some(Phase2Record {
        qid: triplet.qid.clone(),
        qt,
        dt_pos: Term::new(dt_pos),
        dt_neg: Term::new(dt_neg),
        doc_pos_id: triplet.pos_doc_id.clone(),
        doc_neg_id: triplet.neg_doc_id.clone(),
    }))
}

/// RNG for the `index`-th item under a run seed.
pub fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Phase2Batch {
    pub records: Vec<Phase2Record>,
    pub skipped: usize,
}

/// Phase-2 records for all triplets, in input order. Each triplet draws from
/// its own RNG stream so the output does not depend on thread count.
pub fn emit_phase2<S: TermPairScorer + ?Sized>(
    analyzer: &Analyzer,
    scorer: &S,
    docs: &HashMap<String, String>,
    triplets: &[Triplet],
    seed: u64,
) -> Result<Phase2Batch> {
    let results: Vec<Option<Phase2Record>> = triplets
        .par_iter()
        .enumerate()
        .map(|(i, t)| phase2_record(analyzer, scorer, docs, t, &mut item_rng(seed, i as u64)))
        .collect::<Result<_>>()?;
    let skipped = results.iter().filter(|r| r.is_none()).count();
    Ok(Phase2Batch {
        records: results.into_iter().flatten().collect(),
        skipped,
    })
}

/// One line of phase-1 input: a triplet plus the attention files for the
/// positive and negative pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase1Input {
    pub qid: String,
    pub pos_doc_id: String,
    pub neg_doc_id: String,
    pub attn_pos: PathBuf,
    pub attn_neg: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase1Record {
    pub qid: String,
    pub pos_doc_id: String,
    pub neg_doc_id: String,
    pub segments_pos: SegmentPair,
    pub segments_neg: SegmentPair,
    pub teacher_pos: f64,
    pub teacher_neg: f64,
}

/// Looks up a teacher score in a run.
pub fn teacher_score(run: &ScoredRun, qid: &str, doc_id: &str) -> Result<f64> {
    run.get(qid)
        .and_then(|docs| docs.iter().find(|d| d.doc_id == doc_id))
        .map(|d| d.score)
        .ok_or_else(|| Error::MissingScore {
            qid: qid.to_owned(),
            doc_id: doc_id.to_owned(),
        })
}

/// Builds a phase-1 record. One query split is shared by both documents.
pub fn phase1_record<R: Rng + ?Sized>(
    input: &Phase1Input,
    attn_pos: &AttentionTensor,
    attn_neg: &AttentionTensor,
    teacher: &ScoredRun,
    reduce: PartitionReduce,
    rng: &mut R,
) -> Result<Phase1Record> {
    let aff_pos = crate::alignment::aggregate_attention(attn_pos);
    let aff_neg = crate::alignment::aggregate_attention(attn_neg);
    if aff_pos.rows() != aff_neg.rows() {
        return Err(Error::Dimension(format!(
            "positive attention has {} query words, negative has {}",
            aff_pos.rows(),
            aff_neg.rows()
        )));
    }
    let split = partition_query(aff_pos.rows(), rng)?;
    let segments_pos = build_segments(&aff_pos, split, reduce, rng)?;
    let segments_neg = build_segments(&aff_neg, split, reduce, rng)?;
    Ok(Phase1Record {
        qid: input.qid.clone(),
        pos_doc_id: input.pos_doc_id.clone(),
        neg_doc_id: input.neg_doc_id.clone(),
        segments_pos,
        segments_neg,
        teacher_pos: teacher_score(teacher, &input.qid, &input.pos_doc_id)?,
        teacher_neg: teacher_score(teacher, &input.qid, &input.neg_doc_id)?,
    })
}

pub fn read_phase1_inputs<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<Phase1Input>> {
    read_jsonl(reader, source_name)
}

/// Local alignments for one query: its terms (with repeats) and the
/// `(qt, dt)` alignment events observed for it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentQuery {
    pub query_terms: Vec<String>,
    pub alignments: Vec<(String, String)>,
}

pub fn read_alignment_queries<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<AlignmentQuery>> {
    read_jsonl(reader, source_name)
}

fn read_jsonl<T: serde::de::DeserializeOwned, R: BufRead>(reader: R, source_name: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(source_name, i + 1, e.to_string()))?);
    }
    Ok(out)
}

/// Aggregates local alignments into a thesaurus: `score(qt, dt)` is the
/// number of alignments of `qt` to `dt` over the number of occurrences of
/// `qt` in the queries, clipped to 1. Pairs aligned `min_count` times or
/// fewer are dropped.
pub fn ltog_thesaurus<I>(queries: I, min_count: u32) -> Result<Thesaurus>
where
    I: IntoIterator<Item = AlignmentQuery>,
{
    let mut occurrences: HashMap<String, u64> = HashMap::new();
    let mut aligned: BTreeMap<(String, String), u64> = BTreeMap::new();
    for (n, q) in queries.into_iter().enumerate() {
        for t in &q.query_terms {
            *occurrences.entry(t.clone()).or_default() += 1;
        }
        for (qt, dt) in q.alignments {
            if !q.query_terms.contains(&qt) {
                return Err(Error::Row {
                    row: n + 1,
                    message: format!("`{qt}` is aligned but does not occur in the query"),
                });
            }
            *aligned.entry((qt, dt)).or_default() += 1;
        }
    }
    let mut out = Thesaurus::new();
    for ((qt, dt), count) in aligned {
        if count <= u64::from(min_count) {
            continue;
        }
        let occ = occurrences[&qt];
        let mut score = count as f64 / occ as f64;
        if score > 1.0 {
            log::warn!("`{qt}` -> `{dt}` aligned {count} times over {occ} occurrences; clipped to 1");
            score = 1.0;
        }
        out.insert(&qt, &dt, score)?;
    }
    Ok(out)
}
