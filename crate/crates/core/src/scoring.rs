//! Lexical document scorers: BM25, BM25T, query likelihood (Dirichlet) and
//! its translation-model variant QLT, plus an adapter for externally
//! computed scores.
//!
//! BM25T replaces the term frequency of a query term missing from the
//! document with the best thesaurus score among the document's terms:
//!
//! ```text
//! f(qt, d) = tf(qt, d)                          if qt in d
//!          = max_{dt in d} thesaurus(qt, dt)    otherwise (0 if none)
//! score    = sum_qt idf(qt) * f * (k1 + 1) / (f + K),  K = k1 * (1 - b + b * |d| / avgdl)
//! ```
//!
//! Since thesaurus scores are at most 1, a thesaurus match never beats a
//! single exact occurrence at equal document length.
//!
//! QLT sums translation mass over every document term instead of taking the
//! maximum: `m(q, d) = tf(q, d) + sum_{w != q} t(q|w) * tf(w, d)`, smoothed
//! as `ln((m + mu * p(q|C)) / (|d| + mu))`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyzer::{Analyzer, Term};
use crate::error::{Error, Result};
use crate::index::CorpusIndex;
use crate::thesaurus::Thesaurus;
use crate::trec::{sort_ranked, Query, RankedDoc, ScoredRun};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return Err(Error::invalid(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::invalid(format!("b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QlParams {
    /// Dirichlet pseudo-count.
    pub mu: f64,
}

impl Default for QlParams {
    fn default() -> Self {
        QlParams { mu: 2500.0 }
    }
}

impl QlParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid(format!("mu must be > 0, got {}", self.mu)));
        }
        Ok(())
    }
}

/// Term statistics of one document, as seen by the scorers.
#[allow(clippy::len_without_is_empty)]
pub trait DocStats {
    fn len(&self) -> u32;
    fn tf(&self, term: &str) -> u32;
    fn contains(&self, term: &str) -> bool {
        self.tf(term) > 0
    }
    /// Document terms with frequencies, in lexicographic order.
    fn terms(&self) -> Box<dyn Iterator<Item = (&str, u32)> + '_>;
    fn num_distinct_terms(&self) -> usize;
}

/// A document stored in an index.
#[derive(Clone, Copy)]
pub struct IndexedDoc<'a> {
    index: &'a CorpusIndex,
    docno: u32,
}

impl<'a> IndexedDoc<'a> {
    pub fn new(index: &'a CorpusIndex, docno: u32) -> Self {
        IndexedDoc { index, docno }
    }

    pub fn by_id(index: &'a CorpusIndex, doc_id: &str) -> Result<Self> {
        Ok(IndexedDoc::new(index, index.require_doc(doc_id)?))
    }
}

impl DocStats for IndexedDoc<'_> {
    fn len(&self) -> u32 {
        self.index.doc_len(self.docno)
    }
    fn tf(&self, term: &str) -> u32 {
        self.index.tf(term, self.docno)
    }
    fn terms(&self) -> Box<dyn Iterator<Item = (&str, u32)> + '_> {
        Box::new(self.index.doc_terms(self.docno))
    }
    fn num_distinct_terms(&self) -> usize {
        self.index.num_distinct_terms(self.docno)
    }
}

/// An ad-hoc document analyzed from raw text, scored against an index's
/// collection statistics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TextDoc {
    len: u32,
    tfs: BTreeMap<String, u32>,
}

impl TextDoc {
    pub fn analyze(analyzer: &Analyzer, text: &str) -> Self {
        TextDoc::from_terms(analyzer.analyze(text, false))
    }

    pub fn from_terms<I: IntoIterator<Item = Term>>(terms: I) -> Self {
        let mut doc = TextDoc::default();
        for t in terms {
            *doc.tfs.entry(t.into_string()).or_default() += 1;
            doc.len += 1;
        }
        doc
    }
}

impl DocStats for TextDoc {
    fn len(&self) -> u32 {
        self.len
    }
    fn tf(&self, term: &str) -> u32 {
        self.tfs.get(term).copied().unwrap_or(0)
    }
    fn terms(&self) -> Box<dyn Iterator<Item = (&str, u32)> + '_> {
        Box::new(self.tfs.iter().map(|(t, &tf)| (t.as_str(), tf)))
    }
    fn num_distinct_terms(&self) -> usize {
        self.tfs.len()
    }
}

/// Best thesaurus match for `qt` among the document's terms. Walks whichever
/// of the thesaurus row and the document term list is shorter; both give
/// the same answer (max score, smallest term on ties).
pub fn best_doc_match<D: DocStats + ?Sized>(thesaurus: &Thesaurus, qt: &str, doc: &D) -> Option<(String, f64)> {
    let row_len = thesaurus.row_len(qt);
    if row_len <= doc.num_distinct_terms() {
        let mut best: Option<(&str, f64)> = None;
        for (dt, s) in thesaurus.row(qt) {
            if doc.contains(dt) && best.is_none_or(|(_, b)| s > b) {
                best = Some((dt, s));
            }
        }
        best.map(|(d, s)| (d.to_owned(), s))
    } else {
        thesaurus
            .best_match(qt, doc.terms().map(|(t, _)| t))
            .map(|(d, s)| (d.to_owned(), s))
    }
}

pub fn length_norm(params: &Bm25Params, doc_len: u32, avgdl: f64) -> f64 {
    let ratio = if avgdl > 0.0 { f64::from(doc_len) / avgdl } else { 1.0 };
    params.k1 * (1.0 - params.b + params.b * ratio)
}

/// The saturated per-term BM25 contribution `idf * f * (k1 + 1) / (f + K)`.
pub fn bm25_term_weight(idf: f64, f: f64, k1: f64, k: f64) -> f64 {
    idf * f * (k1 + 1.0) / (f + k)
}

/// BM25 over an arbitrary document; when `thesaurus` is given, missing
/// query terms take their best thesaurus match as `f`.
pub fn bm25_doc<D: DocStats>(
    index: &CorpusIndex,
    params: &Bm25Params,
    thesaurus: Option<&Thesaurus>,
    query: &[Term],
    doc: &D,
) -> f64 {
    let k = length_norm(params, doc.len(), index.avgdl());
    let mut score = 0.0;
    for qt in query {
        let tf = doc.tf(qt);
        let f = if tf > 0 {
            f64::from(tf)
        } else if let Some(t) = thesaurus {
            best_doc_match(t, qt, doc).map_or(0.0, |(_, s)| s)
        } else {
            0.0
        };
        if f > 0.0 {
            score += bm25_term_weight(index.idf(qt), f, params.k1, k);
        }
    }
    score
}

pub fn bm25_score(index: &CorpusIndex, params: &Bm25Params, query: &[Term], doc_id: &str) -> Result<f64> {
    let doc = IndexedDoc::by_id(index, doc_id)?;
    Ok(bm25_doc(index, params, None, query, &doc))
}

pub fn bm25t_score(
    index: &CorpusIndex,
    params: &Bm25Params,
    thesaurus: &Thesaurus,
    query: &[Term],
    doc_id: &str,
) -> Result<f64> {
    let doc = IndexedDoc::by_id(index, doc_id)?;
    Ok(bm25_doc(index, params, Some(thesaurus), query, &doc))
}

/// A query-likelihood log score plus the number of query terms skipped
/// because they never occur in the collection (and have no translation
/// mass in the document).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmScore {
    pub score: f64,
    pub skipped_oov: usize,
}

/// How thesaurus scores turn into translation probabilities for QLT.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QltOptions {
    /// Divide each query term's translation row (including the implicit
    /// self-translation of weight 1) by its sum.
    pub normalize: bool,
}

fn translation_mass<D: DocStats>(thesaurus: &Thesaurus, qt: &str, doc: &D, normalize: bool) -> f64 {
    let mut mass = f64::from(doc.tf(qt));
    let row_len = thesaurus.row_len(qt);
    if row_len <= doc.num_distinct_terms() {
        for (w, t) in thesaurus.row(qt) {
            if w != qt {
                mass += t * f64::from(doc.tf(w));
            }
        }
    } else {
        for (w, tf) in doc.terms() {
            if w != qt {
                if let Some(t) = thesaurus.score(qt, w) {
                    mass += t * f64::from(tf);
                }
            }
        }
    }
    if normalize {
        let z: f64 = 1.0 + thesaurus.row(qt).filter(|(w, _)| *w != qt).map(|(_, t)| t).sum::<f64>();
        mass /= z;
    }
    mass
}

/// Dirichlet-smoothed query likelihood over an arbitrary document; with a
/// thesaurus this is the translation model.
pub fn lm_doc<D: DocStats>(
    index: &CorpusIndex,
    params: &QlParams,
    translation: Option<(&Thesaurus, QltOptions)>,
    query: &[Term],
    doc: &D,
) -> LmScore {
    let total = index.total_tokens() as f64;
    let denom = f64::from(doc.len()) + params.mu;
    let mut out = LmScore { score: 0.0, skipped_oov: 0 };
    for qt in query {
        let p_c = if total > 0.0 { index.cf(qt) as f64 / total } else { 0.0 };
        let mass = match translation {
            Some((t, opts)) => translation_mass(t, qt, doc, opts.normalize),
            None => f64::from(doc.tf(qt)),
        };
        if p_c == 0.0 && mass == 0.0 {
            out.skipped_oov += 1;
            continue;
        }
        out.score += ((mass + params.mu * p_c) / denom).ln();
    }
    out
}

pub fn ql_score(index: &CorpusIndex, params: &QlParams, query: &[Term], doc_id: &str) -> Result<LmScore> {
    let doc = IndexedDoc::by_id(index, doc_id)?;
    Ok(lm_doc(index, params, None, query, &doc))
}

pub fn qlt_score(
    index: &CorpusIndex,
    params: &QlParams,
    thesaurus: &Thesaurus,
    options: QltOptions,
    query: &[Term],
    doc_id: &str,
) -> Result<LmScore> {
    let doc = IndexedDoc::by_id(index, doc_id)?;
    Ok(lm_doc(index, params, Some((thesaurus, options)), query, &doc))
}

/// Scores a query against a stored document.
pub trait Scorer: Send + Sync {
    fn score(&self, query: &Query, doc_id: &str) -> Result<f64>;

    fn score_batch(&self, query: &Query, doc_ids: &[&str]) -> Result<Vec<f64>> {
        doc_ids.iter().map(|d| self.score(query, d)).collect()
    }
}

/// Scores a query against raw document text. Used by the probes, which
/// mutate documents before scoring.
pub trait TextScorer: Send + Sync {
    fn score_text(&self, query: &str, doc_text: &str) -> Result<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Bm25,
    Bm25t,
    Ql,
    Qlt,
}

impl ScorerKind {
    pub fn uses_thesaurus(self) -> bool {
        matches!(self, ScorerKind::Bm25t | ScorerKind::Qlt)
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScorerKind::Bm25 => "bm25",
            ScorerKind::Bm25t => "bm25t",
            ScorerKind::Ql => "ql",
            ScorerKind::Qlt => "qlt",
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub enum ScoringModel<'a> {
    Bm25(Bm25Params),
    Bm25T(Bm25Params, &'a Thesaurus),
    Ql(QlParams),
    Qlt(QlParams, &'a Thesaurus, QltOptions),
}

/// Which documents `rank` scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CandidateMode {
    /// Documents containing a query term or, for thesaurus scorers, a
    /// document term listed for a query term.
    #[default]
    Postings,
    FullScan,
}

/// One of the four index-backed scorers.
#[derive(Clone, Copy)]
pub struct LexicalScorer<'a> {
    index: &'a CorpusIndex,
    model: ScoringModel<'a>,
}

impl<'a> LexicalScorer<'a> {
    pub fn new(index: &'a CorpusIndex, model: ScoringModel<'a>) -> Result<Self> {
        match model {
            ScoringModel::Bm25(p) | ScoringModel::Bm25T(p, _) => p.validate()?,
            ScoringModel::Ql(p) | ScoringModel::Qlt(p, _, _) => p.validate()?,
        }
        Ok(LexicalScorer { index, model })
    }

    pub fn bm25(index: &'a CorpusIndex, params: Bm25Params) -> Result<Self> {
        LexicalScorer::new(index, ScoringModel::Bm25(params))
    }

    pub fn bm25t(index: &'a CorpusIndex, params: Bm25Params, thesaurus: &'a Thesaurus) -> Result<Self> {
        LexicalScorer::new(index, ScoringModel::Bm25T(params, thesaurus))
    }

    pub fn ql(index: &'a CorpusIndex, params: QlParams) -> Result<Self> {
        LexicalScorer::new(index, ScoringModel::Ql(params))
    }

    pub fn qlt(index: &'a CorpusIndex, params: QlParams, thesaurus: &'a Thesaurus, options: QltOptions) -> Result<Self> {
        LexicalScorer::new(index, ScoringModel::Qlt(params, thesaurus, options))
    }

    pub fn index(&self) -> &'a CorpusIndex {
        self.index
    }

    pub fn model(&self) -> ScoringModel<'a> {
        self.model
    }

    pub fn thesaurus(&self) -> Option<&'a Thesaurus> {
        match self.model {
            ScoringModel::Bm25T(_, t) | ScoringModel::Qlt(_, t, _) => Some(t),
            _ => None,
        }
    }

    pub fn analyze_query(&self, text: &str) -> Vec<Term> {
        self.index.analyzer().analyze(text, false)
    }

    pub fn score_terms<D: DocStats>(&self, query: &[Term], doc: &D) -> f64 {
        match self.model {
            ScoringModel::Bm25(p) => bm25_doc(self.index, &p, None, query, doc),
            ScoringModel::Bm25T(p, t) => bm25_doc(self.index, &p, Some(t), query, doc),
            ScoringModel::Ql(p) => lm_doc(self.index, &p, None, query, doc).score,
            ScoringModel::Qlt(p, t, o) => lm_doc(self.index, &p, Some((t, o)), query, doc).score,
        }
    }

    /// Internal document numbers to score for `query`, ascending.
    pub fn candidates(&self, query: &[Term], mode: CandidateMode) -> Vec<u32> {
        match mode {
            CandidateMode::FullScan => (0..self.index.num_docs() as u32).collect(),
            CandidateMode::Postings => candidate_docs(self.index, query, self.thesaurus()),
        }
    }

    /// Top `k` documents, descending score with ascending doc id on ties.
    pub fn rank(&self, query: &Query, k: usize, mode: CandidateMode) -> Vec<RankedDoc> {
        let terms = self.analyze_query(&query.text);
        let mut scored: Vec<RankedDoc> = self
            .candidates(&terms, mode)
            .into_iter()
            .map(|docno| {
                let doc = IndexedDoc::new(self.index, docno);
                RankedDoc::new(self.index.doc_id(docno), self.score_terms(&terms, &doc))
            })
            .collect();
        sort_ranked(&mut scored);
        scored.truncate(k);
        scored
    }

    /// Re-scores a fixed candidate list per query (e.g. a BM25 top-1000).
    pub fn rerank(&self, query: &Query, doc_ids: &[&str]) -> Result<Vec<RankedDoc>> {
        let terms = self.analyze_query(&query.text);
        let mut out = Vec::with_capacity(doc_ids.len());
        for d in doc_ids {
            let doc = IndexedDoc::by_id(self.index, d)?;
            out.push(RankedDoc::new(*d, self.score_terms(&terms, &doc)));
        }
        sort_ranked(&mut out);
        Ok(out)
    }
}

impl Scorer for LexicalScorer<'_> {
    fn score(&self, query: &Query, doc_id: &str) -> Result<f64> {
        let doc = IndexedDoc::by_id(self.index, doc_id)?;
        Ok(self.score_terms(&self.analyze_query(&query.text), &doc))
    }

    fn score_batch(&self, query: &Query, doc_ids: &[&str]) -> Result<Vec<f64>> {
        let terms = self.analyze_query(&query.text);
        doc_ids
            .iter()
            .map(|d| Ok(self.score_terms(&terms, &IndexedDoc::by_id(self.index, d)?)))
            .collect()
    }
}

impl TextScorer for LexicalScorer<'_> {
    fn score_text(&self, query: &str, doc_text: &str) -> Result<f64> {
        let doc = TextDoc::analyze(self.index.analyzer(), doc_text);
        Ok(self.score_terms(&self.analyze_query(query), &doc))
    }
}

/// Union of postings of the query terms and, with a thesaurus, of every
/// document term listed for a query term.
pub fn candidate_docs(index: &CorpusIndex, query: &[Term], thesaurus: Option<&Thesaurus>) -> Vec<u32> {
    let mut terms: BTreeSet<&str> = query.iter().map(Term::as_str).collect();
    if let Some(t) = thesaurus {
        for qt in query {
            terms.extend(t.row(qt).map(|(dt, _)| dt));
        }
    }
    let mut docs: BTreeSet<u32> = BTreeSet::new();
    for term in terms {
        docs.extend(index.postings(term).iter().map(|p| p.doc));
    }
    docs.into_iter().collect()
}

/// Ranks any scorer over the candidate documents of `query`.
pub fn rank(
    scorer: &dyn Scorer,
    index: &CorpusIndex,
    query: &Query,
    k: usize,
    expansion: Option<&Thesaurus>,
    mode: CandidateMode,
) -> Result<Vec<RankedDoc>> {
    let docnos = match mode {
        CandidateMode::FullScan => (0..index.num_docs() as u32).collect(),
        CandidateMode::Postings => {
            candidate_docs(index, &index.analyzer().analyze(&query.text, false), expansion)
        }
    };
    let ids: Vec<&str> = docnos.iter().map(|&d| index.doc_id(d)).collect();
    let scores = scorer.score_batch(query, &ids)?;
    let mut out: Vec<RankedDoc> = ids
        .into_iter()
        .zip(scores)
        .map(|(d, s)| RankedDoc::new(d, s))
        .collect();
    sort_ranked(&mut out);
    out.truncate(k);
    Ok(out)
}

/// Ranks every query in parallel on the current rayon pool. The result is
/// in query order and does not depend on the number of threads.
pub fn rank_all(scorer: &LexicalScorer<'_>, queries: &[Query], k: usize, mode: CandidateMode) -> ScoredRun {
    let ranked: Vec<(String, Vec<RankedDoc>)> = queries
        .par_iter()
        .map(|q| (q.qid.clone(), scorer.rank(q, k, mode)))
        .collect();
    let mut run = ScoredRun::new();
    for (qid, docs) in ranked {
        run.insert(qid, docs).expect("ranked lists hold unique doc ids");
    }
    run
}

/// Scores read from a TREC run file, looked up exactly by `(qid, doc_id)`.
#[derive(Clone, Debug, Default)]
pub struct ExternalScorer {
    scores: HashMap<(String, String), f64>,
}

impl ExternalScorer {
    pub fn from_run(run: &ScoredRun) -> Self {
        let scores = run
            .iter()
            .flat_map(|(q, docs)| docs.iter().map(move |d| ((q.to_owned(), d.doc_id.clone()), d.score)))
            .collect();
        ExternalScorer { scores }
    }

    /// Loads a run file; repeated `(qid, doc_id)` rows are a load error.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(ExternalScorer::from_run(&ScoredRun::load(path)?))
    }
}

impl Scorer for ExternalScorer {
    fn score(&self, query: &Query, doc_id: &str) -> Result<f64> {
        self.scores
            .get(&(query.qid.clone(), doc_id.to_owned()))
            .copied()
            .ok_or_else(|| Error::MissingScore {
                qid: query.qid.clone(),
                doc_id: doc_id.to_owned(),
            })
    }
}

/// Precomputed scores for `(query text, document text)` pairs.
#[derive(Clone, Debug, Default)]
pub struct ExternalTextScores {
    scores: HashMap<(String, String), f64>,
}

#[derive(Deserialize)]
struct TextScoreRow {
    query: String,
    doc: String,
    score: f64,
}

impl ExternalTextScores {
    pub fn insert(&mut self, query: &str, doc: &str, score: f64) -> Result<()> {
        if self.scores.insert((query.to_owned(), doc.to_owned()), score).is_some() {
            return Err(Error::Duplicate(format!("score for query `{query}` and document `{doc}`")));
        }
        Ok(())
    }

    /// Reads JSON lines `{"query": .., "doc": .., "score": ..}`.
    pub fn read<R: std::io::BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut out = ExternalTextScores::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: TextScoreRow =
                serde_json::from_str(&line).map_err(|e| Error::parse(source_name, i + 1, e.to_string()))?;
            out.insert(&row.query, &row.doc, row.score)
                .map_err(|e| Error::parse(source_name, i + 1, e.to_string()))?;
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        ExternalTextScores::read(
            std::io::BufReader::new(std::fs::File::open(path)?),
            &path.display().to_string(),
        )
    }
}

impl TextScorer for ExternalTextScores {
    fn score_text(&self, query: &str, doc_text: &str) -> Result<f64> {
        self.scores
            .get(&(query.to_owned(), doc_text.to_owned()))
            .copied()
            .ok_or_else(|| Error::MissingScore {
                qid: query.to_owned(),
                doc_id: doc_text.to_owned(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::AnalyzerConfig;
    use crate::index::{build_index, idf, Document};
    use crate::thesaurus::EXAMPLE_THESAURUS_TSV;
    use proptest::prelude::*;

    fn terms(words: &[&str]) -> Vec<Term> {
        words.iter().map(|w| Term::from(*w)).collect()
    }

    fn index(docs: &[(&str, &str)]) -> CorpusIndex {
        build_index(docs.iter().map(|(i, t)| Document::new(*i, *t)), AnalyzerConfig::default()).unwrap()
    }

    fn example() -> Thesaurus {
        Thesaurus::parse_str(EXAMPLE_THESAURUS_TSV).unwrap()
    }

    #[test]
    fn bm25_closed_form() {
        let idx = index(&[("d", "day day")]);
        let p = Bm25Params::default();
        let s = bm25_score(&idx, &p, &terms(&["day"]), "d").unwrap();
        let expected = idf(1, 1) * (2.0 * 1.9) / (2.0 + 0.9);
        assert!((s - expected).abs() < 1e-12);
        assert!((expected / idf(1, 1) - 1.310_344_827_586).abs() < 1e-9);
        assert_eq!(bm25_score(&idx, &p, &terms(&["night"]), "d").unwrap(), 0.0);
        assert!(matches!(bm25_score(&idx, &p, &terms(&["day"]), "zz"), Err(Error::UnknownDoc(_))));
    }

    #[test]
    fn bm25_counts_repeated_query_terms() {
        let idx = index(&[("d", "day night"), ("e", "other")]);
        let p = Bm25Params::default();
        let once = bm25_score(&idx, &p, &terms(&["day"]), "d").unwrap();
        let twice = bm25_score(&idx, &p, &terms(&["day", "day"]), "d").unwrap();
        assert!((twice - 2.0 * once).abs() < 1e-12);
    }

    #[test]
    fn bm25t_uses_thesaurus_score() {
        let idx = index(&[("d1", "vehicle"), ("d2", "car")]);
        let p = Bm25Params::default();
        let t = example();
        let k = 0.9 * (1.0 - 0.4 + 0.4 * 1.0);
        let expected = idx.idf("car") * (0.68 * 1.9) / (0.68 + k);
        let s = bm25t_score(&idx, &p, &t, &terms(&["car"]), "d1").unwrap();
        assert!((s - expected).abs() < 1e-12);
        assert!(bm25t_score(&idx, &p, &t, &terms(&["car"]), "d2").unwrap() > s);
    }

    #[test]
    fn exact_match_beats_near_perfect_thesaurus_match() {
        let idx = index(&[("a", "car x"), ("b", "auto x")]);
        let t = Thesaurus::parse_str("car\tauto\t0.99\n").unwrap();
        let p = Bm25Params::default();
        let a = bm25t_score(&idx, &p, &t, &terms(&["car"]), "a").unwrap();
        let b = bm25t_score(&idx, &p, &t, &terms(&["car"]), "b").unwrap();
        assert!(a > b && b > 0.0);
    }

    #[test]
    fn ql_examples() {
        let idx = index(&[("d", "day")]);
        let s = ql_score(&idx, &QlParams { mu: 1.0 }, &terms(&["day"]), "d").unwrap();
        assert_eq!(s.score, 0.0);
        assert_eq!(s.skipped_oov, 0);
        let s = ql_score(&idx, &QlParams { mu: 1.0 }, &terms(&["day", "zebra"]), "d").unwrap();
        assert_eq!(s.skipped_oov, 1);
        assert_eq!(s.score, 0.0);
    }

    #[test]
    fn ql_small_mu_limit() {
        let idx = index(&[("d", "day day night"), ("e", "night other")]);
        let s = ql_score(&idx, &QlParams { mu: 1e-9 }, &terms(&["day", "night"]), "d").unwrap();
        let limit = (2.0f64 / 3.0).ln() + (1.0f64 / 3.0).ln();
        assert!((s.score - limit).abs() < 1e-6);
    }

    #[test]
    fn qlt_examples() {
        let idx = index(&[("d", "vehicle")]);
        let t = example();
        let s = qlt_score(&idx, &QlParams { mu: 1.0 }, &t, QltOptions::default(), &terms(&["car"]), "d").unwrap();
        assert!((s.score - (0.68f64 / 2.0).ln()).abs() < 1e-12);
        assert_eq!(s.skipped_oov, 0);

        let idx = index(&[("d", "vehicle ford"), ("e", "vehicle")]);
        let p = QlParams { mu: 1.0 };
        let both = lm_doc(&idx, &p, Some((&t, QltOptions::default())), &terms(&["car"]), &IndexedDoc::new(&idx, 0));
        let mass_two = 0.68 + 0.38;
        assert!((both.score - (mass_two / 3.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn qlt_normalized_divides_row_mass() {
        let idx = index(&[("d", "vehicle")]);
        let t = example();
        let opts = QltOptions { normalize: true };
        let s = qlt_score(&idx, &QlParams { mu: 1.0 }, &t, opts, &terms(&["car"]), "d").unwrap();
        let z = 1.0 + 0.68 + 0.38 + 0.28;
        assert!((s.score - ((0.68 / z) / 2.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn rank_ties_and_truncation() {
        let idx = index(&[("b", "car"), ("a", "car"), ("c", "boat")]);
        let s = LexicalScorer::bm25(&idx, Bm25Params::default()).unwrap();
        let r = s.rank(&Query::new("q", "car"), 10, CandidateMode::Postings);
        let ids: Vec<_> = r.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        let r = s.rank(&Query::new("q", "car"), 10, CandidateMode::FullScan);
        assert_eq!(r.len(), 3);
        assert_eq!(s.rank(&Query::new("q", "car"), 1, CandidateMode::FullScan).len(), 1);
    }

    #[test]
    fn bm25t_candidates_include_thesaurus_expansions() {
        let idx = index(&[("d1", "vehicle repair"), ("d2", "banana")]);
        let t = example();
        let s = LexicalScorer::bm25t(&idx, Bm25Params::default(), &t).unwrap();
        let r = s.rank(&Query::new("q", "car"), 10, CandidateMode::Postings);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].doc_id, "d1");
        assert!(r[0].score > 0.0);
        let plain = LexicalScorer::bm25(&idx, Bm25Params::default()).unwrap();
        assert!(plain.rank(&Query::new("q", "car"), 10, CandidateMode::Postings).is_empty());
    }

    #[test]
    fn external_scorer_lookup() {
        let run = ScoredRun::read("q1 Q0 d7 1 3.25 ce\n".as_bytes(), "r").unwrap();
        let s = ExternalScorer::from_run(&run);
        assert_eq!(s.score(&Query::new("q1", ""), "d7").unwrap(), 3.25);
        let err = s.score(&Query::new("q1", ""), "d8").unwrap_err();
        assert!(err.to_string().contains("d8"));
        assert!(ScoredRun::read("q1 Q0 d7 1 3.25 ce\nq1 Q0 d7 2 1 ce\n".as_bytes(), "r").is_err());
    }

    #[test]
    fn params_validation() {
        assert!(Bm25Params { k1: -1.0, b: 0.4 }.validate().is_err());
        assert!(Bm25Params { k1: 1.0, b: 1.4 }.validate().is_err());
        assert!(QlParams { mu: 0.0 }.validate().is_err());
        let idx = index(&[("d", "x")]);
        assert!(LexicalScorer::ql(&idx, QlParams { mu: -3.0 }).is_err());
    }

    #[test]
    fn text_scoring_matches_indexed_scoring() {
        let idx = index(&[("d1", "the vehicle was repaired"), ("d2", "car wash days")]);
        let t = example();
        let scorers = [
            LexicalScorer::bm25(&idx, Bm25Params::default()).unwrap(),
            LexicalScorer::bm25t(&idx, Bm25Params::default(), &t).unwrap(),
            LexicalScorer::ql(&idx, QlParams { mu: 10.0 }).unwrap(),
            LexicalScorer::qlt(&idx, QlParams { mu: 10.0 }, &t, QltOptions::default()).unwrap(),
        ];
        for s in &scorers {
            let a = s.score(&Query::new("q", "car day"), "d1").unwrap();
            let b = s.score_text("car day", "the vehicle was repaired").unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    proptest! {
        #[test]
        fn bm25_increases_with_tf(tf in 1u32..20, pad in 0u32..20) {
            // fixed length: replace one filler token with another occurrence
            let len = tf + pad + 1;
            let mk = |n: u32| {
                let mut words = vec!["car"; n as usize];
                words.extend(std::iter::repeat_n("x", (len - n) as usize));
                words.join(" ")
            };
            let lo = mk(tf);
            let hi = mk(tf + 1);
            let idx = index(&[("lo", &lo), ("hi", &hi), ("o", "y")]);
            let p = Bm25Params::default();
            let q = terms(&["car"]);
            prop_assert!(bm25_score(&idx, &p, &q, "hi").unwrap() > bm25_score(&idx, &p, &q, "lo").unwrap());
        }

        #[test]
        fn best_doc_match_paths_agree(doc in prop::collection::vec(prop::sample::select(vec!["vehicle", "ford", "honda", "cuda", "cudâ", "x", "y", "z", "w"]), 0..9)) {
            let t = example();
            let d = TextDoc::from_terms(doc.iter().map(|w| Term::from(*w)));
            for qt in ["car", "cud", "when"] {
                let fast = best_doc_match(&t, qt, &d);
                let slow = t.best_match(qt, d.terms().map(|(w, _)| w)).map(|(w, s)| (w.to_owned(), s));
                prop_assert_eq!(fast, slow);
            }
        }
    }
}
