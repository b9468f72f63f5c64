//! TREC-style run, qrels and query files.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RankedDoc {
    pub doc_id: String,
    pub score: f64,
}

impl RankedDoc {
    pub fn new(doc_id: impl Into<String>, score: f64) -> Self {
        RankedDoc {
            doc_id: doc_id.into(),
            score,
        }
    }
}

/// Orders by descending score, then ascending doc id.
pub fn sort_ranked(docs: &mut [RankedDoc]) {
    docs.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
}

/// Per-query ranked lists. Each list is sorted by descending score with
/// ascending doc id breaking ties, and holds each doc id at most once.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoredRun {
    queries: BTreeMap<String, Vec<RankedDoc>>,
}

impl ScoredRun {
    pub fn new() -> Self {
        ScoredRun::default()
    }

    /// Inserts a query's list, sorting it. Fails on repeated doc ids.
    pub fn insert(&mut self, qid: impl Into<String>, mut docs: Vec<RankedDoc>) -> Result<()> {
        let qid = qid.into();
        sort_ranked(&mut docs);
        let mut seen = std::collections::HashSet::new();
        for d in &docs {
            if !seen.insert(d.doc_id.as_str()) {
                return Err(Error::Duplicate(format!("document `{}` for query `{qid}`", d.doc_id)));
            }
        }
        self.queries.insert(qid, docs);
        Ok(())
    }

    pub fn get(&self, qid: &str) -> Option<&[RankedDoc]> {
        self.queries.get(qid).map(Vec::as_slice)
    }

    pub fn qids(&self) -> impl Iterator<Item = &str> + '_ {
        self.queries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[RankedDoc])> + '_ {
        self.queries.iter().map(|(q, d)| (q.as_str(), d.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Applies `f` to every score and re-sorts.
    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> ScoredRun {
        let mut out = ScoredRun::new();
        for (qid, docs) in &self.queries {
            let docs = docs.iter().map(|d| RankedDoc::new(d.doc_id.clone(), f(d.score))).collect();
            out.insert(qid.clone(), docs).expect("doc ids already unique");
        }
        out
    }

    /// Keeps the first `depth` documents of each query.
    pub fn truncated(&self, depth: usize) -> ScoredRun {
        ScoredRun {
            queries: self
                .queries
                .iter()
                .map(|(q, d)| (q.clone(), d.iter().take(depth).cloned().collect()))
                .collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ScoredRun> {
        let path = path.as_ref();
        ScoredRun::read(BufReader::new(File::open(path)?), &path.display().to_string())
    }

    /// Parses `qid Q0 docid rank score tag` lines (whitespace separated).
    /// The rank column is ignored; order is rebuilt from scores.
    pub fn read<R: BufRead>(reader: R, source_name: &str) -> Result<ScoredRun> {
        let mut lists: BTreeMap<String, HashMap<String, f64>> = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != 6 {
                return Err(Error::parse(source_name, i + 1, "expected `qid Q0 docid rank score tag`"));
            }
            let score: f64 = fields[4]
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite())
                .ok_or_else(|| Error::parse(source_name, i + 1, format!("bad score `{}`", fields[4])))?;
            let per_query = lists.entry(fields[0].to_owned()).or_default();
            if per_query.insert(fields[2].to_owned(), score).is_some() {
                return Err(Error::parse(
                    source_name,
                    i + 1,
                    format!("duplicate pair ({}, {})", fields[0], fields[2]),
                ));
            }
        }
        let mut run = ScoredRun::new();
        for (qid, docs) in lists {
            let docs = docs.into_iter().map(|(d, s)| RankedDoc::new(d, s)).collect();
            run.insert(qid, docs)?;
        }
        Ok(run)
    }

    pub fn write<W: Write>(&self, w: &mut W, tag: &str) -> Result<()> {
        for (qid, docs) in &self.queries {
            write_ranking(w, qid, docs, tag)?;
        }
        Ok(())
    }
}

/// Writes one query's ranking as TREC run lines, ranks starting at 1.
pub fn write_ranking<W: Write>(w: &mut W, qid: &str, docs: &[RankedDoc], tag: &str) -> Result<()> {
    for (rank, d) in docs.iter().enumerate() {
        writeln!(w, "{qid} Q0 {} {} {} {tag}", d.doc_id, rank + 1, d.score)?;
    }
    Ok(())
}

/// Relevance judgments: `(qid, doc_id) -> grade`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Qrels::default()
    }

    pub fn insert(&mut self, qid: &str, doc_id: &str, grade: u32) -> Result<()> {
        let q = self.judgments.entry(qid.to_owned()).or_default();
        if q.insert(doc_id.to_owned(), grade).is_some() {
            return Err(Error::Duplicate(format!("judgment ({qid}, {doc_id})")));
        }
        Ok(())
    }

    pub fn grade(&self, qid: &str, doc_id: &str) -> u32 {
        self.judgments
            .get(qid)
            .and_then(|q| q.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn contains_query(&self, qid: &str) -> bool {
        self.judgments.contains_key(qid)
    }

    /// Grades for a query, any order.
    pub fn grades(&self, qid: &str) -> impl Iterator<Item = u32> + '_ {
        self.judgments
            .get(qid)
            .into_iter()
            .flat_map(|q| q.values().copied())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Qrels> {
        let path = path.as_ref();
        Qrels::read(BufReader::new(File::open(path)?), &path.display().to_string())
    }

    /// Parses `qid iter docid grade` lines.
    pub fn read<R: BufRead>(reader: R, source_name: &str) -> Result<Qrels> {
        let mut qrels = Qrels::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != 4 {
                return Err(Error::parse(source_name, i + 1, "expected `qid 0 docid grade`"));
            }
            let grade: u32 = fields[3]
                .parse()
                .map_err(|_| Error::parse(source_name, i + 1, format!("bad grade `{}`", fields[3])))?;
            qrels
                .insert(fields[0], fields[2], grade)
                .map_err(|e| Error::parse(source_name, i + 1, e.to_string()))?;
        }
        Ok(qrels)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub qid: String,
    pub text: String,
}

impl Query {
    pub fn new(qid: impl Into<String>, text: impl Into<String>) -> Self {
        Query {
            qid: qid.into(),
            text: text.into(),
        }
    }
}

pub fn read_queries_file(path: impl AsRef<Path>) -> Result<Vec<Query>> {
    let path = path.as_ref();
    read_queries(BufReader::new(File::open(path)?), &path.display().to_string())
}

/// `qid \t text` per line.
pub fn read_queries<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<Query>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (qid, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(source_name, i + 1, "expected `qid<TAB>text`"))?;
        out.push(Query::new(qid, text));
    }
    Ok(out)
}
