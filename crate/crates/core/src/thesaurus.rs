//! The relevance thesaurus: scored (query term, document term) pairs.
//!
//! A thesaurus is stored as TSV, one `qt \t dt \t score` row per line, with
//! scores in `[0, 1]` and at most one row per `(qt, dt)`. Terms are expected
//! to be in analyzed (stemmed, lowercase) form so they compare directly with
//! index terms; [`Thesaurus::normalized`] converts a surface-form thesaurus.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analyzer::{Analyzer, Term};
use crate::error::{Error, Result};
use crate::index::CorpusIndex;

/// Small example thesaurus (car/when/injury/cud rows).
pub const EXAMPLE_THESAURUS_TSV: &str = include_str!("../data/example_thesaurus.tsv");
/// Top-weighted thesaurus entries distilled from an MS MARCO cross-encoder.
pub const TOP_ENTRIES_TSV: &str = include_str!("../data/top_entries.tsv");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThesaurusEntry {
    pub qt: Term,
    pub dt: Term,
    pub score: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Thesaurus {
    rows: BTreeMap<String, BTreeMap<String, f64>>,
    // dt -> qts that list it
    inverse: BTreeMap<String, BTreeSet<String>>,
    len: usize,
}

impl Thesaurus {
    pub fn new() -> Self {
        Thesaurus::default()
    }

    pub fn from_entries<I: IntoIterator<Item = ThesaurusEntry>>(entries: I) -> Result<Self> {
        let mut t = Thesaurus::new();
        for e in entries {
            t.insert(e.qt.as_str(), e.dt.as_str(), e.score)?;
        }
        Ok(t)
    }

    /// Adds an entry; rejects scores outside `[0, 1]` and repeated pairs.
    pub fn insert(&mut self, qt: &str, dt: &str, score: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::ScoreOutOfRange {
                qt: qt.to_owned(),
                dt: dt.to_owned(),
                score,
            });
        }
        let row = self.rows.entry(qt.to_owned()).or_default();
        if row.contains_key(dt) {
            return Err(Error::Duplicate(format!("thesaurus pair ({qt}, {dt})")));
        }
        row.insert(dt.to_owned(), score);
        self.inverse.entry(dt.to_owned()).or_default().insert(qt.to_owned());
        self.len += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn score(&self, qt: &str, dt: &str) -> Option<f64> {
        self.rows.get(qt)?.get(dt).copied()
    }

    /// All document terms listed for `qt`, in lexicographic order.
    pub fn row(&self, qt: &str) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.rows
            .get(qt)
            .into_iter()
            .flat_map(|r| r.iter().map(|(dt, &s)| (dt.as_str(), s)))
    }

    pub fn row_len(&self, qt: &str) -> usize {
        self.rows.get(qt).map_or(0, BTreeMap::len)
    }

    /// Query terms that list `dt` as a document term.
    pub fn query_terms_for(&self, dt: &str) -> impl Iterator<Item = &str> + '_ {
        self.inverse
            .get(dt)
            .into_iter()
            .flat_map(|s| s.iter().map(String::as_str))
    }

    /// Entries ordered by `(qt, dt)`.
    pub fn entries(&self) -> impl Iterator<Item = ThesaurusEntry> + '_ {
        self.rows.iter().flat_map(|(qt, row)| {
            row.iter().map(move |(dt, &score)| ThesaurusEntry {
                qt: Term::new(qt.clone()),
                dt: Term::new(dt.clone()),
                score,
            })
        })
    }

    /// The document term with the highest score for `qt` among `doc_terms`.
    /// Ties go to the lexicographically smallest term.
    pub fn best_match<'d, I>(&self, qt: &str, doc_terms: I) -> Option<(&'d str, f64)>
    where
        I: IntoIterator<Item = &'d str>,
    {
        let row = self.rows.get(qt)?;
        let mut best: Option<(&'d str, f64)> = None;
        for dt in doc_terms {
            let Some(&score) = row.get(dt) else { continue };
            best = match best {
                Some((b, s)) if s > score || (s == score && b <= dt) => Some((b, s)),
                _ => Some((dt, score)),
            };
        }
        best
    }

    /// Multiplies every score by `factor` (clamped into `[0, 1]`).
    pub fn scaled(&self, factor: f64) -> Thesaurus {
        let mut out = self.clone();
        for row in out.rows.values_mut() {
            for s in row.values_mut() {
                *s = (*s * factor).clamp(0.0, 1.0);
            }
        }
        out
    }

    /// Re-analyzes both sides of every entry (stopwords kept). Entries whose
    /// terms do not analyze to exactly one term are dropped; entries that
    /// collide after analysis keep the maximum score.
    pub fn normalized(&self, analyzer: &Analyzer) -> Thesaurus {
        let mut merged: BTreeMap<(String, String), f64> = BTreeMap::new();
        for e in self.entries() {
            let (Some(qt), Some(dt)) = (
                analyzer.analyze_term(&e.qt, true),
                analyzer.analyze_term(&e.dt, true),
            ) else {
                continue;
            };
            let slot = merged.entry((qt.into_string(), dt.into_string())).or_insert(e.score);
            *slot = slot.max(e.score);
        }
        let mut out = Thesaurus::new();
        for ((qt, dt), s) in merged {
            out.insert(&qt, &dt, s).expect("merged keys are unique and in range");
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Thesaurus> {
        let path = path.as_ref();
        Thesaurus::read(BufReader::new(File::open(path)?), &path.display().to_string())
    }

    /// Parses TSV rows. Blank lines and `#` comment lines are skipped.
    pub fn read<R: BufRead>(reader: R, source_name: &str) -> Result<Thesaurus> {
        let mut t = Thesaurus::new();
        for row in read_scored_pairs(reader, source_name) {
            let (line, qt, dt, score) = row?;
            t.insert(&qt, &dt, score)
                .map_err(|e| Error::parse(source_name, line, e.to_string()))?;
        }
        Ok(t)
    }

    pub fn parse_str(text: &str) -> Result<Thesaurus> {
        Thesaurus::read(text.as_bytes(), "<string>")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        for e in self.entries() {
            writeln!(w, "{}\t{}\t{}", e.qt, e.dt, e.score)?;
        }
        Ok(())
    }
}

/// Reads `qt \t dt \t score` rows, yielding the 1-based line number with
/// each row.
pub fn read_scored_pairs<'a, R: BufRead + 'a>(
    reader: R,
    source_name: &'a str,
) -> impl Iterator<Item = Result<(usize, String, String, f64)>> + 'a {
    reader.lines().enumerate().filter_map(move |(i, line)| {
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(e.into())),
        };
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            return None;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        let [qt, dt, score] = fields.as_slice() else {
            return Some(Err(Error::parse(source_name, i + 1, "expected `qt<TAB>dt<TAB>score`")));
        };
        if qt.is_empty() || dt.is_empty() {
            return Some(Err(Error::parse(source_name, i + 1, "empty term")));
        }
        match score.trim().parse::<f64>() {
            Ok(s) => Some(Ok((i + 1, qt.to_string(), dt.to_string(), s))),
            Err(_) => Some(Err(Error::parse(source_name, i + 1, format!("bad score `{score}`")))),
        }
    })
}

/// Candidate and filtering limits for building a thesaurus from a scored
/// candidate stream.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidateSpec {
    pub n_query_terms: usize,
    pub n_doc_terms: usize,
    pub min_score: f64,
}

impl Default for CandidateSpec {
    fn default() -> Self {
        CandidateSpec {
            n_query_terms: 10_000,
            n_doc_terms: 100_000,
            min_score: 0.1,
        }
    }
}

impl CandidateSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_query_terms == 0 || self.n_doc_terms == 0 {
            return Err(Error::invalid("candidate counts must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.min_score) {
            return Err(Error::invalid(format!("min_score {} outside [0, 1]", self.min_score)));
        }
        Ok(())
    }
}

/// The `n` most frequent terms by collection frequency; ties broken
/// lexicographically.
pub fn top_terms(index: &CorpusIndex, n: usize) -> Vec<&str> {
    let mut vocab: Vec<(&str, u64)> = index.vocabulary().collect();
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    vocab.truncate(n);
    vocab.into_iter().map(|(t, _)| t).collect()
}

/// Cross product of the top query-side and document-side terms, query term
/// major. Counts beyond the vocabulary size are truncated.
pub fn candidate_pairs<'a>(
    index: &'a CorpusIndex,
    spec: &CandidateSpec,
) -> Result<impl Iterator<Item = (&'a str, &'a str)> + 'a> {
    spec.validate()?;
    let qts = top_terms(index, spec.n_query_terms);
    let dts = top_terms(index, spec.n_doc_terms);
    Ok(qts
        .into_iter()
        .flat_map(move |qt| dts.clone().into_iter().map(move |dt| (qt, dt))))
}

/// Keeps pairs scoring strictly above `spec.min_score`.
pub fn filter_scored_pairs<I>(scored: I, spec: &CandidateSpec) -> Result<Thesaurus>
where
    I: IntoIterator<Item = (String, String, f64)>,
{
    spec.validate()?;
    let mut t = Thesaurus::new();
    for (qt, dt, score) in scored {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::ScoreOutOfRange { qt, dt, score });
        }
        if score > spec.min_score {
            t.insert(&qt, &dt, score)?;
        }
    }
    Ok(t)
}

/// An entry with its report weight `idf(qt) * cf(qt) * cf(dt) * score`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedEntry {
    pub entry: ThesaurusEntry,
    pub weight: f64,
}

/// The `k` highest-weighted entries, weight descending then `(qt, dt)`.
pub fn top_entries(index: &CorpusIndex, thesaurus: &Thesaurus, k: usize) -> Vec<WeightedEntry> {
    let mut all: Vec<WeightedEntry> = thesaurus
        .entries()
        .map(|e| {
            let weight = index.idf(&e.qt) * index.cf(&e.qt) as f64 * index.cf(&e.dt) as f64 * e.score;
            WeightedEntry { entry: e, weight }
        })
        .collect();
    all.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then_with(|| a.entry.qt.cmp(&b.entry.qt))
            .then_with(|| a.entry.dt.cmp(&b.entry.dt))
    });
    all.truncate(k);
    all
}
