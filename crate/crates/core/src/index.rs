//! Inverted index with the collection statistics used by the lexical scorers.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analyzer::{Analyzer, AnalyzerConfig};
use crate::error::{Error, Result};

pub const INDEX_MAGIC: &[u8; 7] = b"RTKIDX1";
pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            text: text.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Posting {
    /// Internal document number (position in build order).
    pub doc: u32,
    pub tf: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum CorpusFormat {
    #[default]
    Jsonl,
    Tsv,
}

/// Immutable inverted index plus forward term vectors.
#[derive(Clone, Debug)]
pub struct CorpusIndex {
    analyzer: Analyzer,
    doc_ids: Vec<String>,
    doc_lookup: HashMap<String, u32>,
    doc_len: Vec<u32>,
    // sorted lexicographically; a term's id is its position
    terms: Vec<String>,
    term_lookup: HashMap<String, u32>,
    postings: Vec<Vec<Posting>>,
    cf: Vec<u64>,
    // per document: (term id, tf) sorted by term id
    forward: Vec<Vec<(u32, u32)>>,
    total_tokens: u64,
    avgdl: f64,
}

/// Builds an index over `corpus`. Document numbers follow input order.
pub fn build_index<I>(corpus: I, cfg: AnalyzerConfig) -> Result<CorpusIndex>
where
    I: IntoIterator<Item = Document>,
{
    let analyzer = Analyzer::new(cfg)?;
    let mut doc_ids = Vec::new();
    let mut doc_lookup = HashMap::new();
    let mut doc_len = Vec::new();
    let mut inverted: BTreeMap<String, Vec<Posting>> = BTreeMap::new();

    for doc in corpus {
        if doc.doc_id.is_empty() {
            return Err(Error::invalid("empty doc_id"));
        }
        let docno = doc_ids.len() as u32;
        if doc_lookup.insert(doc.doc_id.clone(), docno).is_some() {
            return Err(Error::DuplicateDocId(doc.doc_id));
        }
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        let mut len = 0u32;
        for term in analyzer.analyze(&doc.text, false) {
            *counts.entry(term.into_string()).or_default() += 1;
            len += 1;
        }
        for (term, tf) in counts {
            inverted.entry(term).or_default().push(Posting { doc: docno, tf });
        }
        doc_ids.push(doc.doc_id);
        doc_len.push(len);
    }
    if doc_ids.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (terms, postings): (Vec<_>, Vec<_>) = inverted.into_iter().unzip();
    Ok(CorpusIndex::assemble(analyzer, doc_ids, doc_lookup, doc_len, terms, postings))
}

impl CorpusIndex {
    fn assemble(
        analyzer: Analyzer,
        doc_ids: Vec<String>,
        doc_lookup: HashMap<String, u32>,
        doc_len: Vec<u32>,
        terms: Vec<String>,
        postings: Vec<Vec<Posting>>,
    ) -> CorpusIndex {
        let term_lookup = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let mut forward = vec![Vec::new(); doc_ids.len()];
        let mut cf = Vec::with_capacity(terms.len());
        for (tid, list) in postings.iter().enumerate() {
            let mut total = 0u64;
            for p in list {
                forward[p.doc as usize].push((tid as u32, p.tf));
                total += u64::from(p.tf);
            }
            cf.push(total);
        }
        let total_tokens: u64 = doc_len.iter().map(|&l| u64::from(l)).sum();
        let avgdl = total_tokens as f64 / doc_ids.len() as f64;
        CorpusIndex {
            analyzer,
            doc_ids,
            doc_lookup,
            doc_len,
            terms,
            term_lookup,
            postings,
            cf,
            forward,
            total_tokens,
            avgdl,
        }
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    pub fn analyzer_config(&self) -> &AnalyzerConfig {
        self.analyzer.config()
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn doc_no(&self, doc_id: &str) -> Option<u32> {
        self.doc_lookup.get(doc_id).copied()
    }

    pub(crate) fn require_doc(&self, doc_id: &str) -> Result<u32> {
        self.doc_no(doc_id)
            .ok_or_else(|| Error::UnknownDoc(doc_id.to_owned()))
    }

    pub fn doc_id(&self, docno: u32) -> &str {
        &self.doc_ids[docno as usize]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_len(&self, docno: u32) -> u32 {
        self.doc_len[docno as usize]
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.term_lookup.get(term).copied()
    }

    pub fn term(&self, tid: u32) -> &str {
        &self.terms[tid as usize]
    }

    pub fn df(&self, term: &str) -> u32 {
        self.term_id(term)
            .map_or(0, |t| self.postings[t as usize].len() as u32)
    }

    /// Collection frequency: total occurrences of `term` in the corpus.
    pub fn cf(&self, term: &str) -> u64 {
        self.term_id(term).map_or(0, |t| self.cf[t as usize])
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        match self.term_id(term) {
            Some(t) => &self.postings[t as usize],
            None => &[],
        }
    }

    pub fn tf(&self, term: &str, docno: u32) -> u32 {
        match self.term_id(term) {
            Some(t) => self.tf_by_id(t, docno),
            None => 0,
        }
    }

    pub(crate) fn tf_by_id(&self, tid: u32, docno: u32) -> u32 {
        let fwd = &self.forward[docno as usize];
        match fwd.binary_search_by_key(&tid, |&(t, _)| t) {
            Ok(i) => fwd[i].1,
            Err(_) => 0,
        }
    }

    /// Terms of a document with their frequencies, in lexicographic order.
    pub fn doc_terms(&self, docno: u32) -> impl Iterator<Item = (&str, u32)> + '_ {
        self.forward[docno as usize]
            .iter()
            .map(move |&(t, tf)| (self.terms[t as usize].as_str(), tf))
    }

    pub fn num_distinct_terms(&self, docno: u32) -> usize {
        self.forward[docno as usize].len()
    }

    /// Vocabulary with collection frequencies, in lexicographic order.
    pub fn vocabulary(&self) -> impl Iterator<Item = (&str, u64)> + '_ {
        self.terms.iter().map(String::as_str).zip(self.cf.iter().copied())
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`; positive for every df.
    pub fn idf(&self, term: &str) -> f64 {
        idf(self.num_docs() as u64, u64::from(self.df(term)))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<CorpusIndex> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        CorpusIndex::from_bytes(&bytes)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    /// Serializes to the single-file index format: magic, version,
    /// JSON header, document table, postings blocks, CRC32 trailer.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = IndexHeader {
            analyzer: self.analyzer.config().clone(),
            num_docs: self.num_docs() as u64,
            num_terms: self.num_terms() as u64,
            avgdl: self.avgdl,
            total_tokens: self.total_tokens,
        };
        let header = serde_json::to_vec(&header)?;
        let mut buf = Vec::new();
        buf.extend_from_slice(INDEX_MAGIC);
        put_u32(&mut buf, INDEX_FORMAT_VERSION);
        put_len(&mut buf, header.len())?;
        buf.extend_from_slice(&header);
        for (id, &len) in self.doc_ids.iter().zip(&self.doc_len) {
            put_str(&mut buf, id)?;
            put_u32(&mut buf, len);
        }
        for (term, list) in self.terms.iter().zip(&self.postings) {
            put_str(&mut buf, term)?;
            put_len(&mut buf, list.len())?;
            for p in list {
                put_u32(&mut buf, p.doc);
                put_u32(&mut buf, p.tf);
            }
        }
        let crc = crc32fast::hash(&buf);
        put_u32(&mut buf, crc);
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<CorpusIndex> {
        let magic_len = INDEX_MAGIC.len().min(bytes.len());
        if bytes[..magic_len] != INDEX_MAGIC[..magic_len] {
            return Err(Error::BadMagic { expected: "RTKIDX1 index" });
        }
        if bytes.len() < INDEX_MAGIC.len() + 8 {
            return Err(Error::Truncated("index preamble"));
        }
        let mut r = ByteReader::new(&bytes[..bytes.len() - 4], INDEX_MAGIC.len());
        let version = r.u32()?;
        if version != INDEX_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: INDEX_FORMAT_VERSION,
            });
        }
        let header_len = r.u32()? as usize;
        let header: IndexHeader = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| Error::Corrupt(format!("index header: {e}")))?;
        let analyzer = Analyzer::new(header.analyzer)?;

        let num_docs = usize::try_from(header.num_docs)
            .map_err(|_| Error::Corrupt("document count".into()))?;
        let mut doc_ids = Vec::new();
        let mut doc_lookup = HashMap::new();
        let mut doc_len = Vec::new();
        for docno in 0..num_docs {
            let id = r.string()?;
            let len = r.u32()?;
            if doc_lookup.insert(id.clone(), docno as u32).is_some() {
                return Err(Error::Corrupt(format!("duplicate document id `{id}`")));
            }
            doc_ids.push(id);
            doc_len.push(len);
        }
        let mut terms: Vec<String> = Vec::new();
        let mut postings = Vec::new();
        for _ in 0..header.num_terms {
            let term = r.string()?;
            if terms.last().is_some_and(|prev| *prev >= term) {
                return Err(Error::Corrupt("terms out of order".into()));
            }
            let n = r.u32()? as usize;
            let mut list = Vec::with_capacity(n.min(num_docs));
            for _ in 0..n {
                let doc = r.u32()?;
                let tf = r.u32()?;
                if doc as usize >= num_docs || tf == 0 || list.last().is_some_and(|p: &Posting| p.doc >= doc) {
                    return Err(Error::Corrupt(format!("bad posting for term `{term}`")));
                }
                list.push(Posting { doc, tf });
            }
            terms.push(term);
            postings.push(list);
        }
        if r.remaining() != 0 {
            return Err(Error::Corrupt("trailing bytes before checksum".into()));
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        if num_docs == 0 {
            return Err(Error::EmptyCorpus);
        }
        let index = CorpusIndex::assemble(analyzer, doc_ids, doc_lookup, doc_len, terms, postings);
        if index.total_tokens != header.total_tokens || index.avgdl.to_bits() != header.avgdl.to_bits() {
            return Err(Error::Corrupt("collection statistics disagree with postings".into()));
        }
        let recount: u64 = index.cf.iter().sum();
        if recount != index.total_tokens {
            return Err(Error::Corrupt("document lengths disagree with postings".into()));
        }
        Ok(index)
    }
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`.
pub fn idf(num_docs: u64, df: u64) -> f64 {
    let n = num_docs as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    analyzer: AnalyzerConfig,
    num_docs: u64,
    num_terms: u64,
    avgdl: f64,
    total_tokens: u64,
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_len(buf: &mut Vec<u8>, len: usize) -> Result<()> {
    let v = u32::try_from(len).map_err(|_| Error::invalid("block longer than u32::MAX"))?;
    put_u32(buf, v);
    Ok(())
}

fn put_str(buf: &mut Vec<u8>, s: &str) -> Result<()> {
    put_len(buf, s.len())?;
    buf.extend_from_slice(s.as_bytes());
    Ok(())
}

/// Bounds-checked little-endian reader.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8], pos: usize) -> Self {
        ByteReader { bytes, pos }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated("unexpected end of data"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Corrupt("invalid UTF-8 string".into()))
    }
}

/// Reads a corpus file in the given format.
pub fn read_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let name = path.display().to_string();
    match format {
        CorpusFormat::Jsonl => read_corpus_jsonl(reader, &name),
        CorpusFormat::Tsv => read_corpus_tsv(reader, &name),
    }
}

/// One JSON object per line with `doc_id` and `text`; blank lines skipped.
pub fn read_corpus_jsonl<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line)
            .map_err(|e| Error::parse(source_name, i + 1, e.to_string()))?;
        docs.push(doc);
    }
    Ok(docs)
}

/// `doc_id \t text` per line; blank lines skipped.
pub fn read_corpus_tsv<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(source_name, i + 1, "expected `doc_id<TAB>text`"))?;
        docs.push(Document::new(id, text));
    }
    Ok(docs)
}
