//! Attention aggregation and partial-segment construction.
//!
//! A cross-encoder reads `[CLS] q [SEP] d [SEP]`. Its attention
//! probabilities over all layers and heads are averaged into one `L x L`
//! matrix `A`; the query-to-document block plus the transposed
//! document-to-query block gives a subword affinity matrix, which is pooled
//! to word level by taking the maximum over each word's subwords.
//!
//! The affinity then drives segment sampling: the query is split into a
//! contiguous span `q1` and the remainder `q2` (with a placeholder where the
//! span was), and for each part the document words it attends to least are
//! deleted. The number of deletions is drawn from
//! `Normal(|d| / 2, |d| / 2)`, rounded and clamped to `[1, |d| - 1]`.

use std::io::{Read, Write};
use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::ByteReader;

pub const ATTENTION_MAGIC: &[u8; 5] = b"ATTN1";

const ROW_SUM_TOLERANCE: f64 = 1e-4;

/// Attention probabilities `values[layer][head][i][j]` for one
/// `[CLS] q [SEP] d [SEP]` input, with a subword-to-word map.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionTensor {
    seq_len: usize,
    layers: usize,
    heads: usize,
    q_len: usize,
    d_len: usize,
    word_ids: Vec<Option<u32>>,
    values: Vec<f32>,
    query_words: Vec<Range<usize>>,
    doc_words: Vec<Range<usize>>,
}

impl AttentionTensor {
    /// Validates layout, word map and row normalization.
    pub fn new(
        layers: usize,
        heads: usize,
        q_len: usize,
        d_len: usize,
        word_ids: Vec<Option<u32>>,
        values: Vec<f32>,
    ) -> Result<Self> {
        let seq_len = q_len + d_len + 3;
        if layers == 0 || heads == 0 {
            return Err(Error::Attention("need at least one layer and one head".into()));
        }
        if q_len == 0 || d_len == 0 {
            return Err(Error::Attention("query and document must each have a token".into()));
        }
        if word_ids.len() != seq_len {
            return Err(Error::Attention(format!(
                "{} word ids for sequence length {seq_len} (|q| + |d| + 3)",
                word_ids.len()
            )));
        }
        let expected = layers * heads * seq_len * seq_len;
        if values.len() != expected {
            return Err(Error::Attention(format!("{} values, expected {expected}", values.len())));
        }
        for pos in [0, q_len + 1, seq_len - 1] {
            if word_ids[pos].is_some() {
                return Err(Error::Attention(format!(
                    "position {pos} must be a special token ([CLS] q [SEP] d [SEP] layout)"
                )));
            }
        }
        let query_words = group_words(&word_ids, 1..q_len + 1)?;
        let doc_words = group_words(&word_ids, q_len + 2..seq_len - 1)?;

        for (r, row) in values.chunks_exact(seq_len).enumerate() {
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Attention(format!("row {r} has a negative or non-finite value")));
            }
            let sum: f64 = row.iter().map(|&v| f64::from(v)).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Attention(format!("row {r} sums to {sum}, not 1")));
            }
        }
        Ok(AttentionTensor {
            seq_len,
            layers,
            heads,
            q_len,
            d_len,
            word_ids,
            values,
            query_words,
            doc_words,
        })
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }
    pub fn layers(&self) -> usize {
        self.layers
    }
    pub fn heads(&self) -> usize {
        self.heads
    }
    pub fn q_len(&self) -> usize {
        self.q_len
    }
    pub fn d_len(&self) -> usize {
        self.d_len
    }
    pub fn word_ids(&self) -> &[Option<u32>] {
        &self.word_ids
    }
    pub fn num_query_words(&self) -> usize {
        self.query_words.len()
    }
    pub fn num_doc_words(&self) -> usize {
        self.doc_words.len()
    }
    /// Token positions of each query word.
    pub fn query_word_spans(&self) -> &[Range<usize>] {
        &self.query_words
    }
    /// Token positions of each document word.
    pub fn doc_word_spans(&self) -> &[Range<usize>] {
        &self.doc_words
    }

    pub fn get(&self, layer: usize, head: usize, i: usize, j: usize) -> f32 {
        let l = self.seq_len;
        self.values[((layer * self.heads + head) * l + i) * l + j]
    }

    /// Reads one tensor; `Ok(None)` at a clean end of input.
    pub fn read_from<R: Read>(reader: &mut R) -> Result<Option<AttentionTensor>> {
        let mut magic = [0u8; 5];
        let mut got = 0;
        while got < magic.len() {
            let n = reader.read(&mut magic[got..])?;
            if n == 0 {
                break;
            }
            got += n;
        }
        if got == 0 {
            return Ok(None);
        }
        if magic[..got] != ATTENTION_MAGIC[..got] {
            return Err(Error::BadMagic { expected: "ATTN1 attention" });
        }
        if got < magic.len() {
            return Err(Error::Truncated("attention magic"));
        }
        let mut dims = [0u8; 20];
        read_exact_or_truncated(reader, &mut dims, "attention header")?;
        let mut r = ByteReader::new(&dims, 0);
        let seq_len = r.u32()? as usize;
        let layers = r.u32()? as usize;
        let heads = r.u32()? as usize;
        let q_len = r.u32()? as usize;
        let d_len = r.u32()? as usize;
        if seq_len != q_len + d_len + 3 {
            return Err(Error::Attention(format!(
                "L = {seq_len} but |q| + |d| + 3 = {}",
                q_len + d_len + 3
            )));
        }
        let n_values = layers
            .checked_mul(heads)
            .and_then(|x| x.checked_mul(seq_len))
            .and_then(|x| x.checked_mul(seq_len))
            .filter(|&n| n <= (1 << 31))
            .ok_or_else(|| Error::Attention("tensor dimensions too large".into()))?;

        let mut ids = vec![0u8; seq_len * 4];
        read_exact_or_truncated(reader, &mut ids, "attention word ids")?;
        let mut r = ByteReader::new(&ids, 0);
        let mut word_ids = Vec::with_capacity(seq_len);
        for _ in 0..seq_len {
            let id = r.i32()?;
            word_ids.push(match id {
                -1 => None,
                id if id >= 0 => Some(id as u32),
                other => return Err(Error::Attention(format!("bad word id {other}"))),
            });
        }
        let mut raw = vec![0u8; n_values * 4];
        read_exact_or_truncated(reader, &mut raw, "attention values")?;
        let mut r = ByteReader::new(&raw, 0);
        let mut values = Vec::with_capacity(n_values);
        for _ in 0..n_values {
            values.push(r.f32()?);
        }
        AttentionTensor::new(layers, heads, q_len, d_len, word_ids, values).map(Some)
    }

    /// Reads every tensor in a byte buffer.
    pub fn read_all(mut bytes: &[u8]) -> Result<Vec<AttentionTensor>> {
        let mut out = Vec::new();
        while let Some(t) = AttentionTensor::read_from(&mut bytes)? {
            out.push(t);
        }
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(ATTENTION_MAGIC)?;
        for v in [self.seq_len, self.layers, self.heads, self.q_len, self.d_len] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        for id in &self.word_ids {
            let v: i32 = id.map_or(-1, |x| x as i32);
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

fn read_exact_or_truncated<R: Read>(reader: &mut R, buf: &mut [u8], what: &'static str) -> Result<()> {
    reader.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated(what),
        _ => Error::Io(e),
    })
}

/// Groups consecutive equal word ids inside `positions` into words. Word
/// ids must be present and must not revisit an earlier word.
fn group_words(word_ids: &[Option<u32>], positions: Range<usize>) -> Result<Vec<Range<usize>>> {
    let mut words: Vec<Range<usize>> = Vec::new();
    let mut last: Option<u32> = None;
    for pos in positions {
        let id = word_ids[pos]
            .ok_or_else(|| Error::Attention(format!("special token inside a segment at position {pos}")))?;
        match last {
            Some(prev) if prev == id => words.last_mut().expect("open word").end = pos + 1,
            Some(prev) if id < prev => {
                return Err(Error::Attention(format!("word id {id} at position {pos} goes backwards")))
            }
            _ => words.push(pos..pos + 1),
        }
        last = Some(id);
    }
    Ok(words)
}

/// Dense row-major matrix of query-word by document-word affinities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl AffinityMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Dimension(format!("{} values for a {rows}x{cols} matrix", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("affinity values must be finite"));
        }
        Ok(AffinityMatrix { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

/// Query-subword by document-subword affinity, `A[q -> d] + A[d -> q]^T`,
/// with `A` the mean over layers and heads.
pub fn subword_affinity(t: &AttentionTensor) -> AffinityMatrix {
    let (q_len, d_len) = (t.q_len, t.d_len);
    let q0 = 1;
    let d0 = q_len + 2;
    let mut sums = vec![0.0f64; q_len * d_len];
    for layer in 0..t.layers {
        for head in 0..t.heads {
            for a in 0..q_len {
                for b in 0..d_len {
                    let qd = f64::from(t.get(layer, head, q0 + a, d0 + b));
                    let dq = f64::from(t.get(layer, head, d0 + b, q0 + a));
                    sums[a * d_len + b] += qd + dq;
                }
            }
        }
    }
    let n = (t.layers * t.heads) as f64;
    for v in &mut sums {
        *v /= n;
    }
    AffinityMatrix {
        rows: q_len,
        cols: d_len,
        values: sums,
    }
}

/// Word-level affinity: subword affinity max-pooled over each word pair.
pub fn aggregate_attention(t: &AttentionTensor) -> AffinityMatrix {
    let sub = subword_affinity(t);
    let q_off = 1;
    let d_off = t.q_len + 2;
    let rows = t.query_words.len();
    let cols = t.doc_words.len();
    let mut values = vec![f64::NEG_INFINITY; rows * cols];
    for (qi, qspan) in t.query_words.iter().enumerate() {
        for (dj, dspan) in t.doc_words.iter().enumerate() {
            let cell = &mut values[qi * cols + dj];
            for a in qspan.clone() {
                for b in dspan.clone() {
                    *cell = cell.max(sub.get(a - q_off, b - d_off));
                }
            }
        }
    }
    AffinityMatrix { rows, cols, values }
}

/// A contiguous proper span `q1 = [start, end)` of an `len`-word query;
/// `q2` is everything else with a placeholder at the excision point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySplit {
    pub start: usize,
    pub end: usize,
    pub len: usize,
}

impl QuerySplit {
    pub fn q1_words(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn q2_words(&self) -> Vec<usize> {
        (0..self.start).chain(self.end..self.len).collect()
    }

    pub fn q1<T: Clone>(&self, tokens: &[T]) -> Vec<T> {
        tokens[self.start..self.end].to_vec()
    }

    pub fn q2<T: Clone>(&self, tokens: &[T], placeholder: T) -> Vec<T> {
        let mut out = tokens[..self.start].to_vec();
        out.push(placeholder);
        out.extend_from_slice(&tokens[self.end..]);
        out
    }
}

/// Number of proper non-empty contiguous spans of an `n`-token query.
pub fn num_proper_spans(n: usize) -> usize {
    n * (n + 1) / 2 - 1
}

/// Draws `q1` uniformly among all proper contiguous spans.
pub fn partition_query<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Result<QuerySplit> {
    if len < 2 {
        return Err(Error::invalid(format!("query of {len} word(s) cannot be split into two parts")));
    }
    let mut pick = rng.gen_range(0..num_proper_spans(len));
    for start in 0..len {
        for end in start + 1..=len {
            if end - start == len {
                continue;
            }
            if pick == 0 {
                return Ok(QuerySplit { start, end, len });
            }
            pick -= 1;
        }
    }
    unreachable!("pick is below the span count")
}

/// A deletion-count draw: the raw normal sample and the clamped count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeletionDraw {
    pub raw: f64,
    pub count: usize,
}

pub fn sample_deletion_draw<R: Rng + ?Sized>(d_len: usize, rng: &mut R) -> Result<DeletionDraw> {
    if d_len < 2 {
        return Err(Error::invalid(format!("document of {d_len} word(s) leaves nothing to delete")));
    }
    let half = d_len as f64 / 2.0;
    let normal = Normal::new(half, half).expect("positive standard deviation");
    let raw = normal.sample(rng);
    let count = raw.round().clamp(1.0, (d_len - 1) as f64) as usize;
    Ok(DeletionDraw { raw, count })
}

/// Number of document words to delete, in `[1, d_len - 1]`.
pub fn sample_deletion_count<R: Rng + ?Sized>(d_len: usize, rng: &mut R) -> Result<usize> {
    Ok(sample_deletion_draw(d_len, rng)?.count)
}

/// How a query part's words combine into one relevance per document word.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PartitionReduce {
    #[default]
    Max,
    Sum,
}

/// Relevance of each document word to the given query words.
pub fn partition_relevance(aff: &AffinityMatrix, query_words: &[usize], reduce: PartitionReduce) -> Vec<f64> {
    (0..aff.cols)
        .map(|j| {
            let it = query_words.iter().map(|&i| aff.get(i, j));
            match reduce {
                PartitionReduce::Max => it.fold(f64::NEG_INFINITY, f64::max),
                PartitionReduce::Sum => it.sum(),
            }
        })
        .collect()
}

/// Keep-mask after deleting the `m` least relevant words. Among equal
/// relevance the higher index goes first.
pub fn delete_lowest(relevance: &[f64], m: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..relevance.len()).collect();
    order.sort_by(|&a, &b| relevance[a].total_cmp(&relevance[b]).then(b.cmp(&a)));
    let mut keep = vec![true; relevance.len()];
    for &i in order.iter().take(m) {
        keep[i] = false;
    }
    keep
}

/// Query split plus per-part document keep-masks. The two masks are built
/// independently and may overlap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentPair {
    pub split: QuerySplit,
    pub d1_keep: Vec<bool>,
    pub d2_keep: Vec<bool>,
    pub m1: usize,
    pub m2: usize,
}

/// Segment texts rendered from word lists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedSegments {
    pub q1: String,
    pub q2: String,
    pub d1: String,
    pub d2: String,
}

impl SegmentPair {
    pub fn render<S: AsRef<str>>(&self, query_words: &[S], doc_words: &[S], placeholder: &str) -> Result<RenderedSegments> {
        if query_words.len() != self.split.len || doc_words.len() != self.d1_keep.len() {
            return Err(Error::Dimension("word lists do not match the segment pair".into()));
        }
        let q: Vec<&str> = query_words.iter().map(AsRef::as_ref).collect();
        let keep = |mask: &[bool]| {
            doc_words
                .iter()
                .zip(mask)
                .filter(|(_, &k)| k)
                .map(|(w, _)| w.as_ref())
                .collect::<Vec<_>>()
                .join(" ")
        };
        Ok(RenderedSegments {
            q1: self.split.q1(&q).join(" "),
            q2: self.split.q2(&q, placeholder).join(" "),
            d1: keep(&self.d1_keep),
            d2: keep(&self.d2_keep),
        })
    }
}

/// Builds the document keep-masks for both query parts of `split`.
pub fn build_segments<R: Rng + ?Sized>(
    aff: &AffinityMatrix,
    split: QuerySplit,
    reduce: PartitionReduce,
    rng: &mut R,
) -> Result<SegmentPair> {
    if split.len != aff.rows {
        return Err(Error::Dimension(format!(
            "split over {} query words, affinity has {}",
            split.len, aff.rows
        )));
    }
    if split.start >= split.end || split.end > split.len || split.end - split.start == split.len {
        return Err(Error::invalid("q1 must be a proper non-empty span"));
    }
    let n_doc = aff.cols;
    let m1 = sample_deletion_count(n_doc, rng)?;
    let m2 = sample_deletion_count(n_doc, rng)?;
    let q1: Vec<usize> = split.q1_words().collect();
    let r1 = partition_relevance(aff, &q1, reduce);
    let r2 = partition_relevance(aff, &split.q2_words(), reduce);
    Ok(SegmentPair {
        split,
        d1_keep: delete_lowest(&r1, m1),
        d2_keep: delete_lowest(&r2, m2),
        m1,
        m2,
    })
}

/// Partition, affinity and segments for one attention tensor.
pub fn extract_segments<R: Rng + ?Sized>(
    t: &AttentionTensor,
    reduce: PartitionReduce,
    rng: &mut R,
) -> Result<SegmentPair> {
    let aff = aggregate_attention(t);
    let split = partition_query(aff.rows, rng)?;
    build_segments(&aff, split, reduce, rng)
}
