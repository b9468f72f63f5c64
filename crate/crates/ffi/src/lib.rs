//! C ABI over `rtk-core`.
//!
//! Every fallible function returns an [`RtkStatus`]; on failure the message
//! is available from [`rtk_last_error`] until the next call on the same
//! thread. Handles are opaque and must be released with their `_free`
//! function. Strings are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rtk_core::alignment::{aggregate_attention, AttentionTensor};
use rtk_core::analyzer::AnalyzerConfig;
use rtk_core::index::{build_index, CorpusIndex, Document};
use rtk_core::scoring::{Bm25Params, LexicalScorer, QlParams, QltOptions, Scorer, ScoringModel};
use rtk_core::thesaurus::Thesaurus;
use rtk_core::training_data::{hinge_loss, margin_mse};
use rtk_core::trec::Query;
use rtk_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RtkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    InvalidArgument = 5,
    NotFound = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RtkScorerKind {
    Bm25 = 0,
    Bm25t = 1,
    Ql = 2,
    Qlt = 3,
}

/// Scorer parameters. Obtain defaults from [`rtk_params_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct RtkParams {
    pub k1: f64,
    pub b: f64,
    pub mu: f64,
    /// Non-zero normalizes translation rows for QLT.
    pub qlt_normalize: c_int,
}

/// Opaque inverted index.
pub struct RtkIndex(CorpusIndex);

/// Opaque thesaurus.
pub struct RtkThesaurus(Thesaurus);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(RtkStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) => RtkStatus::Io,
            Error::UnknownDoc(_) | Error::MissingScore { .. } => RtkStatus::NotFound,
            Error::Parse { .. }
            | Error::Json(_)
            | Error::BadMagic { .. }
            | Error::VersionMismatch { .. }
            | Error::Checksum { .. }
            | Error::Truncated(_)
            | Error::Corrupt(_)
            | Error::Attention(_) => RtkStatus::Format,
            _ => RtkStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: RtkStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RtkStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RtkStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            RtkStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(RtkStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(RtkStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(RtkStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| fail(RtkStatus::NullPointer, format!("{what} is null")))
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next `rtk_` call on the same thread.
#[no_mangle]
pub extern "C" fn rtk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn rtk_params_default() -> RtkParams {
    let bm25 = Bm25Params::default();
    RtkParams {
        k1: bm25.k1,
        b: bm25.b,
        mu: QlParams::default().mu,
        qlt_normalize: 0,
    }
}

/// Loads an index written by `rtk index build`.
///
/// # Safety
/// `path` must be a valid C string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rtk_index_load(path: *const c_char, out: *mut *mut RtkIndex) -> RtkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let index = CorpusIndex::load(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(RtkIndex(index)));
        Ok(())
    })
}

/// Builds an in-memory index from `n` documents.
///
/// # Safety
/// `doc_ids` and `texts` must each point to `n` valid C strings.
#[no_mangle]
pub unsafe extern "C" fn rtk_index_build(
    doc_ids: *const *const c_char,
    texts: *const *const c_char,
    n: usize,
    stem: c_int,
    out: *mut *mut RtkIndex,
) -> RtkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        if n > 0 && (doc_ids.is_null() || texts.is_null()) {
            return Err(fail(RtkStatus::NullPointer, "document arrays are null"));
        }
        let mut docs = Vec::with_capacity(n);
        for i in 0..n {
            let id = str_arg(*doc_ids.add(i), "doc id")?;
            let text = str_arg(*texts.add(i), "document text")?;
            docs.push(Document::new(id, text));
        }
        let index = build_index(docs, AnalyzerConfig::default().with_stemming(stem != 0))?;
        *out = Box::into_raw(Box::new(RtkIndex(index)));
        Ok(())
    })
}

/// # Safety
/// `index` must come from this library; `path` must be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn rtk_index_save(index: *const RtkIndex, path: *const c_char) -> RtkStatus {
    guard(|| {
        let index = ref_arg(index, "index")?;
        index.0.save(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Number of documents, or 0 for a null handle.
///
/// # Safety
/// `index` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn rtk_index_num_docs(index: *const RtkIndex) -> usize {
    index.as_ref().map_or(0, |i| i.0.num_docs())
}

/// # Safety
/// `index` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn rtk_index_free(index: *mut RtkIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Creates an empty thesaurus.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rtk_thesaurus_new(out: *mut *mut RtkThesaurus) -> RtkStatus {
    guard(|| {
        *out_arg(out, "out")? = Box::into_raw(Box::new(RtkThesaurus(Thesaurus::new())));
        Ok(())
    })
}

/// Reads a `qt<TAB>dt<TAB>score` file.
///
/// # Safety
/// `path` must be a valid C string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rtk_thesaurus_load(path: *const c_char, out: *mut *mut RtkThesaurus) -> RtkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let th = Thesaurus::load(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(RtkThesaurus(th)));
        Ok(())
    })
}

/// Adds an entry; `score` must lie in [0, 1].
///
/// # Safety
/// `th` must come from this library; `qt` and `dt` must be valid C strings.
#[no_mangle]
pub unsafe extern "C" fn rtk_thesaurus_insert(
    th: *mut RtkThesaurus,
    qt: *const c_char,
    dt: *const c_char,
    score: f64,
) -> RtkStatus {
    guard(|| {
        let th = out_arg(th, "thesaurus")?;
        th.0.insert(str_arg(qt, "qt")?, str_arg(dt, "dt")?, score)?;
        Ok(())
    })
}

/// # Safety
/// `th` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn rtk_thesaurus_len(th: *const RtkThesaurus) -> usize {
    th.as_ref().map_or(0, |t| t.0.len())
}

/// # Safety
/// `th` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn rtk_thesaurus_free(th: *mut RtkThesaurus) {
    if !th.is_null() {
        drop(Box::from_raw(th));
    }
}

/// Scores raw query text against an indexed document. `thesaurus` may be
/// null for BM25 and QL; `params` may be null for defaults.
///
/// # Safety
/// Handles must come from this library; strings must be valid C strings;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rtk_score(
    index: *const RtkIndex,
    thesaurus: *const RtkThesaurus,
    kind: RtkScorerKind,
    params: *const RtkParams,
    query: *const c_char,
    doc_id: *const c_char,
    out: *mut f64,
) -> RtkStatus {
    guard(|| {
        let index = &ref_arg(index, "index")?.0;
        let out = out_arg(out, "out")?;
        let p = params.as_ref().copied().unwrap_or_else(|| rtk_params_default());
        let bm25 = Bm25Params { k1: p.k1, b: p.b };
        let ql = QlParams { mu: p.mu };
        let th = || ref_arg(thesaurus, "thesaurus").map(|t| &t.0);
        let model = match kind {
            RtkScorerKind::Bm25 => ScoringModel::Bm25(bm25),
            RtkScorerKind::Bm25t => ScoringModel::Bm25T(bm25, th()?),
            RtkScorerKind::Ql => ScoringModel::Ql(ql),
            RtkScorerKind::Qlt => ScoringModel::Qlt(
                ql,
                th()?,
                QltOptions {
                    normalize: p.qlt_normalize != 0,
                },
            ),
        };
        let scorer = LexicalScorer::new(index, model)?;
        let query = Query::new("ffi", str_arg(query, "query")?);
        *out = scorer.score(&query, str_arg(doc_id, "doc_id")?)?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn rtk_margin_mse(se_pos: f64, se_neg: f64, sb_pos: f64, sb_neg: f64) -> f64 {
    margin_mse(se_pos, se_neg, sb_pos, sb_neg)
}

#[no_mangle]
pub extern "C" fn rtk_hinge_loss(se_pos: f64, se_neg: f64) -> f64 {
    hinge_loss(se_pos, se_neg)
}

/// Parses the first attention record in `bytes` and writes its word-level
/// affinity matrix (row-major, query words by document words) to `out`.
/// `rows` and `cols` always receive the dimensions when parsing succeeds;
/// if `out_len` is smaller than `rows * cols` nothing is copied and
/// `BufferTooSmall` is returned, so a first call with `out_len = 0` sizes
/// the buffer.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` to `out_len` writable
/// doubles (may be null when `out_len` is 0); `rows` and `cols` writable.
#[no_mangle]
pub unsafe extern "C" fn rtk_aggregate_attention(
    bytes: *const u8,
    len: usize,
    out: *mut f64,
    out_len: usize,
    rows: *mut usize,
    cols: *mut usize,
) -> RtkStatus {
    guard(|| {
        if bytes.is_null() {
            return Err(fail(RtkStatus::NullPointer, "bytes is null"));
        }
        let rows = out_arg(rows, "rows")?;
        let cols = out_arg(cols, "cols")?;
        let data = std::slice::from_raw_parts(bytes, len);
        let tensor = AttentionTensor::read_from(&mut &data[..])?
            .ok_or_else(|| fail(RtkStatus::Format, "no attention record in buffer"))?;
        let aff = aggregate_attention(&tensor);
        *rows = aff.rows();
        *cols = aff.cols();
        let need = aff.rows() * aff.cols();
        if out_len < need {
            return Err(fail(
                RtkStatus::BufferTooSmall,
                format!("output holds {out_len} values, {need} needed"),
            ));
        }
        if out.is_null() {
            return Err(fail(RtkStatus::NullPointer, "out is null"));
        }
        let dst = std::slice::from_raw_parts_mut(out, need);
        for i in 0..aff.rows() {
            for j in 0..aff.cols() {
                dst[i * aff.cols() + j] = aff.get(i, j);
            }
        }
        Ok(())
    })
}
