use std::ffi::{CStr, CString};
use std::ptr;

use rtk_core::alignment::{aggregate_attention, AttentionTensor};
use rtk_core::index::{build_index, Document};
use rtk_core::analyzer::AnalyzerConfig;
use rtk_core::scoring::{bm25_score, Bm25Params};
use rtk_ffi::*;

fn cstrs(items: &[&str]) -> Vec<CString> {
    items.iter().map(|s| CString::new(*s).unwrap()).collect()
}

fn last_error() -> String {
    let p = rtk_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const IDS: [&str; 3] = ["d1", "d2", "d3"];
const TEXTS: [&str; 3] = [
    "the car drove down the road",
    "a vehicle parked near the house",
    "apples and oranges in a basket",
];

fn build() -> *mut RtkIndex {
    let ids = cstrs(&IDS);
    let texts = cstrs(&TEXTS);
    let id_ptrs: Vec<_> = ids.iter().map(|c| c.as_ptr()).collect();
    let text_ptrs: Vec<_> = texts.iter().map(|c| c.as_ptr()).collect();
    let mut index = ptr::null_mut();
    let status = unsafe { rtk_index_build(id_ptrs.as_ptr(), text_ptrs.as_ptr(), 3, 1, &mut index) };
    assert_eq!(status, RtkStatus::Ok);
    index
}

fn score(index: *const RtkIndex, th: *const RtkThesaurus, kind: RtkScorerKind, q: &str, d: &str) -> (RtkStatus, f64) {
    let q = CString::new(q).unwrap();
    let d = CString::new(d).unwrap();
    let mut out = f64::NAN;
    let status = unsafe { rtk_score(index, th, kind, ptr::null(), q.as_ptr(), d.as_ptr(), &mut out) };
    (status, out)
}

#[test]
fn bm25_matches_core() {
    let index = build();
    assert_eq!(unsafe { rtk_index_num_docs(index) }, 3);
    let (status, s) = score(index, ptr::null(), RtkScorerKind::Bm25, "car road", "d1");
    assert_eq!(status, RtkStatus::Ok);

    let core = build_index(
        IDS.iter().zip(TEXTS).map(|(i, t)| Document::new(*i, t)),
        AnalyzerConfig::default(),
    )
    .unwrap();
    let terms = core.analyzer().analyze("car road", false);
    let expected = bm25_score(&core, &Bm25Params::default(), &terms, "d1").unwrap();
    assert_eq!(s, expected);
    unsafe { rtk_index_free(index) };
}

#[test]
fn thesaurus_lifts_bm25t_and_qlt() {
    let index = build();
    let mut th = ptr::null_mut();
    assert_eq!(unsafe { rtk_thesaurus_new(&mut th) }, RtkStatus::Ok);
    let (qt, dt) = (CString::new("car").unwrap(), CString::new("vehicle").unwrap());
    let status = unsafe { rtk_thesaurus_insert(th, qt.as_ptr(), dt.as_ptr(), 0.68) };
    assert_eq!(status, RtkStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { rtk_thesaurus_len(th) }, 1);

    let (_, plain) = score(index, ptr::null(), RtkScorerKind::Bm25, "car", "d2");
    let (_, lifted) = score(index, th, RtkScorerKind::Bm25t, "car", "d2");
    assert_eq!(plain, 0.0);
    assert!(lifted > 0.0);

    let (_, ql) = score(index, ptr::null(), RtkScorerKind::Ql, "car", "d2");
    let (_, qlt) = score(index, th, RtkScorerKind::Qlt, "car", "d2");
    assert!(qlt > ql);
    unsafe {
        rtk_thesaurus_free(th);
        rtk_index_free(index);
    }
}

#[test]
fn errors_set_status_and_message() {
    let index = build();
    let (status, _) = score(index, ptr::null(), RtkScorerKind::Bm25t, "car", "d1");
    assert_eq!(status, RtkStatus::NullPointer);
    assert!(last_error().contains("thesaurus"));

    let (status, _) = score(index, ptr::null(), RtkScorerKind::Bm25, "car", "nope");
    assert_eq!(status, RtkStatus::NotFound);
    assert!(last_error().contains("nope"));

    let (status, _) = score(index, ptr::null(), RtkScorerKind::Bm25, "car", "d1");
    assert_eq!(status, RtkStatus::Ok);
    assert!(rtk_last_error().is_null());

    let mut th = ptr::null_mut();
    unsafe { rtk_thesaurus_new(&mut th) };
    let (qt, dt) = (CString::new("a").unwrap(), CString::new("b").unwrap());
    assert_eq!(
        unsafe { rtk_thesaurus_insert(th, qt.as_ptr(), dt.as_ptr(), 1.5) },
        RtkStatus::InvalidArgument
    );

    let missing = CString::new("/nonexistent/rtk.idx").unwrap();
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { rtk_index_load(missing.as_ptr(), &mut loaded) }, RtkStatus::Io);
    assert!(loaded.is_null());
    assert_eq!(unsafe { rtk_index_load(ptr::null(), &mut loaded) }, RtkStatus::NullPointer);

    let mut params = rtk_params_default();
    params.k1 = -1.0;
    let (q, d) = (CString::new("car").unwrap(), CString::new("d1").unwrap());
    let mut out = 0.0;
    let status = unsafe { rtk_score(index, ptr::null(), RtkScorerKind::Bm25, &params, q.as_ptr(), d.as_ptr(), &mut out) };
    assert_eq!(status, RtkStatus::InvalidArgument);
    unsafe {
        rtk_thesaurus_free(th);
        rtk_index_free(index);
        rtk_index_free(ptr::null_mut());
        rtk_thesaurus_free(ptr::null_mut());
    }
}

#[test]
fn save_and_load_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("x.idx").to_str().unwrap()).unwrap();
    let index = build();
    assert_eq!(unsafe { rtk_index_save(index, path.as_ptr()) }, RtkStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { rtk_index_load(path.as_ptr(), &mut loaded) }, RtkStatus::Ok);
    for d in IDS {
        let a = score(index, ptr::null(), RtkScorerKind::Ql, "vehicle house", d).1;
        let b = score(loaded, ptr::null(), RtkScorerKind::Ql, "vehicle house", d).1;
        assert_eq!(a.to_bits(), b.to_bits());
    }
    unsafe {
        rtk_index_free(index);
        rtk_index_free(loaded);
    }
}

#[test]
fn losses() {
    assert_eq!(rtk_margin_mse(3.0, 1.0, 2.5, 1.5), 1.0);
    assert_eq!(rtk_hinge_loss(0.2, 0.5), 1.3);
    assert_eq!(rtk_hinge_loss(3.0, 0.5), 0.0);
}

fn uniform_record() -> (AttentionTensor, Vec<u8>) {
    let (q_len, d_len) = (2, 2);
    let l = q_len + d_len + 3;
    let ids = vec![None, Some(0), Some(1), None, Some(0), Some(1), None];
    let values = vec![1.0 / l as f32; l * l];
    let t = AttentionTensor::new(1, 1, q_len, d_len, ids, values).unwrap();
    let mut bytes = Vec::new();
    t.write_to(&mut bytes).unwrap();
    (t, bytes)
}

#[test]
fn attention_aggregation_with_sizing_call() {
    let (t, bytes) = uniform_record();
    let (mut rows, mut cols) = (0usize, 0usize);
    let status = unsafe { rtk_aggregate_attention(bytes.as_ptr(), bytes.len(), ptr::null_mut(), 0, &mut rows, &mut cols) };
    assert_eq!(status, RtkStatus::BufferTooSmall);
    assert_eq!((rows, cols), (2, 2));

    let mut out = vec![0.0; rows * cols];
    let status = unsafe { rtk_aggregate_attention(bytes.as_ptr(), bytes.len(), out.as_mut_ptr(), out.len(), &mut rows, &mut cols) };
    assert_eq!(status, RtkStatus::Ok);
    let expected = aggregate_attention(&t);
    for i in 0..rows {
        for j in 0..cols {
            assert_eq!(out[i * cols + j], expected.get(i, j));
        }
    }

    let status = unsafe { rtk_aggregate_attention(bytes.as_ptr(), 3, out.as_mut_ptr(), out.len(), &mut rows, &mut cols) };
    assert_eq!(status, RtkStatus::Format);
}
