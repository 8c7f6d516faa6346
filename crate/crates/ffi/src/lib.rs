//! C ABI over the herbprobe core.
//!
//! Conventions:
//! - Every fallible function returns an [`HpStatus`]. On failure the message
//!   is available from [`hp_last_error_message`] on the same thread.
//! - Objects are opaque handles created by `*_load`/`*_build` and released
//!   with the matching `*_free`. Freeing NULL is a no-op.
//! - Strings passed in are NUL-terminated UTF-8. Strings handed out are owned
//!   by the caller and released with [`hp_string_free`].
//! - Panics never cross the boundary; they surface as `HP_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use herbprobe::corpus::{Corpus, MatchMode};
use herbprobe::dataset::{build_dataset, EvalDataset};
use herbprobe::metrics::{prf1, ConfusionMatrix};
use herbprobe::protocols::{
    build_inquiry_prompt, build_verify_prompt, parse_ingredient_list, parse_yes_no, Lang, Verdict,
};
use herbprobe::retrieval::{build_index, Index};
use herbprobe::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    /// Malformed corpus, dataset or JSON argument.
    InvalidInput = 4,
    /// Corpus too small or ingredient pool exhausted.
    DatasetConstraint = 5,
    /// Metric requested on an empty confusion matrix.
    EmptyConfusion = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HpLang {
    Zh = 0,
    En = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HpVerdict {
    Yes = 0,
    No = 1,
    Invalid = 2,
}

/// Percentages in [0, 100], unrounded.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HpMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

pub struct HpCorpus(Corpus);
pub struct HpDataset(EvalDataset);
pub struct HpIndex(Index);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(HpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => HpStatus::Io,
            Error::TooFewRecords { .. } | Error::PoolTooSmall { .. } | Error::EmptySplit => {
                HpStatus::DatasetConstraint
            }
            Error::EmptyConfusion => HpStatus::EmptyConfusion,
            _ => HpStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            HpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            HpStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(HpStatus::NullArgument, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(HpStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(HpStatus::NullArgument, format!("{name} is NULL")))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(HpStatus::NullArgument, format!("{name} is NULL")));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(HpStatus::InvalidInput, "output contains NUL".into()))?;
    write_out(out, c.into_raw(), "out")
}

unsafe fn write_handle<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    write_out(out, Box::into_raw(Box::new(value)), "out")
}

unsafe fn free_handle<T>(p: *mut T) {
    if !p.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(p))));
    }
}

fn lang(l: HpLang) -> Lang {
    match l {
        HpLang::Zh => Lang::Zh,
        HpLang::En => Lang::En,
    }
}

fn json_err(e: serde_json::Error) -> Failure {
    Failure(HpStatus::InvalidInput, format!("invalid JSON: {e}"))
}

/// Library version as a static string. Do not free.
#[no_mangle]
pub extern "C" fn hp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL after a success.
/// Valid until the next call into the library from this thread. Do not free.
#[no_mangle]
pub extern "C" fn hp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a string handed out by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn hp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a JSONL corpus file.
///
/// # Safety
/// `path` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_corpus_load(path: *const c_char, out: *mut *mut HpCorpus) -> HpStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        write_handle(out, HpCorpus(Corpus::load(path)?))
    })
}

/// Parses a corpus from JSONL text held in memory.
///
/// # Safety
/// `jsonl` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_corpus_from_jsonl(jsonl: *const c_char, out: *mut *mut HpCorpus) -> HpStatus {
    guard(|| {
        let text = str_arg(jsonl, "jsonl")?;
        write_handle(out, HpCorpus(Corpus::from_reader(text.as_bytes())?))
    })
}

/// # Safety
/// `corpus` must be NULL or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn hp_corpus_free(corpus: *mut HpCorpus) {
    free_handle(corpus)
}

/// Number of records; 0 for NULL.
///
/// # Safety
/// `corpus` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hp_corpus_len(corpus: *const HpCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// SHA-256 fingerprint of the normalized corpus as hex.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_corpus_fingerprint(corpus: *const HpCorpus, out: *mut *mut c_char) -> HpStatus {
    guard(|| {
        let corpus = ref_arg(corpus, "corpus")?;
        write_string(out, corpus.0.fingerprint().to_string())
    })
}

/// Builds the mixed T/F dataset for `seed`.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_dataset_build(
    corpus: *const HpCorpus,
    seed: u64,
    match_markers: bool,
    out: *mut *mut HpDataset,
) -> HpStatus {
    guard(|| {
        let corpus = ref_arg(corpus, "corpus")?;
        let dataset = build_dataset(&corpus.0, seed, MatchMode::from_flag(match_markers))?;
        write_handle(out, HpDataset(dataset))
    })
}

/// # Safety
/// `dataset` must be NULL or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn hp_dataset_free(dataset: *mut HpDataset) {
    free_handle(dataset)
}

/// Number of items; 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hp_dataset_len(dataset: *const HpDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

/// The dataset in its JSONL file form, header line included.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_dataset_to_jsonl(dataset: *const HpDataset, out: *mut *mut c_char) -> HpStatus {
    guard(|| {
        let dataset = ref_arg(dataset, "dataset")?;
        write_string(out, dataset.0.to_jsonl())
    })
}

/// Builds a BM25 index over the corpus. The index does not borrow the corpus.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_index_build(corpus: *const HpCorpus, out: *mut *mut HpIndex) -> HpStatus {
    guard(|| {
        let corpus = ref_arg(corpus, "corpus")?;
        write_handle(out, HpIndex(build_index(&corpus.0)))
    })
}

/// # Safety
/// `index` must be NULL or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn hp_index_free(index: *mut HpIndex) {
    free_handle(index)
}

/// Top-`k` entries for `query` as a JSON array of
/// `{doc_id, drug_name, score, rendered_text}`.
///
/// # Safety
/// `index` must be a live handle; `query` a valid C string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hp_index_search_json(
    index: *const HpIndex,
    query: *const c_char,
    k: usize,
    out: *mut *mut c_char,
) -> HpStatus {
    guard(|| {
        let index = ref_arg(index, "index")?;
        let query = str_arg(query, "query")?;
        let hits = index.0.search(query, k);
        write_string(out, serde_json::to_string(&hits).map_err(json_err)?)
    })
}

/// Inquiry prompt for a drug name.
///
/// # Safety
/// `drug_name` must be a valid C string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hp_build_inquiry_prompt(
    drug_name: *const c_char,
    lang_: HpLang,
    out: *mut *mut c_char,
) -> HpStatus {
    guard(|| {
        let name = str_arg(drug_name, "drug_name")?;
        write_string(out, build_inquiry_prompt(name, lang(lang_)))
    })
}

/// Verification prompt; `ingredients_json` is a JSON array of strings.
///
/// # Safety
/// Both strings must be valid C strings; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hp_build_verify_prompt(
    drug_name: *const c_char,
    ingredients_json: *const c_char,
    lang_: HpLang,
    out: *mut *mut c_char,
) -> HpStatus {
    guard(|| {
        let name = str_arg(drug_name, "drug_name")?;
        let ingredients: Vec<String> =
            serde_json::from_str(str_arg(ingredients_json, "ingredients_json")?).map_err(json_err)?;
        write_string(out, build_verify_prompt(name, &ingredients, lang(lang_)))
    })
}

/// Classifies a raw verification response.
///
/// # Safety
/// `raw` must be a valid C string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hp_parse_yes_no(raw: *const c_char, out: *mut HpVerdict) -> HpStatus {
    guard(|| {
        let verdict = match parse_yes_no(str_arg(raw, "raw")?) {
            Verdict::Yes => HpVerdict::Yes,
            Verdict::No => HpVerdict::No,
            Verdict::Invalid => HpVerdict::Invalid,
        };
        write_out(out, verdict, "out")
    })
}

/// Ingredient names found in a raw inquiry response, as a JSON array.
///
/// # Safety
/// `raw` must be a valid C string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hp_parse_ingredient_list(raw: *const c_char, out: *mut *mut c_char) -> HpStatus {
    guard(|| {
        let names = parse_ingredient_list(str_arg(raw, "raw")?);
        write_string(out, serde_json::to_string(&names).map_err(json_err)?)
    })
}

/// Accuracy, precision, recall and F1 from a confusion matrix.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_prf1(tp: u64, fp: u64, fn_: u64, tn: u64, out: *mut HpMetrics) -> HpStatus {
    guard(|| {
        let row = prf1(ConfusionMatrix::new(tp, fp, fn_, tn))?;
        write_out(
            out,
            HpMetrics {
                accuracy: row.accuracy,
                precision: row.precision,
                recall: row.recall,
                f1: row.f1,
                precision_undefined: row.precision_undefined,
                recall_undefined: row.recall_undefined,
            },
            "out",
        )
    })
}
