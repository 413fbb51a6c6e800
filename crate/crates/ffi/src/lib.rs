//! C ABI over the broadsheet engine.
//!
//! Every fallible function returns a [`BroadsheetStatus`]; on failure the
//! message is available from [`broadsheet_last_error`] on the same thread.
//! Handles are opaque and must be released with their `_free` function.
//! Strings returned to the caller are released with [`broadsheet_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use broadsheet::geometry::{self, Detection, Label};
use broadsheet::lexicon::{Lexicon, Provenance, SpellIndex};
use broadsheet::metrics::{self, EvalPair};
use broadsheet::pipeline::{self, PipelineConfig};
use broadsheet::recognition::{Embedding, ExemplarIndex, IndexKind};
use broadsheet::trainmath::{self, EmbeddingBatch, SupConConfig};
use broadsheet::{BoundingBox, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BroadsheetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Format = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BroadsheetIndexKind {
    Word = 0,
    Character = 1,
}

/// Axis-aligned box in page pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroadsheetBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl From<BroadsheetBox> for BoundingBox {
    fn from(b: BroadsheetBox) -> Self {
        BoundingBox { x0: b.x0, y0: b.y0, x1: b.x1, y1: b.y1 }
    }
}

impl From<BoundingBox> for BroadsheetBox {
    fn from(b: BoundingBox) -> Self {
        BroadsheetBox { x0: b.x0, y0: b.y0, x1: b.x1, y1: b.y1 }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BroadsheetBatchSummary {
    pub scans_total: usize,
    pub scans_processed: usize,
    pub scans_failed: usize,
    pub articles: usize,
    pub lines: usize,
}

/// Exemplar index handle.
pub struct BroadsheetIndex {
    inner: ExemplarIndex,
    labels: Vec<CString>,
}

/// Spell corrector handle.
pub struct BroadsheetSpeller {
    inner: SpellIndex,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(BroadsheetStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => BroadsheetStatus::Io,
            Error::Format { .. } | Error::Json(_) => BroadsheetStatus::Format,
            _ => BroadsheetStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: BroadsheetStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BroadsheetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            BroadsheetStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            BroadsheetStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(BroadsheetStatus::NullPointer, format!("{name} is null"));
    }
    CStr::from_ptr(p).to_str().or_else(|_| fail(BroadsheetStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().map_or_else(|| fail(BroadsheetStatus::NullPointer, format!("{name} is null")), Ok)
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().map_or_else(|| fail(BroadsheetStatus::NullPointer, format!("{name} is null")), Ok)
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, name: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(BroadsheetStatus::NullPointer, format!("{name} is null"));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn broadsheet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn broadsheet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn broadsheet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Character-level edit distance between two UTF-8 strings.
///
/// # Safety
/// `a` and `b` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn broadsheet_levenshtein(a: *const c_char, b: *const c_char, out: *mut usize) -> BroadsheetStatus {
    guard(|| {
        let (a, b) = (str_arg(a, "a")?, str_arg(b, "b")?);
        *out_arg(out, "out")? = metrics::levenshtein(a, b);
        Ok(())
    })
}

/// Corpus character error rate over `n` prediction/truth pairs.
///
/// # Safety
/// `predicted` and `truth` must point to `n` NUL-terminated strings each.
#[no_mangle]
pub unsafe extern "C" fn broadsheet_cer(
    predicted: *const *const c_char,
    truth: *const *const c_char,
    n: usize,
    out: *mut f64,
) -> BroadsheetStatus {
    guard(|| {
        let p = slice_arg(predicted, n, "predicted")?;
        let t = slice_arg(truth, n, "truth")?;
        let mut pairs = Vec::with_capacity(n);
        for i in 0..n {
            pairs.push(EvalPair::new(str_arg(p[i], "predicted[i]")?, str_arg(t[i], "truth[i]")?, i.to_string()));
        }
        *out_arg(out, "out")? = metrics::cer(&pairs)?;
        Ok(())
    })
}

/// Intersection over union of two boxes.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn broadsheet_iou(a: *const BroadsheetBox, b: *const BroadsheetBox, out: *mut f64) -> BroadsheetStatus {
    guard(|| {
        let (a, b) = (ref_arg(a, "a")?, ref_arg(b, "b")?);
        *out_arg(out, "out")? = geometry::iou(&(*a).into(), &(*b).into());
        Ok(())
    })
}

/// Greedy non-maximum suppression. Survivors are written to `kept` (room
/// for `n` boxes) in descending score order; their count to `kept_len`.
///
/// # Safety
/// `boxes` and `scores` must hold `n` elements, `kept` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn broadsheet_nms(
    boxes: *const BroadsheetBox,
    scores: *const f64,
    n: usize,
    iou_threshold: f64,
    kept: *mut BroadsheetBox,
    kept_len: *mut usize,
) -> BroadsheetStatus {
    guard(|| {
        let boxes = slice_arg(boxes, n, "boxes")?;
        let scores = slice_arg(scores, n, "scores")?;
        let dets: Vec<Detection> = boxes.iter().zip(scores).map(|(b, s)| Detection::new((*b).into(), Label::Line, *s)).collect();
        let survivors = geometry::nms_agnostic(&dets, iou_threshold);
        if n > 0 && kept.is_null() {
            return fail(BroadsheetStatus::NullPointer, "kept is null");
        }
        for (i, d) in survivors.iter().enumerate() {
            *kept.add(i) = d.bbox.into();
        }
        *out_arg(kept_len, "kept_len")? = survivors.len();
        Ok(())
    })
}

/// Loads an exemplar index file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn broadsheet_index_load(path: *const c_char, out: *mut *mut BroadsheetIndex) -> BroadsheetStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        *out = wrap_index(ExemplarIndex::load(Path::new(path))?)?;
        Ok(())
    })
}

/// Builds an index from `n` labels and a row-major `n * dim` matrix of
/// unit-norm vectors.
///
/// # Safety
/// `labels` must hold `n` strings and `vectors` `n * dim` floats.
#[no_mangle]
pub unsafe extern "C" fn broadsheet_index_build(
    labels: *const *const c_char,
    vectors: *const f32,
    n: usize,
    dim: usize,
    kind: BroadsheetIndexKind,
    out: *mut *mut BroadsheetIndex,
) -> BroadsheetStatus {
    guard(|| {
        let labels = slice_arg(labels, n, "labels")?;
        let Some(total) = n.checked_mul(dim) else { return fail(BroadsheetStatus::InvalidArgument, "n * dim overflows") };
        let vectors = slice_arg(vectors, total, "vectors")?;
        let mut entries = Vec::with_capacity(n);
        for i in 0..n {
            entries.push((str_arg(labels[i], "labels[i]")?.to_string(), Embedding(vectors[i * dim..(i + 1) * dim].to_vec())));
        }
        let kind = match kind {
            BroadsheetIndexKind::Word => IndexKind::Word,
            BroadsheetIndexKind::Character => IndexKind::Character,
        };
        let out = out_arg(out, "out")?;
        *out = wrap_index(ExemplarIndex::build(entries, kind)?)?;
        Ok(())
    })
}

fn wrap_index(inner: ExemplarIndex) -> Result<*mut BroadsheetIndex, Failure> {
    let labels = inner
        .labels()
        .iter()
        .map(|l| CString::new(l.as_str()))
        .collect::<Result<Vec<_>, _>>()
        .or_else(|_| fail(BroadsheetStatus::InvalidArgument, "label contains a NUL byte"))?;
    Ok(Box::into_raw(Box::new(BroadsheetIndex { inner, labels })))
}

/// # Safety
/// `index` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn broadsheet_index_free(index: *mut BroadsheetIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// # Safety
/// `index` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn broadsheet_index_len(index: *const BroadsheetIndex) -> usize {
    index.as_ref().map_or(0, |i| i.inner.len())
}

/// # Safety
/// `index` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn broadsheet_index_dim(index: *const BroadsheetIndex) -> usize {
    index.as_ref().map_or(0, |i| i.inner.dim())
}

/// Label of `row`, or NULL when out of range. Owned by the handle.
///
/// # Safety
/// `index` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn broadsheet_index_label(index: *const BroadsheetIndex, row: usize) -> *const c_char {
    index.as_ref().and_then(|i| i.labels.get(row)).map_or(ptr::null(), |s| s.as_ptr())
}

/// Nearest exemplar by cosine similarity; ties go to the lowest row.
///
/// # Safety
/// `query` must hold `dim` floats; `row` and `similarity` must be writable.
#[no_mangle]
pub unsafe extern "C" fn broadsheet_index_nearest(
    index: *const BroadsheetIndex,
    query: *const f32,
    dim: usize,
    row: *mut usize,
    similarity: *mut f32,
) -> BroadsheetStatus {
    guard(|| {
        let index = ref_arg(index, "index")?;
        let q = Embedding(slice_arg(query, dim, "query")?.to_vec());
        let m = index.inner.nearest(&q)?;
        *out_arg(row, "row")? = m.row;
        *out_arg(similarity, "similarity")? = m.similarity;
        Ok(())
    })
}

/// Loads a word list (`term[<TAB>frequency]` per line) into a spell corrector.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn broadsheet_speller_load(
    path: *const c_char,
    max_edit: usize,
    out: *mut *mut BroadsheetSpeller,
) -> BroadsheetStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let lex = Lexicon::load(Path::new(path), Provenance::Modern)?;
        *out = Box::into_raw(Box::new(BroadsheetSpeller { inner: SpellIndex::build(&lex, max_edit)? }));
        Ok(())
    })
}

/// # Safety
/// `speller` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn broadsheet_speller_free(speller: *mut BroadsheetSpeller) {
    if !speller.is_null() {
        drop(Box::from_raw(speller));
    }
}

/// Corrects every token of `text`, keeping whitespace and punctuation.
/// The result must be released with [`broadsheet_string_free`].
///
/// # Safety
/// `speller` must be valid, `text` NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn broadsheet_speller_correct(
    speller: *const BroadsheetSpeller,
    text: *const c_char,
    out: *mut *mut c_char,
) -> BroadsheetStatus {
    guard(|| {
        let speller = ref_arg(speller, "speller")?;
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        let fixed = CString::new(speller.inner.correct_text(text)).or_else(|_| fail(BroadsheetStatus::InvalidArgument, "NUL in text"))?;
        *out = fixed.into_raw();
        Ok(())
    })
}

/// Supervised contrastive loss of `n` unit-norm rows of width `dim`;
/// rows sharing a label are positives of each other.
///
/// # Safety
/// `rows` must hold `n * dim` doubles and `labels` `n` integers.
#[no_mangle]
pub unsafe extern "C" fn broadsheet_supcon_loss(
    rows: *const f64,
    labels: *const i64,
    n: usize,
    dim: usize,
    temperature: f64,
    out: *mut f64,
) -> BroadsheetStatus {
    guard(|| {
        let Some(total) = n.checked_mul(dim) else { return fail(BroadsheetStatus::InvalidArgument, "n * dim overflows") };
        let data = slice_arg(rows, total, "rows")?;
        let labels = slice_arg(labels, n, "labels")?;
        let rows = (0..n).map(|i| data[i * dim..(i + 1) * dim].to_vec()).collect();
        let batch = EmbeddingBatch::new(rows, labels.iter().map(i64::to_string).collect())?;
        *out_arg(out, "out")? = trainmath::supcon_loss(&batch, &SupConConfig { temperature })?;
        Ok(())
    })
}

/// Runs the pipeline over a manifest and writes outputs to `out_dir`.
/// `workers` of zero keeps the configured worker count. Per-scan failures
/// are recorded in the output error ledger and counted in the summary; the
/// call itself fails only when the run cannot start or outputs cannot be
/// written.
///
/// # Safety
/// String arguments must be NUL-terminated; `summary` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn broadsheet_run_batch(
    manifest: *const c_char,
    config: *const c_char,
    out_dir: *const c_char,
    workers: usize,
    summary: *mut BroadsheetBatchSummary,
) -> BroadsheetStatus {
    guard(|| {
        let manifest = str_arg(manifest, "manifest")?;
        let config = str_arg(config, "config")?;
        let out_dir = str_arg(out_dir, "out_dir")?;
        let mut cfg = PipelineConfig::load(Path::new(config))?;
        if workers > 0 {
            cfg.workers = workers;
        }
        let s = pipeline::run_batch(Path::new(manifest), cfg, Path::new(out_dir))?;
        if let Some(out) = summary.as_mut() {
            *out = BroadsheetBatchSummary {
                scans_total: s.scans_total,
                scans_processed: s.scans_processed,
                scans_failed: s.scans_failed,
                articles: s.articles,
                lines: s.decode.lines,
            };
        }
        Ok(())
    })
}
