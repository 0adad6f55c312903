//! C interface to the dialign library.
//!
//! Objects are opaque handles created by `*_load`/`*_parse` functions and
//! released with the matching `*_free`. Fallible calls return a
//! [`DialignStatus`] and write their result through an out-pointer; the
//! message of the most recent failure on the calling thread is available
//! from [`dialign_last_error_message`]. Strings returned to the caller are
//! freed with [`dialign_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, size_t};

use dialign::agreement::{stats_report, AlignError};
use dialign::model::{parse, serialize, DialogueCollection, LabelSchema, ParseError, SchemaError};
use dialign::recommend::RecommenderRegistry;
use dialign::segment::{segment, to_dialogues};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DialignStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    InvalidSchema = 4,
    MalformedJson = 5,
    SchemaViolation = 6,
    UnknownLabel = 7,
    Alignment = 8,
    OutOfRange = 9,
    Panic = 99,
}

/// A label schema.
pub struct DialignSchema {
    inner: LabelSchema,
}

/// A dataset of dialogues.
pub struct DialignCollection {
    inner: DialogueCollection,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(DialignStatus, String);

impl From<ParseError> for Failure {
    fn from(e: ParseError) -> Self {
        let status = match e {
            ParseError::MalformedJson(_) => DialignStatus::MalformedJson,
            ParseError::SchemaViolation { .. } => DialignStatus::SchemaViolation,
            ParseError::UnknownLabel { .. } => DialignStatus::UnknownLabel,
        };
        Failure(status, e.to_string())
    }
}

impl From<SchemaError> for Failure {
    fn from(e: SchemaError) -> Self {
        Failure(DialignStatus::InvalidSchema, e.to_string())
    }
}

impl From<AlignError> for Failure {
    fn from(e: AlignError) -> Self {
        Failure(DialignStatus::Alignment, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(DialignStatus::NullArgument, format!("`{name}` is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DialignStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DialignStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            DialignStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(DialignStatus::InvalidUtf8, format!("`{name}`: {e}")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("nul bytes replaced")
        .into_raw()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dialign_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn dialign_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a label-schema config.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dialign_schema_load(
    json: *const c_char,
    out: *mut *mut DialignSchema,
) -> DialignStatus {
    guard(|| {
        let json = str_arg(json, "json")?;
        let inner = dialign::load_schema(json)?;
        write_out(out, Box::into_raw(Box::new(DialignSchema { inner })), "out")
    })
}

/// Reads and parses a label-schema config file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dialign_schema_load_file(
    path: *const c_char,
    out: *mut *mut DialignSchema,
) -> DialignStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure(DialignStatus::Io, format!("{path}: {e}")))?;
        let inner = dialign::load_schema(&text)?;
        write_out(out, Box::into_raw(Box::new(DialignSchema { inner })), "out")
    })
}

/// Number of labels in the schema; 0 for NULL.
///
/// # Safety
/// `schema` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dialign_schema_label_count(schema: *const DialignSchema) -> size_t {
    schema.as_ref().map_or(0, |s| s.inner.len())
}

/// # Safety
/// `schema` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dialign_schema_free(schema: *mut DialignSchema) {
    if !schema.is_null() {
        drop(Box::from_raw(schema));
    }
}

/// Parses and validates a dataset file.
///
/// # Safety
/// `schema` must be a live handle, `json` a NUL-terminated string and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn dialign_collection_parse(
    schema: *const DialignSchema,
    json: *const c_char,
    out: *mut *mut DialignCollection,
) -> DialignStatus {
    guard(|| {
        let schema = ref_arg(schema, "schema")?;
        let json = str_arg(json, "json")?;
        let inner = parse(json, &schema.inner)?;
        write_out(out, Box::into_raw(Box::new(DialignCollection { inner })), "out")
    })
}

/// Segments raw transcript text into a new dataset named `name`. When
/// `schema` is not NULL its recommenders fill in labels; recommender
/// failures leave the label out.
///
/// # Safety
/// `schema` must be NULL or a live handle; `raw` and `name` NUL-terminated
/// strings; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dialign_segment(
    schema: *const DialignSchema,
    raw: *const c_char,
    name: *const c_char,
    out: *mut *mut DialignCollection,
) -> DialignStatus {
    guard(|| {
        let raw = str_arg(raw, "raw")?;
        let name = str_arg(name, "name")?;
        let registry = schema
            .as_ref()
            .map(|s| RecommenderRegistry::from_schema(&s.inner))
            .unwrap_or_default();
        let inner = to_dialogues(&segment(raw), name, &registry).collection;
        write_out(out, Box::into_raw(Box::new(DialignCollection { inner })), "out")
    })
}

/// Number of dialogues; 0 for NULL.
///
/// # Safety
/// `collection` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dialign_collection_dialogue_count(
    collection: *const DialignCollection,
) -> size_t {
    collection.as_ref().map_or(0, |c| c.inner.dialogues.len())
}

/// Number of turns in the dialogue at position `index`.
///
/// # Safety
/// `collection` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dialign_collection_turn_count(
    collection: *const DialignCollection,
    index: size_t,
    out: *mut size_t,
) -> DialignStatus {
    guard(|| {
        let c = ref_arg(collection, "collection")?;
        let d = c.inner.dialogues.get(index).ok_or_else(|| {
            Failure(
                DialignStatus::OutOfRange,
                format!("dialogue {index} of {}", c.inner.dialogues.len()),
            )
        })?;
        write_out(out, d.turns.len(), "out")
    })
}

/// Canonical JSON text of the dataset. Free the result with
/// [`dialign_string_free`].
///
/// # Safety
/// `collection` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dialign_collection_to_json(
    collection: *const DialignCollection,
    out: *mut *mut c_char,
) -> DialignStatus {
    guard(|| {
        let c = ref_arg(collection, "collection")?;
        write_out(out, into_c_string(serialize(&c.inner)), "out")
    })
}

/// # Safety
/// `collection` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dialign_collection_free(collection: *mut DialignCollection) {
    if !collection.is_null() {
        drop(Box::from_raw(collection));
    }
}

/// Agreement statistics over `count` annotator copies, as JSON text. Copy
/// `i` is attributed to `annotators[i]`. Free the result with
/// [`dialign_string_free`].
///
/// # Safety
/// `collections` and `annotators` must point to `count` live handles and
/// NUL-terminated strings respectively; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dialign_stats_json(
    schema: *const DialignSchema,
    collections: *const *const DialignCollection,
    annotators: *const *const c_char,
    count: size_t,
    out: *mut *mut c_char,
) -> DialignStatus {
    guard(|| {
        let schema = ref_arg(schema, "schema")?;
        if count > 0 && (collections.is_null() || annotators.is_null()) {
            return Err(null("collections"));
        }
        let mut copies = Vec::new();
        for i in 0..count {
            let c = ref_arg(*collections.add(i), "collections[i]")?;
            let annotator = str_arg(*annotators.add(i), "annotators[i]")?;
            copies.extend(
                c.inner
                    .dialogues
                    .iter()
                    .map(|d| (annotator.to_string(), d.clone())),
            );
        }
        let report = stats_report(copies, &schema.inner)?;
        write_out(out, into_c_string(report), "out")
    })
}
