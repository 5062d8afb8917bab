//! C ABI over `assist-core`.
//!
//! Every function returns an [`AssistStatus`]. On failure a message is kept
//! per thread and can be read with [`assist_last_error`]. Strings handed out
//! through `out` parameters are owned by the caller and must be released with
//! [`assist_string_free`]; handles are released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use assist_core::code::{enumerate_methods, strip_header};
use assist_core::docs::{DocIndex, DocIndexError, HashEmbedder};
use assist_core::harness::{bundled_matrix, AnnotationFile, AnnotationStore, DefectTable, SweepKind};
use assist_core::repo::{RepoError, RepoSnapshot};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssistStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    NotFound = 4,
    Io = 5,
    Parse = 6,
    Backend = 7,
    Panic = 8,
}

/// A read-only repository snapshot.
pub struct AssistRepo {
    inner: Arc<RepoSnapshot>,
}

/// A document index over the built-in hash embedder.
pub struct AssistIndex {
    inner: DocIndex,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(AssistStatus, String);

impl Failure {
    fn new(status: AssistStatus, message: impl Into<String>) -> Self {
        Self(status, message.into())
    }
}

impl From<RepoError> for Failure {
    fn from(e: RepoError) -> Self {
        let status = match e {
            RepoError::FileNotFound(_) | RepoError::RefNotFound(_) => AssistStatus::NotFound,
            RepoError::InvalidPath(_) | RepoError::InvalidClassName(_) => AssistStatus::InvalidArgument,
            RepoError::DecodeError { .. } => AssistStatus::Parse,
            RepoError::ProviderUnavailable(_) => AssistStatus::Backend,
        };
        Failure(status, e.to_string())
    }
}

impl From<DocIndexError> for Failure {
    fn from(e: DocIndexError) -> Self {
        let status = match e {
            DocIndexError::Io { .. } => AssistStatus::Io,
            DocIndexError::Malformed(_) | DocIndexError::FormatVersionMismatch { .. } => AssistStatus::Parse,
            DocIndexError::EmbeddingBackend(_) => AssistStatus::Backend,
            _ => AssistStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AssistStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            AssistStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            AssistStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure::new(AssistStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure::new(AssistStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn opt_str<'a>(ptr: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if ptr.is_null() {
        Ok(None)
    } else {
        read_str(ptr, name).map(Some)
    }
}

unsafe fn write_string(out: *mut *mut c_char, text: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(AssistStatus::NullArgument, "`out` is null"));
    }
    let c = CString::new(text).map_err(|_| Failure::new(AssistStatus::Parse, "result contains a nul byte"))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn check_out<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(AssistStatus::NullArgument, "`out` is null"));
    }
    Ok(())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn assist_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of the calling thread's last error message, or NULL after a success.
#[no_mangle]
pub extern "C" fn assist_last_error() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null_mut(), |s| s.clone().into_raw())
    })
}

/// # Safety
/// `s` is NULL or a string returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn assist_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opens a local directory as a repository.
///
/// # Safety
/// `root` and `git_ref` are NUL-terminated strings; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn assist_repo_open_local(
    root: *const c_char,
    git_ref: *const c_char,
    out: *mut *mut AssistRepo,
) -> AssistStatus {
    guard(|| {
        check_out(out)?;
        let root = read_str(root, "root")?;
        let git_ref = opt_str(git_ref, "git_ref")?.unwrap_or("main");
        if !Path::new(root).is_dir() {
            return Err(Failure::new(
                AssistStatus::NotFound,
                format!("`{root}` is not a directory"),
            ));
        }
        let repo = AssistRepo {
            inner: Arc::new(RepoSnapshot::local(root, git_ref)),
        };
        *out = Box::into_raw(Box::new(repo));
        Ok(())
    })
}

/// # Safety
/// `repo` is NULL or a handle from `assist_repo_open_local`, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn assist_repo_free(repo: *mut AssistRepo) {
    if !repo.is_null() {
        drop(Box::from_raw(repo));
    }
}

unsafe fn repo_ref<'a>(repo: *const AssistRepo) -> Result<&'a AssistRepo, Failure> {
    repo.as_ref()
        .ok_or_else(|| Failure::new(AssistStatus::NullArgument, "`repo` is null"))
}

/// Paths declaring `class_name`, as a JSON array. An unknown class yields `[]`.
///
/// # Safety
/// `repo` is a live handle; `class_name` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn assist_repo_find_class(
    repo: *const AssistRepo,
    class_name: *const c_char,
    out: *mut *mut c_char,
) -> AssistStatus {
    guard(|| {
        let repo = repo_ref(repo)?;
        let name = read_str(class_name, "class_name")?;
        let paths = repo.inner.find_class_path(name)?;
        write_string(out, serde_json::to_string(&paths).expect("paths serialize"))
    })
}

/// File text at `path`.
///
/// # Safety
/// `repo` is a live handle; `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn assist_repo_fetch_file(
    repo: *const AssistRepo,
    path: *const c_char,
    out: *mut *mut c_char,
) -> AssistStatus {
    guard(|| {
        let repo = repo_ref(repo)?;
        let path = read_str(path, "path")?;
        let file = repo.inner.fetch_file(path)?;
        write_string(out, file.text.clone())
    })
}

/// Declared methods and constructors of a Java source, as a JSON array.
///
/// # Safety
/// `source` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn assist_java_methods(source: *const c_char, out: *mut *mut c_char) -> AssistStatus {
    guard(|| {
        let source = read_str(source, "source")?;
        let methods = enumerate_methods(source).map_err(|e| Failure::new(AssistStatus::Parse, e.to_string()))?;
        write_string(out, serde_json::to_string(&methods).expect("methods serialize"))
    })
}

/// The source without its leading license comment.
///
/// # Safety
/// `source` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn assist_java_strip_header(source: *const c_char, out: *mut *mut c_char) -> AssistStatus {
    guard(|| {
        let source = read_str(source, "source")?;
        write_string(out, strip_header(source).to_string())
    })
}

/// Builds an index from the text documents below `dir`.
///
/// # Safety
/// `dir` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn assist_index_build_dir(dir: *const c_char, out: *mut *mut AssistIndex) -> AssistStatus {
    guard(|| {
        check_out(out)?;
        let dir = read_str(dir, "dir")?;
        let mut index = DocIndex::fallback();
        index.ingest_dir(Path::new(dir))?;
        *out = Box::into_raw(Box::new(AssistIndex { inner: index }));
        Ok(())
    })
}

/// Loads an index file written by `assist_index_save` or `assist index build`.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn assist_index_open(path: *const c_char, out: *mut *mut AssistIndex) -> AssistStatus {
    guard(|| {
        check_out(out)?;
        let path = read_str(path, "path")?;
        let index = DocIndex::load(Path::new(path), Arc::new(HashEmbedder))?;
        *out = Box::into_raw(Box::new(AssistIndex { inner: index }));
        Ok(())
    })
}

unsafe fn index_ref<'a>(index: *const AssistIndex) -> Result<&'a AssistIndex, Failure> {
    index
        .as_ref()
        .ok_or_else(|| Failure::new(AssistStatus::NullArgument, "`index` is null"))
}

/// # Safety
/// `index` is a live handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn assist_index_save(index: *const AssistIndex, path: *const c_char) -> AssistStatus {
    guard(|| {
        let index = index_ref(index)?;
        let path = read_str(path, "path")?;
        index.inner.save(Path::new(path))?;
        Ok(())
    })
}

/// Number of chunks; 0 for a NULL handle.
///
/// # Safety
/// `index` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn assist_index_len(index: *const AssistIndex) -> usize {
    index.as_ref().map_or(0, |i| i.inner.len())
}

/// Top-`k` chunks for `text` as a JSON array of `{source, ordinal, score, text}`.
///
/// # Safety
/// `index` is a live handle; `text` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn assist_index_query(
    index: *const AssistIndex,
    text: *const c_char,
    k: usize,
    out: *mut *mut c_char,
) -> AssistStatus {
    guard(|| {
        let index = index_ref(index)?;
        let text = read_str(text, "text")?;
        let hits: Vec<serde_json::Value> = index
            .inner
            .query(text, k)?
            .into_iter()
            .map(|h| {
                serde_json::json!({
                    "source": h.chunk.source,
                    "ordinal": h.chunk.ordinal,
                    "score": h.score,
                    "text": h.chunk.text,
                })
            })
            .collect();
        write_string(out, serde_json::Value::Array(hits).to_string())
    })
}

/// # Safety
/// `index` is NULL or a live handle, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn assist_index_free(index: *mut AssistIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Renders a defect table over the built-in evaluation matrix.
///
/// `sweep` is `sampling` or `model`; `format` is `text` or `csv`.
/// `annotations_json` is an annotation file body, or NULL for the bundled
/// transcription of that sweep.
///
/// # Safety
/// String arguments are NULL (where allowed) or NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn assist_defects_render(
    sweep: *const c_char,
    annotations_json: *const c_char,
    format: *const c_char,
    out: *mut *mut c_char,
) -> AssistStatus {
    guard(|| {
        let sweep: SweepKind = read_str(sweep, "sweep")?
            .parse()
            .map_err(|e: String| Failure::new(AssistStatus::InvalidArgument, e))?;
        let format = opt_str(format, "format")?.unwrap_or("text");
        let file = match opt_str(annotations_json, "annotations_json")? {
            Some(text) => AnnotationFile::parse("annotations_json", text)
                .map_err(|e| Failure::new(AssistStatus::Parse, e.to_string()))?,
            None => match sweep {
                SweepKind::Sampling => AnnotationFile::sampling_fixture(),
                SweepKind::Model => AnnotationFile::model_fixture(),
            },
        };
        let plans = bundled_matrix();
        let store = AnnotationStore::from_file(&plans, &file)
            .map_err(|e| Failure::new(AssistStatus::InvalidArgument, e.to_string()))?;
        let table = DefectTable::build(sweep, &plans, store.annotations());
        let text = match format {
            "text" => table.render_text(),
            "csv" => table.render_csv(),
            other => {
                return Err(Failure::new(
                    AssistStatus::InvalidArgument,
                    format!("unknown format `{other}` (expected text or csv)"),
                ))
            }
        };
        write_string(out, text)
    })
}
