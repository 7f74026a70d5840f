//! C interface to the talentgraph pipeline.
//!
//! Every fallible call returns a [`TgStatus`]. On failure the message is
//! kept per thread and can be read with [`tg_last_error_message`]. Handles
//! are opaque; each `*_open`/`*_load` has a matching `*_free`/`*_close`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use talentgraph::learning::{load_checkpoint, HeadKind, StageModel};
use talentgraph::pipeline::{PipelineConfig, PipelineError, RunDir, Subcommand};
use talentgraph::profile::EntityCategory;
use talentgraph::similarity::{read_graph, similarity, GraphBuildConfig, GraphFile};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TgStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Bad input data or configuration.
    Validation = 3,
    MissingInput = 4,
    Runtime = 5,
    /// Another process holds the run directory.
    Locked = 6,
    Panic = 7,
}

/// Open, locked run directory.
pub struct TgRun {
    dir: RunDir,
    warnings: Vec<CString>,
}

/// Graph topology loaded from a graph file.
pub struct TgGraph {
    file: GraphFile,
}

/// Trained model loaded from a checkpoint.
pub struct TgModel {
    model: StageModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(TgStatus, String);

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let status = match e {
            PipelineError::Validation(_) => TgStatus::Validation,
            PipelineError::MissingInput(_) => TgStatus::MissingInput,
            PipelineError::Runtime(_) => TgStatus::Runtime,
            PipelineError::Locked(..) => TgStatus::Locked,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            TgStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TgStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(TgStatus::NullArgument, format!("{what} is null")));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|e| Failure(TgStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(TgStatus::NullArgument, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    unsafe { p.as_ref() }.ok_or_else(|| Failure(TgStatus::NullArgument, format!("{what} is null")))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn tg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Byte length of the last error message without the terminator; 0 if none.
#[no_mangle]
pub extern "C" fn tg_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |s| s.as_bytes().len()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Edge weight for overlap `j`: `max(1 - exp(-lambda * j) - theta, 0)`.
///
/// # Safety
/// `out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn tg_similarity(j: f64, lambda: f64, theta: f64, out: *mut f64) -> TgStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let config = GraphBuildConfig {
            lambda,
            theta,
            ..GraphBuildConfig::default()
        };
        config
            .validate()
            .map_err(|e| Failure(TgStatus::Validation, e.to_string()))?;
        if !(0.0..=1.0).contains(&j) {
            return Err(Failure(TgStatus::Validation, format!("overlap {j} is outside [0, 1]")));
        }
        unsafe { *out = similarity(j, &config) };
        Ok(())
    })
}

/// Opens and locks a run directory, creating it if needed.
/// `config_path` may be null for the default configuration.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tg_run_open(
    dir: *const c_char,
    config_path: *const c_char,
    out: *mut *mut TgRun,
) -> TgStatus {
    guard(|| {
        out_ptr(out, "out")?;
        unsafe { *out = ptr::null_mut() };
        let dir = PathBuf::from(unsafe { text(dir, "dir") }?);
        let config = if config_path.is_null() {
            PipelineConfig::default()
        } else {
            PipelineConfig::load(&PathBuf::from(unsafe { text(config_path, "config_path") }?))?
        };
        let run = RunDir::open(&dir, config)?;
        unsafe {
            *out = Box::into_raw(Box::new(TgRun {
                dir: run,
                warnings: Vec::new(),
            }))
        };
        Ok(())
    })
}

/// Runs one stage by its command-line name, e.g. `"build-graph"`.
/// Warnings from the call replace those of the previous one.
///
/// # Safety
/// `run` must come from [`tg_run_open`]; `stage` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tg_run_stage(run: *mut TgRun, stage: *const c_char) -> TgStatus {
    guard(|| {
        let run = unsafe { run.as_mut() }.ok_or_else(|| Failure(TgStatus::NullArgument, "run is null".into()))?;
        let name = unsafe { text(stage, "stage") }?;
        let command = Subcommand::from_name(name)
            .ok_or_else(|| Failure(TgStatus::Validation, format!("unknown stage {name:?}")))?;
        run.warnings.clear();
        let outcomes = run.dir.run(command)?;
        run.warnings = outcomes
            .iter()
            .flat_map(|o| o.warnings.iter().map(move |w| format!("{}: {w}", o.stage)))
            .filter_map(|w| CString::new(w).ok())
            .collect();
        Ok(())
    })
}

/// Number of warnings raised by the last [`tg_run_stage`] call.
///
/// # Safety
/// `run` must be null or come from [`tg_run_open`].
#[no_mangle]
pub unsafe extern "C" fn tg_run_warning_count(run: *const TgRun) -> usize {
    unsafe { run.as_ref() }.map_or(0, |r| r.warnings.len())
}

/// Warning `index`, or null when out of range. Valid until the next
/// stage call on `run` or until it is closed.
///
/// # Safety
/// `run` must be null or come from [`tg_run_open`].
#[no_mangle]
pub unsafe extern "C" fn tg_run_warning(run: *const TgRun, index: usize) -> *const c_char {
    unsafe { run.as_ref() }
        .and_then(|r| r.warnings.get(index))
        .map_or(ptr::null(), |w| w.as_ptr())
}

/// Releases the lock and frees the handle. Null is ignored.
///
/// # Safety
/// `run` must be null or come from [`tg_run_open`], and not be used again.
#[no_mangle]
pub unsafe extern "C" fn tg_run_close(run: *mut TgRun) {
    if !run.is_null() {
        drop(unsafe { Box::from_raw(run) });
    }
}

/// Loads graph topology from a graph file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tg_graph_load(path: *const c_char, out: *mut *mut TgGraph) -> TgStatus {
    guard(|| {
        out_ptr(out, "out")?;
        unsafe { *out = ptr::null_mut() };
        let path = PathBuf::from(unsafe { text(path, "path") }?);
        if !path.is_file() {
            return Err(PipelineError::MissingInput(path).into());
        }
        let file = read_graph(&path).map_err(|e| Failure(TgStatus::Validation, e.to_string()))?;
        unsafe { *out = Box::into_raw(Box::new(TgGraph { file })) };
        Ok(())
    })
}

/// Number of candidate nodes; 0 for null.
///
/// # Safety
/// `graph` must be null or come from [`tg_graph_load`].
#[no_mangle]
pub unsafe extern "C" fn tg_graph_node_count(graph: *const TgGraph) -> usize {
    unsafe { graph.as_ref() }.map_or(0, |g| g.file.nodes.len())
}

/// Undirected edge count of relation `category` (0 soft skills, 1 hard
/// skills, 2 industry sector, 3 education, 4 language skills).
///
/// # Safety
/// `graph` must come from [`tg_graph_load`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tg_graph_edge_count(graph: *const TgGraph, category: u8, out: *mut usize) -> TgStatus {
    guard(|| {
        let graph = unsafe { handle(graph, "graph") }?;
        out_ptr(out, "out")?;
        let c = EntityCategory::from_code(category)
            .ok_or_else(|| Failure(TgStatus::Validation, format!("unknown category code {category}")))?;
        unsafe { *out = graph.file.edges[c.code() as usize].len() };
        Ok(())
    })
}

/// # Safety
/// `graph` must be null or come from [`tg_graph_load`], and not be used again.
#[no_mangle]
pub unsafe extern "C" fn tg_graph_free(graph: *mut TgGraph) {
    if !graph.is_null() {
        drop(unsafe { Box::from_raw(graph) });
    }
}

/// Loads a trained model checkpoint.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tg_model_load(path: *const c_char, out: *mut *mut TgModel) -> TgStatus {
    guard(|| {
        out_ptr(out, "out")?;
        unsafe { *out = ptr::null_mut() };
        let path = PathBuf::from(unsafe { text(path, "path") }?);
        if !path.is_file() {
            return Err(PipelineError::MissingInput(path).into());
        }
        let model = load_checkpoint(&path).map_err(|e| Failure(TgStatus::Validation, e.to_string()))?;
        unsafe { *out = Box::into_raw(Box::new(TgModel { model })) };
        Ok(())
    })
}

/// Number of per-selection heads; 0 for null.
///
/// # Safety
/// `model` must be null or come from [`tg_model_load`].
#[no_mangle]
pub unsafe extern "C" fn tg_model_selection_count(model: *const TgModel) -> usize {
    unsafe { model.as_ref() }.map_or(0, |m| m.model.heads.len())
}

/// 1 for an ordinal head, 0 for multilabel or null.
///
/// # Safety
/// `model` must be null or come from [`tg_model_load`].
#[no_mangle]
pub unsafe extern "C" fn tg_model_is_ordinal(model: *const TgModel) -> i32 {
    unsafe { model.as_ref() }.map_or(0, |m| (m.model.head == HeadKind::Ordinal) as i32)
}

/// Total number of trainable parameters; 0 for null.
///
/// # Safety
/// `model` must be null or come from [`tg_model_load`].
#[no_mangle]
pub unsafe extern "C" fn tg_model_parameter_count(model: *const TgModel) -> usize {
    unsafe { model.as_ref() }.map_or(0, |m| m.model.param_slices().iter().map(|s| s.len()).sum())
}

/// # Safety
/// `model` must be null or come from [`tg_model_load`], and not be used again.
#[no_mangle]
pub unsafe extern "C" fn tg_model_free(model: *mut TgModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}
