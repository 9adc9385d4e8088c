//! C interface to the polads pipeline.
//!
//! The surface is a single opaque configuration handle plus functions to
//! run pipeline stages against it. Every entry point is panic-safe:
//! panics are caught at the boundary and reported as
//! `POLADS_STATUS_PANIC` instead of unwinding into the caller. Functions
//! that can fail either return a status code or return NULL; in both
//! cases a human-readable message is available from `polads_last_error`
//! on the same thread until the next polads call.
//!
//! Handles are not synchronized. A `PoladsConfig` may move between
//! threads, but it must not be used by two threads at the same time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use polads::corpus::Task;
use polads::pipeline::{self, ModelSpec, RunConfig};
use polads::Error;

/// An owned pipeline configuration. Create one with a `polads_config_*`
/// constructor, adjust it with the setters, run stages against it, and
/// release it with `polads_config_free`.
pub struct PoladsConfig {
    inner: RunConfig,
}

/// Result of a polads call. Anything other than `OK` leaves a message
/// in `polads_last_error`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoladsStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The configuration is invalid.
    Config = 3,
    /// The input data is malformed or inconsistent.
    Data = 4,
    /// A file could not be read or written.
    Io = 5,
    /// The model selector names no known model.
    UnknownModel = 6,
    /// An earlier pipeline stage has not run yet.
    MissingUpstream = 7,
    /// A cached stage no longer matches its inputs or configuration.
    StaleCache = 8,
    /// The output directory is locked by another run.
    Locked = 9,
    /// Training diverged or some seed runs failed.
    Training = 10,
    /// An internal panic was caught at the boundary.
    Panic = 11,
}

/// Pipeline stages in execution order.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoladsStage {
    Ingest = 0,
    Label = 1,
    Split = 2,
    Preprocess = 3,
    Train = 4,
    Evaluate = 5,
    Analyze = 6,
    Report = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| slot.borrow_mut().take());
}

fn set_last_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(msg));
}

fn fail(status: PoladsStatus, msg: &str) -> PoladsStatus {
    set_last_error(msg);
    status
}

fn status_of(err: &Error) -> PoladsStatus {
    match err {
        Error::Io { .. } => PoladsStatus::Io,
        Error::Config(_) | Error::BadFractions(_) | Error::UnknownParamGroup(_) => {
            PoladsStatus::Config
        }
        Error::UnknownModel { .. } => PoladsStatus::UnknownModel,
        Error::MissingUpstream { .. } => PoladsStatus::MissingUpstream,
        Error::StaleCache { .. } => PoladsStatus::StaleCache,
        Error::Locked(_) => PoladsStatus::Locked,
        Error::NonFiniteLoss { .. } | Error::PartialSeedRuns { .. } => PoladsStatus::Training,
        _ => PoladsStatus::Data,
    }
}

fn report_err(err: &Error) -> PoladsStatus {
    fail(status_of(err), &err.to_string())
}

/// Catches panics from `body` so they cannot unwind across the C
/// boundary; a caught panic returns `on_panic`.
fn guarded<T>(on_panic: T, body: impl FnOnce() -> T) -> T {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(value) => value,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic of unknown type".to_string());
            set_last_error(&format!("internal panic: {msg}"));
            on_panic
        }
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, PoladsStatus> {
    if ptr.is_null() {
        return Err(fail(
            PoladsStatus::NullArgument,
            &format!("`{name}` is NULL"),
        ));
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|_| {
        fail(
            PoladsStatus::InvalidUtf8,
            &format!("`{name}` is not valid UTF-8"),
        )
    })
}

unsafe fn config_arg<'a>(ptr: *const PoladsConfig) -> Result<&'a RunConfig, PoladsStatus> {
    if ptr.is_null() {
        return Err(fail(PoladsStatus::NullArgument, "`config` is NULL"));
    }
    Ok(&unsafe { &*ptr }.inner)
}

unsafe fn config_mut<'a>(ptr: *mut PoladsConfig) -> Result<&'a mut RunConfig, PoladsStatus> {
    if ptr.is_null() {
        return Err(fail(PoladsStatus::NullArgument, "`config` is NULL"));
    }
    Ok(&mut unsafe { &mut *ptr }.inner)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn polads_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message from the most recent failed polads call on this thread, or
/// NULL if that call succeeded. The pointer stays valid until the next
/// polads call on the same thread; copy the string to keep it.
#[no_mangle]
pub extern "C" fn polads_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null(), |msg| msg.as_ptr())
    })
}

/// A configuration with the built-in defaults. Returns NULL only on
/// internal failure.
#[no_mangle]
pub extern "C" fn polads_config_new() -> *mut PoladsConfig {
    clear_last_error();
    guarded(ptr::null_mut(), || {
        Box::into_raw(Box::new(PoladsConfig {
            inner: RunConfig::default(),
        }))
    })
}

/// Reads and validates a JSON configuration file. Missing fields take
/// their defaults. Returns NULL on failure.
/// # Safety
/// `path` must point to a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn polads_config_from_file(path: *const c_char) -> *mut PoladsConfig {
    clear_last_error();
    guarded(ptr::null_mut(), || {
        let path = match unsafe { str_arg(path, "path") } {
            Ok(p) => p,
            Err(_) => return ptr::null_mut(),
        };
        match RunConfig::load(Path::new(path)) {
            Ok(inner) => Box::into_raw(Box::new(PoladsConfig { inner })),
            Err(err) => {
                report_err(&err);
                ptr::null_mut()
            }
        }
    })
}

/// Parses and validates a configuration from a JSON string. Missing
/// fields take their defaults. Returns NULL on failure.
/// # Safety
/// `json` must point to a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn polads_config_from_json(json: *const c_char) -> *mut PoladsConfig {
    clear_last_error();
    guarded(ptr::null_mut(), || {
        let json = match unsafe { str_arg(json, "json") } {
            Ok(j) => j,
            Err(_) => return ptr::null_mut(),
        };
        let inner: RunConfig = match serde_json::from_str(json) {
            Ok(cfg) => cfg,
            Err(err) => {
                fail(
                    PoladsStatus::Config,
                    &format!("invalid configuration: {err}"),
                );
                return ptr::null_mut();
            }
        };
        if let Err(err) = inner.validate() {
            report_err(&err);
            return ptr::null_mut();
        }
        Box::into_raw(Box::new(PoladsConfig { inner }))
    })
}

/// Releases a configuration handle. NULL is allowed.
/// # Safety
/// `config` must have come from a `polads_config_*` constructor and
/// must not be used after this call. NULL is allowed.
#[no_mangle]
pub unsafe extern "C" fn polads_config_free(config: *mut PoladsConfig) {
    if !config.is_null() {
        drop(unsafe { Box::from_raw(config) });
    }
}

/// Points the configuration at the raw inputs: the ad dump (JSON lines),
/// the sponsor registry (CSV), and optionally a gazetteer of person
/// names (one per line; pass NULL to run without one).
/// # Safety
/// `config` must be a live handle from a `polads_config_*` constructor.
/// String arguments must be NUL-terminated; `gazetteer` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn polads_config_set_inputs(
    config: *mut PoladsConfig,
    ads: *const c_char,
    sponsors: *const c_char,
    gazetteer: *const c_char,
) -> PoladsStatus {
    clear_last_error();
    guarded(PoladsStatus::Panic, || {
        let cfg = match unsafe { config_mut(config) } {
            Ok(c) => c,
            Err(s) => return s,
        };
        let ads = match unsafe { str_arg(ads, "ads") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        let sponsors = match unsafe { str_arg(sponsors, "sponsors") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        let gazetteer = if gazetteer.is_null() {
            None
        } else {
            match unsafe { str_arg(gazetteer, "gazetteer") } {
                Ok(v) => Some(PathBuf::from(v)),
                Err(s) => return s,
            }
        };
        cfg.ads = PathBuf::from(ads);
        cfg.sponsors = PathBuf::from(sponsors);
        cfg.gazetteer = gazetteer;
        PoladsStatus::Ok
    })
}

/// Sets the directory all stage outputs are written under.
/// # Safety
/// `config` must be a live handle from a `polads_config_*` constructor.
/// `dir` must point to a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn polads_config_set_out_dir(
    config: *mut PoladsConfig,
    dir: *const c_char,
) -> PoladsStatus {
    clear_last_error();
    guarded(PoladsStatus::Panic, || {
        let cfg = match unsafe { config_mut(config) } {
            Ok(c) => c,
            Err(s) => return s,
        };
        let dir = match unsafe { str_arg(dir, "dir") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        cfg.out_dir = PathBuf::from(dir);
        PoladsStatus::Ok
    })
}

/// Selects the prediction task: "ideology" or "sponsor_type".
/// # Safety
/// `config` must be a live handle from a `polads_config_*` constructor.
/// `task` must point to a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn polads_config_set_task(
    config: *mut PoladsConfig,
    task: *const c_char,
) -> PoladsStatus {
    clear_last_error();
    guarded(PoladsStatus::Panic, || {
        let cfg = match unsafe { config_mut(config) } {
            Ok(c) => c,
            Err(s) => return s,
        };
        let task = match unsafe { str_arg(task, "task") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        cfg.task = match task {
            "ideology" => Task::Ideology,
            "sponsor_type" => Task::SponsorType,
            other => {
                return fail(
                    PoladsStatus::Config,
                    &format!("unknown task `{other}`; valid: ideology, sponsor_type"),
                )
            }
        };
        PoladsStatus::Ok
    })
}

/// Selects the model. Valid selectors are the nine model names plus
/// "majority"; an unknown name fails with the full list in the message.
/// # Safety
/// `config` must be a live handle from a `polads_config_*` constructor.
/// `model` must point to a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn polads_config_set_model(
    config: *mut PoladsConfig,
    model: *const c_char,
) -> PoladsStatus {
    clear_last_error();
    guarded(PoladsStatus::Panic, || {
        let cfg = match unsafe { config_mut(config) } {
            Ok(c) => c,
            Err(s) => return s,
        };
        let model = match unsafe { str_arg(model, "model") } {
            Ok(v) => v,
            Err(s) => return s,
        };
        match ModelSpec::parse(model) {
            Ok(_) => {
                cfg.model = model.to_string();
                PoladsStatus::Ok
            }
            Err(err) => report_err(&err),
        }
    })
}

/// Runs one pipeline stage. Stages check their upstream artifacts, so
/// running them out of order fails with `MISSING_UPSTREAM` rather than
/// producing stale results.
/// # Safety
/// `config` must be a live handle from a `polads_config_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn polads_run_stage(
    config: *const PoladsConfig,
    stage: PoladsStage,
) -> PoladsStatus {
    clear_last_error();
    guarded(PoladsStatus::Panic, || {
        let cfg = match unsafe { config_arg(config) } {
            Ok(c) => c,
            Err(s) => return s,
        };
        let result = match stage {
            PoladsStage::Ingest => pipeline::cmd_ingest(cfg).map(drop),
            PoladsStage::Label => pipeline::cmd_label(cfg).map(drop),
            PoladsStage::Split => pipeline::cmd_split(cfg).map(drop),
            PoladsStage::Preprocess => pipeline::cmd_preprocess(cfg).map(drop),
            PoladsStage::Train => pipeline::cmd_train(cfg).map(drop),
            PoladsStage::Evaluate => pipeline::cmd_evaluate(cfg).map(drop),
            PoladsStage::Analyze => pipeline::cmd_analyze(cfg).map(drop),
            PoladsStage::Report => pipeline::cmd_report(cfg).map(drop),
        };
        match result {
            Ok(()) => PoladsStatus::Ok,
            Err(err) => report_err(&err),
        }
    })
}

/// Runs every stage from ingest through analyze in order. The train
/// stage is skipped for the majority baseline, which has nothing to fit.
/// # Safety
/// `config` must be a live handle from a `polads_config_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn polads_run_all(config: *const PoladsConfig) -> PoladsStatus {
    clear_last_error();
    guarded(PoladsStatus::Panic, || {
        let cfg = match unsafe { config_arg(config) } {
            Ok(c) => c,
            Err(s) => return s,
        };
        match pipeline::run_all(cfg) {
            Ok(_) => PoladsStatus::Ok,
            Err(err) => report_err(&err),
        }
    })
}

/// Renders the metrics and correlation report for the configured task
/// and model into a newly allocated string. On success `*out` receives
/// the string; release it with `polads_string_free`.
/// # Safety
/// `config` must be a live handle from a `polads_config_*` constructor.
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn polads_render_report(
    config: *const PoladsConfig,
    out: *mut *mut c_char,
) -> PoladsStatus {
    clear_last_error();
    guarded(PoladsStatus::Panic, || {
        if out.is_null() {
            return fail(PoladsStatus::NullArgument, "`out` is NULL");
        }
        let cfg = match unsafe { config_arg(config) } {
            Ok(c) => c,
            Err(s) => return s,
        };
        match pipeline::cmd_report(cfg) {
            Ok(text) => match CString::new(text) {
                Ok(text) => {
                    unsafe { *out = text.into_raw() };
                    PoladsStatus::Ok
                }
                Err(_) => fail(PoladsStatus::Data, "report contains an interior NUL byte"),
            },
            Err(err) => report_err(&err),
        }
    })
}

/// Releases a string returned by this library. NULL is allowed.
/// # Safety
/// `s` must have come from `polads_render_report` and must not be
/// used after this call. NULL is allowed.
#[no_mangle]
pub unsafe extern "C" fn polads_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cstring(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    fn last_error_text() -> Option<String> {
        let ptr = polads_last_error();
        if ptr.is_null() {
            return None;
        }
        Some(unsafe { CStr::from_ptr(ptr) }.to_str().unwrap().to_string())
    }

    #[test]
    fn version_is_a_nul_terminated_version_string() {
        let ptr = polads_version();
        assert!(!ptr.is_null());
        let text = unsafe { CStr::from_ptr(ptr) }.to_str().unwrap();
        assert!(text.contains('.'), "version `{text}` looks wrong");
    }

    #[test]
    fn null_arguments_are_rejected_and_success_clears_the_message() {
        unsafe {
            assert_eq!(
                polads_run_stage(ptr::null(), PoladsStage::Ingest),
                PoladsStatus::NullArgument
            );
            assert!(last_error_text().unwrap().contains("`config`"));

            let cfg = polads_config_new();
            assert!(!cfg.is_null());
            assert_eq!(
                polads_config_set_model(cfg, ptr::null()),
                PoladsStatus::NullArgument
            );
            assert!(last_error_text().is_some());

            let model = cstring("text_it");
            assert_eq!(
                polads_config_set_model(cfg, model.as_ptr()),
                PoladsStatus::Ok
            );
            assert!(last_error_text().is_none());
            polads_config_free(cfg);
        }
    }

    #[test]
    fn unknown_model_reports_the_valid_set() {
        unsafe {
            let cfg = polads_config_new();
            let model = cstring("cnn");
            assert_eq!(
                polads_config_set_model(cfg, model.as_ptr()),
                PoladsStatus::UnknownModel
            );
            let msg = last_error_text().unwrap();
            assert!(msg.contains("fusion_itd"), "{msg}");
            assert!(msg.contains("majority"), "{msg}");
            polads_config_free(cfg);
        }
    }

    #[test]
    fn unknown_task_is_a_config_error() {
        unsafe {
            let cfg = polads_config_new();
            let task = cstring("stance");
            assert_eq!(
                polads_config_set_task(cfg, task.as_ptr()),
                PoladsStatus::Config
            );
            assert!(last_error_text().unwrap().contains("sponsor_type"));
            polads_config_free(cfg);
        }
    }

    #[test]
    fn bad_json_yields_null_and_a_message() {
        unsafe {
            let json = cstring("{ nope");
            let cfg = polads_config_from_json(json.as_ptr());
            assert!(cfg.is_null());
            assert!(last_error_text().unwrap().contains("invalid configuration"));
        }
    }

    #[test]
    fn running_evaluate_first_is_a_missing_upstream_error() {
        let dir = tempfile::tempdir().unwrap();
        unsafe {
            let cfg = polads_config_new();
            let out = cstring(dir.path().to_str().unwrap());
            assert_eq!(
                polads_config_set_out_dir(cfg, out.as_ptr()),
                PoladsStatus::Ok
            );
            assert_eq!(
                polads_run_stage(cfg, PoladsStage::Evaluate),
                PoladsStatus::MissingUpstream
            );
            assert!(last_error_text().unwrap().contains("must run before"));
            polads_config_free(cfg);
        }
    }

    #[test]
    fn full_run_through_the_c_interface() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = polads::synth::make_and_corpus(120, 7).unwrap();
        let paths = polads::synth::write_fixture(&corpus, &dir.path().join("raw")).unwrap();
        let json = serde_json::json!({
            "ads": paths.ads,
            "sponsors": paths.sponsors,
            "gazetteer": paths.gazetteer,
            "out_dir": dir.path().join("out"),
            "model": "logreg_it",
            "preprocess": { "image_side": 16 },
        });
        let json = cstring(&json.to_string());
        unsafe {
            let cfg = polads_config_from_json(json.as_ptr());
            assert!(!cfg.is_null(), "{:?}", last_error_text());

            for stage in [
                PoladsStage::Ingest,
                PoladsStage::Label,
                PoladsStage::Split,
                PoladsStage::Preprocess,
                PoladsStage::Train,
                PoladsStage::Evaluate,
                PoladsStage::Analyze,
                PoladsStage::Report,
            ] {
                assert_eq!(
                    polads_run_stage(cfg, stage),
                    PoladsStatus::Ok,
                    "stage {stage:?}: {:?}",
                    last_error_text()
                );
            }

            let mut out: *mut c_char = ptr::null_mut();
            assert_eq!(polads_render_report(cfg, &mut out), PoladsStatus::Ok);
            let text = CStr::from_ptr(out).to_str().unwrap().to_string();
            assert!(text.contains("logreg_it"), "{text}");
            polads_string_free(out);
            polads_config_free(cfg);
        }
    }

    #[test]
    fn generated_header_covers_the_surface() {
        let header = include_str!("../include/polads.h");
        for name in [
            "polads_version",
            "polads_last_error",
            "polads_config_new",
            "polads_config_from_file",
            "polads_config_from_json",
            "polads_config_free",
            "polads_config_set_inputs",
            "polads_config_set_out_dir",
            "polads_config_set_task",
            "polads_config_set_model",
            "polads_run_stage",
            "polads_run_all",
            "polads_render_report",
            "polads_string_free",
            "POLADS_H",
        ] {
            assert!(header.contains(name), "header is missing `{name}`");
        }
    }
}
