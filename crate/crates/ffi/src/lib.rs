//! C ABI over the `domaug` library.
//!
//! Every fallible function returns a [`DomaugStatus`]; on failure the message
//! is available from [`domaug_last_error_message`] on the same thread.
//! Datasets and configs are opaque handles released with their `_free`
//! function. Array arguments are caller-owned and row-major.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use libc::c_char;

use domaug::box_aug::gaussian_weight_map;
use domaug::embedding::BUILTIN_DIM;
use domaug::selection::{filter_top_k, TargetSet};
use domaug::{
    embed_builtin, load_dataset, run_loop, DatasetSplit, DomainTag, Error, ErrorKind, LabeledImage, PipelineConfig,
    RgbImage, ScoredCandidate, SplitRole,
};

/// Status codes. The non-zero values shared with the CLI use the same
/// numbers as its exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomaugStatus {
    Ok = 0,
    Config = 2,
    Data = 3,
    Timeout = 4,
    NullPointer = 5,
    InvalidArgument = 6,
    Panic = 7,
}

/// Which split a dataset directory plays.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomaugRole {
    Source = 0,
    Target = 1,
    Augmented = 2,
}

/// Opaque loaded dataset split.
pub struct DomaugDataset {
    split: DatasetSplit,
}

/// Opaque pipeline configuration.
pub struct DomaugConfig {
    config: PipelineConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: DomaugStatus, msg: impl Into<String>) -> DomaugStatus {
    set_last_error(msg);
    status
}

fn from_error(e: Error) -> DomaugStatus {
    let status = match e.kind() {
        ErrorKind::Config => DomaugStatus::Config,
        ErrorKind::Data => DomaugStatus::Data,
        ErrorKind::Timeout => DomaugStatus::Timeout,
    };
    fail(status, e.to_string())
}

/// Runs `f`, clearing the last error first and turning panics into
/// `DomaugStatus::Panic`.
fn guard(f: impl FnOnce() -> DomaugStatus) -> DomaugStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(DomaugStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, DomaugStatus> {
    if p.is_null() {
        return Err(fail(DomaugStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(DomaugStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(DomaugStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next `domaug_*` call on the same thread.
#[no_mangle]
pub extern "C" fn domaug_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Length of a builtin embedding vector.
#[no_mangle]
pub extern "C" fn domaug_builtin_dim() -> usize {
    BUILTIN_DIM
}

/// Loads a YOLO-style dataset directory.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn domaug_dataset_load(
    path: *const c_char,
    role: DomaugRole,
    out: *mut *mut DomaugDataset,
) -> DomaugStatus {
    guard(|| {
        non_null!(out);
        let path = try_ffi!(str_arg(path, "path"));
        let role = match role {
            DomaugRole::Source => SplitRole::Source,
            DomaugRole::Target => SplitRole::Target,
            DomaugRole::Augmented => SplitRole::Augmented,
        };
        match load_dataset(&PathBuf::from(path), role) {
            Ok(split) => {
                *out = Box::into_raw(Box::new(DomaugDataset { split }));
                DomaugStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of images in the dataset, 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle from `domaug_dataset_load`.
#[no_mangle]
pub unsafe extern "C" fn domaug_dataset_len(dataset: *const DomaugDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.split.len())
}

/// # Safety
/// `dataset` must be null or a handle from `domaug_dataset_load` that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn domaug_dataset_free(dataset: *mut DomaugDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Creates a configuration holding the defaults.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn domaug_config_default(out: *mut *mut DomaugConfig) -> DomaugStatus {
    guard(|| {
        non_null!(out);
        *out = Box::into_raw(Box::new(DomaugConfig {
            config: PipelineConfig::default(),
        }));
        DomaugStatus::Ok
    })
}

/// Reads a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn domaug_config_from_file(path: *const c_char, out: *mut *mut DomaugConfig) -> DomaugStatus {
    guard(|| {
        non_null!(out);
        let path = try_ffi!(str_arg(path, "path"));
        match PipelineConfig::from_file(&PathBuf::from(path)) {
            Ok(config) => {
                *out = Box::into_raw(Box::new(DomaugConfig { config }));
                DomaugStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Overrides one key, e.g. `("k", "0.6")` or `("metric", "cosine")`.
///
/// # Safety
/// `config` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn domaug_config_set(
    config: *mut DomaugConfig,
    key: *const c_char,
    value: *const c_char,
) -> DomaugStatus {
    guard(|| {
        non_null!(config);
        let key = try_ffi!(str_arg(key, "key"));
        let value = try_ffi!(str_arg(value, "value"));
        match (*config).config.set(key, value) {
            Ok(()) => DomaugStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `config` must be null or a handle that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn domaug_config_free(config: *mut DomaugConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the epoch loop into `run_dir`. The config must carry a seed.
/// `out_total_kept` may be null.
///
/// # Safety
/// Handles must be live; `run_dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn domaug_run(
    source: *const DomaugDataset,
    target: *const DomaugDataset,
    config: *const DomaugConfig,
    run_dir: *const c_char,
    out_total_kept: *mut usize,
) -> DomaugStatus {
    guard(|| {
        non_null!(source, target, config);
        let run_dir = try_ffi!(str_arg(run_dir, "run_dir"));
        match run_loop(&(*source).split, &(*target).split, &(*config).config, &PathBuf::from(run_dir)) {
            Ok(summary) => {
                if !out_total_kept.is_null() {
                    *out_total_kept = summary.total_kept();
                }
                DomaugStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

unsafe fn target_set(targets: *const f64, n_targets: usize, dim: usize) -> Result<TargetSet, DomaugStatus> {
    if targets.is_null() {
        return Err(fail(DomaugStatus::NullPointer, "targets is null"));
    }
    if n_targets == 0 || dim == 0 {
        return Err(fail(DomaugStatus::InvalidArgument, "need at least one target and dim >= 1"));
    }
    let flat = slice::from_raw_parts(targets, n_targets * dim);
    let vectors: Vec<_> = flat
        .chunks_exact(dim)
        .enumerate()
        .map(|(i, row)| domaug::EmbeddingVector::new(row.to_vec(), format!("t{i}"), 0))
        .collect();
    TargetSet::new(&vectors).map_err(from_error)
}

/// Squared distance between `candidate` (length `dim`) and the mean of the
/// `n_targets × dim` matrix `targets`.
///
/// # Safety
/// Pointers must reference arrays of the stated sizes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn domaug_mmd_sq(
    candidate: *const f64,
    targets: *const f64,
    n_targets: usize,
    dim: usize,
    out: *mut f64,
) -> DomaugStatus {
    guard(|| {
        non_null!(candidate, out);
        let set = try_ffi!(target_set(targets, n_targets, dim));
        match set.mmd_sq(slice::from_raw_parts(candidate, dim)) {
            Ok(d) => {
                *out = d;
                DomaugStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Summed cosine distance from `candidate` to each target row. Zero-norm
/// terms count as distance 1; their number goes to `out_zero_terms` when it
/// is not null.
///
/// # Safety
/// Pointers must reference arrays of the stated sizes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn domaug_cosine_dist(
    candidate: *const f64,
    targets: *const f64,
    n_targets: usize,
    dim: usize,
    out: *mut f64,
    out_zero_terms: *mut usize,
) -> DomaugStatus {
    guard(|| {
        non_null!(candidate, out);
        let set = try_ffi!(target_set(targets, n_targets, dim));
        match set.cosine_dist(slice::from_raw_parts(candidate, dim)) {
            Ok((d, zero)) => {
                *out = d;
                if !out_zero_terms.is_null() {
                    *out_zero_terms = zero;
                }
                DomaugStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Shrinkage filter over `n` distances. Writes the indices of the kept
/// entries in ascending distance order (ties by lower index) into
/// `out_indices`, which must hold `n` slots, and their count into `out_len`.
///
/// # Safety
/// `distances` and `out_indices` must hold `n` elements; `out_len` valid.
#[no_mangle]
pub unsafe extern "C" fn domaug_filter_top_k(
    distances: *const f64,
    n: usize,
    k: f64,
    out_indices: *mut usize,
    out_len: *mut usize,
) -> DomaugStatus {
    guard(|| {
        non_null!(distances, out_indices, out_len);
        let width = n.to_string().len();
        let scored: Vec<ScoredCandidate> = slice::from_raw_parts(distances, n)
            .iter()
            .enumerate()
            .map(|(i, &distance)| ScoredCandidate {
                candidate_id: format!("{i:0width$}"),
                distance,
                rank: 0,
            })
            .collect();
        match filter_top_k(&scored, k) {
            Ok(ids) => {
                let out = slice::from_raw_parts_mut(out_indices, n);
                for (slot, id) in out.iter_mut().zip(&ids) {
                    *slot = id.parse().expect("index id");
                }
                *out_len = ids.len();
                DomaugStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Row-major `h × w` Gaussian blend weights for a `w × h` box inside a
/// `image_w × image_h` image. `out` must hold `w * h` values.
///
/// # Safety
/// `out` must point to `w * h` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn domaug_gaussian_weight_map(
    w: u32,
    h: u32,
    image_w: u32,
    image_h: u32,
    out: *mut f64,
) -> DomaugStatus {
    guard(|| {
        non_null!(out);
        match gaussian_weight_map(w, h, image_w, image_h) {
            Ok(map) => {
                slice::from_raw_parts_mut(out, map.values.len()).copy_from_slice(&map.values);
                DomaugStatus::Ok
            }
            Err(e) => fail(DomaugStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Builtin embedding of an interleaved RGB8 image (`width * height * 3`
/// bytes, no row padding). `out` must hold `domaug_builtin_dim()` values.
///
/// # Safety
/// `rgb` must hold `width * height * 3` bytes; `out` the stated length.
#[no_mangle]
pub unsafe extern "C" fn domaug_embed_builtin(rgb: *const u8, width: u32, height: u32, out: *mut f64) -> DomaugStatus {
    guard(|| {
        non_null!(rgb, out);
        if width == 0 || height == 0 {
            return fail(DomaugStatus::InvalidArgument, "image must be non-empty");
        }
        let len = width as usize * height as usize * 3;
        let pixels = RgbImage::from_raw(width, height, slice::from_raw_parts(rgb, len).to_vec())
            .expect("buffer length matches dimensions");
        let img = LabeledImage::new("ffi", pixels, Vec::new(), DomainTag::Target);
        let v = embed_builtin(&img);
        slice::from_raw_parts_mut(out, BUILTIN_DIM).copy_from_slice(&v.values);
        DomaugStatus::Ok
    })
}
