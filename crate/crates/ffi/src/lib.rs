//! C ABI over the frugal-cd core.
//!
//! Every function returns an [`FcdStatus`]; outputs go through pointer
//! arguments. On failure the message is kept per thread and can be read with
//! [`fcd_last_error`]. Handles are opaque and must be released with their
//! `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use frugal_cd::alloop::{self, Phase, Session, SessionConfig};
use frugal_cd::dataio::{self, Dataset, Label, SynthConfig};
use frugal_cd::invnet::InvertibleNet;
use frugal_cd::linalg::RngStream;
use frugal_cd::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Singular = 4,
    TrainingDiverged = 5,
    InsufficientPool = 6,
    LabelMismatch = 7,
    Phase = 8,
    Parse = 9,
    UndefinedMetric = 10,
    NotFound = 11,
    Io = 12,
    /// Caller buffer too small; the required length was written.
    BufferTooSmall = 13,
    Panic = 14,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcdPhase {
    AwaitingLabels = 0,
    Ready = 1,
    Finished = 2,
}

/// A loaded or generated dataset.
pub struct FcdDataset {
    inner: Arc<Dataset>,
}

/// An invertible network.
pub struct FcdNet {
    inner: InvertibleNet,
}

/// An interactive labeling session.
pub struct FcdSession {
    inner: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(FcdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidDimension(_) | Error::InvalidArgument(_) | Error::InvalidConfig(_) | Error::InvalidPair(_) => {
                FcdStatus::InvalidArgument
            }
            Error::Json(_) => FcdStatus::Parse,
            Error::Shape(_) => FcdStatus::Shape,
            Error::Singular { .. } => FcdStatus::Singular,
            Error::TrainingDiverged { .. } => FcdStatus::TrainingDiverged,
            Error::InsufficientPool { .. } => FcdStatus::InsufficientPool,
            Error::LabelMismatch(_) => FcdStatus::LabelMismatch,
            Error::Phase(_) => FcdStatus::Phase,
            Error::Parse { .. } => FcdStatus::Parse,
            Error::UndefinedMetric(_) => FcdStatus::UndefinedMetric,
            Error::NotFound(_) => FcdStatus::NotFound,
            Error::Io(_) => FcdStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: FcdStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FcdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FcdStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {msg}"));
            FcdStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(FcdStatus::NullPointer, format!("{what} is null")))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(FcdStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(FcdStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(FcdStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(FcdStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Null means "use defaults".
unsafe fn json_or_default<T: serde::de::DeserializeOwned + Default>(p: *const c_char, what: &str) -> Result<T, Failure> {
    if p.is_null() {
        return Ok(T::default());
    }
    serde_json::from_str(text(p, what)?).map_err(|e| Failure(FcdStatus::Parse, format!("{what}: {e}")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return fail(FcdStatus::NullPointer, format!("{what} is null"));
    }
    out.write(value);
    Ok(())
}

unsafe fn copy_out(src: &[f64], out: *mut f64, out_len: usize) -> Result<(), Failure> {
    if out_len != src.len() {
        return fail(
            FcdStatus::Shape,
            format!("output holds {out_len} values, {} required", src.len()),
        );
    }
    if out.is_null() {
        return fail(FcdStatus::NullPointer, "output buffer is null");
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

fn label_of(v: i8) -> Result<Label, Failure> {
    Label::from_i8(v).ok_or_else(|| Failure(FcdStatus::InvalidArgument, format!("label must be -1 or +1, got {v}")))
}

/// Message of the last failed call on this thread, or null after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn fcd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn fcd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---- datasets -------------------------------------------------------------

/// Generates a synthetic dataset. `config_json` may be null for defaults.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn fcd_dataset_synth(config_json: *const c_char, out: *mut *mut FcdDataset) -> FcdStatus {
    guard(|| {
        let config: SynthConfig = json_or_default(config_json, "config_json")?;
        let ds = dataio::synth_generate(&config)?;
        write_out(out, Box::into_raw(Box::new(FcdDataset { inner: Arc::new(ds) })), "out")
    })
}

/// Loads an FCD1 or CSV file (plus split sidecar, when present).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcd_dataset_load(path: *const c_char, out: *mut *mut FcdDataset) -> FcdStatus {
    guard(|| {
        let ds = dataio::load_dataset(text(path, "path")?)?;
        write_out(out, Box::into_raw(Box::new(FcdDataset { inner: Arc::new(ds) })), "out")
    })
}

/// Writes FCD1, or CSV when the path ends in `.csv`.
///
/// # Safety
/// `ds` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fcd_dataset_save(ds: *const FcdDataset, path: *const c_char) -> FcdStatus {
    guard(|| {
        let ds = borrow(ds, "ds")?;
        dataio::save_dataset(text(path, "path")?, &ds.inner)?;
        Ok(())
    })
}

/// # Safety
/// `ds` must be a live handle; `len` and `dim` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcd_dataset_shape(ds: *const FcdDataset, len: *mut usize, dim: *mut usize) -> FcdStatus {
    guard(|| {
        let ds = borrow(ds, "ds")?;
        write_out(len, ds.inner.len(), "len")?;
        write_out(dim, ds.inner.dim(), "dim")
    })
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fcd_dataset_free(ds: *mut FcdDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

// ---- networks -------------------------------------------------------------

/// Orthonormally initialized network of width `dim` and `depth` layers.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcd_net_random(dim: usize, depth: usize, seed: u64, out: *mut *mut FcdNet) -> FcdStatus {
    guard(|| {
        let net = InvertibleNet::random(dim, depth, &mut RngStream::new(seed))?;
        write_out(out, Box::into_raw(Box::new(FcdNet { inner: net })), "out")
    })
}

/// # Safety
/// `net` must be a live handle; `dim` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcd_net_dim(net: *const FcdNet, dim: *mut usize) -> FcdStatus {
    guard(|| write_out(dim, borrow(net, "net")?.inner.dim(), "dim"))
}

/// `out = f(x)`; both buffers hold `len == dim` values.
///
/// # Safety
/// `x` and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fcd_net_forward(net: *const FcdNet, x: *const f64, len: usize, out: *mut f64) -> FcdStatus {
    guard(|| {
        let z = borrow(net, "net")?.inner.latent(slice(x, len, "x")?)?;
        copy_out(&z, out, len)
    })
}

/// `out = f⁻¹(z)` with exact layer inverses.
///
/// # Safety
/// `z` and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fcd_net_inverse(net: *const FcdNet, z: *const f64, len: usize, out: *mut f64) -> FcdStatus {
    guard(|| {
        let x = borrow(net, "net")?.inner.inverse(slice(z, len, "z")?)?;
        copy_out(&x, out, len)
    })
}

/// Change probability of `x`.
///
/// # Safety
/// `x` must point to `len` doubles; `p` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcd_net_classify(net: *const FcdNet, x: *const f64, len: usize, p: *mut f64) -> FcdStatus {
    guard(|| {
        let prob = borrow(net, "net")?.inner.classify(slice(x, len, "x")?)?;
        write_out(p, prob, "p")
    })
}

/// # Safety
/// `net` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fcd_net_free(net: *mut FcdNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

// ---- sessions -------------------------------------------------------------

/// Starts a session on `ds`. `config_json` may be null for defaults. The
/// session keeps its own reference to the dataset.
///
/// # Safety
/// `ds` must be a live handle, `config_json` null or NUL-terminated, and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fcd_session_new(
    ds: *const FcdDataset,
    config_json: *const c_char,
    out: *mut *mut FcdSession,
) -> FcdStatus {
    guard(|| {
        let ds = borrow(ds, "ds")?;
        let config: SessionConfig = json_or_default(config_json, "config_json")?;
        let session = alloop::init_session(ds.inner.clone(), config)?;
        write_out(out, Box::into_raw(Box::new(FcdSession { inner: session })), "out")
    })
}

/// # Safety
/// `s` must be a live handle; `phase` and `iteration` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcd_session_status(
    s: *const FcdSession,
    phase: *mut FcdPhase,
    iteration: *mut usize,
) -> FcdStatus {
    guard(|| {
        let s = borrow(s, "session")?;
        let p = match s.inner.phase() {
            Phase::AwaitingLabels => FcdPhase::AwaitingLabels,
            Phase::Ready => FcdPhase::Ready,
            Phase::Finished => FcdPhase::Finished,
        };
        write_out(phase, p, "phase")?;
        write_out(iteration, s.inner.state().iteration(), "iteration")
    })
}

/// Copies the pending display's sample ids into `ids` (capacity `cap`) and
/// writes their count to `len`. Returns `BufferTooSmall` with `len` set when
/// `cap` is short.
///
/// # Safety
/// `ids` must hold `cap` values; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcd_session_display(
    s: *const FcdSession,
    ids: *mut u32,
    cap: usize,
    len: *mut usize,
) -> FcdStatus {
    guard(|| {
        let s = borrow(s, "session")?;
        let Some(display) = s.inner.state().current_display() else {
            return fail(FcdStatus::Phase, "no display is awaiting labels");
        };
        write_out(len, display.len(), "len")?;
        if cap < display.len() {
            return fail(FcdStatus::BufferTooSmall, format!("{} ids need room", display.len()));
        }
        if ids.is_null() {
            return fail(FcdStatus::NullPointer, "ids is null");
        }
        ptr::copy_nonoverlapping(display.as_ptr(), ids, display.len());
        Ok(())
    })
}

/// Answers the pending display: `labels[i]` (−1 or +1) for `ids[i]`.
/// Retrains and writes the new evaluation EER to `eer` (NaN when undefined).
///
/// # Safety
/// `ids` and `labels` must hold `n` values; `eer` may be null.
#[no_mangle]
pub unsafe extern "C" fn fcd_session_submit(
    s: *mut FcdSession,
    ids: *const u32,
    labels: *const i8,
    n: usize,
    eer: *mut f64,
) -> FcdStatus {
    guard(|| {
        let s = borrow_mut(s, "session")?;
        let ids = slice(ids, n, "ids")?;
        let labels = slice(labels, n, "labels")?;
        let answers = ids
            .iter()
            .zip(labels)
            .map(|(&id, &l)| Ok((id, label_of(l)?)))
            .collect::<Result<Vec<_>, Failure>>()?;
        let record = s.inner.submit_labels(&answers)?;
        if !eer.is_null() {
            eer.write(record.eer_pct.unwrap_or(f64::NAN));
        }
        Ok(())
    })
}

/// Mean EER over the reported iterations so far.
///
/// # Safety
/// `s` must be a live handle; `auc` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcd_session_auc(s: *const FcdSession, auc: *mut f64) -> FcdStatus {
    guard(|| {
        let value = borrow(s, "session")?.inner.history().auc()?;
        write_out(auc, value, "auc")
    })
}

/// Metrics history as JSON; release with [`fcd_string_free`].
///
/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcd_session_metrics_json(s: *const FcdSession, out: *mut *mut c_char) -> FcdStatus {
    guard(|| {
        let json = serde_json::to_string(borrow(s, "session")?.inner.history()).map_err(Error::from)?;
        let c = CString::new(json).or_else(|_| fail(FcdStatus::Parse, "metrics contain NUL"))?;
        write_out(out, c.into_raw(), "out")
    })
}

/// Copy of the session's current network.
///
/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcd_session_net(s: *const FcdSession, out: *mut *mut FcdNet) -> FcdStatus {
    guard(|| {
        let net = borrow(s, "session")?.inner.net().clone();
        write_out(out, Box::into_raw(Box::new(FcdNet { inner: net })), "out")
    })
}

/// # Safety
/// `s` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fcd_session_free(s: *mut FcdSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

// ---- metrics --------------------------------------------------------------

/// Equal error rate in percent; `labels` are −1 / +1.
///
/// # Safety
/// `scores` and `labels` must hold `n` values; `eer` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcd_compute_eer(scores: *const f64, labels: *const i8, n: usize, eer: *mut f64) -> FcdStatus {
    guard(|| {
        let scores = slice(scores, n, "scores")?;
        let labels = slice(labels, n, "labels")?
            .iter()
            .map(|&l| label_of(l))
            .collect::<Result<Vec<_>, _>>()?;
        write_out(eer, dataio::compute_eer(scores, &labels)?, "eer")
    })
}

/// Mean of `n` per-iteration EERs.
///
/// # Safety
/// `eers` must hold `n` values; `auc` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcd_auc_of_eers(eers: *const f64, n: usize, auc: *mut f64) -> FcdStatus {
    guard(|| write_out(auc, alloop::auc_of_eers(slice(eers, n, "eers")?)?, "auc"))
}
