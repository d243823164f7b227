//! C ABI over the `detseed` core.
//!
//! Every entry point returns a [`DetseedStatus`]. On failure a message is kept
//! per thread and can be fetched with [`detseed_last_error`]. Parameter sets
//! cross the boundary as opaque [`DetseedParams`] handles owned by the caller
//! and released with [`detseed_params_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use detseed::init::{etf_head, init_model, InitPlan, ModelSpec};
use detseed::ordering::{golden_permutation, seeded_permutation, SampleKeyTable};
use detseed::{verify, Error, ParameterSet};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetseedStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Numeric = 4,
    Io = 5,
    BufferTooSmall = 6,
    NotFound = 7,
    Panic = 8,
}

/// Opaque handle to a named parameter set.
pub struct DetseedParams {
    inner: ParameterSet,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

struct Failure(DetseedStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Numeric(_) | Error::DegenerateRow { .. } | Error::DegenerateVariance | Error::DegenerateInput(_) => {
                DetseedStatus::Numeric
            }
            Error::Io { .. } => DetseedStatus::Io,
            _ => DetseedStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: DetseedStatus, msg: &str) -> Failure {
    Failure(status, msg.to_string())
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> DetseedStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => DetseedStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DetseedStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(DetseedStatus::NullPointer, what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(DetseedStatus::InvalidUtf8, what))
}

unsafe fn params_arg<'a>(p: *const DetseedParams) -> Result<&'a ParameterSet, Failure> {
    p.as_ref()
        .map(|h| &h.inner)
        .ok_or_else(|| fail(DetseedStatus::NullPointer, "params"))
}

/// Copies `src` into `dst[..cap]`, reporting the required length in `len_out`.
unsafe fn copy_out<T: Copy>(src: &[T], dst: *mut T, cap: usize, len_out: *mut usize) -> Result<(), Failure> {
    if !len_out.is_null() {
        *len_out = src.len();
    }
    if src.len() > cap {
        return Err(fail(
            DetseedStatus::BufferTooSmall,
            &format!("need {} elements, have {cap}", src.len()),
        ));
    }
    if src.is_empty() {
        return Ok(());
    }
    if dst.is_null() {
        return Err(fail(DetseedStatus::NullPointer, "output buffer"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

/// Copies the last error message on this thread as a NUL-terminated string.
/// Returns the message length without the terminator; at most `cap - 1`
/// bytes are written.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn detseed_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a structured initialization from model spec text and a plan name
/// (`mixed`, `dct`, `dst`, `hartley` or `hadamard`).
///
/// # Safety
/// `spec_text` and `plan` must be NUL-terminated strings; `out` must be
/// writable. On success `*out` owns a handle for [`detseed_params_free`].
#[no_mangle]
pub unsafe extern "C" fn detseed_init_from_spec(
    spec_text: *const c_char,
    plan: *const c_char,
    fixup_alpha: f64,
    out: *mut *mut DetseedParams,
) -> DetseedStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(DetseedStatus::NullPointer, "out"));
        }
        *out = ptr::null_mut();
        let model = ModelSpec::parse(str_arg(spec_text, "spec_text")?)?;
        let plan = InitPlan::from_name(str_arg(plan, "plan")?, model.num_stages())?.with_fixup_alpha(fixup_alpha);
        let inner = init_model(&model, &plan)?;
        *out = Box::into_raw(Box::new(DetseedParams { inner }));
        Ok(())
    })
}

/// Loads a parameter directory written by `detseed_params_save`.
///
/// # Safety
/// `dir` must be a NUL-terminated path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn detseed_params_load(dir: *const c_char, out: *mut *mut DetseedParams) -> DetseedStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(DetseedStatus::NullPointer, "out"));
        }
        *out = ptr::null_mut();
        let inner = verify::load_dir(Path::new(str_arg(dir, "dir")?))?;
        *out = Box::into_raw(Box::new(DetseedParams { inner }));
        Ok(())
    })
}

/// Writes one NPY file per parameter plus the digest file into `dir`.
///
/// # Safety
/// `params` must be a live handle; `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn detseed_params_save(params: *const DetseedParams, dir: *const c_char) -> DetseedStatus {
    guard(|| {
        let p = params_arg(params)?;
        verify::save_dir(p, Path::new(str_arg(dir, "dir")?))?;
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `params` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn detseed_params_free(params: *mut DetseedParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Number of named tensors in the set.
///
/// # Safety
/// `params` must be a live handle and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn detseed_params_len(params: *const DetseedParams, count: *mut usize) -> DetseedStatus {
    guard(|| {
        let p = params_arg(params)?;
        if count.is_null() {
            return Err(fail(DetseedStatus::NullPointer, "count"));
        }
        *count = p.len();
        Ok(())
    })
}

/// Copies the values of tensor `name` (row-major f32). `*len` receives the
/// element count even when the buffer is too small.
///
/// # Safety
/// `buf` must be valid for `cap` floats; `len` may be null.
#[no_mangle]
pub unsafe extern "C" fn detseed_params_get(
    params: *const DetseedParams,
    name: *const c_char,
    buf: *mut f32,
    cap: usize,
    len: *mut usize,
) -> DetseedStatus {
    guard(|| {
        let p = params_arg(params)?;
        let name = str_arg(name, "name")?;
        let t = p
            .get(name)
            .ok_or_else(|| fail(DetseedStatus::NotFound, &format!("no parameter '{name}'")))?;
        copy_out(t.data(), buf, cap, len)
    })
}

/// Writes the 32-character canonical MD5 digest plus NUL into `buf`, which
/// must hold at least 33 bytes.
///
/// # Safety
/// `buf` must be valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn detseed_params_digest(params: *const DetseedParams, buf: *mut c_char, cap: usize) -> DetseedStatus {
    guard(|| {
        let p = params_arg(params)?;
        let hex = verify::digest(p)?.hex;
        if buf.is_null() {
            return Err(fail(DetseedStatus::NullPointer, "buf"));
        }
        if cap < hex.len() + 1 {
            return Err(fail(DetseedStatus::BufferTooSmall, "digest needs 33 bytes"));
        }
        ptr::copy_nonoverlapping(hex.as_ptr().cast::<c_char>(), buf, hex.len());
        *buf.add(hex.len()) = 0;
        Ok(())
    })
}

/// Seed-free golden-ratio permutation of `n` samples keyed by their L1 norms.
///
/// # Safety
/// `l1_norms` must hold `n` floats and `out` must hold `n` indices.
#[no_mangle]
pub unsafe extern "C" fn detseed_golden_permutation(
    l1_norms: *const f32,
    n: usize,
    epoch: u64,
    out: *mut usize,
) -> DetseedStatus {
    guard(|| {
        if l1_norms.is_null() && n > 0 {
            return Err(fail(DetseedStatus::NullPointer, "l1_norms"));
        }
        let norms = if n == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(l1_norms, n).to_vec()
        };
        let s = golden_permutation(&SampleKeyTable::from_norms(norms), epoch)?;
        copy_out(&s.perm, out, n, ptr::null_mut())
    })
}

/// Seeded Fisher-Yates permutation of `0..n` for one epoch.
///
/// # Safety
/// `out` must hold `n` indices.
#[no_mangle]
pub unsafe extern "C" fn detseed_seeded_permutation(n: usize, seed: u64, epoch: u64, out: *mut usize) -> DetseedStatus {
    guard(|| {
        let s = seeded_permutation(n, seed, epoch)?;
        copy_out(&s.perm, out, n, ptr::null_mut())
    })
}

/// Simplex ETF classifier weights, `num_classes x feature_dim` row-major.
///
/// # Safety
/// `out` must hold `num_classes * feature_dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn detseed_etf(num_classes: usize, feature_dim: usize, out: *mut f64, cap: usize) -> DetseedStatus {
    guard(|| {
        let m = etf_head(num_classes, feature_dim)?;
        copy_out(m.data(), out, cap, ptr::null_mut())
    })
}
