//! C interface to the `kedmd` library.
//!
//! Objects are opaque handles created by `*_new`/`*_build` and released with
//! the matching `*_free`. Every fallible function returns a [`KedmdStatus`];
//! on failure the message is available from [`kedmd_last_error_message`] on
//! the same thread. Arrays are row-major `f64` buffers owned by the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use kedmd::dynamics::{FlowMap, SystemId, VectorField};
use kedmd::interpolation::CenterSet;
use kedmd::koopman::{FlowSamples, KoopmanModel};
use kedmd::wendland::WendlandKernel;
use kedmd::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KedmdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Config = 3,
    Factorization = 4,
    Integration = 5,
    Resource = 6,
    OutOfScope = 7,
    State = 8,
    Io = 9,
    Panic = 10,
}

/// Wendland kernel handle.
pub struct KedmdKernel(WendlandKernel);

/// Flow map handle (RK4 time-`dt` map of a benchmark system).
pub struct KedmdFlow(FlowMap);

/// Koopman model handle (factorized kernel matrix plus flow samples).
pub struct KedmdModel(KoopmanModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> KedmdStatus {
    match err {
        Error::Input(_) => KedmdStatus::InvalidInput,
        Error::Config(_) | Error::Parse { .. } => KedmdStatus::Config,
        Error::Factorization { .. } => KedmdStatus::Factorization,
        Error::Integration { .. } => KedmdStatus::Integration,
        Error::Resource(_) => KedmdStatus::Resource,
        Error::OutOfScope(_) => KedmdStatus::OutOfScope,
        Error::State(_) => KedmdStatus::State,
        Error::Io { .. } => KedmdStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> KedmdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            KedmdStatus::Ok
        }
        Ok(Err(Failure::Null(name))) => {
            set_last_error(format!("{name} is a null pointer"));
            KedmdStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic".into());
            KedmdStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(
    p: *mut f64,
    len: usize,
    name: &'static str,
) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

fn dims(a: usize, b: usize) -> Result<usize, Failure> {
    a.checked_mul(b)
        .ok_or_else(|| Failure::Lib(Error::Input("array size overflows".into())))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn kedmd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates the Wendland kernel `phi_{d,k}` with support radius `scale`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kedmd_kernel_new(
    d: usize,
    k: usize,
    scale: f64,
    out: *mut *mut KedmdKernel,
) -> KedmdStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let kernel = WendlandKernel::with_scale(d, k, scale)?;
        *out = Box::into_raw(Box::new(KedmdKernel(kernel)));
        Ok(())
    })
}

/// Evaluates `k(x, z)` for two `d`-vectors.
///
/// # Safety
/// `x` and `z` must point to `d` values, `out` to one.
#[no_mangle]
pub unsafe extern "C" fn kedmd_kernel_eval(
    kernel: *const KedmdKernel,
    x: *const f64,
    z: *const f64,
    out: *mut f64,
) -> KedmdStatus {
    guard(|| {
        let kernel = &handle(kernel, "kernel")?.0;
        let d = kernel.dim();
        let v = kernel.eval_kernel(slice(x, d, "x")?, slice(z, d, "z")?)?;
        *out.as_mut().ok_or(Failure::Null("out"))? = v;
        Ok(())
    })
}

/// # Safety
/// `kernel` must come from [`kedmd_kernel_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kedmd_kernel_free(kernel: *mut KedmdKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Creates the time-`dt` RK4 flow map of `system` (`"duffing"`, `"lorenz"`
/// with the standard parameters, or `"identity"`). `dim` is only used by
/// `"identity"`.
///
/// # Safety
/// `system` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kedmd_flow_new(
    system: *const c_char,
    dim: usize,
    dt: f64,
    substeps: usize,
    out: *mut *mut KedmdFlow,
) -> KedmdStatus {
    guard(|| {
        if system.is_null() {
            return Err(Failure::Null("system"));
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let name = CStr::from_ptr(system)
            .to_str()
            .map_err(|_| Error::Input("system name is not UTF-8".into()))?;
        let field = match name.parse::<SystemId>()? {
            SystemId::Duffing => VectorField::Duffing,
            SystemId::Lorenz => VectorField::lorenz(),
            SystemId::Identity => VectorField::Identity { dim },
            SystemId::Linear => {
                return Err(Error::Input("linear systems are not available here".into()).into())
            }
        };
        *out = Box::into_raw(Box::new(KedmdFlow(FlowMap::new(field, dt, substeps)?)));
        Ok(())
    })
}

/// State dimension, or 0 for a null handle.
///
/// # Safety
/// `flow` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kedmd_flow_dim(flow: *const KedmdFlow) -> usize {
    flow.as_ref().map_or(0, |f| f.0.dim())
}

/// Maps `n` points (`n x dim`, row-major) one time step forward into `out`.
///
/// # Safety
/// `x` and `out` must each hold `n * dim` values.
#[no_mangle]
pub unsafe extern "C" fn kedmd_flow_apply(
    flow: *const KedmdFlow,
    x: *const f64,
    n: usize,
    out: *mut f64,
) -> KedmdStatus {
    guard(|| {
        let flow = &handle(flow, "flow")?.0;
        let len = dims(n, flow.dim())?;
        let images = flow.flow_points(slice(x, len, "x")?)?;
        slice_mut(out, len, "out")?.copy_from_slice(&images);
        Ok(())
    })
}

/// # Safety
/// `flow` must come from [`kedmd_flow_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kedmd_flow_free(flow: *mut KedmdFlow) {
    if !flow.is_null() {
        drop(Box::from_raw(flow));
    }
}

/// Builds a model from `n` centers `x` and their flow images `images`
/// (both `n x d`, where `d` is the kernel dimension).
///
/// # Safety
/// `x` and `images` must each hold `n * d` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kedmd_model_build(
    kernel: *const KedmdKernel,
    x: *const f64,
    images: *const f64,
    n: usize,
    out: *mut *mut KedmdModel,
) -> KedmdStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let kernel = handle(kernel, "kernel")?.0.clone();
        let len = dims(n, kernel.dim())?;
        let centers = CenterSet::new(kernel.dim(), slice(x, len, "x")?.to_vec())?;
        let samples = FlowSamples::new(Arc::new(centers), slice(images, len, "images")?.to_vec())?;
        let model = KoopmanModel::build(kernel, samples)?;
        *out = Box::into_raw(Box::new(KedmdModel(model)));
        Ok(())
    })
}

/// Number of centers, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kedmd_model_len(model: *const KedmdModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.samples().len())
}

/// Canonical coefficients of the `steps`-step prediction of an observable
/// from its values `f_images` at the flow images. Writes `n` values.
///
/// # Safety
/// `f_images` and `alpha` must each hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn kedmd_model_coefficients(
    model: *const KedmdModel,
    f_images: *const f64,
    steps: usize,
    alpha: *mut f64,
) -> KedmdStatus {
    guard(|| {
        let model = &handle(model, "model")?.0;
        let n = model.samples().len();
        let coeffs = model.multistep_from_flow_values(slice(f_images, n, "f_images")?, steps)?;
        slice_mut(alpha, n, "alpha")?.copy_from_slice(&coeffs.alpha);
        Ok(())
    })
}

/// Predicts the observable after `steps` flow steps at `m` points `z`
/// (`m x d`), given its values `f_images` at the flow images.
///
/// # Safety
/// `f_images` must hold `n` values, `z` `m * d` values and `out` `m` values.
#[no_mangle]
pub unsafe extern "C" fn kedmd_model_predict(
    model: *const KedmdModel,
    f_images: *const f64,
    steps: usize,
    z: *const f64,
    m: usize,
    out: *mut f64,
) -> KedmdStatus {
    guard(|| {
        let model = &handle(model, "model")?.0;
        let n = model.samples().len();
        let d = model.centers().dim();
        let coeffs = model.multistep_from_flow_values(slice(f_images, n, "f_images")?, steps)?;
        let values = model
            .x_factorization()
            .eval_coords(&coeffs.alpha, slice(z, dims(m, d)?, "z")?)?;
        slice_mut(out, m, "out")?.copy_from_slice(&values);
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`kedmd_model_build`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kedmd_model_free(model: *mut KedmdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
