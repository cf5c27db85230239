//! C ABI over `vcox`.
//!
//! All objects cross the boundary as opaque heap handles created by a
//! `*_new`/`*_load`/`vcox_fit_*` call and released by the matching `*_free`.
//! Every fallible function returns a [`VcoxStatus`]; on failure the message is
//! available from [`vcox_last_error`] on the same thread. Panics never unwind
//! into C: they are caught and reported as [`VcoxStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use vcox::estimator::{fit_curve, SolverConfig};
use vcox::inference::{attach_sandwich, scb, unit_contrast, MultiplierKind, ScbResult, WeightMode};
use vcox::io::ingest;
use vcox::{BandwidthPair, CoefficientCurve, Dataset, Error, KernelKind, SubjectRecord};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VcoxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidData = 3,
    Ingest = 4,
    Io = 5,
    Numerical = 6,
    OutOfRange = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VcoxKernel {
    Epanechnikov = 0,
    Gaussian = 1,
    Uniform = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VcoxMultiplier {
    CenteredExponential = 0,
    Rademacher = 1,
    StandardNormal = 2,
}

/// A validated dataset.
pub struct VcoxDataset {
    inner: Dataset,
}

/// Accumulates subjects before validation into a [`VcoxDataset`].
pub struct VcoxDatasetBuilder {
    p: usize,
    subjects: Vec<SubjectRecord>,
}

/// A fitted coefficient curve with sandwich covariances.
pub struct VcoxCurve {
    inner: CoefficientCurve,
    kernel: KernelKind,
}

/// A simultaneous confidence band.
pub struct VcoxBand {
    inner: ScbResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let mut msg = msg.into().into_bytes();
    msg.retain(|&b| b != 0);
    let c = CString::new(msg).expect("interior nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> VcoxStatus {
    match err {
        Error::InvalidBandwidth { .. } | Error::Config(_) | Error::DegenerateGrid(_) => VcoxStatus::InvalidArgument,
        Error::InvalidData(_) => VcoxStatus::InvalidData,
        Error::Ingest { .. } | Error::Csv(_) | Error::Json(_) => VcoxStatus::Ingest,
        Error::Io(_) => VcoxStatus::Io,
        _ => VcoxStatus::Numerical,
    }
}

struct Failure(VcoxStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: VcoxStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VcoxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            VcoxStatus::Ok
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
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            VcoxStatus::Panic
        }
    }
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(VcoxStatus::NullPointer, format!("{name} is null")))
}

unsafe fn path_arg<'a>(p: *const c_char, name: &str) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(fail(VcoxStatus::NullPointer, format!("{name} is null")));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(VcoxStatus::InvalidArgument, format!("{name} is not UTF-8")))?;
    Ok(Path::new(s))
}

unsafe fn array_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(VcoxStatus::NullPointer, format!("{name} is null")));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(VcoxStatus::NullPointer, format!("{name} is null")))
}

fn kernel_kind(k: VcoxKernel) -> KernelKind {
    match k {
        VcoxKernel::Epanechnikov => KernelKind::Epanechnikov,
        VcoxKernel::Gaussian => KernelKind::Gaussian,
        VcoxKernel::Uniform => KernelKind::Uniform,
    }
}

fn multiplier_kind(m: VcoxMultiplier) -> MultiplierKind {
    match m {
        VcoxMultiplier::CenteredExponential => MultiplierKind::CenteredExponential,
        VcoxMultiplier::Rademacher => MultiplierKind::Rademacher,
        VcoxMultiplier::StandardNormal => MultiplierKind::StandardNormal,
    }
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn vcox_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn vcox_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Reads the subjects and longitudinal CSV files. A NaN `tau` defaults to the
/// largest follow-up time.
///
/// # Safety
/// The paths must be nul-terminated strings and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vcox_dataset_load_csv(
    subjects_csv: *const c_char,
    longitudinal_csv: *const c_char,
    tau: f64,
    out: *mut *mut VcoxDataset,
) -> VcoxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let s = path_arg(subjects_csv, "subjects_csv")?;
        let l = path_arg(longitudinal_csv, "longitudinal_csv")?;
        let data = ingest(s, l, (!tau.is_nan()).then_some(tau))?;
        *out = Box::into_raw(Box::new(VcoxDataset { inner: data }));
        Ok(())
    })
}

/// Starts an empty dataset with `p` covariates per observation.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vcox_builder_new(p: usize, out: *mut *mut VcoxDatasetBuilder) -> VcoxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if p == 0 {
            return Err(fail(VcoxStatus::InvalidArgument, "p must be positive"));
        }
        *out = Box::into_raw(Box::new(VcoxDatasetBuilder {
            p,
            subjects: Vec::new(),
        }));
        Ok(())
    })
}

/// Appends one subject. `covariates` is row-major `n_obs x p`; observation
/// times must be strictly ascending.
///
/// # Safety
/// `builder` must come from [`vcox_builder_new`]; `id` must be nul-terminated;
/// the arrays must hold `n_obs` and `n_obs * p` values.
#[no_mangle]
pub unsafe extern "C" fn vcox_builder_add_subject(
    builder: *mut VcoxDatasetBuilder,
    id: *const c_char,
    follow_up_time: f64,
    event: bool,
    obs_times: *const f64,
    covariates: *const f64,
    n_obs: usize,
) -> VcoxStatus {
    guard(|| {
        let b = out_arg(builder, "builder")?;
        if id.is_null() {
            return Err(fail(VcoxStatus::NullPointer, "id is null"));
        }
        let id = CStr::from_ptr(id)
            .to_str()
            .map_err(|_| fail(VcoxStatus::InvalidArgument, "id is not UTF-8"))?;
        let times = array_arg(obs_times, n_obs, "obs_times")?.to_vec();
        let z = array_arg(covariates, n_obs * b.p, "covariates")?.to_vec();
        b.subjects
            .push(SubjectRecord::from_flat(id, follow_up_time, event, times, z, b.p)?);
        Ok(())
    })
}

/// Validates the accumulated subjects into a dataset. The builder is consumed
/// and must not be used or freed afterwards, whatever the outcome.
///
/// # Safety
/// `builder` must come from [`vcox_builder_new`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vcox_builder_finish(
    builder: *mut VcoxDatasetBuilder,
    tau: f64,
    out: *mut *mut VcoxDataset,
) -> VcoxStatus {
    guard(|| {
        if builder.is_null() {
            return Err(fail(VcoxStatus::NullPointer, "builder is null"));
        }
        let b = Box::from_raw(builder);
        let out = out_arg(out, "out")?;
        let data = Dataset::new(b.subjects, tau, b.p)?;
        *out = Box::into_raw(Box::new(VcoxDataset { inner: data }));
        Ok(())
    })
}

/// # Safety
/// `builder` must come from [`vcox_builder_new`] and not have been finished.
#[no_mangle]
pub unsafe extern "C" fn vcox_builder_free(builder: *mut VcoxDatasetBuilder) {
    if !builder.is_null() {
        drop(Box::from_raw(builder));
    }
}

/// # Safety
/// `data` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn vcox_dataset_n(data: *const VcoxDataset) -> usize {
    data.as_ref().map_or(0, |d| d.inner.n())
}

/// # Safety
/// `data` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn vcox_dataset_dim(data: *const VcoxDataset) -> usize {
    data.as_ref().map_or(0, |d| d.inner.dim())
}

/// # Safety
/// `data` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn vcox_dataset_tau(data: *const VcoxDataset) -> f64 {
    data.as_ref().map_or(f64::NAN, |d| d.inner.tau())
}

/// # Safety
/// `data` must be null or a dataset handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vcox_dataset_free(data: *mut VcoxDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Fits the curve at the `grid_len` points of `grid` with bandwidths
/// `(h1, h2)` and attaches sandwich covariances. Points that fail to converge
/// are flagged rather than fatal.
///
/// # Safety
/// `data` must be live, `grid` must hold `grid_len` values and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn vcox_fit_curve(
    data: *const VcoxDataset,
    h1: f64,
    h2: f64,
    grid: *const f64,
    grid_len: usize,
    kernel: VcoxKernel,
    out: *mut *mut VcoxCurve,
) -> VcoxStatus {
    guard(|| {
        let d = &handle(data, "data")?.inner;
        let out = out_arg(out, "out")?;
        let grid = array_arg(grid, grid_len, "grid")?;
        let h = BandwidthPair::new(h1, h2)?;
        let kind = kernel_kind(kernel);
        let mut curve = fit_curve(d, grid, &h, &SolverConfig::default(), kind)?;
        attach_sandwich(d, &mut curve, kind)?;
        *out = Box::into_raw(Box::new(VcoxCurve {
            inner: curve,
            kernel: kind,
        }));
        Ok(())
    })
}

/// # Safety
/// `curve` must be null or a live curve handle.
#[no_mangle]
pub unsafe extern "C" fn vcox_curve_len(curve: *const VcoxCurve) -> usize {
    curve.as_ref().map_or(0, |c| c.inner.len())
}

/// # Safety
/// `curve` must be null or a live curve handle.
#[no_mangle]
pub unsafe extern "C" fn vcox_curve_dim(curve: *const VcoxCurve) -> usize {
    curve.as_ref().map_or(0, |c| c.inner.dim())
}

/// Target time and convergence flag of point `idx`; writes `p` coefficients
/// to `beta` and `p` standard errors to `se` (NaN where unavailable). Either
/// array may be null.
///
/// # Safety
/// `curve` must be live; non-null arrays must hold `p` values.
#[no_mangle]
pub unsafe extern "C" fn vcox_curve_point(
    curve: *const VcoxCurve,
    idx: usize,
    s: *mut f64,
    converged: *mut bool,
    beta: *mut f64,
    se: *mut f64,
) -> VcoxStatus {
    guard(|| {
        let c = &handle(curve, "curve")?.inner;
        if idx >= c.len() {
            return Err(fail(VcoxStatus::OutOfRange, format!("index {idx} >= {}", c.len())));
        }
        if let Some(s) = s.as_mut() {
            *s = c.grid[idx];
        }
        if let Some(ok) = converged.as_mut() {
            *ok = c.converged[idx];
        }
        let p = c.dim();
        if !beta.is_null() {
            slice::from_raw_parts_mut(beta, p).copy_from_slice(c.beta[idx].as_slice());
        }
        if !se.is_null() {
            let out = slice::from_raw_parts_mut(se, p);
            for (j, v) in out.iter_mut().enumerate() {
                *v = c.se(idx, j).unwrap_or(f64::NAN);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `curve` must be null or a curve handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vcox_curve_free(curve: *mut VcoxCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// Simultaneous band for coefficient `component` over the curve's grid,
/// weighted by the inverse standard error. Every curve point must have
/// converged.
///
/// # Safety
/// `data` and `curve` must be live handles and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vcox_scb(
    data: *const VcoxDataset,
    curve: *const VcoxCurve,
    component: usize,
    alpha: f64,
    n_boot: usize,
    multiplier: VcoxMultiplier,
    seed: u64,
    out: *mut *mut VcoxBand,
) -> VcoxStatus {
    guard(|| {
        let d = &handle(data, "data")?.inner;
        let c = handle(curve, "curve")?;
        let out = out_arg(out, "out")?;
        let l = unit_contrast(d.dim(), component)?;
        let band = scb(
            d,
            &c.inner,
            &l,
            alpha,
            n_boot,
            multiplier_kind(multiplier),
            WeightMode::InverseSe,
            seed,
            c.kernel,
        )?;
        *out = Box::into_raw(Box::new(VcoxBand { inner: band }));
        Ok(())
    })
}

/// # Safety
/// `band` must be null or a live band handle.
#[no_mangle]
pub unsafe extern "C" fn vcox_band_len(band: *const VcoxBand) -> usize {
    band.as_ref().map_or(0, |b| b.inner.grid.len())
}

/// # Safety
/// `band` must be null or a live band handle.
#[no_mangle]
pub unsafe extern "C" fn vcox_band_c_alpha(band: *const VcoxBand) -> f64 {
    band.as_ref().map_or(f64::NAN, |b| b.inner.c_alpha)
}

/// Copies the grid, estimate and band limits, `len` values each. Any array may
/// be null.
///
/// # Safety
/// `band` must be live; non-null arrays must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn vcox_band_values(
    band: *const VcoxBand,
    len: usize,
    s: *mut f64,
    estimate: *mut f64,
    lower: *mut f64,
    upper: *mut f64,
) -> VcoxStatus {
    guard(|| {
        let b = &handle(band, "band")?.inner;
        if len != b.grid.len() {
            return Err(fail(
                VcoxStatus::OutOfRange,
                format!("len {len} != band length {}", b.grid.len()),
            ));
        }
        for (dst, src) in [
            (s, &b.grid),
            (estimate, &b.estimate),
            (lower, &b.lower),
            (upper, &b.upper),
        ] {
            if !dst.is_null() {
                slice::from_raw_parts_mut(dst, len).copy_from_slice(src);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `band` must be null or a band handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vcox_band_free(band: *mut VcoxBand) {
    if !band.is_null() {
        drop(Box::from_raw(band));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_a_status() {
        let st = guard(|| panic!("boom"));
        assert_eq!(st, VcoxStatus::Panic);
        let msg = unsafe { CStr::from_ptr(vcox_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "panic: boom");
        assert_eq!(guard(|| Ok(())), VcoxStatus::Ok);
        assert!(vcox_last_error().is_null());
    }

    #[test]
    fn messages_with_nul_bytes_survive() {
        let st = guard(|| Err(fail(VcoxStatus::InvalidArgument, "a\0b")));
        assert_eq!(st, VcoxStatus::InvalidArgument);
        assert_eq!(unsafe { CStr::from_ptr(vcox_last_error()) }.to_str().unwrap(), "ab");
    }
}
