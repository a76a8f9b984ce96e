//! C interface to the gentrans estimators.
//!
//! Samples and nuisance fits live behind opaque handles that the caller
//! frees. Every function returns a [`GtStatus`]; on failure a description is
//! available from [`gt_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use libc::c_char;

use gentrans::dr::{dr_estimate_arm, plugin_estimate};
use gentrans::io::{load_combined_csv, CsvSchema};
use gentrans::nuisance::{cross_fit_nuisances, NuisanceFit, NuisanceSpecs};
use gentrans::sensitivity::{
    breakeven_deltas, sensitivity_interval, Breakeven, BreakevenMode, HalfWidth,
};
use gentrans::simulation::simulate_dgp;
use gentrans::{
    split_folds, Arm, CombinedSample, Error, EstimandKind, EstimandSpec, SourceRecord,
    TargetRecord, Treatment,
};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtStatus {
    Ok = 0,
    NullPointer = 1,
    /// Invalid argument, configuration, schema or protocol.
    InvalidArgument = 2,
    /// Invalid or unreadable data.
    Data = 3,
    /// Numerical failure or non-convergence.
    Numerical = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtMethod {
    Plugin = 0,
    Dr = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtKind {
    Generalization = 0,
    Transportation = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtArm {
    Control = 0,
    Treated = 1,
    Contrast = 2,
}

/// Point estimate with a Wald interval.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GtEstimate {
    pub point: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub n_used: usize,
}

/// Combined source and target sample.
pub struct GtSample {
    inner: CombinedSample,
}

/// Cross-fitted nuisance predictions for one sample.
pub struct GtFit {
    inner: NuisanceFit,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GtStatus {
    match e.exit_code() {
        2 => GtStatus::InvalidArgument,
        3 => GtStatus::Data,
        _ => GtStatus::Numerical,
    }
}

fn guard<F: FnOnce() -> Result<(), GtStatus>>(f: F) -> GtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GtStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            GtStatus::Panic
        }
    }
}

fn fail(e: Error) -> GtStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null(name: &str) -> GtStatus {
    set_error(format!("{name} is null"));
    GtStatus::NullPointer
}

fn kind_of(k: GtKind) -> EstimandKind {
    match k {
        GtKind::Generalization => EstimandKind::Generalization,
        GtKind::Transportation => EstimandKind::Transportation,
    }
}

fn arm_of(a: GtArm) -> Arm {
    match a {
        GtArm::Control => Arm::Control,
        GtArm::Treated => Arm::Treated,
        GtArm::Contrast => Arm::Contrast,
    }
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, GtStatus> {
    if p.is_null() {
        return Err(null(name));
    }
    // SAFETY: caller passes a NUL-terminated string.
    let s = unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| {
        set_error(format!("{name} is not valid UTF-8"));
        GtStatus::InvalidArgument
    })?;
    Ok(PathBuf::from(s))
}

/// Description of the last failure on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a sample from row-major arrays.
///
/// `x` holds `n1 * d` source covariates, `a` the `n1` treatments (0 or 1),
/// `y` the `n1` outcomes, `v` the `n2 * dv` target covariates, and
/// `v_index` the `dv` positions of the target covariates within `x`.
///
/// # Safety
/// Every pointer must be valid for the stated number of elements, and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn gt_sample_new(
    d: usize,
    v_index: *const usize,
    dv: usize,
    n1: usize,
    x: *const f64,
    a: *const u8,
    y: *const f64,
    n2: usize,
    v: *const f64,
    out: *mut *mut GtSample,
) -> GtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if v_index.is_null()
            || (n1 > 0 && (x.is_null() || a.is_null() || y.is_null()))
            || (n2 > 0 && v.is_null())
        {
            return Err(null("input array"));
        }
        // SAFETY: lengths are guaranteed by the caller.
        let (vi, xs, as_, ys, vs) = unsafe {
            (
                std::slice::from_raw_parts(v_index, dv),
                if n1 > 0 {
                    std::slice::from_raw_parts(x, n1 * d)
                } else {
                    &[][..]
                },
                if n1 > 0 {
                    std::slice::from_raw_parts(a, n1)
                } else {
                    &[][..]
                },
                if n1 > 0 {
                    std::slice::from_raw_parts(y, n1)
                } else {
                    &[][..]
                },
                if n2 > 0 {
                    std::slice::from_raw_parts(v, n2 * dv)
                } else {
                    &[][..]
                },
            )
        };
        let mut source = Vec::with_capacity(n1);
        for i in 0..n1 {
            let t = Treatment::from_index(as_[i] as usize).ok_or_else(|| {
                set_error(format!(
                    "source record {i} has treatment {}; expected 0 or 1",
                    as_[i]
                ));
                GtStatus::InvalidArgument
            })?;
            source.push(SourceRecord {
                x: xs[i * d..(i + 1) * d].to_vec(),
                a: t,
                y: ys[i],
            });
        }
        let target = (0..n2)
            .map(|i| TargetRecord {
                v: vs[i * dv..(i + 1) * dv].to_vec(),
                survey: None,
            })
            .collect();
        let inner = CombinedSample::with_dimension(source, target, vi.to_vec(), d).map_err(fail)?;
        // SAFETY: `out` checked non-null.
        unsafe { *out = Box::into_raw(Box::new(GtSample { inner })) };
        Ok(())
    })
}

/// Loads a sample from source and target CSV files described by a TOML
/// schema.
///
/// # Safety
/// Paths must be NUL-terminated strings and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gt_sample_load_csv(
    source_path: *const c_char,
    target_path: *const c_char,
    schema_path: *const c_char,
    out: *mut *mut GtSample,
) -> GtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: forwarded caller guarantees.
        let (s, t, sc) = unsafe {
            (
                path_arg(source_path, "source_path")?,
                path_arg(target_path, "target_path")?,
                path_arg(schema_path, "schema_path")?,
            )
        };
        let schema = CsvSchema::from_toml_file(&sc).map_err(fail)?;
        let inner = load_combined_csv(&s, &t, &schema).map_err(fail)?;
        // SAFETY: `out` checked non-null.
        unsafe { *out = Box::into_raw(Box::new(GtSample { inner })) };
        Ok(())
    })
}

/// Draws `n` records from the built-in five-covariate simulation design.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gt_sample_simulate(
    n: usize,
    seed: u64,
    out: *mut *mut GtSample,
) -> GtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = simulate_dgp(n, seed).map_err(fail)?.sample;
        // SAFETY: `out` checked non-null.
        unsafe { *out = Box::into_raw(Box::new(GtSample { inner })) };
        Ok(())
    })
}

/// Number of source and target records.
///
/// # Safety
/// `sample` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gt_sample_sizes(
    sample: *const GtSample,
    n1: *mut usize,
    n2: *mut usize,
) -> GtStatus {
    guard(|| {
        if sample.is_null() || n1.is_null() || n2.is_null() {
            return Err(null("argument"));
        }
        // SAFETY: pointers checked non-null; handle liveness is the caller's.
        unsafe {
            *n1 = (*sample).inner.n1();
            *n2 = (*sample).inner.n2();
        }
        Ok(())
    })
}

/// # Safety
/// `sample` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gt_sample_free(sample: *mut GtSample) {
    if !sample.is_null() {
        // SAFETY: handle came from Box::into_raw.
        drop(unsafe { Box::from_raw(sample) });
    }
}

/// Cross-fits the default nuisance learners over `folds` random folds.
///
/// # Safety
/// `sample` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gt_fit_crossfit(
    sample: *const GtSample,
    folds: usize,
    seed: u64,
    eps: f64,
    out: *mut *mut GtFit,
) -> GtStatus {
    guard(|| {
        if sample.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        // SAFETY: non-null live handle.
        let s = unsafe { &(*sample).inner };
        let f = split_folds(s.n(), folds, seed).map_err(fail)?;
        let inner = cross_fit_nuisances(s, &NuisanceSpecs::default(), &f, eps).map_err(fail)?;
        // SAFETY: `out` checked non-null.
        unsafe { *out = Box::into_raw(Box::new(GtFit { inner })) };
        Ok(())
    })
}

/// # Safety
/// `fit` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gt_fit_free(fit: *mut GtFit) {
    if !fit.is_null() {
        // SAFETY: handle came from Box::into_raw.
        drop(unsafe { Box::from_raw(fit) });
    }
}

/// Plug-in or doubly robust estimate.
///
/// # Safety
/// Handles must be live and belong together; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gt_estimate(
    sample: *const GtSample,
    fit: *const GtFit,
    method: GtMethod,
    kind: GtKind,
    arm: GtArm,
    out: *mut GtEstimate,
) -> GtStatus {
    guard(|| {
        if sample.is_null() || fit.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        // SAFETY: non-null live handles.
        let (s, f) = unsafe { (&(*sample).inner, &(*fit).inner) };
        let e = match method {
            GtMethod::Plugin => plugin_estimate(s, f, arm_of(arm), kind_of(kind)),
            GtMethod::Dr => dr_estimate_arm(s, f, arm_of(arm), kind_of(kind)),
        }
        .map_err(fail)?;
        // SAFETY: `out` checked non-null.
        unsafe {
            *out = GtEstimate {
                point: e.point,
                se: e.se,
                ci_lower: e.ci_lower,
                ci_upper: e.ci_upper,
                n_used: e.n_used,
            };
        }
        Ok(())
    })
}

/// Bounds around the doubly robust estimate for sensitivity parameters
/// `delta1` (exchangeability) and `delta2` (transportability).
///
/// # Safety
/// Handles must be live; `lower` and `upper` writable.
#[no_mangle]
pub unsafe extern "C" fn gt_sensitivity(
    sample: *const GtSample,
    fit: *const GtFit,
    kind: GtKind,
    arm: GtArm,
    delta1: f64,
    delta2: f64,
    lower: *mut f64,
    upper: *mut f64,
) -> GtStatus {
    guard(|| {
        if sample.is_null() || fit.is_null() || lower.is_null() || upper.is_null() {
            return Err(null("argument"));
        }
        // SAFETY: non-null live handles.
        let (s, f) = unsafe { (&(*sample).inner, &(*fit).inner) };
        let b = sensitivity_interval(
            s,
            f,
            delta1,
            delta2,
            EstimandSpec::new(kind_of(kind), arm_of(arm)),
        )
        .map_err(fail)?;
        // SAFETY: outputs checked non-null.
        unsafe {
            *lower = b.lower;
            *upper = b.upper;
        }
        Ok(())
    })
}

/// Break-even sensitivity values for a point estimate and half-width
/// coefficients `c1`, `c2`: `|point| / c1` and `|point| / c2`.
///
/// # Safety
/// `delta1` and `delta2` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gt_breakeven(
    point: f64,
    c1: f64,
    c2: f64,
    delta1: *mut f64,
    delta2: *mut f64,
) -> GtStatus {
    guard(|| {
        if delta1.is_null() || delta2.is_null() {
            return Err(null("argument"));
        }
        let hw = HalfWidth { c1, c2 };
        let Breakeven::Delta1(d1) =
            breakeven_deltas(point, hw, BreakevenMode::Delta1Only).map_err(fail)?
        else {
            unreachable!()
        };
        let Breakeven::Delta2(d2) =
            breakeven_deltas(point, hw, BreakevenMode::Delta2Only).map_err(fail)?
        else {
            unreachable!()
        };
        // SAFETY: outputs checked non-null.
        unsafe {
            *delta1 = d1;
            *delta2 = d2;
        }
        Ok(())
    })
}
