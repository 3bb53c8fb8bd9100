//! C ABI over the `gtd` engine.
//!
//! Every fallible function returns a [`GtdStatus`]; on failure a message is
//! kept per thread and can be read with [`gtd_last_error_message`]. Objects
//! are opaque handles released with their `_free` function. Strings returned
//! by the library are released with [`gtd_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::{Arc, OnceLock};

use gtd::geodesic::{
    self, GeodesicOptions, GeodesicProblem, GeodesicSystem, GeodesicTrajectory, Termination,
};
use gtd::geometry::{CurvatureField, GeometryError};
use gtd::symexpr::{self, Bindings, EvalError, Expr};
use gtd::vdw::{self, VdwError, VdwParams};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Eval = 4,
    Domain = 5,
    Singular = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

/// How a geodesic integration stopped.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtdTermination {
    MaxTau = 0,
    SingularBoundary = 1,
    DomainExit = 2,
    StepUnderflow = 3,
    Escape = 4,
    MaxSteps = 5,
}

/// Parsed symbolic expression.
pub struct GtdExpr {
    expr: Expr,
}

/// Van der Waals gas with parameters `(a, b, Λ)`; the curvature and the
/// geodesic system are built on first use.
pub struct GtdVdw {
    params: VdwParams,
    curvature: OnceLock<Result<CurvatureField, VdwError>>,
    geodesics: OnceLock<Result<Arc<GeodesicSystem>, String>>,
}

/// Integrated geodesic.
pub struct GtdTrajectory {
    traj: GeodesicTrajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: GtdStatus, msg: impl Into<String>) -> GtdStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> GtdStatus) -> GtdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(GtdStatus::Internal, "internal panic"),
    }
}

fn eval_status(e: &EvalError) -> GtdStatus {
    match e {
        EvalError::Unbound(_) => GtdStatus::Eval,
        EvalError::DivisionByZero { .. } => GtdStatus::Singular,
        EvalError::LogDomain { .. } | EvalError::PowerDomain { .. } => GtdStatus::Domain,
    }
}

fn geometry_status(e: &GeometryError) -> GtdStatus {
    match e {
        GeometryError::SingularProximity { .. } | GeometryError::NonInvertible => {
            GtdStatus::Singular
        }
        GeometryError::Eval(ev) => eval_status(ev),
        _ => GtdStatus::InvalidArgument,
    }
}

fn vdw_status(e: &VdwError) -> GtdStatus {
    match e {
        VdwError::Domain { .. } => GtdStatus::Domain,
        VdwError::Geometry(g) => geometry_status(g),
        _ => GtdStatus::InvalidArgument,
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, GtdStatus> {
    if s.is_null() {
        return Err(fail(GtdStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(GtdStatus::InvalidArgument, "string is not valid UTF-8"))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gtd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on the calling thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gtd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Clears the last error on the calling thread.
#[no_mangle]
pub extern "C" fn gtd_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gtd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------- expressions

/// Parses `text` into a new expression handle.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gtd_expr_parse(text: *const c_char, out: *mut *mut GtdExpr) -> GtdStatus {
    guard(|| {
        if out.is_null() {
            return fail(GtdStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let text = match read_str(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match symexpr::parse(text) {
            Ok(expr) => {
                *out = Box::into_raw(Box::new(GtdExpr { expr }));
                GtdStatus::Ok
            }
            Err(e) => fail(GtdStatus::Parse, e.to_string()),
        }
    })
}

/// # Safety
/// `e` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gtd_expr_free(e: *mut GtdExpr) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Canonical text of `e`; release with [`gtd_string_free`].
///
/// # Safety
/// `e` must be a valid handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gtd_expr_to_string(e: *const GtdExpr, out: *mut *mut c_char) -> GtdStatus {
    guard(|| {
        if e.is_null() || out.is_null() {
            return fail(GtdStatus::NullPointer, "null argument");
        }
        *out = into_c_string((*e).expr.to_string());
        GtdStatus::Ok
    })
}

/// Simplified copy of `e`.
///
/// # Safety
/// `e` must be a valid handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gtd_expr_simplify(e: *const GtdExpr, out: *mut *mut GtdExpr) -> GtdStatus {
    guard(|| {
        if e.is_null() || out.is_null() {
            return fail(GtdStatus::NullPointer, "null argument");
        }
        *out = Box::into_raw(Box::new(GtdExpr {
            expr: symexpr::simplify(&(*e).expr),
        }));
        GtdStatus::Ok
    })
}

/// Simplified partial derivative of `e` with respect to `var`.
///
/// # Safety
/// `e` must be a valid handle, `var` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gtd_expr_diff(
    e: *const GtdExpr,
    var: *const c_char,
    out: *mut *mut GtdExpr,
) -> GtdStatus {
    guard(|| {
        if e.is_null() || out.is_null() {
            return fail(GtdStatus::NullPointer, "null argument");
        }
        let var = match read_str(var) {
            Ok(v) => v,
            Err(s) => return s,
        };
        let d = symexpr::differentiate(&(*e).expr, var);
        *out = Box::into_raw(Box::new(GtdExpr {
            expr: symexpr::simplify(&d),
        }));
        GtdStatus::Ok
    })
}

/// Evaluates `e` with `names[k] = values[k]` for `k < n`.
///
/// # Safety
/// `names` and `values` must point to `n` entries (may be NULL when `n` is
/// 0); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gtd_expr_eval(
    e: *const GtdExpr,
    names: *const *const c_char,
    values: *const f64,
    n: usize,
    out: *mut f64,
) -> GtdStatus {
    guard(|| {
        if e.is_null() || out.is_null() || (n > 0 && (names.is_null() || values.is_null())) {
            return fail(GtdStatus::NullPointer, "null argument");
        }
        let mut bindings = Bindings::new();
        for k in 0..n {
            let name = match read_str(*names.add(k)) {
                Ok(v) => v,
                Err(s) => return s,
            };
            bindings.insert(name.to_owned(), *values.add(k));
        }
        match symexpr::evaluate(&(*e).expr, &bindings) {
            Ok(v) => {
                *out = v;
                GtdStatus::Ok
            }
            Err(err) => fail(eval_status(&err), err.to_string()),
        }
    })
}

// ---------------------------------------------------------------- vdw

/// New van der Waals gas.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gtd_vdw_new(
    a: f64,
    b: f64,
    lambda: f64,
    out: *mut *mut GtdVdw,
) -> GtdStatus {
    guard(|| {
        if out.is_null() {
            return fail(GtdStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        match VdwParams::new(a, b, lambda) {
            Ok(params) => {
                *out = Box::into_raw(Box::new(GtdVdw {
                    params,
                    curvature: OnceLock::new(),
                    geodesics: OnceLock::new(),
                }));
                GtdStatus::Ok
            }
            Err(e) => fail(vdw_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `g` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gtd_vdw_free(g: *mut GtdVdw) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Scalar curvature at `(u, v)`; [`GtdStatus::Singular`] near the
/// singular locus.
///
/// # Safety
/// `g` must be a valid handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gtd_vdw_scalar_curvature(
    g: *const GtdVdw,
    u: f64,
    v: f64,
    out: *mut f64,
) -> GtdStatus {
    guard(|| {
        if g.is_null() || out.is_null() {
            return fail(GtdStatus::NullPointer, "null argument");
        }
        let g = &*g;
        if let Err(e) = g.params.check(u, v) {
            return fail(GtdStatus::Domain, e.to_string());
        }
        let field = match g.curvature.get_or_init(|| vdw::vdw_curvature(&g.params)) {
            Ok(f) => f,
            Err(e) => return fail(vdw_status(e), e.to_string()),
        };
        match field.scalar_at(&[u, v]) {
            Ok(r) => {
                *out = r;
                GtdStatus::Ok
            }
            Err(e) => fail(geometry_status(&e), e.to_string()),
        }
    })
}

/// Energy on the phase boundary at volume `v`.
///
/// # Safety
/// `g` must be a valid handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gtd_vdw_phase_boundary_energy(
    g: *const GtdVdw,
    v: f64,
    out: *mut f64,
) -> GtdStatus {
    guard(|| {
        if g.is_null() || out.is_null() {
            return fail(GtdStatus::NullPointer, "null argument");
        }
        *out = vdw::phase_boundary_energy(v, &(*g).params);
        GtdStatus::Ok
    })
}

/// Relative residual of the phase-boundary relation at `(u, v)`.
///
/// # Safety
/// `g` must be a valid handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gtd_vdw_boundary_residual(
    g: *const GtdVdw,
    u: f64,
    v: f64,
    out: *mut f64,
) -> GtdStatus {
    guard(|| {
        if g.is_null() || out.is_null() {
            return fail(GtdStatus::NullPointer, "null argument");
        }
        *out = vdw::boundary_residual(u, v, &(*g).params);
        GtdStatus::Ok
    })
}

/// Roots `V > b` of `PV³ − aV + 2ab`. Writes up to `capacity` roots and
/// the total count to `count`; returns [`GtdStatus::BufferTooSmall`] when
/// `capacity` is insufficient.
///
/// # Safety
/// `g` must be a valid handle; `roots` must hold `capacity` values (may be
/// NULL when `capacity` is 0); `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gtd_vdw_singular_locus(
    g: *const GtdVdw,
    pressure: f64,
    roots: *mut f64,
    capacity: usize,
    count: *mut usize,
) -> GtdStatus {
    guard(|| {
        if g.is_null() || count.is_null() || (capacity > 0 && roots.is_null()) {
            return fail(GtdStatus::NullPointer, "null argument");
        }
        match vdw::singular_locus(pressure, &(*g).params) {
            Ok(r) => {
                *count = r.roots.len();
                for (k, root) in r.roots.iter().take(capacity).enumerate() {
                    *roots.add(k) = root.v;
                }
                if r.roots.len() > capacity {
                    return fail(
                        GtdStatus::BufferTooSmall,
                        format!("{} roots, capacity {capacity}", r.roots.len()),
                    );
                }
                GtdStatus::Ok
            }
            Err(e) => fail(vdw_status(&e), e.to_string()),
        }
    })
}

/// Integrates the geodesic from `(u0, v0)` with velocity `(du0, dv0)` up to
/// affine parameter `tau_max`, with default tolerances.
///
/// # Safety
/// `g` must be a valid handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gtd_vdw_geodesic(
    g: *const GtdVdw,
    u0: f64,
    v0: f64,
    du0: f64,
    dv0: f64,
    tau_max: f64,
    out: *mut *mut GtdTrajectory,
) -> GtdStatus {
    guard(|| {
        if g.is_null() || out.is_null() {
            return fail(GtdStatus::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        let g = &*g;
        let system = match g.geodesics.get_or_init(|| {
            GeodesicSystem::vdw(&g.params)
                .map(Arc::new)
                .map_err(|e| e.to_string())
        }) {
            Ok(s) => Arc::clone(s),
            Err(e) => return fail(GtdStatus::Internal, e.clone()),
        };
        let options = GeodesicOptions {
            tau_max,
            ..Default::default()
        };
        let problem = GeodesicProblem {
            system,
            x0: vec![u0, v0],
            v0: vec![du0, dv0],
            options,
        };
        match geodesic::integrate(&problem) {
            Ok(traj) => {
                *out = Box::into_raw(Box::new(GtdTrajectory { traj }));
                GtdStatus::Ok
            }
            Err(e) => fail(GtdStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `t` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gtd_trajectory_free(t: *mut GtdTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of samples; 0 for NULL.
///
/// # Safety
/// `t` must be NULL or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn gtd_trajectory_len(t: *const GtdTrajectory) -> usize {
    if t.is_null() {
        0
    } else {
        (*t).traj.samples.len()
    }
}

/// Writes sample `index` as `[tau, U, V, dU, dV]`.
///
/// # Safety
/// `t` must be a valid handle; `out` must hold 5 values.
#[no_mangle]
pub unsafe extern "C" fn gtd_trajectory_sample(
    t: *const GtdTrajectory,
    index: usize,
    out: *mut f64,
) -> GtdStatus {
    guard(|| {
        if t.is_null() || out.is_null() {
            return fail(GtdStatus::NullPointer, "null argument");
        }
        let t = &*t;
        let Some(s) = t.traj.samples.get(index) else {
            return fail(
                GtdStatus::InvalidArgument,
                format!("sample {index} out of range"),
            );
        };
        let row = [s.tau, s.x[0], s.x[1], s.v[0], s.v[1]];
        ptr::copy_nonoverlapping(row.as_ptr(), out, row.len());
        GtdStatus::Ok
    })
}

/// Termination kind of the integration.
///
/// # Safety
/// `t` must be a valid handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gtd_trajectory_termination(
    t: *const GtdTrajectory,
    out: *mut GtdTermination,
) -> GtdStatus {
    guard(|| {
        if t.is_null() || out.is_null() {
            return fail(GtdStatus::NullPointer, "null argument");
        }
        *out = match (*t).traj.termination {
            Termination::MaxTau => GtdTermination::MaxTau,
            Termination::SingularBoundary { .. } => GtdTermination::SingularBoundary,
            Termination::DomainExit { .. } => GtdTermination::DomainExit,
            Termination::StepUnderflow { .. } => GtdTermination::StepUnderflow,
            Termination::Escape { .. } => GtdTermination::Escape,
            Termination::MaxSteps => GtdTermination::MaxSteps,
        };
        GtdStatus::Ok
    })
}
