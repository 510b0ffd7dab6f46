//! C ABI over the fblab library.
//!
//! Conventions:
//! - Every fallible function returns an [`FblabStatus`] and writes results
//!   through out-pointers, which are left untouched on failure.
//! - Objects are opaque handles created by `fblab_*_new`/`fblab_*_solve`
//!   and released by the matching `fblab_*_free`; freeing NULL is a no-op.
//! - After a non-OK status, [`fblab_last_error`] returns a message for the
//!   calling thread, valid until that thread's next fblab call.
//! - Panics never cross the boundary; they surface as `FBLAB_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use fblab::free_boundary::{flatness_certificate, viscosity_touch_test, FlatnessMode, Side};
use fblab::solver::{energy_ap, minimize, radial_exterior, Objective, RadialSolution, SolverConfig};
use fblab::{BoundarySpec, Error, GammaParams, Grid, ScalarField};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FblabStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// An argument lies outside the domain of the operation.
    InvalidArgument = 2,
    /// An iterative method hit its cap or could not bracket a root.
    NotConverged = 3,
    /// Inputs disagree or a value overflowed.
    Numerical = 4,
    /// File or parse failure.
    Io = 5,
    /// A caller-supplied buffer is too small.
    BufferTooSmall = 6,
    /// Internal panic, contained at the boundary.
    Panic = 7,
}

/// Exponent constants of one `gamma`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FblabExponents {
    pub gamma: f64,
    pub alpha: f64,
    pub c_alpha: f64,
    pub s: f64,
    pub c_gamma: f64,
}

/// Energy split of a field.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FblabEnergy {
    pub dirichlet: f64,
    pub potential: f64,
    pub total: f64,
}

/// Flatness of a field in one ball: best direction and relative offset.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FblabFlatness {
    pub nu_x: f64,
    pub nu_y: f64,
    pub epsilon: f64,
}

/// Side of the comparison ball in the touch test.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FblabSide {
    /// Ball in the positive set, `mu > 0`.
    Above = 0,
    /// Ball in the zero set, `mu < 0`.
    Below = 1,
}

/// Exponent parameters for one `gamma` in (0, 2).
pub struct FblabParams(GammaParams);

/// Radial exterior solution.
pub struct FblabRadial(RadialSolution);

/// Nodal field on a uniform 1D or 2D grid.
pub struct FblabField(ScalarField);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> FblabStatus {
    match e {
        Error::Domain(_) | Error::Precondition(_) | Error::Config(_) => FblabStatus::InvalidArgument,
        Error::NotConverged(_) | Error::LinearSolve { .. } | Error::Bracket { .. } => FblabStatus::NotConverged,
        Error::Overflow(_) | Error::Consistency(_) => FblabStatus::Numerical,
        Error::Parse { .. } | Error::Io(_) | Error::Json(_) => FblabStatus::Io,
    }
}

struct Fail(FblabStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(name: &str) -> Fail {
    Fail(FblabStatus::NullPointer, format!("{name} is NULL"))
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FblabStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FblabStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            FblabStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be NULL or valid for reads of `T`.
unsafe fn get<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(name))
}

/// # Safety
/// `p` must be NULL or valid for writes of `T`.
unsafe fn put<T>(p: *mut T, v: T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    p.write(v);
    Ok(())
}

/// # Safety
/// `p` must be NULL or a NUL-terminated string.
unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| Fail(FblabStatus::InvalidArgument, "path is not UTF-8".into()))
}

/// Message of the last failure on this thread; empty after success.
#[no_mangle]
pub extern "C" fn fblab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, NUL-terminated, static.
#[no_mangle]
pub extern "C" fn fblab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates exponent parameters for `gamma` in (0, 2).
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fblab_params_new(gamma: f64, out: *mut *mut FblabParams) -> FblabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = GammaParams::new(gamma)?;
        put(out, Box::into_raw(Box::new(FblabParams(p))), "out")
    })
}

/// # Safety
/// `p` must be NULL or a handle from [`fblab_params_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fblab_params_free(p: *mut FblabParams) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// # Safety
/// `p` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fblab_params_exponents(p: *const FblabParams, out: *mut FblabExponents) -> FblabStatus {
    guard(|| {
        let q = &get(p, "params")?.0;
        let e = FblabExponents { gamma: q.gamma, alpha: q.alpha, c_alpha: q.c_alpha, s: q.s, c_gamma: q.c_gamma };
        put(out, e, "out")
    })
}

/// One-dimensional profile `c_alpha (t^+)^alpha`.
///
/// # Safety
/// `p` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fblab_params_profile(p: *const FblabParams, t: f64, out: *mut f64) -> FblabStatus {
    guard(|| {
        let q = &get(p, "params")?.0;
        put(out, q.u0(t), "out")
    })
}

/// Shoots the exterior radial solution in dimension `n >= 1`.
///
/// # Safety
/// `p` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fblab_radial_solve(
    p: *const FblabParams,
    n: usize,
    shoot_tol: f64,
    out: *mut *mut FblabRadial,
) -> FblabStatus {
    guard(|| {
        let q = &get(p, "params")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let sol = radial_exterior(q, n, shoot_tol)?;
        put(out, Box::into_raw(Box::new(FblabRadial(sol))), "out")
    })
}

/// # Safety
/// `r` must be NULL or a handle from [`fblab_radial_solve`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fblab_radial_free(r: *mut FblabRadial) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Free-boundary offset: the zero set starts at radius `1 + mu`.
///
/// # Safety
/// `r` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fblab_radial_mu(r: *const FblabRadial, out: *mut f64) -> FblabStatus {
    guard(|| put(out, get(r, "radial")?.0.mu, "out"))
}

/// Value of the radial solution at `radius`.
///
/// # Safety
/// `r` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fblab_radial_value(r: *const FblabRadial, radius: f64, out: *mut f64) -> FblabStatus {
    guard(|| {
        let v = get(r, "radial")?.0.value(radius)?;
        put(out, v, "out")
    })
}

/// # Safety
/// `values` must point to `len` readable doubles and `out` be valid for writes.
unsafe fn make_field(grid: Grid, values: *const f64, len: usize, out: *mut *mut FblabField) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    if values.is_null() {
        return Err(null("values"));
    }
    if len != grid.len() {
        return Err(Fail(FblabStatus::InvalidArgument, format!("expected {} values, got {len}", grid.len())));
    }
    let f = ScalarField::new(grid, std::slice::from_raw_parts(values, len).to_vec())?;
    put(out, Box::into_raw(Box::new(FblabField(f))), "out")
}

/// Field on `[x_min, x_max]` with `cells` cells; `values` holds `cells + 1` nodes.
///
/// # Safety
/// `values` must point to `len` readable doubles and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fblab_field_new_1d(
    x_min: f64,
    x_max: f64,
    cells: usize,
    values: *const f64,
    len: usize,
    out: *mut *mut FblabField,
) -> FblabStatus {
    guard(|| make_field(Grid::new_1d(x_min, x_max, cells)?, values, len, out))
}

/// Field on a rectangle with square cells, nodes row-major with x fastest.
///
/// # Safety
/// `values` must point to `len` readable doubles and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fblab_field_new_2d(
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    nx_cells: usize,
    ny_cells: usize,
    values: *const f64,
    len: usize,
    out: *mut *mut FblabField,
) -> FblabStatus {
    guard(|| make_field(Grid::new_2d([x_min, x_max], [y_min, y_max], nx_cells, ny_cells)?, values, len, out))
}

/// Reads a field written by [`fblab_field_save_csv`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fblab_field_load_csv(path: *const c_char, out: *mut *mut FblabField) -> FblabStatus {
    guard(|| {
        let path = path_arg(path)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let f = ScalarField::load_csv(path)?;
        put(out, Box::into_raw(Box::new(FblabField(f))), "out")
    })
}

/// # Safety
/// `f` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fblab_field_save_csv(f: *const FblabField, path: *const c_char) -> FblabStatus {
    guard(|| {
        let f = &get(f, "field")?.0;
        f.save_csv(path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `f` must be NULL or a field handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fblab_field_free(f: *mut FblabField) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Number of nodes.
///
/// # Safety
/// `f` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fblab_field_len(f: *const FblabField, out: *mut usize) -> FblabStatus {
    guard(|| put(out, get(f, "field")?.0.values().len(), "out"))
}

/// Copies the nodal values into `buf`, which must hold at least the node count.
///
/// # Safety
/// `f` must be a live handle and `buf` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn fblab_field_values(f: *const FblabField, buf: *mut f64, cap: usize) -> FblabStatus {
    guard(|| {
        let v = get(f, "field")?.0.values();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if cap < v.len() {
            return Err(Fail(FblabStatus::BufferTooSmall, format!("need {} values, buffer holds {cap}", v.len())));
        }
        std::ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

/// Discrete energy `int |grad u|^2 + u^(-gamma) chi_{u>0}`, scaled by
/// `c_gamma` when `rescaled` is nonzero.
///
/// # Safety
/// `f`, `p` must be live handles and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fblab_energy(
    f: *const FblabField,
    p: *const FblabParams,
    rescaled: bool,
    out: *mut FblabEnergy,
) -> FblabStatus {
    guard(|| {
        let e = energy_ap(&get(f, "field")?.0, &get(p, "params")?.0, rescaled)?;
        put(out, FblabEnergy { dirichlet: e.dirichlet, potential: e.potential, total: e.total }, "out")
    })
}

/// Minimizer on `[0, 1]` with `u(0) = left`, `u(1) = right`, default solver settings.
///
/// # Safety
/// `p` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fblab_minimize_1d(
    p: *const FblabParams,
    left: f64,
    right: f64,
    cells: usize,
    rescaled: bool,
    out: *mut *mut FblabField,
) -> FblabStatus {
    guard(|| {
        let params = get(p, "params")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let grid = Grid::new_1d(0.0, 1.0, cells)?;
        let config = SolverConfig::for_ap(&params, grid.h());
        let m = minimize(&grid, &BoundarySpec::interval(left, right), Objective::Ap { params, rescaled }, &config)?;
        put(out, Box::into_raw(Box::new(FblabField(m.field))), "out")
    })
}

/// Flatness of a 2D field in the ball `B_radius(center)` against translates
/// of the one-dimensional profile.
///
/// # Safety
/// `f`, `p` must be live handles and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fblab_flatness(
    f: *const FblabField,
    p: *const FblabParams,
    center_x: f64,
    center_y: f64,
    radius: f64,
    out: *mut FblabFlatness,
) -> FblabStatus {
    guard(|| {
        let c = flatness_certificate(
            &get(f, "field")?.0,
            [center_x, center_y],
            radius,
            &get(p, "params")?.0,
            FlatnessMode::UProfile,
        )?;
        put(out, FblabFlatness { nu_x: c.nu[0], nu_y: c.nu[1], epsilon: c.epsilon }, "out")
    })
}

/// Discrete viscosity test at a free-boundary point; `*passed` is true when
/// no comparison function touches the field.
///
/// # Safety
/// `f`, `p` must be live handles and `passed` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fblab_touch_test(
    f: *const FblabField,
    p: *const FblabParams,
    x: f64,
    y: f64,
    mu: f64,
    ball_radius: f64,
    side: FblabSide,
    passed: *mut bool,
) -> FblabStatus {
    guard(|| {
        let side = match side {
            FblabSide::Above => Side::Above,
            FblabSide::Below => Side::Below,
        };
        let o = viscosity_touch_test(&get(f, "field")?.0, &get(p, "params")?.0, [x, y], mu, ball_radius, side)?;
        put(passed, o.passed(), "passed")
    })
}

/// Runs the closed-form oracle suite; reports passed and total counts.
///
/// # Safety
/// `passed` and `total` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fblab_validate(passed: *mut usize, total: *mut usize) -> FblabStatus {
    guard(|| {
        if passed.is_null() || total.is_null() {
            return Err(null("passed/total"));
        }
        let checks = fblab::cli::oracle_suite();
        put(passed, checks.iter().filter(|c| c.passed).count(), "passed")?;
        put(total, checks.len(), "total")
    })
}
