//! C ABI over `sobolev_lab`.
//!
//! Every function returns an [`SlStatus`]; results go through out-pointers.
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `_free`. On failure the message is kept per thread and read with
//! [`sl_last_error`]. Panics never cross the boundary; they map to
//! [`SlStatus::Panic`].

use sobolev_lab::abp::{abp_certificate, AbpOptions};
use sobolev_lab::corpus::Builtin;
use sobolev_lab::density::DensityFamily;
use sobolev_lab::field::ScalarField;
use sobolev_lab::functionals::sobolev_deficit;
use sobolev_lab::grid::BallGrid;
use sobolev_lab::knothe::{knothe_certificate, CertificateOptions};
use sobolev_lab::surface::{michael_simon_terms, ParametricSurface, SurfaceField};
use sobolev_lab::transport::{transport_certificate, TransportOptions};
use sobolev_lab::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownName = 3,
    Unsupported = 4,
    Numerical = 5,
    NotMinimal = 6,
    Io = 7,
    Panic = 8,
}

impl From<&Error> for SlStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Unknown { .. } => SlStatus::UnknownName,
            Error::UnsupportedDimension { .. } | Error::UnsupportedResolution(_) | Error::InstanceTooLarge { .. } => {
                SlStatus::Unsupported
            }
            Error::NotMinimal(_) => SlStatus::NotMinimal,
            Error::Io(_) | Error::Json(_) => SlStatus::Io,
            Error::NoConvergence { .. }
            | Error::Incompatible { .. }
            | Error::DegenerateIntegral(_)
            | Error::DegenerateGradient(_)
            | Error::DegenerateMetric(_)
            | Error::ZeroRowMass(_)
            | Error::MassMismatch { .. } => SlStatus::Numerical,
            _ => SlStatus::InvalidArgument,
        }
    }
}

/// Proof path selector for [`sl_certificate_json`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlProofPath {
    Knothe = 0,
    Transport = 1,
    Abp = 2,
}

/// Ball grid of spacing `h` in dimension 2 or 3.
pub struct SlGrid(Arc<BallGrid>);

/// Positive scalar field on a grid.
pub struct SlField(ScalarField);

/// Parametric surface patch.
pub struct SlSurface(ParametricSurface);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SlSobolevDeficit {
    pub lhs: f64,
    pub rhs: f64,
    pub deficit: f64,
    pub relative_deficit: f64,
    /// Nonzero when the deficit is within the discretization allowance.
    pub pass: u8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SlSurfaceTerms {
    pub gradient_curvature: f64,
    pub boundary: f64,
    pub l2_squared: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub deficit: f64,
    pub area: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SlDensity {
    pub c: f64,
    pub alpha: f64,
    pub pi_over_c: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording errors and catching panics.
fn guard<F: FnOnce() -> Result<(), (SlStatus, String)>>(f: F) -> SlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SlStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SlStatus::Panic
        }
    }
}

fn lib(e: Error) -> (SlStatus, String) {
    (SlStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (SlStatus, String) {
    (SlStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `s` is null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, (SlStatus, String)> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (SlStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// # Safety
/// `p` is null or points to a live handle of type `T`.
unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (SlStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

fn optional(x: f64) -> Option<f64> {
    (!x.is_nan()).then_some(x)
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn sl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sl_grid_new(n: usize, h: f64, out: *mut *mut SlGrid) -> SlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let g = BallGrid::new(n, h).map_err(lib)?;
        *out = Box::into_raw(Box::new(SlGrid(Arc::new(g))));
        Ok(())
    })
}

/// Number of active nodes, the length expected by [`sl_field_from_values`].
///
/// # Safety
/// `grid` is null or a live grid handle.
#[no_mangle]
pub unsafe extern "C" fn sl_grid_active_len(grid: *const SlGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.active().len())
}

/// # Safety
/// `grid` is null or was returned by [`sl_grid_new`] and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sl_grid_free(grid: *mut SlGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Builtin corpus function by name (`const1`, `bump1`, `gauss`, ...).
///
/// # Safety
/// `grid` is a live grid, `name` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_field_builtin(grid: *const SlGrid, name: *const c_char, out: *mut *mut SlField) -> SlStatus {
    guard(|| {
        let g = handle(grid, "grid")?;
        let name = str_arg(name, "name")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let f = Builtin::parse(name).and_then(|b| b.field(g.0.clone())).map_err(lib)?;
        *out = Box::into_raw(Box::new(SlField(f)));
        Ok(())
    })
}

/// Field from values at the active nodes, in ascending box-index order.
///
/// # Safety
/// `values` points to `len` readable doubles; `grid` is live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_field_from_values(
    grid: *const SlGrid,
    values: *const f64,
    len: usize,
    out: *mut *mut SlField,
) -> SlStatus {
    guard(|| {
        let g = handle(grid, "grid")?;
        if values.is_null() {
            return Err(null("values"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let active = g.0.active();
        if len != active.len() {
            return Err((
                SlStatus::InvalidArgument,
                format!("expected {} values, got {len}", active.len()),
            ));
        }
        let src = std::slice::from_raw_parts(values, len);
        let mut nodal = vec![f64::NAN; g.0.len()];
        for (&i, &v) in active.iter().zip(src) {
            nodal[i as usize] = v;
        }
        let f = ScalarField::from_nodal(g.0.clone(), nodal).map_err(lib)?;
        *out = Box::into_raw(Box::new(SlField(f)));
        Ok(())
    })
}

/// # Safety
/// `field` is null or a live field handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sl_field_free(field: *mut SlField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Grid deficit `∫_∂B f + ∫|∇f| - n|B|^{1/n} ‖f‖_{n/(n-1)}`.
///
/// # Safety
/// `field` is live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_sobolev_deficit(field: *const SlField, out: *mut SlSobolevDeficit) -> SlStatus {
    guard(|| {
        let f = handle(field, "field")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = sobolev_deficit(&f.0).map_err(lib)?;
        *out = SlSobolevDeficit {
            lhs: r.lhs,
            rhs: r.rhs,
            deficit: r.deficit,
            relative_deficit: r.relative_deficit(),
            pass: u8::from(r.status.is_pass()),
        };
        Ok(())
    })
}

/// Certificate JSON for one proof path. Free the string with
/// [`sl_string_free`].
///
/// # Safety
/// `field` is live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_certificate_json(
    field: *const SlField,
    path: SlProofPath,
    seed: u64,
    tol_scale: f64,
    out: *mut *mut c_char,
) -> SlStatus {
    guard(|| {
        let f = handle(field, "field")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !(tol_scale > 0.0 && tol_scale.is_finite()) {
            return Err((SlStatus::InvalidArgument, format!("tol_scale {tol_scale} must be positive")));
        }
        let cert = match path {
            SlProofPath::Knothe => {
                let opts = CertificateOptions {
                    corpus_item: "custom".into(),
                    seed,
                    tol_scale,
                };
                knothe_certificate(&f.0, &opts).map_err(lib)?.0
            }
            SlProofPath::Transport => {
                let opts = TransportOptions {
                    seed,
                    tol_scale,
                    ..Default::default()
                };
                transport_certificate(&f.0, &opts).map_err(lib)?.certificate
            }
            SlProofPath::Abp => {
                let opts = AbpOptions {
                    seed,
                    tol_scale,
                    ..Default::default()
                };
                abp_certificate(&f.0, &opts).map_err(lib)?.certificate
            }
        };
        *out = CString::new(cert.to_json()).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` is null or was returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Named surface patch. Pass NaN for `r` or `h_band` to use the default.
///
/// # Safety
/// `name` is a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_surface_new(name: *const c_char, r: f64, h_band: f64, out: *mut *mut SlSurface) -> SlStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = ParametricSurface::from_name(name, optional(r), optional(h_band)).map_err(lib)?;
        s.validate().map_err(lib)?;
        *out = Box::into_raw(Box::new(SlSurface(s)));
        Ok(())
    })
}

/// # Safety
/// `surface` is null or a live surface handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sl_surface_free(surface: *mut SlSurface) {
    if !surface.is_null() {
        drop(Box::from_raw(surface));
    }
}

/// Both sides of `∫_Σ √(|∇^Σ f|² + f²H²) + ∫_∂Σ f ≥ 2√π (∫_Σ f²)^{1/2}`
/// for a named surface field (`const1`, `bump`, `aniso`, ...).
///
/// # Safety
/// `surface` is live, `field` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_surface_deficit(
    surface: *const SlSurface,
    field: *const c_char,
    out: *mut SlSurfaceTerms,
) -> SlStatus {
    guard(|| {
        let s = handle(surface, "surface")?;
        let field = str_arg(field, "field")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let f = SurfaceField::parse(field).map_err(lib)?;
        let t = michael_simon_terms(&s.0, &f).map_err(lib)?;
        *out = SlSurfaceTerms {
            gradient_curvature: t.gradient_curvature,
            boundary: t.boundary,
            l2_squared: t.l2_squared,
            lhs: t.lhs,
            rhs: t.rhs,
            deficit: t.deficit,
            area: t.area,
        };
        Ok(())
    })
}

/// Constants of the planar density family `ρ_j`.
///
/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sl_density(j: u64, out: *mut SlDensity) -> SlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let d = DensityFamily::new(j).map_err(lib)?;
        *out = SlDensity {
            c: d.c,
            alpha: d.alpha,
            pi_over_c: d.pi_over_c(),
        };
        Ok(())
    })
}
