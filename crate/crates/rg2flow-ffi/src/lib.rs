//! C ABI for the RG-2 flow laboratory.
//!
//! Geometries are opaque handles created and destroyed through this
//! interface; every fallible call returns an [`Rg2Status`] and writes its
//! results through out-pointers. The most recent error message is kept in
//! thread-local storage and can be fetched with [`rg2_last_error_message`].

use rg2flow::curvature::curvature_package;
use rg2flow::density::{alpha_g, DensityData, DriftField};
use rg2flow::flow::{constant_curvature_implicit_sigma, integrate_rg2, FlowMode, FlowState};
use rg2flow::geometry::{Geometry, ScalarField};
use rg2flow::scenario::{run_scenario, ScenarioConfig};
use rg2flow::variational::capital_lambda;
use rg2flow::RgError;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rg2Status {
    Ok = 0,
    /// A pointer argument was null or a scalar argument out of range.
    InvalidArgument = 1,
    /// The geometry description violates the class invariants.
    InvalidGeometry = 2,
    /// The weak-parabolicity condition fails for the requested coupling.
    NotParabolic = 3,
    /// A linear or eigenvalue solver did not converge.
    SolverFailure = 4,
    /// The operation is outside the symmetry-reduced representation.
    Unsupported = 5,
    /// Filesystem failure while writing artifacts.
    Io = 6,
    /// The scenario ran but at least one verification failed.
    VerificationFailed = 7,
    /// Any other failure; see the error message.
    Internal = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let cleaned: String = msg.chars().filter(|c| *c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(cleaned).unwrap_or_default();
    });
}

fn status_of(err: &RgError) -> Rg2Status {
    match err {
        RgError::InvalidGeometry(_) | RgError::Resolution { .. } | RgError::InvalidScale(_) => {
            Rg2Status::InvalidGeometry
        }
        RgError::InvalidCoupling(_) | RgError::Representation(_) | RgError::Config { .. } => {
            Rg2Status::InvalidArgument
        }
        RgError::NotParabolic { .. } => Rg2Status::NotParabolic,
        RgError::SolverFailure { .. }
        | RgError::EigenFailure(_)
        | RgError::NonConvergence { .. }
        | RgError::BranchJump { .. } => Rg2Status::SolverFailure,
        RgError::UnsupportedClass { .. } => Rg2Status::Unsupported,
        RgError::Io(_) => Rg2Status::Io,
        _ => Rg2Status::Internal,
    }
}

fn fail(err: RgError) -> Rg2Status {
    let code = status_of(&err);
    set_error(&err.to_string());
    code
}

/// Opaque geometry handle.
pub struct Rg2Geometry {
    inner: Geometry,
}

/// Copies the most recent error message of this thread into `buf` (always
/// NUL-terminated when `len > 0`) and returns the full message length in
/// bytes, excluding the terminator. Pass a null `buf` to query the length.
///
/// # Safety
/// `buf` must either be null or point to at least `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rg2_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

fn emit(out: *mut *mut Rg2Geometry, g: Geometry) -> Rg2Status {
    if out.is_null() {
        set_error("null output handle");
        return Rg2Status::InvalidArgument;
    }
    unsafe {
        *out = Box::into_raw(Box::new(Rg2Geometry { inner: g }));
    }
    Rg2Status::Ok
}

/// Creates a constant-curvature geometry `g = scale * g0` with `g0` the
/// model of sectional curvature `curvature` in dimension `dim`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn rg2_geometry_constant_curvature(
    dim: u32,
    curvature: f64,
    scale: f64,
    out: *mut *mut Rg2Geometry,
) -> Rg2Status {
    match Geometry::constant_curvature(dim, curvature, scale) {
        Ok(g) => emit(out, g),
        Err(e) => fail(e),
    }
}

/// Creates a homogeneous 3-geometry from Milnor-frame structure constants
/// and diagonal metric coefficients (three values each).
///
/// # Safety
/// `structure` and `coefficients` must point to three readable doubles;
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rg2_geometry_homogeneous3(
    structure: *const f64,
    coefficients: *const f64,
    out: *mut *mut Rg2Geometry,
) -> Rg2Status {
    if structure.is_null() || coefficients.is_null() {
        set_error("null structure or coefficient pointer");
        return Rg2Status::InvalidArgument;
    }
    let s = std::slice::from_raw_parts(structure, 3);
    let c = std::slice::from_raw_parts(coefficients, 3);
    match Geometry::homogeneous3([s[0], s[1], s[2]], [c[0], c[1], c[2]]) {
        Ok(g) => emit(out, g),
        Err(e) => fail(e),
    }
}

/// Creates a warped 2-torus `rho(r)^2 dr^2 + phi(r)^2 dtheta^2` from `n`
/// periodic profile samples on a grid of domain length `length`.
///
/// # Safety
/// `rho` and `phi` must point to `n` readable doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rg2_geometry_warped_torus(
    n: usize,
    length: f64,
    rho: *const f64,
    phi: *const f64,
    out: *mut *mut Rg2Geometry,
) -> Rg2Status {
    if rho.is_null() || phi.is_null() {
        set_error("null profile pointer");
        return Rg2Status::InvalidArgument;
    }
    let r = std::slice::from_raw_parts(rho, n).to_vec();
    let p = std::slice::from_raw_parts(phi, n).to_vec();
    match Geometry::warped_torus(n, length, r, p) {
        Ok(g) => emit(out, g),
        Err(e) => fail(e),
    }
}

/// Releases a geometry handle. Null is a no-op.
///
/// # Safety
/// `g` must be a handle returned by one of the constructors, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rg2_geometry_free(g: *mut Rg2Geometry) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

unsafe fn geometry_ref<'a>(g: *const Rg2Geometry) -> Option<&'a Geometry> {
    g.as_ref().map(|h| &h.inner)
}

/// Writes the Riemannian volume of the geometry.
///
/// # Safety
/// `g` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg2_geometry_volume(
    g: *const Rg2Geometry,
    out: *mut f64,
) -> Rg2Status {
    match (geometry_ref(g), out.is_null()) {
        (Some(geom), false) => {
            *out = geom.volume();
            Rg2Status::Ok
        }
        _ => {
            set_error("null handle or output");
            Rg2Status::InvalidArgument
        }
    }
}

/// Writes the scalar-curvature range `[r_min, r_max]` of the geometry.
///
/// # Safety
/// `g` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg2_geometry_scalar_range(
    g: *const Rg2Geometry,
    out_min: *mut f64,
    out_max: *mut f64,
) -> Rg2Status {
    match (geometry_ref(g), out_min.is_null() || out_max.is_null()) {
        (Some(geom), false) => {
            let pkg = curvature_package(geom);
            let s = pkg.scalar.samples(geom);
            *out_min = s.iter().cloned().fold(f64::INFINITY, f64::min);
            *out_max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Rg2Status::Ok
        }
        _ => {
            set_error("null handle or output");
            Rg2Status::InvalidArgument
        }
    }
}

/// Creates the rescaled geometry `lambda * g` as a new handle.
///
/// # Safety
/// `g` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rg2_geometry_rescale(
    g: *const Rg2Geometry,
    lambda: f64,
    out: *mut *mut Rg2Geometry,
) -> Rg2Status {
    let Some(geom) = geometry_ref(g) else {
        set_error("null handle");
        return Rg2Status::InvalidArgument;
    };
    match geom.rescale(lambda) {
        Ok(s) => emit(out, s),
        Err(e) => fail(e),
    }
}

/// Writes `alpha_g` of the geometry equipped with the constant density
/// exponent `f_const`.
///
/// # Safety
/// `g` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg2_alpha_g(
    g: *const Rg2Geometry,
    f_const: f64,
    out: *mut f64,
) -> Rg2Status {
    let Some(geom) = geometry_ref(g) else {
        set_error("null handle");
        return Rg2Status::InvalidArgument;
    };
    if out.is_null() {
        set_error("null output");
        return Rg2Status::InvalidArgument;
    }
    match alpha_g(geom, &ScalarField::Constant(f_const)) {
        Ok(a) => {
            *out = a;
            Rg2Status::Ok
        }
        Err(e) => fail(e),
    }
}

/// Writes the weak-parabolicity margin `min(1 + alpha K)` over the
/// sectional range.
///
/// # Safety
/// `g` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg2_parabolicity_margin(
    g: *const Rg2Geometry,
    alpha: f64,
    out: *mut f64,
) -> Rg2Status {
    match (geometry_ref(g), out.is_null()) {
        (Some(geom), false) => {
            *out = rg2flow::flow::parabolicity_margin(geom, alpha);
            Rg2Status::Ok
        }
        _ => {
            set_error("null handle or output");
            Rg2Status::InvalidArgument
        }
    }
}

/// Integrates the fixed-coupling flow from the geometry with a constant
/// density exponent and writes the final metric coefficients into
/// `coeffs_out` (length `coeffs_len`, the class coefficient count:
/// 1, 3, or `2n`). Returns the number of coefficients written through
/// `written`.
///
/// # Safety
/// `g` must be a live handle; `coeffs_out` must hold `coeffs_len` doubles;
/// `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg2_flow_run_plain(
    g: *const Rg2Geometry,
    alpha: f64,
    f_const: f64,
    dt: f64,
    steps: usize,
    coeffs_out: *mut f64,
    coeffs_len: usize,
    written: *mut usize,
) -> Rg2Status {
    let Some(geom) = geometry_ref(g) else {
        set_error("null handle");
        return Rg2Status::InvalidArgument;
    };
    if coeffs_out.is_null() || written.is_null() {
        set_error("null output");
        return Rg2Status::InvalidArgument;
    }
    let run = (|| -> Result<Vec<f64>, RgError> {
        let density = DensityData::new(geom, ScalarField::Constant(f_const))?;
        let state = FlowState::plain(geom.clone(), density, DriftField::zero(geom), alpha)?;
        let traj = integrate_rg2(&state, dt, steps, FlowMode::Plain)?;
        if let Some(h) = traj.halted {
            return Err(RgError::DegenerateMetric {
                t: traj.states.last().map(|s| s.t).unwrap_or(0.0),
                reason: h,
            });
        }
        let coeffs = match &traj.states.last().unwrap().geometry {
            Geometry::ConstantCurvature(cc) => vec![cc.scale],
            Geometry::Homogeneous3(h3) => h3.coeff.to_vec(),
            Geometry::WarpedTorus(wt) => {
                let mut v = wt.rho.clone();
                v.extend_from_slice(&wt.phi);
                v
            }
        };
        Ok(coeffs)
    })();
    match run {
        Ok(coeffs) => {
            if coeffs.len() > coeffs_len {
                set_error("output buffer too small for the class coefficients");
                return Rg2Status::InvalidArgument;
            }
            std::ptr::copy_nonoverlapping(coeffs.as_ptr(), coeffs_out, coeffs.len());
            *written = coeffs.len();
            Rg2Status::Ok
        }
        Err(e) => fail(e),
    }
}

/// Writes the scaling factor of the constant-curvature solution at flow
/// time `t` from the implicit branch relation through `sigma(0) = 1`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg2_implicit_sigma(
    t: f64,
    curvature: f64,
    dim: u32,
    alpha: f64,
    out: *mut f64,
) -> Rg2Status {
    if out.is_null() {
        set_error("null output");
        return Rg2Status::InvalidArgument;
    }
    match constant_curvature_implicit_sigma(t, curvature, dim, alpha) {
        Ok(s) => {
            *out = s;
            Rg2Status::Ok
        }
        Err(e) => fail(e),
    }
}

/// Solves the coupled constrained eigenvalue problem and writes the
/// functional value and its two eigenvalues.
///
/// # Safety
/// `g` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn rg2_capital_lambda(
    g: *const Rg2Geometry,
    alpha: f64,
    out_lambda: *mut f64,
    out_lambda1: *mut f64,
    out_lambda2: *mut f64,
) -> Rg2Status {
    let Some(geom) = geometry_ref(g) else {
        set_error("null handle");
        return Rg2Status::InvalidArgument;
    };
    if out_lambda.is_null() || out_lambda1.is_null() || out_lambda2.is_null() {
        set_error("null output");
        return Rg2Status::InvalidArgument;
    }
    match capital_lambda(geom, alpha) {
        Ok(res) => {
            *out_lambda = res.capital_lambda;
            *out_lambda1 = res.lambda1;
            *out_lambda2 = res.lambda2;
            Rg2Status::Ok
        }
        Err(e) => fail(e),
    }
}

/// Parses a scenario config from a UTF-8 TOML string, runs it, and writes
/// the artifact set into `out_dir`. Returns `Ok` when every toggled
/// verification passed and `VerificationFailed` otherwise.
///
/// # Safety
/// `config_toml` and `out_dir` must be NUL-terminated UTF-8 strings.
#[no_mangle]
pub unsafe extern "C" fn rg2_run_scenario_toml(
    config_toml: *const c_char,
    out_dir: *const c_char,
) -> Rg2Status {
    if config_toml.is_null() || out_dir.is_null() {
        set_error("null string argument");
        return Rg2Status::InvalidArgument;
    }
    let Ok(text) = CStr::from_ptr(config_toml).to_str() else {
        set_error("config is not valid UTF-8");
        return Rg2Status::InvalidArgument;
    };
    let Ok(dir) = CStr::from_ptr(out_dir).to_str() else {
        set_error("output directory is not valid UTF-8");
        return Rg2Status::InvalidArgument;
    };
    let config = match ScenarioConfig::from_toml(text) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    match run_scenario(&config, text, Path::new(dir), false) {
        Ok(art) if art.all_pass => Rg2Status::Ok,
        Ok(art) => {
            set_error(&format!(
                "verification failures in {}",
                art.out_dir.display()
            ));
            Rg2Status::VerificationFailed
        }
        Err(e) => fail(e),
    }
}
