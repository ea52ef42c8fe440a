//! Time integration of the flows: the plain fixed-coupling evolution, the
//! scale-invariant coupled system, the backward-time drift evolution, the
//! drift-modified gradient (DeTurck-type) system, and the see-saw driver
//! that composes the three passes.
//!
//! All integrators are explicit RK4 on the symmetry-reduced coordinates.
//! Trajectories store every step so the backward pass can linearly
//! interpolate the reversed metric path; the interpolation error budget is
//! second order in the step, matching the stage accuracy this use requires.

use crate::chart::{ChartTensor, TorusChart};
use crate::curvature::{
    bakry_emery_ricci, curvature_package, drift_modified_rm2, SymmetricTensorField, VectorField,
};
use crate::density::{alpha_from_mass, fokker_planck_step, DensityData, DriftField};
use crate::error::{Result, RgError};
use crate::geometry::{Geometry, ScalarField};

/// Integration mode for the metric flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowMode {
    /// Fixed, externally supplied coupling.
    Plain,
    /// Coupling derived once from the initial measure.
    ScaleInvariant,
}

/// One point of a flow: geometry, measure, drift, time, coupling.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub geometry: Geometry,
    pub density: DensityData,
    pub drift: DriftField,
    pub t: f64,
    pub alpha: f64,
}

impl FlowState {
    /// Plain mode: the coupling is the supplied constant.
    pub fn plain(
        geometry: Geometry,
        density: DensityData,
        drift: DriftField,
        alpha: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(RgError::InvalidCoupling(alpha));
        }
        density.f.require_conforms(&geometry, "FlowState")?;
        Ok(FlowState {
            geometry,
            density,
            drift,
            t: 0.0,
            alpha,
        })
    }

    /// Scale-invariant mode: `alpha = alpha_g` of the initial data, never
    /// recomputed along the flow (mass conservation keeps it meaningful).
    pub fn scale_invariant(
        geometry: Geometry,
        density: DensityData,
        drift: DriftField,
    ) -> Result<Self> {
        density.f.require_conforms(&geometry, "FlowState")?;
        let alpha = density.alpha(&geometry);
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(RgError::InvalidCoupling(alpha));
        }
        Ok(FlowState {
            geometry,
            density,
            drift,
            t: 0.0,
            alpha,
        })
    }
}

/// Per-snapshot diagnostics.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub t: f64,
    pub margin: f64,
    pub alpha_recomputed: f64,
    pub mass_residual: f64,
    pub rhs_norm: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub xi_max_norm_sq: f64,
}

/// Stored flow history: one state and one diagnostics record per step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<FlowState>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// reason for an early halt, when one occurred
    pub halted: Option<String>,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        if self.states.len() >= 2 {
            self.states[1].t - self.states[0].t
        } else {
            0.0
        }
    }

    pub fn last(&self) -> &FlowState {
        self.states.last().expect("trajectory is never empty")
    }
}

/// `-2 Ric - (alpha/2) Rm2` in class representation.
pub fn rg2_rhs(g: &Geometry, alpha: f64) -> SymmetricTensorField {
    let pkg = curvature_package(g);
    pkg.ricci.scaled(-2.0).add(&pkg.rm_sq.scaled(-0.5 * alpha))
}

/// Minimum of `1 + alpha K` over the class's sectional range; positive iff
/// the weak-parabolicity condition holds.
pub fn parabolicity_margin(g: &Geometry, alpha: f64) -> f64 {
    let (kmin, kmax) = curvature_package(g).sectional_range;
    (1.0 + alpha * kmin).min(1.0 + alpha * kmax)
}

// --- metric coordinates -----------------------------------------------------

/// Flat coordinate vector of the evolving metric degrees of freedom.
pub(crate) fn metric_coords(g: &Geometry) -> Vec<f64> {
    match g {
        Geometry::ConstantCurvature(cc) => vec![cc.scale],
        Geometry::Homogeneous3(h) => h.coeff.to_vec(),
        Geometry::WarpedTorus(wt) => {
            let mut v = wt.rho.clone();
            v.extend_from_slice(&wt.phi);
            v
        }
    }
}

pub(crate) fn geometry_from_coords(template: &Geometry, coords: &[f64]) -> Result<Geometry> {
    match template {
        Geometry::ConstantCurvature(cc) => {
            Geometry::constant_curvature(cc.dim, cc.curvature, coords[0])
        }
        Geometry::Homogeneous3(h) => {
            Geometry::homogeneous3(h.structure, [coords[0], coords[1], coords[2]])
        }
        Geometry::WarpedTorus(wt) => {
            let n = wt.grid.len();
            Geometry::warped_torus(
                n,
                wt.grid.length(),
                coords[..n].to_vec(),
                coords[n..].to_vec(),
            )
        }
    }
}

/// Coordinate velocity induced by a metric velocity `dg/dt = v`.
fn coords_velocity(g: &Geometry, v: &SymmetricTensorField) -> Vec<f64> {
    match (g, v) {
        (Geometry::ConstantCurvature(cc), SymmetricTensorField::Isotropic(c)) => {
            vec![c * cc.scale]
        }
        (Geometry::Homogeneous3(_), SymmetricTensorField::FrameDiagonal(t)) => t.to_vec(),
        (Geometry::WarpedTorus(wt), SymmetricTensorField::TorusDiagonal { rr, thth }) => {
            let n = wt.grid.len();
            let mut out = Vec::with_capacity(2 * n);
            for i in 0..n {
                out.push(rr[i] / (2.0 * wt.rho[i]));
            }
            for i in 0..n {
                out.push(thth[i] / (2.0 * wt.phi[i]));
            }
            out
        }
        _ => panic!("mixed representations"),
    }
}

/// Log volume density (per class node) used to keep `e^{-f} dmu` constant.
fn log_vol_density(g: &Geometry) -> Vec<f64> {
    match g {
        Geometry::ConstantCurvature(cc) => {
            vec![0.5 * cc.dim as f64 * cc.scale.ln()]
        }
        Geometry::Homogeneous3(h) => {
            vec![0.5 * (h.coeff[0] * h.coeff[1] * h.coeff[2]).ln()]
        }
        Geometry::WarpedTorus(wt) => (0..wt.grid.len())
            .map(|i| (wt.rho[i] * wt.phi[i]).ln())
            .collect(),
    }
}

/// Density exponent keeping `e^{-f} dmu` equal to its value on `(g0, f0)`.
pub fn measure_preserving_f(g0: &Geometry, f0: &ScalarField, g: &Geometry) -> ScalarField {
    let l0 = log_vol_density(g0);
    let l1 = log_vol_density(g);
    let f0s = f0.samples(g0);
    let vals: Vec<f64> = (0..l1.len())
        .map(|i| f0s[i.min(f0s.len() - 1)] + l1[i] - l0[i])
        .collect();
    match g {
        Geometry::WarpedTorus(_) => ScalarField::Profile(vals),
        _ => ScalarField::Constant(vals[0]),
    }
}

fn blow_up_check(g0: &Geometry, g: &Geometry, rhs_norm: f64, t: f64) -> Result<()> {
    let c0 = metric_coords(g0);
    let c1 = metric_coords(g);
    for (a, b) in c0.iter().zip(&c1) {
        if !b.is_finite() || b.abs() < 1e-8 * a.abs() {
            return Err(RgError::DegenerateMetric {
                t,
                reason: "metric coefficient below 1e-8 of its initial value".into(),
            });
        }
    }
    if rhs_norm > 1e8 {
        return Err(RgError::DegenerateMetric {
            t,
            reason: format!("right-hand side norm {rhs_norm} exceeds 1e8"),
        });
    }
    Ok(())
}

fn rhs_sup_norm(g: &Geometry, v: &SymmetricTensorField) -> f64 {
    match v.norm_sq(g) {
        ScalarField::Constant(c) => c.sqrt(),
        ScalarField::Profile(p) => p.into_iter().fold(0.0f64, f64::max).sqrt(),
    }
}

fn diagnostics_for(state: &FlowState, initial_mass: f64, rhs_norm: f64) -> StepDiagnostics {
    let pkg = curvature_package(&state.geometry);
    let mass = state.density.mass(&state.geometry);
    let scalar = pkg.scalar.samples(&state.geometry);
    let xi_sq = state
        .drift
        .assembled(&state.geometry)
        .map(|v| v.max_norm_sq(&state.geometry))
        .unwrap_or(f64::NAN);
    StepDiagnostics {
        t: state.t,
        margin: parabolicity_margin(&state.geometry, state.alpha),
        alpha_recomputed: alpha_from_mass(mass, state.geometry.dim()),
        mass_residual: ((mass - initial_mass) / initial_mass).abs(),
        rhs_norm,
        r_min: scalar.iter().cloned().fold(f64::INFINITY, f64::min),
        r_max: scalar.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        xi_max_norm_sq: xi_sq,
    }
}

/// Method-of-lines RK4 trajectory of the metric flow. The measure rides
/// along in the measure-preserving gauge (`dw` constant in `t`); the drift is
/// a spectator in these modes.
pub fn integrate_rg2(
    state: &FlowState,
    dt: f64,
    steps: usize,
    mode: FlowMode,
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(RgError::StepSize { dt, bound: 0.0 });
    }
    let alpha = state.alpha;
    let margin0 = parabolicity_margin(&state.geometry, alpha);
    if margin0 <= 0.0 {
        return Err(RgError::NotParabolic { margin: margin0 });
    }
    let _ = mode; // both modes integrate the same vector field at fixed alpha

    let g0 = state.geometry.clone();
    let f0 = state.density.f.clone();
    let initial_mass = state.density.mass(&g0);

    let mut states = Vec::with_capacity(steps + 1);
    let mut diagnostics = Vec::with_capacity(steps + 1);
    let mut halted = None;

    let mut current = state.clone();
    let rhs0 = rg2_rhs(&current.geometry, alpha);
    diagnostics.push(diagnostics_for(
        &current,
        initial_mass,
        rhs_sup_norm(&current.geometry, &rhs0),
    ));
    states.push(current.clone());

    'outer: for step in 0..steps {
        let t = state.t + step as f64 * dt;
        let coords = metric_coords(&current.geometry);
        let template = current.geometry.clone();
        let deriv = |c: &[f64]| -> Result<Vec<f64>> {
            let g = geometry_from_coords(&template, c)?;
            let v = rg2_rhs(&g, alpha);
            Ok(coords_velocity(&g, &v))
        };
        let next = match rk4_vec(&coords, dt, deriv) {
            Ok(v) => v,
            Err(e) => {
                halted = Some(format!("step {step}: {e}"));
                break 'outer;
            }
        };
        let g_next = match geometry_from_coords(&current.geometry, &next) {
            Ok(g) => g,
            Err(e) => {
                halted = Some(format!("step {step}: {e}"));
                break 'outer;
            }
        };
        let rhs = rg2_rhs(&g_next, alpha);
        let rhs_norm = rhs_sup_norm(&g_next, &rhs);
        if let Err(e) = blow_up_check(&g0, &g_next, rhs_norm, t + dt) {
            halted = Some(e.to_string());
            break 'outer;
        }
        let f_next = measure_preserving_f(&g0, &f0, &g_next);
        current = FlowState {
            geometry: g_next,
            density: DensityData {
                f: f_next,
                normalized: state.density.normalized,
            },
            drift: current.drift.clone(),
            t: t + dt,
            alpha,
        };
        let diag = diagnostics_for(&current, initial_mass, rhs_norm);
        let margin = diag.margin;
        diagnostics.push(diag);
        states.push(current.clone());
        if margin <= 0.0 {
            halted = Some(format!(
                "weak-parabolicity margin {margin} at t = {}",
                current.t
            ));
            break 'outer;
        }
    }

    Ok(Trajectory {
        states,
        diagnostics,
        halted,
    })
}

fn rk4_vec(
    y0: &[f64],
    dt: f64,
    mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let n = y0.len();
    let k1 = f(y0)?;
    let mut tmp = vec![0.0; n];
    for i in 0..n {
        tmp[i] = y0[i] + 0.5 * dt * k1[i];
    }
    let k2 = f(&tmp)?;
    for i in 0..n {
        tmp[i] = y0[i] + 0.5 * dt * k2[i];
    }
    let k3 = f(&tmp)?;
    for i in 0..n {
        tmp[i] = y0[i] + dt * k3[i];
    }
    let k4 = f(&tmp)?;
    Ok((0..n)
        .map(|i| y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Scaling factor of the constant-curvature solution from the implicit
/// relation
/// `sigma = -2K(n-1) t + 1 + (alpha K / 2) ln |(2 sigma + alpha K)/(2 + alpha K)|`,
/// solved by Newton continuation along the branch through `sigma(0) = 1`.
pub fn constant_curvature_implicit_sigma(t: f64, k: f64, n: u32, alpha: f64) -> Result<f64> {
    if k == 0.0 {
        return Ok(1.0);
    }
    let denom = 2.0 + alpha * k;
    if denom.abs() < 1e-14 {
        return Err(RgError::BranchJump {
            t: 0.0,
            lo: denom,
            hi: denom,
        });
    }
    let nn = n as f64;
    let g_fun = |sigma: f64, tt: f64| -> f64 {
        sigma + 2.0 * k * (nn - 1.0) * tt
            - 1.0
            - 0.5 * alpha * k * ((2.0 * sigma + alpha * k) / denom).abs().ln()
    };
    let g_prime = |sigma: f64| -> f64 { 2.0 * sigma / (2.0 * sigma + alpha * k) };

    // continuation in t keeps Newton on the branch containing sigma = 1
    let substeps = (t.abs() / 0.01).ceil().max(1.0) as usize;
    let mut sigma = 1.0;
    for s in 1..=substeps {
        let tt = t * s as f64 / substeps as f64;
        let mut converged = false;
        for _ in 0..100 {
            let gp = g_prime(sigma);
            if !gp.is_finite() || gp.abs() < 1e-14 {
                return Err(RgError::BranchJump {
                    t: tt,
                    lo: sigma,
                    hi: sigma,
                });
            }
            let step = g_fun(sigma, tt) / gp;
            let next = sigma - step;
            // the argument of the logarithm must keep its sign
            if !(next.is_finite()) || (2.0 * next + alpha * k) * denom <= 0.0 || next <= 0.0 {
                return Err(RgError::BranchJump {
                    t: tt,
                    lo: sigma.min(next),
                    hi: sigma.max(next),
                });
            }
            sigma = next;
            if step.abs() < 1e-13 * sigma.max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(RgError::BranchJump {
                t: tt,
                lo: sigma,
                hi: sigma,
            });
        }
    }
    debug_assert!(g_fun(sigma, t).abs() < 1e-11);
    Ok(sigma)
}

// --- metric paths and the backward-time passes -------------------------------

/// Piecewise-linear (in the reduced coordinates) metric path built from
/// stored snapshots; supports exact reversal for the backward passes.
#[derive(Debug, Clone)]
pub struct MetricPath {
    template: Geometry,
    coords: Vec<Vec<f64>>,
    dt: f64,
}

impl MetricPath {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        MetricPath {
            template: traj.states[0].geometry.clone(),
            coords: traj
                .states
                .iter()
                .map(|s| metric_coords(&s.geometry))
                .collect(),
            dt: traj.dt(),
        }
    }

    pub fn frozen(g: &Geometry) -> Self {
        MetricPath {
            template: g.clone(),
            coords: vec![metric_coords(g)],
            dt: 1.0,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.dt * (self.coords.len() - 1).max(0) as f64
    }

    /// Geometry at forward time `t`, linear interpolation between snapshots.
    pub fn at(&self, t: f64) -> Result<Geometry> {
        if self.coords.len() == 1 {
            return geometry_from_coords(&self.template, &self.coords[0]);
        }
        let s = (t / self.dt).clamp(0.0, (self.coords.len() - 1) as f64);
        let i = (s.floor() as usize).min(self.coords.len() - 2);
        let w = s - i as f64;
        let c: Vec<f64> = self.coords[i]
            .iter()
            .zip(&self.coords[i + 1])
            .map(|(a, b)| a * (1.0 - w) + b * w)
            .collect();
        geometry_from_coords(&self.template, &c)
    }

    /// Geometry at backward time `eta = horizon - t`.
    pub fn at_eta(&self, eta: f64) -> Result<Geometry> {
        if self.coords.len() == 1 {
            return self.at(0.0);
        }
        self.at(self.horizon() - eta)
    }
}

/// The contraction `xi * T`, components `xi^i g^{hk} T_{ih}` for a diagonal
/// tensor and a class vector field.
fn xi_star(g: &Geometry, xi: &VectorField, t: &SymmetricTensorField) -> VectorField {
    match (g, xi, t) {
        (
            Geometry::ConstantCurvature(_),
            VectorField::Frame(v),
            SymmetricTensorField::Isotropic(c),
        ) => VectorField::Frame(v.iter().map(|x| c * x).collect()),
        (
            Geometry::Homogeneous3(h),
            VectorField::Frame(v),
            SymmetricTensorField::FrameDiagonal(t),
        ) => VectorField::Frame((0..3).map(|i| v[i] * t[i] / h.coeff[i]).collect()),
        (
            Geometry::WarpedTorus(wt),
            VectorField::Torus { radial, killing },
            SymmetricTensorField::TorusDiagonal { rr, thth },
        ) => {
            let n = wt.grid.len();
            let rad: Vec<f64> = (0..n)
                .map(|i| radial[i] * rr[i] / (wt.rho[i] * wt.rho[i]))
                .collect();
            // a spatially varying T_tt would not keep a Killing coefficient
            // constant; evolution ops require killing = 0 (checked upstream)
            let kill = killing * thth[0] / (wt.phi[0] * wt.phi[0]);
            VectorField::Torus {
                radial: rad,
                killing: kill,
            }
        }
        _ => panic!("mixed representations"),
    }
}

fn require_no_killing(g: &Geometry, xi: &VectorField) -> Result<()> {
    if let (Geometry::WarpedTorus(_), VectorField::Torus { killing, .. }) = (g, xi) {
        if killing.abs() > 0.0 {
            return Err(RgError::UnsupportedClass {
                class: "warped-torus".into(),
                what: "evolving a drift field with a Killing component".into(),
            });
        }
    }
    Ok(())
}

/// Rough Laplacian of a vector field, computed on the torus through the
/// 1-form chart machinery; zero componentwise on the frame classes.
fn rough_laplacian_vector(g: &Geometry, xi: &VectorField) -> Result<VectorField> {
    match (g, xi) {
        (Geometry::WarpedTorus(wt), VectorField::Torus { radial, .. }) => {
            require_no_killing(g, xi)?;
            let chart = TorusChart::new(wt);
            let n = wt.grid.len();
            let mut flat = ChartTensor::zeros(1, n);
            for i in 0..n {
                flat.get_mut(&[0])[i] = wt.rho[i] * wt.rho[i] * radial[i];
            }
            let lap = chart.rough_laplacian(&flat);
            Ok(VectorField::Torus {
                radial: (0..n)
                    .map(|i| lap.get(&[0])[i] / (wt.rho[i] * wt.rho[i]))
                    .collect(),
                killing: 0.0,
            })
        }
        _ => Ok(VectorField::zero(g)),
    }
}

/// `<grad f, nabla xi>` correction turning the rough Laplacian into its
/// weighted version.
fn grad_f_derivative_vector(
    g: &Geometry,
    f: &ScalarField,
    xi: &VectorField,
) -> Result<VectorField> {
    match (g, xi) {
        (Geometry::WarpedTorus(wt), VectorField::Torus { radial, .. }) => {
            require_no_killing(g, xi)?;
            let chart = TorusChart::new(wt);
            let n = wt.grid.len();
            let fs = f.samples(g);
            let df = wt.grid.deriv(&fs);
            let mut flat = ChartTensor::zeros(1, n);
            for i in 0..n {
                flat.get_mut(&[0])[i] = wt.rho[i] * wt.rho[i] * radial[i];
            }
            let contr = chart.grad_contraction(&df, &flat);
            Ok(VectorField::Torus {
                radial: (0..n)
                    .map(|i| contr.get(&[0])[i] / (wt.rho[i] * wt.rho[i]))
                    .collect(),
                killing: 0.0,
            })
        }
        _ => Ok(VectorField::zero(g)),
    }
}

fn scalar_times_vector(s: &ScalarField, v: &VectorField) -> VectorField {
    match (s, v) {
        (ScalarField::Constant(c), _) => v.scaled(*c),
        (ScalarField::Profile(p), VectorField::Torus { radial, killing }) => VectorField::Torus {
            radial: radial.iter().zip(p).map(|(x, c)| x * c).collect(),
            killing: *killing * p.first().copied().unwrap_or(0.0),
        },
        (ScalarField::Profile(_), VectorField::Frame(_)) => {
            panic!("profile scalar against frame vector")
        }
    }
}

/// Right side of the backward-time drift equation along the reversed metric
/// path:
/// `d xi/d eta = Lap xi - xi*(Ric + (1/4) aRm2) - (1/64)|aRm2|^2 xi`,
/// with `aRm2 = alpha Rm2(g, xi)`.
fn xi_rhs_eta(g: &Geometry, xi: &VectorField, alpha: f64) -> Result<VectorField> {
    let pkg = curvature_package(g);
    let mod_rm2 = drift_modified_rm2(g, xi, alpha)?;
    let star_arg = pkg.ricci.add(&mod_rm2.scaled(0.25));
    let star = xi_star(g, xi, &star_arg);
    let norm_sq = mod_rm2.norm_sq(g);
    let reaction = scalar_times_vector(&norm_sq, xi).scaled(1.0 / 64.0);
    let lap = rough_laplacian_vector(g, xi)?;
    Ok(lap.sub(&star).sub(&reaction))
}

/// Explicit step bound for the drift evolution on a given geometry.
pub fn xi_step_bound(g: &Geometry) -> f64 {
    match g {
        Geometry::WarpedTorus(wt) => {
            let h = wt.grid.spacing();
            let min_rho2 = wt
                .rho
                .iter()
                .map(|r| r * r)
                .fold(f64::INFINITY, f64::min);
            0.25 * h * h * min_rho2
        }
        _ => f64::INFINITY,
    }
}

/// One RK4 step of the drift evolution in backward time `eta`, along the
/// reversed metric path. `xi = 0` is an exact fixed point.
pub fn xi_evolution_step(
    path: &MetricPath,
    eta: f64,
    xi: &VectorField,
    alpha: f64,
    d_eta: f64,
) -> Result<VectorField> {
    let g_here = path.at_eta(eta)?;
    let bound = xi_step_bound(&g_here);
    if d_eta > bound {
        return Err(RgError::StepSize { dt: d_eta, bound });
    }
    require_no_killing(&g_here, xi)?;
    let k1 = xi_rhs_eta(&g_here, xi, alpha)?;
    let g_mid = path.at_eta(eta + 0.5 * d_eta)?;
    let k2 = xi_rhs_eta(&g_mid, &xi.add(&k1.scaled(0.5 * d_eta)), alpha)?;
    let k3 = xi_rhs_eta(&g_mid, &xi.add(&k2.scaled(0.5 * d_eta)), alpha)?;
    let g_end = path.at_eta(eta + d_eta)?;
    let k4 = xi_rhs_eta(&g_end, &xi.add(&k3.scaled(d_eta)), alpha)?;
    Ok(xi
        .add(&k1.scaled(d_eta / 6.0))
        .add(&k2.scaled(d_eta / 3.0))
        .add(&k3.scaled(d_eta / 3.0))
        .add(&k4.scaled(d_eta / 6.0)))
}

// --- DeTurck-type gradient system -------------------------------------------

/// Right sides of the pulled-back system at one configuration.
fn deturck_rhs(
    g: &Geometry,
    f: &ScalarField,
    xi: &VectorField,
    alpha: f64,
) -> Result<(SymmetricTensorField, VectorField)> {
    let be = bakry_emery_ricci(g, f)?;
    let mod_rm2 = drift_modified_rm2(g, xi, alpha)?;
    let v = be.scaled(-2.0).add(&mod_rm2.scaled(-0.5));
    let lap = rough_laplacian_vector(g, xi)?;
    let weighted_corr = grad_f_derivative_vector(g, f, xi)?;
    let lap_w = lap.sub(&weighted_corr);
    let star = xi_star(g, xi, &be.add(&mod_rm2.scaled(0.25)));
    let norm_sq = mod_rm2.norm_sq(g);
    let reaction = scalar_times_vector(&norm_sq, xi).scaled(1.0 / 64.0);
    let xi_dot = star.add(&reaction).sub(&lap_w);
    Ok((v, xi_dot))
}

/// One RK4 step of the pulled-back gradient system. The measure `dw` is held
/// exactly fixed: `f` is reconstructed from the metric volume change at every
/// stage instead of being integrated.
pub fn deturck_step(state: &FlowState, dt: f64) -> Result<FlowState> {
    let alpha = state.alpha;
    let margin = parabolicity_margin(&state.geometry, alpha);
    if margin <= 0.0 {
        return Err(RgError::NotParabolic { margin });
    }
    let g0 = state.geometry.clone();
    let f0 = state.density.f.clone();
    let xi0 = state.drift.assembled(&g0)?;
    require_no_killing(&g0, &xi0)?;
    if let Geometry::WarpedTorus(_) = &g0 {
        let bound =
            xi_step_bound(&g0).min(crate::density::fokker_planck_step_bound(&g0, &f0));
        if dt > bound {
            return Err(RgError::StepSize { dt, bound });
        }
    }

    let n_coords = metric_coords(&g0).len();
    let pack = |g: &Geometry, xi: &VectorField| -> Vec<f64> {
        let mut v = metric_coords(g);
        match xi {
            VectorField::Frame(c) => v.extend_from_slice(c),
            VectorField::Torus { radial, killing } => {
                v.extend_from_slice(radial);
                v.push(*killing);
            }
        }
        v
    };
    let unpack = |y: &[f64]| -> Result<(Geometry, VectorField)> {
        let g = geometry_from_coords(&g0, &y[..n_coords])?;
        let xi = match &xi0 {
            VectorField::Frame(c) => {
                VectorField::Frame(y[n_coords..n_coords + c.len()].to_vec())
            }
            VectorField::Torus { radial, .. } => VectorField::Torus {
                radial: y[n_coords..n_coords + radial.len()].to_vec(),
                killing: y[n_coords + radial.len()],
            },
        };
        Ok((g, xi))
    };

    let y0 = pack(&g0, &xi0);
    let deriv = |y: &[f64]| -> Result<Vec<f64>> {
        let (g, xi) = unpack(y)?;
        let f = measure_preserving_f(&g0, &f0, &g);
        let (v, xi_dot) = deturck_rhs(&g, &f, &xi, alpha)?;
        let mut out = coords_velocity(&g, &v);
        match xi_dot {
            VectorField::Frame(c) => out.extend_from_slice(&c),
            VectorField::Torus { radial, killing } => {
                out.extend_from_slice(&radial);
                out.push(killing);
            }
        }
        Ok(out)
    };
    let y1 = rk4_vec(&y0, dt, deriv)?;
    let (g1, xi1) = unpack(&y1)?;
    let f1 = measure_preserving_f(&g0, &f0, &g1);
    Ok(FlowState {
        geometry: g1.clone(),
        density: DensityData {
            f: f1,
            normalized: state.density.normalized,
        },
        drift: DriftField {
            psi: ScalarField::zero(&g1),
            perp: xi1,
        },
        t: state.t + dt,
        alpha,
    })
}

/// Integrates the pulled-back gradient system, recording every step.
pub fn integrate_deturck(state: &FlowState, dt: f64, steps: usize) -> Result<Trajectory> {
    let initial_mass = state.density.mass(&state.geometry);
    let mut states = vec![state.clone()];
    let mut diagnostics = vec![diagnostics_for(state, initial_mass, 0.0)];
    let mut halted = None;
    let mut current = state.clone();
    for step in 0..steps {
        match deturck_step(&current, dt) {
            Ok(next) => {
                let rhs = rg2_rhs(&next.geometry, state.alpha);
                let rhs_norm = rhs_sup_norm(&next.geometry, &rhs);
                diagnostics.push(diagnostics_for(&next, initial_mass, rhs_norm));
                states.push(next.clone());
                current = next;
                if diagnostics.last().unwrap().margin <= 0.0 {
                    halted = Some(format!("weak-parabolicity margin at t = {}", current.t));
                    break;
                }
            }
            Err(e) => {
                halted = Some(format!("step {step}: {e}"));
                break;
            }
        }
    }
    Ok(Trajectory {
        states,
        diagnostics,
        halted,
    })
}

// --- see-saw ------------------------------------------------------------------

/// Forward metric pass on `[0, T0]`, then the drift by its backward-time
/// equation and the measure by the Fokker–Planck equation, both forward in
/// `eta = T0 - t` along the stored reversed path; returns the merged
/// trajectory indexed by `t`.
pub fn seesaw_solve(initial: &FlowState, t0: f64, dt: f64) -> Result<Trajectory> {
    let steps_f = t0 / dt;
    let steps = steps_f.round() as usize;
    if steps == 0 || (steps_f - steps as f64).abs() > 1e-9 * steps_f.max(1.0) {
        return Err(RgError::Alignment(format!(
            "horizon {t0} is not an integer multiple of dt = {dt}"
        )));
    }

    // (i) forward metric pass
    let forward = integrate_rg2(initial, dt, steps, FlowMode::ScaleInvariant)?;
    if forward.halted.is_some() || forward.states.len() != steps + 1 {
        return Err(RgError::DegenerateMetric {
            t: forward.last().t,
            reason: forward
                .halted
                .clone()
                .unwrap_or_else(|| "forward pass incomplete".into()),
        });
    }
    let path = MetricPath::from_trajectory(&forward);
    let alpha = initial.alpha;

    // (ii) drift pass forward in eta
    let mut xis = Vec::with_capacity(steps + 1);
    xis.push(initial.drift.assembled(&initial.geometry)?);
    for k in 0..steps {
        let eta = k as f64 * dt;
        let xi_next = xi_evolution_step(&path, eta, xis.last().unwrap(), alpha, dt)?;
        xis.push(xi_next);
    }

    // (iii) measure pass forward in eta: Strang split between the metric
    // re-basing (exact) and the frozen-metric Fokker–Planck step. The
    // supplied density defines the measure dw0 = e^{-f0} dmu_{g0}; its
    // Cauchy data for the eta-pass is that same measure expressed against
    // the eta = 0 geometry g(T0).
    let mut fs = Vec::with_capacity(steps + 1);
    let g_eta0 = path.at_eta(0.0)?;
    fs.push(measure_preserving_f(
        &initial.geometry,
        &initial.density.f,
        &g_eta0,
    ));
    for k in 0..steps {
        let eta = k as f64 * dt;
        let g_here = path.at_eta(eta)?;
        let g_mid = path.at_eta(eta + 0.5 * dt)?;
        let g_next = path.at_eta(eta + dt)?;
        let f_half = measure_preserving_f(&g_here, fs.last().unwrap(), &g_mid);
        // drift at the midpoint of the step
        let xi_mid = xis[k].add(&xis[k + 1]).scaled(0.5);
        let xi_drift = DriftField {
            psi: ScalarField::zero(&g_mid),
            perp: xi_mid,
        };
        let f_evolved = fokker_planck_step(&g_mid, &f_half, &xi_drift, dt)?;
        let f_full = measure_preserving_f(&g_mid, &f_evolved, &g_next);
        fs.push(f_full);
    }

    // merge: state k at forward time t_k uses eta-index steps - k
    let initial_mass = initial.density.mass(&initial.geometry);
    let mut states = Vec::with_capacity(steps + 1);
    let mut diagnostics = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let geometry = forward.states[k].geometry.clone();
        let f = fs[steps - k].clone();
        let xi = xis[steps - k].clone();
        let state = FlowState {
            geometry: geometry.clone(),
            density: DensityData {
                f,
                normalized: initial.density.normalized,
            },
            drift: DriftField {
                psi: ScalarField::zero(&geometry),
                perp: xi,
            },
            t: k as f64 * dt,
            alpha,
        };
        let rhs = rg2_rhs(&state.geometry, alpha);
        let rhs_norm = rhs_sup_norm(&state.geometry, &rhs);
        diagnostics.push(diagnostics_for(&state, initial_mass, rhs_norm));
        states.push(state);
    }
    Ok(Trajectory {
        states,
        diagnostics,
        halted: None,
    })
}

// --- scaling symmetry ---------------------------------------------------------

/// Maximum relative deviations of a rescaled trajectory from the parabolic
/// scaling law.
#[derive(Debug, Clone)]
pub struct ScaleSymmetryReport {
    pub lambda: f64,
    pub metric_deviation: f64,
    pub drift_deviation: f64,
    pub measure_deviation: f64,
}

impl ScaleSymmetryReport {
    pub fn max_deviation(&self) -> f64 {
        self.metric_deviation
            .max(self.drift_deviation)
            .max(self.measure_deviation)
    }
}

fn metric_components(g: &Geometry) -> Vec<f64> {
    match g {
        Geometry::ConstantCurvature(cc) => vec![cc.scale],
        Geometry::Homogeneous3(h) => h.coeff.to_vec(),
        Geometry::WarpedTorus(wt) => {
            let mut v: Vec<f64> = wt.rho.iter().map(|r| r * r).collect();
            v.extend(wt.phi.iter().map(|p| p * p));
            v
        }
    }
}

fn drift_components(xi: &VectorField) -> Vec<f64> {
    match xi {
        VectorField::Frame(v) => v.clone(),
        VectorField::Torus { radial, killing } => {
            let mut v = radial.clone();
            v.push(*killing);
            v
        }
    }
}

/// Compares `traj_lambda` (run from `lambda g0` with horizon `lambda T0` and
/// matched steps) against the rescaling of `traj`.
pub fn verify_scale_symmetry(
    traj: &Trajectory,
    lambda: f64,
    traj_lambda: &Trajectory,
) -> Result<ScaleSymmetryReport> {
    if traj.states.len() != traj_lambda.states.len() {
        return Err(RgError::Alignment(format!(
            "snapshot counts differ: {} vs {}",
            traj.states.len(),
            traj_lambda.states.len()
        )));
    }
    let n_dim = traj.states[0].geometry.dim() as f64;
    let mut metric_dev = 0.0f64;
    let mut drift_dev = 0.0f64;
    let mut measure_dev = 0.0f64;
    for (s, sl) in traj.states.iter().zip(&traj_lambda.states) {
        if traj.dt() > 0.0 && ((sl.t - lambda * s.t) / (lambda * traj.dt())).abs() > 1e-6 {
            return Err(RgError::Alignment(format!(
                "time stamps misaligned: {} vs lambda * {}",
                sl.t, s.t
            )));
        }
        let base = metric_components(&s.geometry);
        let resc = metric_components(&sl.geometry);
        let scale_ref = base
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-300);
        for (a, b) in base.iter().zip(&resc) {
            metric_dev = metric_dev.max((b - lambda * a).abs() / (lambda * scale_ref));
        }
        let xb = drift_components(&s.drift.assembled(&s.geometry)?);
        let xr = drift_components(&sl.drift.assembled(&sl.geometry)?);
        let xref = xb.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if xref > 1e-300 {
            for (a, b) in xb.iter().zip(&xr) {
                drift_dev = drift_dev.max((b - a / lambda).abs() / (xref / lambda));
            }
        }
        let wb = s.density.weights(&s.geometry);
        let wr = sl.density.weights(&sl.geometry);
        let factor = lambda.powf(n_dim / 2.0);
        let wref = wb.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for (a, b) in wb.iter().zip(&wr) {
            measure_dev = measure_dev.max((b - factor * a).abs() / (factor * wref));
        }
    }
    Ok(ScaleSymmetryReport {
        lambda,
        metric_deviation: metric_dev,
        drift_deviation: drift_dev,
        measure_deviation: measure_dev,
    })
}
