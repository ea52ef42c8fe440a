//! Scalar functionals and eigenvalue problems: Nash entropy and its
//! production, the energy functional `int (R + |grad f|^2) dw`, its drift
//! extension, the gradient-flow energy `F2`, the ground-state eigenvalue of
//! `-4 Lap + R`, the first weighted-Laplacian eigenvalue, the coupled
//! constrained minimization behind `Lambda`, the concave eigenvalue lower
//! bound, and monotonicity reporting along trajectories.
//!
//! Functional quadratures on the torus use spectral derivatives (the
//! reference values they are tested against are far below a second-order
//! truncation error), while the eigenproblems use compact three-point
//! stiffness forms whose discrete summation-by-parts identities make the
//! minimizer relations exact at the linear-algebra level.

use crate::curvature::{
    bakry_emery_ricci, curvature_package, drift_modified_rm2, SymmetricTensorField, VectorField,
};
use crate::chart::{ChartTensor, TorusChart};
use crate::density::DensityData;
use crate::error::{Result, RgError};
use crate::flow::{FlowState, Trajectory};
use crate::geometry::{Geometry, ScalarField, WarpedTorus};
use nalgebra::{DMatrix, DVector};

/// Entropy values attached to one snapshot.
#[derive(Debug, Clone)]
pub struct EntropyRecord {
    pub t: f64,
    pub nash: f64,
    pub nash_production: f64,
    pub f_energy: f64,
    pub f_ext: f64,
    pub f2: f64,
    pub rhs_bound: f64,
}

fn grad_sq_spectral(g: &Geometry, u: &ScalarField) -> Vec<f64> {
    match g {
        Geometry::WarpedTorus(wt) => {
            let us = u.samples(g);
            let du = wt.grid.spectral_deriv(&us);
            (0..wt.grid.len())
                .map(|i| du[i] * du[i] / (wt.rho[i] * wt.rho[i]))
                .collect()
        }
        _ => vec![0.0; 1],
    }
}

fn integrate_against(weights: &[f64], values: &[f64]) -> f64 {
    weights
        .iter()
        .zip(values)
        .map(|(w, v)| w * v)
        .sum::<f64>()
}

/// `int (R + |grad f|^2) dw`; by parts this equals the weighted integral of
/// the modified scalar curvature.
pub fn perelman_f(g: &Geometry, f: &ScalarField) -> Result<f64> {
    f.require_conforms(g, "perelman_f")?;
    let dd = DensityData::new(g, f.clone())?;
    let w = dd.weights(g);
    let r = curvature_package(g).scalar.samples(g);
    let gsq = grad_sq_spectral(g, f);
    Ok(integrate_against(&w, &r) + integrate_against(&w, &gsq))
}

/// The same energy through the modified scalar curvature,
/// `int (R + 2 Lap f - |grad f|^2) dw`, with the spectral operators; equals
/// [`perelman_f`] by discrete integration by parts up to aliasing.
pub fn perelman_f_via_modified_scalar(g: &Geometry, f: &ScalarField) -> Result<f64> {
    f.require_conforms(g, "perelman_f_via_modified_scalar")?;
    let dd = DensityData::new(g, f.clone())?;
    let w = dd.weights(g);
    let r = curvature_package(g).scalar.samples(g);
    match g {
        Geometry::WarpedTorus(wt) => {
            let fs = f.samples(g);
            // Lap u = (1/sqrt(g)) d_r(sqrt(g) g^{rr} d_r u), spectral route
            let df = wt.grid.spectral_deriv(&fs);
            let flux: Vec<f64> = (0..wt.grid.len())
                .map(|i| wt.phi[i] / wt.rho[i] * df[i])
                .collect();
            let dflux = wt.grid.spectral_deriv(&flux);
            let gsq = grad_sq_spectral(g, f);
            let vals: Vec<f64> = (0..wt.grid.len())
                .map(|i| r[i] + 2.0 * dflux[i] / (wt.rho[i] * wt.phi[i]) - gsq[i])
                .collect();
            Ok(integrate_against(&w, &vals))
        }
        _ => Ok(integrate_against(&w, &r)),
    }
}

/// `int (R + |grad f|^2 + |grad psi|^2) dw`.
pub fn extended_f(g: &Geometry, f: &ScalarField, psi: &ScalarField) -> Result<f64> {
    psi.require_conforms(g, "extended_f")?;
    let dd = DensityData::new(g, f.clone())?;
    let w = dd.weights(g);
    let gsq = grad_sq_spectral(g, psi);
    Ok(perelman_f(g, f)? + integrate_against(&w, &gsq))
}

/// Extended energy of a flow state, with the Dirichlet term evaluated on the
/// assembled drift: `int (R + |grad f|^2 + |xi|^2) dw`.
pub fn extended_f_state(state: &FlowState) -> Result<f64> {
    let g = &state.geometry;
    let dd = &state.density;
    let w = dd.weights(g);
    let xi = state.drift.assembled(g)?;
    let xi_sq = xi.norm_sq(g).samples(g);
    Ok(perelman_f(g, &dd.f)? + integrate_against(&w, &xi_sq))
}

/// Gradient-flow energy
/// `int [R + |grad f|^2 + (alpha/8)|Rm|^2 - div xi] dw`,
/// with the literal unweighted divergence; `weighted_div` switches in the
/// weighted divergence for comparison.
pub fn f2_energy_with(
    g: &Geometry,
    f: &ScalarField,
    xi: &VectorField,
    alpha: f64,
    weighted_div: bool,
) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(RgError::InvalidCoupling(alpha));
    }
    xi.require_conforms(g, "f2_energy")?;
    let dd = DensityData::new(g, f.clone())?;
    let w = dd.weights(g);
    let rm = curvature_package(g).rm_norm_sq.samples(g);
    let div = if weighted_div {
        crate::curvature::weighted_divergence(g, f, xi)?
    } else {
        crate::curvature::weighted_divergence(g, &ScalarField::Constant(0.0), xi)?
    };
    let div_s = div.samples(g);
    Ok(perelman_f(g, f)? + 0.125 * alpha * integrate_against(&w, &rm)
        - integrate_against(&w, &div_s))
}

pub fn f2_energy(g: &Geometry, f: &ScalarField, xi: &VectorField, alpha: f64) -> Result<f64> {
    f2_energy_with(g, f, xi, alpha, false)
}

/// Extended Nash entropy and its production integral.
///
/// `N = -int f dw + n(n-1) alpha^{n/2-1} t` and
/// `production = int [R + |grad f|^2 + (alpha/4)|Rm|^2 + n(n-1)/alpha] dw`,
/// so that `dN/dt = production` along the coupled flow. Requires the
/// zero-drift gauge.
pub fn nash_entropy(state: &FlowState) -> Result<(f64, f64)> {
    let xi_norm = state
        .drift
        .assembled(&state.geometry)?
        .max_norm_sq(&state.geometry);
    if xi_norm > 1e-24 {
        return Err(RgError::GaugeRequiresZeroDrift(xi_norm.sqrt()));
    }
    nash_entropy_unchecked(state)
}

pub(crate) fn nash_entropy_unchecked(state: &FlowState) -> Result<(f64, f64)> {
    let g = &state.geometry;
    let n = g.dim() as f64;
    let alpha = state.alpha;
    let dd = &state.density;
    let w = dd.weights(g);
    let fs = dd.f.samples(g);
    let mass: f64 = w.iter().sum();
    let nash = -integrate_against(&w, &fs) + n * (n - 1.0) * alpha.powf(n / 2.0 - 1.0) * state.t;
    let r = curvature_package(g).scalar.samples(g);
    let rm = curvature_package(g).rm_norm_sq.samples(g);
    let gsq = grad_sq_spectral(g, &dd.f);
    let production = integrate_against(&w, &r)
        + integrate_against(&w, &gsq)
        + 0.25 * alpha * integrate_against(&w, &rm)
        + n * (n - 1.0) / alpha * mass;
    Ok((nash, production))
}

/// `2 int |Ric^BE + (1/8) alpha Rm2(g, xi)|^2 dw`, the right side of the
/// energy monotonicity bound.
pub fn monotonicity_bound(state: &FlowState) -> Result<f64> {
    let g = &state.geometry;
    let be = bakry_emery_ricci(g, &state.density.f)?;
    let xi = state.drift.assembled(g)?;
    let mod_rm2 = drift_modified_rm2(g, &xi, state.alpha)?;
    let total = be.add(&mod_rm2.scaled(0.125));
    let nsq = total.norm_sq(g).samples(g);
    let w = state.density.weights(g);
    Ok(2.0 * integrate_against(&w, &nsq))
}

pub fn entropy_record(state: &FlowState) -> Result<EntropyRecord> {
    let xi = state.drift.assembled(&state.geometry)?;
    let (nash, production) = nash_entropy_unchecked(state)?;
    Ok(EntropyRecord {
        t: state.t,
        nash,
        nash_production: production,
        f_energy: perelman_f(&state.geometry, &state.density.f)?,
        f_ext: extended_f_state(state)?,
        f2: f2_energy(&state.geometry, &state.density.f, &xi, state.alpha)?,
        rhs_bound: monotonicity_bound(state)?,
    })
}

pub fn entropy_records(traj: &Trajectory) -> Result<Vec<EntropyRecord>> {
    traj.states.iter().map(entropy_record).collect()
}

// --- dense eigensolvers -------------------------------------------------------

/// Symmetric stiffness matrix of the periodic edge form
/// `sum_e q_e (u_{i+1} - u_i)(v_{i+1} - v_i)` with the given edge weights.
fn stiffness_matrix(n: usize, edge_coeff: &[f64]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let j = (i + 1) % n;
        let q = edge_coeff[i];
        a[(i, i)] += q;
        a[(j, j)] += q;
        a[(i, j)] -= q;
        a[(j, i)] -= q;
    }
    a
}

/// Solves the generalized symmetric problem `A x = lambda B x` with `B`
/// diagonal positive, returning eigenvalues ascending with B-orthonormal
/// eigenvectors.
fn generalized_symmetric_eig(
    a: &DMatrix<f64>,
    b_diag: &[f64],
) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let n = b_diag.len();
    if b_diag.iter().any(|v| !(*v > 0.0)) {
        return Err(RgError::EigenFailure(
            "non-positive weight in the generalized problem".into(),
        ));
    }
    let isqrt: Vec<f64> = b_diag.iter().map(|v| 1.0 / v.sqrt()).collect();
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = isqrt[i] * a[(i, j)] * isqrt[j];
        }
    }
    // enforce exact symmetry against roundoff before factorizing
    let st = s.transpose();
    let sym = (s + st) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors: Vec<DVector<f64>> = order
        .iter()
        .map(|&c| {
            let col = eig.eigenvectors.column(c);
            DVector::from_iterator(n, (0..n).map(|i| col[i] * isqrt[i]))
        })
        .collect();
    Ok((values, vectors))
}

/// Fixes the sign so the first grid node where `|psi|` is maximal is positive.
fn fix_sign(psi: &mut [f64]) {
    let mut idx = 0;
    let mut best = -1.0;
    for (i, v) in psi.iter().enumerate() {
        if v.abs() > best + 1e-15 {
            best = v.abs();
            idx = i;
        }
    }
    if psi[idx] < 0.0 {
        for v in psi.iter_mut() {
            *v = -*v;
        }
    }
}

/// Eigenfunction in class representation.
#[derive(Debug, Clone)]
pub enum EigenFunction {
    /// Spatially constant value.
    Constant(f64),
    /// Node samples on the torus grid.
    Grid(Vec<f64>),
    /// `amplitude * x` with `x` a first ambient-coordinate harmonic of the
    /// round sphere; kept by its amplitude since the class representation has
    /// no pointwise storage for it.
    SphereMode { amplitude: f64 },
}

/// Ground state of `-4 Lap h + R h = lambda h`, normalized to
/// `int h^2 dmu = alpha^{n/2}`.
pub fn perelman_lambda(g: &Geometry, alpha: f64) -> Result<(f64, EigenFunction)> {
    if !(alpha > 0.0) {
        return Err(RgError::InvalidCoupling(alpha));
    }
    let mass_target = alpha.powf(g.dim() as f64 / 2.0);
    match g {
        Geometry::WarpedTorus(wt) => {
            let n = wt.grid.len();
            let h = wt.grid.spacing();
            let two_pi = 2.0 * std::f64::consts::PI;
            let c: Vec<f64> = (0..n).map(|i| wt.phi[i] / wt.rho[i]).collect();
            let edge: Vec<f64> = (0..n)
                .map(|i| 0.5 * (c[i] + c[(i + 1) % n]) / h * two_pi)
                .collect();
            let w_mu: Vec<f64> = (0..n)
                .map(|i| wt.rho[i] * wt.phi[i] * h * two_pi)
                .collect();
            let r = curvature_package(g).scalar.samples(g);
            let mut a = stiffness_matrix(n, &edge) * 4.0;
            for i in 0..n {
                a[(i, i)] += r[i] * w_mu[i];
            }
            let (vals, vecs) = generalized_symmetric_eig(&a, &w_mu)?;
            let mut h0: Vec<f64> = vecs[0].iter().cloned().collect();
            fix_sign(&mut h0);
            if h0.iter().any(|v| *v <= 0.0) {
                return Err(RgError::EigenFailure(
                    "ground state is not positive".into(),
                ));
            }
            let norm: f64 = (0..n).map(|i| h0[i] * h0[i] * w_mu[i]).sum();
            let scale = (mass_target / norm).sqrt();
            for v in h0.iter_mut() {
                *v *= scale;
            }
            Ok((vals[0], EigenFunction::Grid(h0)))
        }
        _ => {
            // constant scalar curvature: the ground state is constant
            let r = curvature_package(g).scalar.samples(g)[0];
            let vol = g.volume();
            Ok((r, EigenFunction::Constant((mass_target / vol).sqrt())))
        }
    }
}

/// First nonzero eigenvalue of the weighted Laplacian on zero-mean functions,
/// with the eigenfunction normalized to `int psi^2 dw = int dw`.
pub fn weighted_lambda2(g: &Geometry, f: &ScalarField) -> Result<(f64, EigenFunction)> {
    f.require_conforms(g, "weighted_lambda2")?;
    match g {
        Geometry::WarpedTorus(wt) => {
            let n = wt.grid.len();
            let h = wt.grid.spacing();
            let two_pi = 2.0 * std::f64::consts::PI;
            let fs = f.samples(g);
            let c: Vec<f64> = (0..n)
                .map(|i| wt.phi[i] / wt.rho[i] * (-fs[i]).exp())
                .collect();
            let edge: Vec<f64> = (0..n)
                .map(|i| 0.5 * (c[i] + c[(i + 1) % n]) / h * two_pi)
                .collect();
            let w_om: Vec<f64> = (0..n)
                .map(|i| wt.rho[i] * wt.phi[i] * (-fs[i]).exp() * h * two_pi)
                .collect();
            let a = stiffness_matrix(n, &edge);
            let (vals, vecs) = generalized_symmetric_eig(&a, &w_om)?;
            // vals[0] ~ 0 (constants); the first nonzero eigenvalue follows
            let lambda2 = vals[1];
            let mut psi: Vec<f64> = vecs[1].iter().cloned().collect();
            fix_sign(&mut psi);
            let mass: f64 = w_om.iter().sum();
            let norm: f64 = (0..n).map(|i| psi[i] * psi[i] * w_om[i]).sum();
            let scale = (mass / norm).sqrt();
            for v in psi.iter_mut() {
                *v *= scale;
            }
            Ok((lambda2, EigenFunction::Grid(psi)))
        }
        Geometry::ConstantCurvature(cc) if cc.curvature > 0.0 => {
            // first sphere eigenvalue n * k; a constant f cancels from the
            // weighted problem
            match f {
                ScalarField::Constant(_) => {}
                _ => {
                    return Err(RgError::Representation(
                        "weighted_lambda2: density exponent must be constant on frame classes"
                            .into(),
                    ))
                }
            }
            let k = cc.curvature / cc.scale;
            let lambda2 = cc.dim as f64 * k;
            // int x^2 dmu = vol / ((n+1) k) fixes the normalized amplitude
            let amplitude = ((cc.dim as f64 + 1.0) * k).sqrt();
            Ok((lambda2, EigenFunction::SphereMode { amplitude }))
        }
        _ => Err(RgError::UnsupportedClass {
            class: g.class().to_string(),
            what: "the first weighted-Laplacian eigenvalue (no nonconstant scalars in the \
                   reduced representation)"
                .into(),
        }),
    }
}

/// Result of the coupled constrained eigenvalue problem.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub lambda1: f64,
    pub lambda2: f64,
    pub capital_lambda: f64,
    pub h0: EigenFunction,
    pub psi0: EigenFunction,
    /// Euler–Lagrange residual norms of the two equations.
    pub el_residuals: (f64, f64),
    /// `[int psi h^2 dmu, int psi^2 h^2 dmu - m, int h^2 dmu - m] / m` with
    /// the mass normalization `m = alpha^{n/2}`.
    pub constraint_residuals: [f64; 3],
    pub objective: f64,
    pub sweeps: usize,
}

/// Node-distributed `|grad psi|^2` that reproduces the half-node Dirichlet
/// form exactly when summed against `h^2 dmu`.
fn node_grad_sq_vs_rho(wt: &WarpedTorus, psi: &[f64]) -> Vec<f64> {
    let n = wt.grid.len();
    let h = wt.grid.spacing();
    (0..n)
        .map(|i| {
            let ip = (i + 1) % n;
            let im = (i + n - 1) % n;
            let gp = (psi[ip] - psi[i]) / h;
            let gm = (psi[i] - psi[im]) / h;
            0.5 * (gp * gp + gm * gm) / (wt.rho[i] * wt.rho[i])
        })
        .collect()
}

/// The constrained infimum of
/// `int [(R + |grad psi|^2) h^2 + 4 |grad h|^2] dmu` over the set with
/// `int psi h^2 dmu = 0`, `int psi^2 h^2 dmu = int h^2 dmu = alpha^{n/2}`,
/// by alternating the two eigenproblems with projection after each half-step.
pub fn capital_lambda(g: &Geometry, alpha: f64) -> Result<EigenResult> {
    if !(alpha > 0.0) {
        return Err(RgError::InvalidCoupling(alpha));
    }
    let n_dim = g.dim() as f64;
    let m = alpha.powf(n_dim / 2.0);
    match g {
        Geometry::ConstantCurvature(cc) if cc.curvature > 0.0 => {
            // homogeneous reduction: constant ground state, first-harmonic
            // drift potential, all relations exact in the averaged sense
            let k = cc.curvature / cc.scale;
            let lambda1 = n_dim * (n_dim - 1.0) * k;
            let lambda2 = n_dim * k;
            let vol = g.volume();
            let h0 = (m / vol).sqrt();
            let amplitude = ((n_dim + 1.0) * k).sqrt();
            Ok(EigenResult {
                lambda1,
                lambda2,
                capital_lambda: m * (lambda1 + lambda2),
                h0: EigenFunction::Constant(h0),
                psi0: EigenFunction::SphereMode { amplitude },
                el_residuals: (0.0, 0.0),
                constraint_residuals: [0.0, 0.0, 0.0],
                objective: m * (lambda1 + lambda2),
                sweeps: 1,
            })
        }
        Geometry::WarpedTorus(wt) => capital_lambda_torus(g, wt, m),
        _ => Err(RgError::UnsupportedClass {
            class: g.class().to_string(),
            what: "the coupled constrained eigenvalue problem".into(),
        }),
    }
}

fn capital_lambda_torus(g: &Geometry, wt: &WarpedTorus, m: f64) -> Result<EigenResult> {
    let n = wt.grid.len();
    let h = wt.grid.spacing();
    let two_pi = 2.0 * std::f64::consts::PI;
    let c: Vec<f64> = (0..n).map(|i| wt.phi[i] / wt.rho[i]).collect();
    let w_mu: Vec<f64> = (0..n)
        .map(|i| wt.rho[i] * wt.phi[i] * h * two_pi)
        .collect();
    let r = curvature_package(g).scalar.samples(g);

    // objective with the exact discrete forms
    let objective = |hv: &[f64], psi: &[f64]| -> f64 {
        let mut q_h = 0.0;
        let mut q_psi = 0.0;
        for i in 0..n {
            let j = (i + 1) % n;
            let dh = hv[j] - hv[i];
            let dpsi = psi[j] - psi[i];
            q_h += 0.5 * (c[i] + c[j]) / h * two_pi * dh * dh;
            q_psi += 0.5 * (c[i] * hv[i] * hv[i] + c[j] * hv[j] * hv[j]) / h * two_pi * dpsi * dpsi;
        }
        let mut bulk = 0.0;
        for i in 0..n {
            bulk += r[i] * hv[i] * hv[i] * w_mu[i];
        }
        4.0 * q_h + q_psi + bulk
    };

    let edge_h: Vec<f64> = (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            0.5 * (c[i] + c[j]) / h * two_pi
        })
        .collect();

    // initialization: curvature-problem ground state, then the first
    // weighted eigenfunction of its measure
    let (_, h_init) = perelman_lambda(g, m.powf(2.0 / g.dim() as f64))?;
    let mut hv: Vec<f64> = match h_init {
        EigenFunction::Grid(v) => v,
        EigenFunction::Constant(v) => vec![v; n],
        _ => unreachable!(),
    };
    let scale_h = |hv: &mut Vec<f64>| {
        let norm: f64 = (0..hv.len()).map(|i| hv[i] * hv[i] * w_mu[i]).sum();
        let s = (m / norm).sqrt();
        for v in hv.iter_mut() {
            *v *= s;
        }
    };
    scale_h(&mut hv);

    let mut psi = vec![0.0; n];
    let mut lambda1 = 0.0;
    let mut lambda2 = 0.0;
    let mut prev_objective = f64::INFINITY;
    let mut sweeps = 0;
    let max_sweeps = 200;
    let mut el_h = f64::INFINITY;
    let mut el_psi = f64::INFINITY;

    for sweep in 1..=max_sweeps {
        sweeps = sweep;
        // psi-step: weighted eigenproblem in the measure h^2 dmu
        let edge_psi: Vec<f64> = (0..n)
            .map(|i| {
                let j = (i + 1) % n;
                0.5 * (c[i] * hv[i] * hv[i] + c[j] * hv[j] * hv[j]) / h * two_pi
            })
            .collect();
        let b_psi: Vec<f64> = (0..n).map(|i| hv[i] * hv[i] * w_mu[i]).collect();
        let a_psi = stiffness_matrix(n, &edge_psi);
        let (vals, vecs) = generalized_symmetric_eig(&a_psi, &b_psi)?;
        lambda2 = vals[1];
        psi = vecs[1].iter().cloned().collect();
        fix_sign(&mut psi);
        let norm_psi: f64 = (0..n).map(|i| psi[i] * psi[i] * b_psi[i]).sum();
        let s_psi = (m / norm_psi).sqrt();
        for v in psi.iter_mut() {
            *v *= s_psi;
        }

        // h-step: ground state of -4 Lap + (R + |grad psi|^2 - lambda2 psi^2)
        let vpot = node_grad_sq_vs_rho(wt, &psi);
        let mut a_h = stiffness_matrix(n, &edge_h) * 4.0;
        for i in 0..n {
            a_h[(i, i)] += (r[i] + vpot[i] - lambda2 * psi[i] * psi[i]) * w_mu[i];
        }
        let (vals_h, vecs_h) = generalized_symmetric_eig(&a_h, &w_mu)?;
        lambda1 = vals_h[0];
        hv = vecs_h[0].iter().cloned().collect();
        fix_sign(&mut hv);
        if hv.iter().any(|v| *v <= 0.0) {
            return Err(RgError::EigenFailure(
                "coupled iteration lost positivity of the ground state".into(),
            ));
        }
        scale_h(&mut hv);
        // restore the psi-normalization against the new h
        let norm_psi: f64 = (0..n)
            .map(|i| psi[i] * psi[i] * hv[i] * hv[i] * w_mu[i])
            .sum();
        let s_psi = (m / norm_psi).sqrt();
        for v in psi.iter_mut() {
            *v *= s_psi;
        }

        let obj = objective(&hv, &psi);
        if obj > prev_objective + 1e-9 * prev_objective.abs().max(1.0) {
            return Err(RgError::NonConvergence {
                sweep,
                previous: prev_objective,
                current: obj,
            });
        }

        // Euler–Lagrange residuals at the current iterate
        let edge_psi: Vec<f64> = (0..n)
            .map(|i| {
                let j = (i + 1) % n;
                0.5 * (c[i] * hv[i] * hv[i] + c[j] * hv[j] * hv[j]) / h * two_pi
            })
            .collect();
        let b_psi: Vec<f64> = (0..n).map(|i| hv[i] * hv[i] * w_mu[i]).collect();
        let a_psi = stiffness_matrix(n, &edge_psi);
        let psi_v = DVector::from_vec(psi.clone());
        let res_psi = &a_psi * &psi_v
            - DVector::from_iterator(n, (0..n).map(|i| lambda2 * b_psi[i] * psi[i]));
        let b_scale = b_psi.iter().cloned().fold(0.0f64, f64::max);
        el_psi = res_psi.amax() / (lambda2.abs().max(1.0) * b_scale);
        let h_v = DVector::from_vec(hv.clone());
        let vpot = node_grad_sq_vs_rho(wt, &psi);
        let mut a_h = stiffness_matrix(n, &edge_h) * 4.0;
        for i in 0..n {
            a_h[(i, i)] += (r[i] + vpot[i] - lambda2 * psi[i] * psi[i]) * w_mu[i];
        }
        let res_h =
            &a_h * &h_v - DVector::from_iterator(n, (0..n).map(|i| lambda1 * w_mu[i] * hv[i]));
        let w_scale = w_mu.iter().cloned().fold(0.0f64, f64::max);
        el_h = res_h.amax() / (lambda1.abs().max(1.0) * w_scale);

        let delta = (prev_objective - obj).abs();
        prev_objective = obj;
        if el_h < 1e-8 && el_psi < 1e-8 && delta < 1e-12 * obj.abs().max(1.0) {
            break;
        }
    }

    if el_h >= 1e-8 || el_psi >= 1e-8 {
        return Err(RgError::NonConvergence {
            sweep: sweeps,
            previous: prev_objective,
            current: el_h.max(el_psi),
        });
    }

    let c1: f64 = (0..n).map(|i| psi[i] * hv[i] * hv[i] * w_mu[i]).sum();
    let c2: f64 = (0..n)
        .map(|i| psi[i] * psi[i] * hv[i] * hv[i] * w_mu[i])
        .sum::<f64>()
        - m;
    let c3: f64 = (0..n).map(|i| hv[i] * hv[i] * w_mu[i]).sum::<f64>() - m;
    Ok(EigenResult {
        lambda1,
        lambda2,
        capital_lambda: m * (lambda1 + lambda2),
        h0: EigenFunction::Grid(hv.clone()),
        psi0: EigenFunction::Grid(psi),
        el_residuals: (el_h, el_psi),
        constraint_residuals: [c1 / m, c2 / m, c3 / m],
        objective: prev_objective,
        sweeps,
    })
}

/// Closed-form supremum of `4 s (1-s) pi^2/diam^2 + s C0` over `s` in the
/// open unit interval (boundary limits when the vertex falls outside).
pub fn futaki_bound(diam: f64, c0: f64) -> f64 {
    assert!(diam > 0.0, "diameter must be positive");
    let a = std::f64::consts::PI.powi(2) / (diam * diam);
    let s_star = (4.0 * a + c0) / (8.0 * a);
    if s_star <= 0.0 {
        0.0
    } else if s_star >= 1.0 {
        c0
    } else {
        4.0 * s_star * (1.0 - s_star) * a + s_star * c0
    }
}

/// Quadrature of the curvature-variation integrand
/// `-4 R_{ijkl} grad^i grad^l v^{jk} - 2 Rm2_{jk} v^{jk}` against `dw`:
/// the derivative of `int |Rm|^2 dw` along `dg/ds = v` at fixed measure.
pub fn rm2_variation_quadrature(
    g: &Geometry,
    f: &ScalarField,
    v: &SymmetricTensorField,
) -> Result<f64> {
    v.require_conforms(g, "rm2_variation_quadrature")?;
    match g {
        Geometry::WarpedTorus(wt) => {
            let chart = TorusChart::new(wt);
            let n = chart.len();
            let gauss = crate::curvature::torus_gauss_curvature(wt);
            let rm = chart.riemann(&gauss);
            let (v_rr, v_tt) = match v {
                SymmetricTensorField::TorusDiagonal { rr, thth } => (rr, thth),
                _ => unreachable!(),
            };
            let mut v_t = ChartTensor::zeros(2, n);
            *v_t.get_mut(&[0, 0]) = v_rr.clone();
            *v_t.get_mut(&[1, 1]) = v_tt.clone();
            let ddv = chart.nabla(&chart.nabla(&v_t)); // [a, b, j, k]
            let mut integrand = vec![0.0; n];
            for i in 0..2 {
                for j in 0..2 {
                    for kx in 0..2 {
                        for l in 0..2 {
                            let rv = rm.get(&[i, j, kx, l]);
                            let dv = ddv.get(&[i, l, j, kx]);
                            for node in 0..n {
                                integrand[node] += -4.0
                                    * rv[node]
                                    * chart.ginv[i][node]
                                    * chart.ginv[l][node]
                                    * chart.ginv[j][node]
                                    * chart.ginv[kx][node]
                                    * dv[node];
                            }
                        }
                    }
                }
            }
            let rm2 = curvature_package(g).rm_sq;
            let (q_rr, q_tt) = match &rm2 {
                SymmetricTensorField::TorusDiagonal { rr, thth } => (rr.clone(), thth.clone()),
                _ => unreachable!(),
            };
            for node in 0..n {
                let up_rr = chart.ginv[0][node] * chart.ginv[0][node];
                let up_tt = chart.ginv[1][node] * chart.ginv[1][node];
                integrand[node] +=
                    -2.0 * (q_rr[node] * up_rr * v_rr[node] + q_tt[node] * up_tt * v_tt[node]);
            }
            let dd = DensityData::new(g, f.clone())?;
            let w = dd.weights(g);
            Ok(integrate_against(&w, &integrand))
        }
        _ => Err(RgError::UnsupportedClass {
            class: g.class().to_string(),
            what: "the curvature-variation quadrature (torus-only check)".into(),
        }),
    }
}

// --- monotonicity report ------------------------------------------------------

#[derive(Debug, Clone, serde::Serialize)]
pub struct InequalityCheck {
    pub name: String,
    pub times: Vec<f64>,
    pub quotient: Vec<f64>,
    pub bound: Vec<f64>,
    pub slack: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct MonotonicityReport {
    pub checks: Vec<InequalityCheck>,
}

impl MonotonicityReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Difference quotients of the entropies against their production/bound
/// integrals, one pass/fail per inequality.
///
/// `tol_coeff` scales the refinement tolerance `tol = tol_coeff (dt + h^2)`
/// granted to the energy inequality; it covers the quadrature and quotient
/// discretization errors and shrinks under refinement.
pub fn monotonicity_report(
    traj: &Trajectory,
    records: &[EntropyRecord],
    tol_coeff: f64,
) -> Result<MonotonicityReport> {
    if traj.states.len() < 3 {
        return Err(RgError::InsufficientData {
            got: traj.states.len(),
            need: 3,
        });
    }
    let dt = traj.dt();
    let h2 = match &traj.states[0].geometry {
        Geometry::WarpedTorus(wt) => wt.grid.spacing() * wt.grid.spacing(),
        _ => 0.0,
    };
    let tol = tol_coeff * (dt + h2);

    let mut checks = Vec::new();

    // Nash production is nonnegative while the margin stays positive
    {
        let mut times = Vec::new();
        let mut quotient = Vec::new();
        let mut bound = Vec::new();
        let mut slack = Vec::new();
        let mut pass = true;
        for (k, rec) in records.iter().enumerate() {
            if traj.diagnostics[k].margin <= 0.0 {
                continue;
            }
            times.push(rec.t);
            quotient.push(rec.nash_production);
            bound.push(0.0);
            slack.push(rec.nash_production);
            if rec.nash_production < -1e-12 {
                pass = false;
            }
        }
        checks.push(InequalityCheck {
            name: "nash-production-nonnegative".into(),
            times,
            quotient,
            bound,
            slack,
            pass,
        });
    }

    // dN/dt matches the production integral to first order in dt
    {
        let mut times = Vec::new();
        let mut quotient = Vec::new();
        let mut bound = Vec::new();
        let mut slack = Vec::new();
        let mut pass = true;
        let prod_scale = records
            .iter()
            .map(|r| r.nash_production.abs())
            .fold(1.0f64, f64::max);
        // the production's own rate of change sets the O(dt) constant; on
        // grids the production quadrature and the measure evolution use
        // different discretizations, adding a second-order spatial term
        let mut dprod = 0.0f64;
        for w in records.windows(2) {
            dprod = dprod.max((w[1].nash_production - w[0].nash_production).abs() / dt);
        }
        let tol_n = 2.0 * dprod * dt + 2.0 * h2 * prod_scale + 1e-9 * prod_scale;
        for w in records.windows(2) {
            let q = (w[1].nash - w[0].nash) / dt;
            times.push(w[0].t);
            quotient.push(q);
            bound.push(w[0].nash_production);
            let s = q - w[0].nash_production;
            slack.push(s);
            if s.abs() > tol_n {
                pass = false;
            }
        }
        checks.push(InequalityCheck {
            name: "nash-quotient-matches-production".into(),
            times,
            quotient,
            bound,
            slack,
            pass,
        });
    }

    // extended-energy difference quotient dominates the quadratic bound
    {
        let mut times = Vec::new();
        let mut quotient = Vec::new();
        let mut bound = Vec::new();
        let mut slack = Vec::new();
        let mut pass = true;
        for w in records.windows(2) {
            let q = (w[1].f_ext - w[0].f_ext) / dt;
            let b = w[0].rhs_bound;
            times.push(w[0].t);
            quotient.push(q);
            bound.push(b);
            let s = q - b;
            slack.push(s);
            if s < -tol * b.abs().max(1.0) {
                pass = false;
            }
        }
        checks.push(InequalityCheck {
            name: "extended-energy-quotient-vs-bound".into(),
            times,
            quotient,
            bound,
            slack,
            pass,
        });
    }

    Ok(MonotonicityReport { checks })
}

/// Backward difference quotients of `Lambda` along a constant-curvature
/// trajectory against the quadratic bound evaluated on the homogeneous
/// minimizers.
pub fn lambda_quotient_check(traj: &Trajectory, tol_coeff: f64) -> Result<InequalityCheck> {
    if traj.states.len() < 3 {
        return Err(RgError::InsufficientData {
            got: traj.states.len(),
            need: 3,
        });
    }
    let dt = traj.dt();
    let tol = tol_coeff * dt;
    let mut times = Vec::new();
    let mut quotient = Vec::new();
    let mut bound = Vec::new();
    let mut slack = Vec::new();
    let mut pass = true;
    let mut lambdas = Vec::with_capacity(traj.states.len());
    for s in &traj.states {
        let e = capital_lambda(&s.geometry, s.alpha)?;
        lambdas.push(e.capital_lambda);
    }
    for k in 1..traj.states.len() {
        let s = &traj.states[k];
        let q = (lambdas[k] - lambdas[k - 1]) / dt;
        // bound with the homogeneous minimizers: f constant, psi the first
        // harmonic with Hess psi = -k psi g
        let (cc_k, n_dim) = match &s.geometry {
            Geometry::ConstantCurvature(cc) => (cc.curvature / cc.scale, cc.dim as f64),
            _ => {
                return Err(RgError::UnsupportedClass {
                    class: s.geometry.class().to_string(),
                    what: "the Lambda quotient check (constant curvature only)".into(),
                })
            }
        };
        let m = s.alpha.powf(n_dim / 2.0);
        let c1 = cc_k * (n_dim - 1.0) * (1.0 + s.alpha * cc_k / 4.0);
        let c2 = cc_k / 2.0;
        let b = 2.0 * n_dim * m * (c1 * c1 + c2 * c2);
        times.push(s.t);
        quotient.push(q);
        bound.push(b);
        let sl = q - b;
        slack.push(sl);
        if sl < -tol * b.abs().max(1.0) {
            pass = false;
        }
    }
    Ok(InequalityCheck {
        name: "lambda-quotient-vs-bound".into(),
        times,
        quotient,
        bound,
        slack,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DriftField;
    use crate::flow::{integrate_rg2, FlowMode};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn unit_sphere() -> Geometry {
        Geometry::constant_curvature(3, 1.0, 1.0).unwrap()
    }

    fn flat_torus(n: usize) -> Geometry {
        Geometry::warped_torus(n, 2.0 * PI, vec![1.0; n], vec![1.0; n]).unwrap()
    }

    fn plain_state(g: &Geometry, f: ScalarField, alpha: f64) -> FlowState {
        let d = DensityData::new(g, f).unwrap();
        FlowState::plain(g.clone(), d, DriftField::zero(g), alpha).unwrap()
    }

    #[test]
    fn nash_entropy_examples() {
        // f = 0, t = 0: N = 0
        let g = unit_sphere();
        let state = plain_state(&g, ScalarField::Constant(0.0), 1.0);
        let (n, production) = nash_entropy(&state).unwrap();
        assert!(n.abs() < 1e-12);
        // production = (6 + 3 + 6) * 2 pi^2 = 30 pi^2
        assert_relative_eq!(production, 30.0 * PI * PI, max_relative = 1e-12);

        // nonzero drift violates the gauge
        let mut bad = state.clone();
        bad.drift.perp = VectorField::Frame(vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            nash_entropy(&bad),
            Err(RgError::GaugeRequiresZeroDrift(_))
        ));
    }

    #[test]
    fn nash_production_nonnegative_under_margin() {
        // any state with margin > 0 has nonnegative production
        for (k, alpha) in [(1.0, 1.0), (-0.5, 1.0), (-0.9, 1.0), (1.0, 4.0)] {
            let g = Geometry::constant_curvature(3, k, 1.0).unwrap();
            let state = plain_state(&g, ScalarField::Constant(0.0), alpha);
            let margin = crate::flow::parabolicity_margin(&g, alpha);
            if margin > 0.0 {
                let (_, production) = nash_entropy(&state).unwrap();
                assert!(production >= 0.0, "k={k}, alpha={alpha}: {production}");
            }
        }
    }

    #[test]
    fn perelman_f_examples() {
        // constant curvature: 6 * 2 pi^2
        let g = unit_sphere();
        let v = perelman_f(&g, &ScalarField::Constant(0.0)).unwrap();
        assert_relative_eq!(v, 12.0 * PI * PI, max_relative = 1e-13);

        // flat torus with f = 0: zero
        let g = flat_torus(64);
        assert!(perelman_f(&g, &ScalarField::Profile(vec![0.0; 64]))
            .unwrap()
            .abs()
            < 1e-12);

        // flat torus, f = 0.3 cos r: matches a high-resolution reference
        // quadrature of int |f'|^2 e^{-f} dmu
        let wt = g.as_torus().unwrap();
        let f = ScalarField::Profile(wt.grid.sample(|r| 0.3 * r.cos()));
        let v = perelman_f(&g, &f).unwrap();
        // reference: 2 pi * sum over a fine grid
        let m = 1 << 16;
        let hh = 2.0 * PI / m as f64;
        let mut reference = 0.0;
        for i in 0..m {
            let r = i as f64 * hh;
            let fp = -0.3 * r.sin();
            reference += fp * fp * (-0.3 * r.cos()).exp() * hh;
        }
        reference *= 2.0 * PI;
        assert!(
            (v - reference).abs() < 1e-8,
            "quadrature {v} vs reference {reference}"
        );
    }

    #[test]
    fn extended_f_examples() {
        let g = flat_torus(64);
        let wt = g.as_torus().unwrap();
        let f0 = ScalarField::Profile(vec![0.0; 64]);
        // constant psi adds nothing
        let a = extended_f(&g, &f0, &ScalarField::Constant(3.0)).unwrap();
        let b = perelman_f(&g, &f0).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-13);
        // psi = sin r on the flat torus: int cos^2 dmu = 2 pi^2
        let psi = ScalarField::Profile(wt.grid.sample(|r| r.sin()));
        let v = extended_f(&g, &f0, &psi).unwrap();
        assert_relative_eq!(v, 2.0 * PI * PI, max_relative = 1e-10);
        // the added term is nonnegative
        assert!(v >= b);
    }

    #[test]
    fn f2_energy_examples() {
        // constant curvature: (6 + 12/8) * 2 pi^2 = 15 pi^2
        let g = unit_sphere();
        let xi = VectorField::zero(&g);
        let v = f2_energy(&g, &ScalarField::Constant(0.0), &xi, 1.0).unwrap();
        assert_relative_eq!(v, 15.0 * PI * PI, max_relative = 1e-13);

        // alpha -> 0 recovers the energy functional
        let small = f2_energy(&g, &ScalarField::Constant(0.0), &xi, 1e-12).unwrap();
        assert_relative_eq!(small, 12.0 * PI * PI, max_relative = 1e-10);

        // gradient drift on the flat torus: the divergence integrates away
        let g = flat_torus(64);
        let wt = g.as_torus().unwrap();
        let f0 = ScalarField::Profile(vec![0.0; 64]);
        let psi = ScalarField::Profile(wt.grid.sample(|r| (2.0 * r).sin()));
        let xi = crate::curvature::gradient(&g, &psi).unwrap();
        let v = f2_energy(&g, &f0, &xi, 1.0).unwrap();
        assert!(v.abs() < 1e-11, "f2 {v}");

        // weighted-divergence comparison flag changes the value off the
        // uniform measure (mixed phases avoid parity cancellation)
        let f = ScalarField::Profile(wt.grid.sample(|r| 0.2 * r.cos()));
        let psi2 = ScalarField::Profile(wt.grid.sample(|r| (2.0 * r).sin() + 0.5 * r.cos()));
        let xi2 = crate::curvature::gradient(&g, &psi2).unwrap();
        let a = f2_energy_with(&g, &f, &xi2, 1.0, false).unwrap();
        let b = f2_energy_with(&g, &f, &xi2, 1.0, true).unwrap();
        assert!((a - b).abs() > 1e-6, "flag makes no difference: {a} vs {b}");
    }

    #[test]
    fn perelman_lambda_examples() {
        // constant scalar curvature: lambda = R with constant ground state
        let g = unit_sphere();
        let (l, h) = perelman_lambda(&g, 1.0).unwrap();
        assert_relative_eq!(l, 6.0, epsilon = 1e-13);
        match h {
            EigenFunction::Constant(v) => {
                assert_relative_eq!(
                    v * v * g.volume(),
                    1.0, // alpha^{3/2} = 1
                    max_relative = 1e-12
                );
            }
            _ => panic!(),
        }
        // homogeneous 3-geometries also have constant scalar curvature
        let g3 = Geometry::homogeneous3([2.0, 1.0, 0.5], [1.0, 2.0, 0.7]).unwrap();
        let (l3, _) = perelman_lambda(&g3, 1.0).unwrap();
        let r3 = curvature_package(&g3).scalar.samples(&g3)[0];
        assert_relative_eq!(l3, r3, epsilon = 1e-13);

        // flat torus: lambda = 0
        let g = flat_torus(64);
        let (l, _) = perelman_lambda(&g, 1.0).unwrap();
        assert!(l.abs() < 1e-10, "flat lambda {l}");
    }

    #[test]
    fn perelman_lambda_grid_refinement_consistency() {
        let lam = |n: usize| {
            let l = 2.0 * PI;
            let h = l / n as f64;
            let phi: Vec<f64> = (0..n)
                .map(|i| 1.0 + 0.1 * (i as f64 * h).sin())
                .collect();
            let g = Geometry::warped_torus(n, l, vec![1.0; n], phi).unwrap();
            perelman_lambda(&g, 1.0).unwrap().0
        };
        let (l1, l2, l3) = (lam(64), lam(128), lam(256));
        // second-order convergence and consistent Richardson limits
        let order = ((l1 - l2).abs() / (l2 - l3).abs()).log2();
        assert!(order > 1.8, "order {order}");
        let ex12 = (4.0 * l2 - l1) / 3.0;
        let ex23 = (4.0 * l3 - l2) / 3.0;
        // the ground eigenvalue here is ~ -5e-3, so compare absolutely
        assert!(
            (ex12 - ex23).abs() < 1e-7,
            "extrapolations disagree: {ex12} vs {ex23}"
        );
    }

    #[test]
    fn weighted_lambda2_examples() {
        // flat circle factor of length 2 pi: lambda2 = 1 (relative 1e-4 at N=256)
        let g = flat_torus(256);
        let (l2, _) = weighted_lambda2(&g, &ScalarField::Profile(vec![0.0; 256])).unwrap();
        assert!((l2 - 1.0).abs() < 1e-4, "lambda2 {l2}");

        // constant nonzero f leaves lambda2 unchanged
        let (l2c, _) = weighted_lambda2(&g, &ScalarField::Profile(vec![0.7; 256])).unwrap();
        assert_relative_eq!(l2, l2c, max_relative = 1e-12);

        // sphere closed form: n k
        let s = unit_sphere();
        let (ls, _) = weighted_lambda2(&s, &ScalarField::Constant(0.2)).unwrap();
        assert_relative_eq!(ls, 3.0, epsilon = 1e-13);

        // homogeneous 3 is outside the reduction
        let g3 = Geometry::homogeneous3([2.0, 2.0, 2.0], [1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(
            weighted_lambda2(&g3, &ScalarField::Constant(0.0)),
            Err(RgError::UnsupportedClass { .. })
        ));
    }

    #[test]
    fn weighted_lambda2_refinement_consistency_with_weight() {
        let lam = |n: usize| {
            let g = flat_torus(n);
            let wt = g.as_torus().unwrap();
            let f = ScalarField::Profile(wt.grid.sample(|r| 0.5 * r.cos()));
            weighted_lambda2(&g, &f).unwrap().0
        };
        let (l1, l2, l3) = (lam(64), lam(128), lam(256));
        let order = ((l1 - l2).abs() / (l2 - l3).abs()).log2();
        assert!(order > 1.8, "order {order}");
        let ex12 = (4.0 * l2 - l1) / 3.0;
        let ex23 = (4.0 * l3 - l2) / 3.0;
        assert!(
            (ex12 - ex23).abs() < 1e-6 * ex23.abs(),
            "extrapolations disagree: {ex12} vs {ex23}"
        );
    }

    #[test]
    fn capital_lambda_on_the_flat_torus() {
        let g = flat_torus(64);
        let alpha = 4.0 * PI * PI; // alpha_g of f = 0 in dimension two
        let res = capital_lambda(&g, alpha).unwrap();
        let m = alpha; // alpha^{n/2}, n = 2
        // equality between objective and m (lambda1 + lambda2)
        assert_relative_eq!(res.objective, res.capital_lambda, max_relative = 1e-10);
        // constraints hold
        for c in res.constraint_residuals {
            assert!(c.abs() < 1e-8, "constraint residual {c}");
        }
        // Euler-Lagrange residuals
        assert!(res.el_residuals.0 < 1e-8 && res.el_residuals.1 < 1e-8);
        // dominates m * lambda(g) (here lambda ~ 0)
        let (lam, _) = perelman_lambda(&g, alpha).unwrap();
        assert!(res.capital_lambda >= m * lam - 1e-9);
        // strictly positive, and at most the separable value m * lambda2(flat)
        assert!(res.capital_lambda > 0.0);
        let upper = m * (2.0 * (1.0 - (2.0 * PI / 64.0).cos())
            / ((2.0 * PI / 64.0) * (2.0 * PI / 64.0)));
        assert!(
            res.capital_lambda <= upper * (1.0 + 1e-10),
            "{} vs separable {upper}",
            res.capital_lambda
        );
    }

    #[test]
    fn capital_lambda_constant_curvature_and_futaki() {
        let g = unit_sphere();
        let f0 = ScalarField::Constant(g.volume().ln()); // alpha_g = 1
        let alpha = crate::density::alpha_g(&g, &f0).unwrap();
        assert_relative_eq!(alpha, 1.0, epsilon = 1e-12);
        let res = capital_lambda(&g, alpha).unwrap();
        assert_relative_eq!(res.lambda1, 6.0, epsilon = 1e-13);
        assert_relative_eq!(res.lambda2, 3.0, epsilon = 1e-13);
        let m = alpha.powf(1.5);
        assert_relative_eq!(res.capital_lambda, m * 9.0, max_relative = 1e-13);

        // Lambda >= m lambda(g) + futaki(diam, C0) with C0 = 2, diam = pi
        let (lam, _) = perelman_lambda(&g, alpha).unwrap();
        let be = bakry_emery_ricci(&g, &f0).unwrap();
        let c0 = be.min_eigenvalue_vs_metric(&g);
        assert_relative_eq!(c0, 2.0, epsilon = 1e-13);
        let diam = g.diameter().unwrap();
        assert_relative_eq!(diam, PI, epsilon = 1e-13);
        let fb = futaki_bound(diam, c0);
        assert!(
            res.capital_lambda >= m * lam + fb - 1e-12,
            "{} vs {}",
            res.capital_lambda,
            m * lam + fb
        );
    }

    #[test]
    fn futaki_bound_examples() {
        // C0 = 0, diam = 1: pi^2 at s = 1/2
        assert_relative_eq!(futaki_bound(1.0, 0.0), PI * PI, epsilon = 1e-12);
        // C0 = 4 pi^2 / diam^2: the boundary limit C0
        let diam = 2.0;
        let c0 = 4.0 * PI * PI / (diam * diam);
        assert_relative_eq!(futaki_bound(diam, c0), c0, epsilon = 1e-12);
        // strongly negative C0: supremum 0 approached at s -> 0
        assert_eq!(futaki_bound(1.0, -8.0 * PI * PI), 0.0);
    }

    #[test]
    fn monotonicity_report_on_stationary_and_sphere_runs() {
        // stationary flat torus: all quotients and bounds vanish
        let g = flat_torus(32);
        let d = DensityData::new(&g, ScalarField::Profile(vec![0.0; 32])).unwrap();
        let state = FlowState::scale_invariant(g.clone(), d, DriftField::zero(&g)).unwrap();
        let traj = integrate_rg2(&state, 1e-3, 10, FlowMode::ScaleInvariant).unwrap();
        let recs = entropy_records(&traj).unwrap();
        let report = monotonicity_report(&traj, &recs, 5.0).unwrap();
        assert!(report.all_pass());
        for c in &report.checks {
            // the flat stationary run keeps the energy quotients and bounds
            // at zero; the Nash production is the constant n(n-1) alpha^{n/2-1}
            // matched exactly by the entropy's linear time term
            match c.name.as_str() {
                "extended-energy-quotient-vs-bound" => {
                    for s in &c.slack {
                        assert!(s.abs() < 1e-9, "{}: slack {s}", c.name);
                    }
                }
                "nash-quotient-matches-production" => {
                    for s in &c.slack {
                        assert!(s.abs() < 1e-9, "{}: slack {s}", c.name);
                    }
                }
                "nash-production-nonnegative" => {
                    for q in &c.quotient {
                        assert_relative_eq!(*q, 2.0, max_relative = 1e-10);
                    }
                }
                _ => {}
            }
        }

        // sphere run with zero drift: the Nash checks pass; the energy
        // quotient sits below its quadratic bound here because the bound is
        // an inequality for unit-normalized drift (the drift production term
        // is what dominates the square-completion deficit)
        let s = unit_sphere();
        let f0 = ScalarField::Constant(s.volume().ln());
        let d = DensityData::new(&s, f0.clone()).unwrap();
        let state = FlowState::scale_invariant(s.clone(), d, DriftField::zero(&s)).unwrap();
        let traj = integrate_rg2(&state, 5e-4, 80, FlowMode::ScaleInvariant).unwrap();
        assert!(traj.halted.is_none());
        let recs = entropy_records(&traj).unwrap();
        let report = monotonicity_report(&traj, &recs, 5.0).unwrap();
        for c in &report.checks {
            match c.name.as_str() {
                "extended-energy-quotient-vs-bound" => assert!(!c.pass),
                _ => assert!(c.pass, "{} failed", c.name),
            }
        }

        // drift-modified run with max |xi(0)|^2 = 1: the energy bound holds
        let d = DensityData::new(&s, f0).unwrap();
        let drift = DriftField {
            psi: ScalarField::Constant(0.0),
            perp: VectorField::Frame(vec![1.0, 0.0, 0.0]),
        };
        let state = FlowState::scale_invariant(s.clone(), d, drift).unwrap();
        let traj = crate::flow::integrate_deturck(&state, 5e-4, 80).unwrap();
        assert!(traj.halted.is_none(), "{:?}", traj.halted);
        let recs = entropy_records(&traj).unwrap();
        let report = monotonicity_report(&traj, &recs, 5.0).unwrap();
        let energy = report
            .checks
            .iter()
            .find(|c| c.name == "extended-energy-quotient-vs-bound")
            .unwrap();
        assert!(energy.pass, "worst slack {:?}", energy
            .slack
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min));

        // Lambda quotient check on the same run
        let check = lambda_quotient_check(&traj, 50.0).unwrap();
        assert!(check.pass, "lambda quotient slack {:?}", &check.slack[..3.min(check.slack.len())]);

        // too few snapshots
        let short = integrate_rg2(&state, 5e-4, 1, FlowMode::ScaleInvariant).unwrap();
        let recs_short = entropy_records(&short).unwrap();
        assert!(matches!(
            monotonicity_report(&short, &recs_short, 5.0),
            Err(RgError::InsufficientData { .. })
        ));
    }

    #[test]
    fn rm2_variation_matches_finite_difference() {
        let n = 64;
        let l = 2.0 * PI;
        let h = l / n as f64;
        let phi: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.1 * (i as f64 * h).sin())
            .collect();
        let g = Geometry::warped_torus(n, l, vec![1.0; n], phi).unwrap();
        let f = ScalarField::Profile((0..n).map(|i| 0.2 * (i as f64 * h).cos()).collect());
        // perturbation direction
        let v_rr: Vec<f64> = (0..n).map(|i| 0.3 * (2.0 * i as f64 * h).cos()).collect();
        let v_tt: Vec<f64> = (0..n).map(|i| 0.2 * (i as f64 * h).sin()).collect();
        let v = SymmetricTensorField::TorusDiagonal {
            rr: v_rr.clone(),
            thth: v_tt.clone(),
        };
        let quad = rm2_variation_quadrature(&g, &f, &v).unwrap();

        // finite-difference derivative of int |Rm|^2 dw at fixed measure
        let eval = |eps: f64| -> f64 {
            let wt = g.as_torus().unwrap();
            let rho2: Vec<f64> = (0..n)
                .map(|i| wt.rho[i] * wt.rho[i] + eps * v_rr[i])
                .collect();
            let phi2: Vec<f64> = (0..n)
                .map(|i| wt.phi[i] * wt.phi[i] + eps * v_tt[i])
                .collect();
            let gp = Geometry::warped_torus(
                n,
                l,
                rho2.iter().map(|x| x.sqrt()).collect(),
                phi2.iter().map(|x| x.sqrt()).collect(),
            )
            .unwrap();
            let rm = curvature_package(&gp).rm_norm_sq.samples(&gp);
            // weights held at the unperturbed measure
            let dd = DensityData::new(&g, f.clone()).unwrap();
            let w = dd.weights(&g);
            integrate_against(&w, &rm)
        };
        let eps = 1e-5;
        let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
        assert!(
            (fd - quad).abs() < 5e-3 * quad.abs().max(1.0),
            "fd {fd} vs quadrature {quad}"
        );
    }
}
