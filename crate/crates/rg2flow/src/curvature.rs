//! Curvature and weighted-derivative objects for the three geometry classes.
//!
//! Conventions (see also [`crate::chart`]): `R_{ijkl} = K (g_il g_jk - g_ik g_jl)`
//! on space forms, `Ric_{jk} = g^{il} R_{ijkl}`, sectional curvature of an
//! orthonormal plane is `R_{abba}`, and the quadratic curvature tensor is
//! `Rm2_{ij} = R_{iklm} R_{jpqr} g^{kp} g^{lq} g^{mr}` so that
//! `g^{ij} Rm2_{ij} = |Rm|^2`.
//!
//! On the warped torus the Gauss curvature is
//! `K(r) = -(1/(rho phi)) d/dr (phi'/rho)` with periodic central differences.
//! Homogeneous 3-geometries use the Milnor-frame closed forms: with
//! `mu_i = l_i a_i / sqrt(a1 a2 a3)` and `s_i = (mu_j + mu_k - mu_i)/2` the
//! principal Ricci curvatures are `r_i = 2 s_j s_k` and the frame-plane
//! sectional curvatures are `K_ij = (r_i + r_j - r_k)/2`. In three dimensions
//! the Riemann tensor is algebraically determined by the Ricci tensor, which
//! is how `Rm2` is assembled.

use crate::chart::{ChartTensor, FrameAlgebra, FrameTensor, TorusChart};
use crate::error::{Result, RgError};
use crate::geometry::{Geometry, GeometryClass, ScalarField, WarpedTorus};

/// Symmetric 2-tensor in class representation.
#[derive(Debug, Clone, PartialEq)]
pub enum SymmetricTensorField {
    /// `T = c * g` on a constant-curvature geometry.
    Isotropic(f64),
    /// Absolute diagonal components in the Milnor coframe `w^i (x) w^i`.
    FrameDiagonal([f64; 3]),
    /// Per-node `(rr, theta-theta)` coordinate components.
    TorusDiagonal { rr: Vec<f64>, thth: Vec<f64> },
}

impl SymmetricTensorField {
    pub fn zero(g: &Geometry) -> Self {
        match g {
            Geometry::ConstantCurvature(_) => SymmetricTensorField::Isotropic(0.0),
            Geometry::Homogeneous3(_) => SymmetricTensorField::FrameDiagonal([0.0; 3]),
            Geometry::WarpedTorus(wt) => SymmetricTensorField::TorusDiagonal {
                rr: vec![0.0; wt.grid.len()],
                thth: vec![0.0; wt.grid.len()],
            },
        }
    }

    pub fn conforms(&self, g: &Geometry) -> bool {
        matches!(
            (self, g.class()),
            (
                SymmetricTensorField::Isotropic(_),
                GeometryClass::ConstantCurvature
            ) | (
                SymmetricTensorField::FrameDiagonal(_),
                GeometryClass::Homogeneous3
            ) | (
                SymmetricTensorField::TorusDiagonal { .. },
                GeometryClass::WarpedTorus
            )
        )
    }

    pub fn require_conforms(&self, g: &Geometry, what: &str) -> Result<()> {
        if self.conforms(g) {
            Ok(())
        } else {
            Err(RgError::Representation(format!(
                "{what}: tensor representation does not match a {} geometry",
                g.class()
            )))
        }
    }

    pub fn add(&self, other: &SymmetricTensorField) -> SymmetricTensorField {
        match (self, other) {
            (SymmetricTensorField::Isotropic(a), SymmetricTensorField::Isotropic(b)) => {
                SymmetricTensorField::Isotropic(a + b)
            }
            (SymmetricTensorField::FrameDiagonal(a), SymmetricTensorField::FrameDiagonal(b)) => {
                SymmetricTensorField::FrameDiagonal([a[0] + b[0], a[1] + b[1], a[2] + b[2]])
            }
            (
                SymmetricTensorField::TorusDiagonal { rr: a, thth: b },
                SymmetricTensorField::TorusDiagonal { rr: c, thth: d },
            ) => SymmetricTensorField::TorusDiagonal {
                rr: a.iter().zip(c).map(|(x, y)| x + y).collect(),
                thth: b.iter().zip(d).map(|(x, y)| x + y).collect(),
            },
            _ => panic!("mixed tensor representations"),
        }
    }

    pub fn scaled(&self, s: f64) -> SymmetricTensorField {
        match self {
            SymmetricTensorField::Isotropic(a) => SymmetricTensorField::Isotropic(s * a),
            SymmetricTensorField::FrameDiagonal(a) => {
                SymmetricTensorField::FrameDiagonal([s * a[0], s * a[1], s * a[2]])
            }
            SymmetricTensorField::TorusDiagonal { rr, thth } => SymmetricTensorField::TorusDiagonal {
                rr: rr.iter().map(|x| s * x).collect(),
                thth: thth.iter().map(|x| s * x).collect(),
            },
        }
    }

    pub fn sub(&self, other: &SymmetricTensorField) -> SymmetricTensorField {
        self.add(&other.scaled(-1.0))
    }

    /// Trace with respect to the metric, as a scalar field.
    pub fn trace(&self, g: &Geometry) -> ScalarField {
        match (self, g) {
            (SymmetricTensorField::Isotropic(c), Geometry::ConstantCurvature(cc)) => {
                ScalarField::Constant(c * cc.dim as f64)
            }
            (SymmetricTensorField::FrameDiagonal(t), Geometry::Homogeneous3(h)) => {
                ScalarField::Constant(
                    t[0] / h.coeff[0] + t[1] / h.coeff[1] + t[2] / h.coeff[2],
                )
            }
            (SymmetricTensorField::TorusDiagonal { rr, thth }, Geometry::WarpedTorus(wt)) => {
                ScalarField::Profile(
                    (0..wt.grid.len())
                        .map(|i| {
                            rr[i] / (wt.rho[i] * wt.rho[i]) + thth[i] / (wt.phi[i] * wt.phi[i])
                        })
                        .collect(),
                )
            }
            _ => panic!("mixed tensor representations"),
        }
    }

    /// Pointwise squared norm `T_{ij} T_{kl} g^{ik} g^{jl}`.
    pub fn norm_sq(&self, g: &Geometry) -> ScalarField {
        match (self, g) {
            (SymmetricTensorField::Isotropic(c), Geometry::ConstantCurvature(cc)) => {
                ScalarField::Constant(c * c * cc.dim as f64)
            }
            (SymmetricTensorField::FrameDiagonal(t), Geometry::Homogeneous3(h)) => {
                let mut acc = 0.0;
                for i in 0..3 {
                    let e = t[i] / h.coeff[i];
                    acc += e * e;
                }
                ScalarField::Constant(acc)
            }
            (SymmetricTensorField::TorusDiagonal { rr, thth }, Geometry::WarpedTorus(wt)) => {
                ScalarField::Profile(
                    (0..wt.grid.len())
                        .map(|i| {
                            let a = rr[i] / (wt.rho[i] * wt.rho[i]);
                            let b = thth[i] / (wt.phi[i] * wt.phi[i]);
                            a * a + b * b
                        })
                        .collect(),
                )
            }
            _ => panic!("mixed tensor representations"),
        }
    }

    /// Smallest eigenvalue relative to the metric; the certificate `C0` in
    /// bounds of the form `T >= C0 g`.
    pub fn min_eigenvalue_vs_metric(&self, g: &Geometry) -> f64 {
        match (self, g) {
            (SymmetricTensorField::Isotropic(c), _) => *c,
            (SymmetricTensorField::FrameDiagonal(t), Geometry::Homogeneous3(h)) => (0..3)
                .map(|i| t[i] / h.coeff[i])
                .fold(f64::INFINITY, f64::min),
            (SymmetricTensorField::TorusDiagonal { rr, thth }, Geometry::WarpedTorus(wt)) => (0
                ..wt.grid.len())
                .map(|i| {
                    (rr[i] / (wt.rho[i] * wt.rho[i])).min(thth[i] / (wt.phi[i] * wt.phi[i]))
                })
                .fold(f64::INFINITY, f64::min),
            _ => panic!("mixed tensor representations"),
        }
    }

    /// Maximum absolute component (used by blow-up guards).
    pub fn max_abs(&self) -> f64 {
        match self {
            SymmetricTensorField::Isotropic(c) => c.abs(),
            SymmetricTensorField::FrameDiagonal(t) => {
                t.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            }
            SymmetricTensorField::TorusDiagonal { rr, thth } => rr
                .iter()
                .chain(thth.iter())
                .fold(0.0f64, |m, v| m.max(v.abs())),
        }
    }
}

/// Vector field in class representation. On the frame classes the components
/// refer to the fixed model frame (`g0`-orthonormal frame for constant
/// curvature, Milnor frame for homogeneous 3-geometries); on the torus the
/// field is `X(r) d/dr + killing * d/dtheta`. General `theta`-profiles are
/// outside the symmetry reduction (their metric Lie derivative has an
/// off-diagonal part the tensor representation cannot hold).
#[derive(Debug, Clone, PartialEq)]
pub enum VectorField {
    Frame(Vec<f64>),
    Torus { radial: Vec<f64>, killing: f64 },
}

impl VectorField {
    pub fn zero(g: &Geometry) -> Self {
        match g {
            Geometry::WarpedTorus(wt) => VectorField::Torus {
                radial: vec![0.0; wt.grid.len()],
                killing: 0.0,
            },
            g => VectorField::Frame(vec![0.0; g.dim() as usize]),
        }
    }

    pub fn conforms(&self, g: &Geometry) -> bool {
        match (self, g) {
            (VectorField::Frame(v), Geometry::ConstantCurvature(cc)) => v.len() == cc.dim as usize,
            (VectorField::Frame(v), Geometry::Homogeneous3(_)) => v.len() == 3,
            (VectorField::Torus { radial, .. }, Geometry::WarpedTorus(wt)) => {
                radial.len() == wt.grid.len()
            }
            _ => false,
        }
    }

    pub fn require_conforms(&self, g: &Geometry, what: &str) -> Result<()> {
        if self.conforms(g) {
            Ok(())
        } else {
            Err(RgError::Representation(format!(
                "{what}: vector representation does not match a {} geometry",
                g.class()
            )))
        }
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        match (self, other) {
            (VectorField::Frame(a), VectorField::Frame(b)) => {
                VectorField::Frame(a.iter().zip(b).map(|(x, y)| x + y).collect())
            }
            (
                VectorField::Torus {
                    radial: a,
                    killing: ka,
                },
                VectorField::Torus {
                    radial: b,
                    killing: kb,
                },
            ) => VectorField::Torus {
                radial: a.iter().zip(b).map(|(x, y)| x + y).collect(),
                killing: ka + kb,
            },
            _ => panic!("mixed vector representations"),
        }
    }

    pub fn scaled(&self, s: f64) -> VectorField {
        match self {
            VectorField::Frame(a) => VectorField::Frame(a.iter().map(|x| s * x).collect()),
            VectorField::Torus { radial, killing } => VectorField::Torus {
                radial: radial.iter().map(|x| s * x).collect(),
                killing: s * killing,
            },
        }
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        self.add(&other.scaled(-1.0))
    }

    /// Pointwise `|xi|^2_g`.
    pub fn norm_sq(&self, g: &Geometry) -> ScalarField {
        match (self, g) {
            (VectorField::Frame(v), Geometry::ConstantCurvature(cc)) => {
                ScalarField::Constant(cc.scale * v.iter().map(|x| x * x).sum::<f64>())
            }
            (VectorField::Frame(v), Geometry::Homogeneous3(h)) => ScalarField::Constant(
                v.iter()
                    .zip(&h.coeff)
                    .map(|(x, a)| a * x * x)
                    .sum::<f64>(),
            ),
            (VectorField::Torus { radial, killing }, Geometry::WarpedTorus(wt)) => {
                ScalarField::Profile(
                    (0..wt.grid.len())
                        .map(|i| {
                            wt.rho[i] * wt.rho[i] * radial[i] * radial[i]
                                + wt.phi[i] * wt.phi[i] * killing * killing
                        })
                        .collect(),
                )
            }
            _ => panic!("vector representation does not match geometry"),
        }
    }

    pub fn max_norm_sq(&self, g: &Geometry) -> f64 {
        match self.norm_sq(g) {
            ScalarField::Constant(c) => c,
            ScalarField::Profile(v) => v.into_iter().fold(0.0f64, f64::max),
        }
    }
}

/// All curvature objects of one geometry snapshot.
#[derive(Debug, Clone)]
pub struct CurvaturePackage {
    pub ricci: SymmetricTensorField,
    pub scalar: ScalarField,
    pub rm_sq: SymmetricTensorField,
    pub rm_norm_sq: ScalarField,
    pub sectional_range: (f64, f64),
}

/// Gauss curvature profile of a warped torus.
pub fn torus_gauss_curvature(wt: &WarpedTorus) -> Vec<f64> {
    let dphi = wt.grid.deriv(&wt.phi);
    let inner: Vec<f64> = dphi.iter().zip(&wt.rho).map(|(d, r)| d / r).collect();
    let outer = wt.grid.deriv(&inner);
    (0..wt.grid.len())
        .map(|i| -outer[i] / (wt.rho[i] * wt.phi[i]))
        .collect()
}

/// Milnor-frame data of a homogeneous 3-geometry: principal Ricci curvatures
/// `r_i` and frame-plane sectional curvatures `(K_23, K_13, K_12)` indexed so
/// that entry `i` is the plane not containing `f_i`... kept explicit instead:
/// returns `(r, k)` with `k[0] = K_12, k[1] = K_13, k[2] = K_23`.
pub fn milnor_curvatures(structure: [f64; 3], coeff: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let root = (coeff[0] * coeff[1] * coeff[2]).sqrt();
    let mu = [
        structure[0] * coeff[0] / root,
        structure[1] * coeff[1] / root,
        structure[2] * coeff[2] / root,
    ];
    let s = [
        0.5 * (-mu[0] + mu[1] + mu[2]),
        0.5 * (mu[0] - mu[1] + mu[2]),
        0.5 * (mu[0] + mu[1] - mu[2]),
    ];
    let r = [2.0 * s[1] * s[2], 2.0 * s[0] * s[2], 2.0 * s[0] * s[1]];
    let k = [
        0.5 * (r[0] + r[1] - r[2]), // K_12
        0.5 * (r[0] + r[2] - r[1]), // K_13
        0.5 * (r[1] + r[2] - r[0]), // K_23
    ];
    (r, k)
}

/// Orthonormal-frame structure constants `mu_i` of a homogeneous 3-geometry.
pub fn milnor_mu(structure: [f64; 3], coeff: [f64; 3]) -> [f64; 3] {
    let root = (coeff[0] * coeff[1] * coeff[2]).sqrt();
    [
        structure[0] * coeff[0] / root,
        structure[1] * coeff[1] / root,
        structure[2] * coeff[2] / root,
    ]
}

pub fn curvature_package(g: &Geometry) -> CurvaturePackage {
    match g {
        Geometry::ConstantCurvature(cc) => {
            let n = cc.dim as f64;
            let k = cc.curvature / cc.scale;
            CurvaturePackage {
                ricci: SymmetricTensorField::Isotropic(k * (n - 1.0)),
                scalar: ScalarField::Constant(k * n * (n - 1.0)),
                rm_sq: SymmetricTensorField::Isotropic(2.0 * k * k * (n - 1.0)),
                rm_norm_sq: ScalarField::Constant(2.0 * k * k * n * (n - 1.0)),
                sectional_range: (k, k),
            }
        }
        Geometry::Homogeneous3(h) => {
            let (r, k) = milnor_curvatures(h.structure, h.coeff);
            let a = h.coeff;
            // Rm2_ii (orthonormal) = 2 * sum of K over the planes containing i
            let q = [
                2.0 * (k[0] * k[0] + k[1] * k[1]),
                2.0 * (k[0] * k[0] + k[2] * k[2]),
                2.0 * (k[1] * k[1] + k[2] * k[2]),
            ];
            let rm_norm = 4.0 * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
            let kmin = k.iter().cloned().fold(f64::INFINITY, f64::min);
            let kmax = k.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            CurvaturePackage {
                ricci: SymmetricTensorField::FrameDiagonal([a[0] * r[0], a[1] * r[1], a[2] * r[2]]),
                scalar: ScalarField::Constant(r[0] + r[1] + r[2]),
                rm_sq: SymmetricTensorField::FrameDiagonal([a[0] * q[0], a[1] * q[1], a[2] * q[2]]),
                rm_norm_sq: ScalarField::Constant(rm_norm),
                sectional_range: (kmin, kmax),
            }
        }
        Geometry::WarpedTorus(wt) => {
            let gauss = torus_gauss_curvature(wt);
            let n = wt.grid.len();
            let mut ric_rr = vec![0.0; n];
            let mut ric_tt = vec![0.0; n];
            let mut rm_rr = vec![0.0; n];
            let mut rm_tt = vec![0.0; n];
            let mut rm_norm = vec![0.0; n];
            for i in 0..n {
                let kk = gauss[i];
                let g_rr = wt.rho[i] * wt.rho[i];
                let g_tt = wt.phi[i] * wt.phi[i];
                ric_rr[i] = kk * g_rr;
                ric_tt[i] = kk * g_tt;
                rm_rr[i] = 2.0 * kk * kk * g_rr;
                rm_tt[i] = 2.0 * kk * kk * g_tt;
                rm_norm[i] = 4.0 * kk * kk;
            }
            let kmin = gauss.iter().cloned().fold(f64::INFINITY, f64::min);
            let kmax = gauss.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            CurvaturePackage {
                ricci: SymmetricTensorField::TorusDiagonal {
                    rr: ric_rr,
                    thth: ric_tt,
                },
                scalar: ScalarField::Profile(gauss.iter().map(|k| 2.0 * k).collect()),
                rm_sq: SymmetricTensorField::TorusDiagonal {
                    rr: rm_rr,
                    thth: rm_tt,
                },
                rm_norm_sq: ScalarField::Profile(rm_norm),
                sectional_range: (kmin, kmax),
            }
        }
    }
}

fn require_constant_f(f: &ScalarField, g: &Geometry, what: &str) -> Result<f64> {
    match f {
        ScalarField::Constant(c) => Ok(*c),
        ScalarField::Profile(_) => Err(RgError::Representation(format!(
            "{what}: density exponent must be spatially constant on a {} geometry",
            g.class()
        ))),
    }
}

/// `Ric + Hess f` in class representation.
pub fn bakry_emery_ricci(g: &Geometry, f: &ScalarField) -> Result<SymmetricTensorField> {
    f.require_conforms(g, "bakry_emery_ricci")?;
    let ric = curvature_package(g).ricci;
    match g {
        Geometry::WarpedTorus(wt) => {
            let fs = f.samples(g);
            let hess = hessian_profile(wt, &fs);
            Ok(ric.add(&hess))
        }
        _ => {
            require_constant_f(f, g, "bakry_emery_ricci")?;
            Ok(ric)
        }
    }
}

/// Hessian of an `r`-profile as a diagonal torus tensor:
/// `Hess_rr = u'' - (rho'/rho) u'`, `Hess_tt = (phi phi'/rho^2) u'`.
pub fn hessian_profile(wt: &WarpedTorus, u: &[f64]) -> SymmetricTensorField {
    let du = wt.grid.deriv(u);
    let d2u = wt.grid.deriv(&du);
    let drho = wt.grid.deriv(&wt.rho);
    let dphi = wt.grid.deriv(&wt.phi);
    let n = wt.grid.len();
    let mut rr = vec![0.0; n];
    let mut tt = vec![0.0; n];
    for i in 0..n {
        rr[i] = d2u[i] - drho[i] / wt.rho[i] * du[i];
        tt[i] = wt.phi[i] * dphi[i] / (wt.rho[i] * wt.rho[i]) * du[i];
    }
    SymmetricTensorField::TorusDiagonal { rr, thth: tt }
}

/// Metric gradient of a scalar field, `xi = g^{-1} du`.
pub fn gradient(g: &Geometry, u: &ScalarField) -> Result<VectorField> {
    u.require_conforms(g, "gradient")?;
    match g {
        Geometry::WarpedTorus(wt) => {
            let us = u.samples(g);
            let du = wt.grid.deriv(&us);
            Ok(VectorField::Torus {
                radial: du
                    .iter()
                    .zip(&wt.rho)
                    .map(|(d, r)| d / (r * r))
                    .collect(),
                killing: 0.0,
            })
        }
        // class scalars are constants on the frame classes
        _ => Ok(VectorField::zero(g)),
    }
}

/// Weighted divergence `div^w xi = div xi - <xi, grad f>`.
///
/// Discretized on the torus in flux form, so the weighted integral
/// `int div^w xi dw` telescopes to zero exactly.
pub fn weighted_divergence(g: &Geometry, f: &ScalarField, xi: &VectorField) -> Result<ScalarField> {
    f.require_conforms(g, "weighted_divergence")?;
    xi.require_conforms(g, "weighted_divergence")?;
    match g {
        Geometry::WarpedTorus(wt) => {
            let fs = f.samples(g);
            let radial = match xi {
                VectorField::Torus { radial, .. } => radial,
                _ => unreachable!(),
            };
            // e^{f}/sqrt(g) * D_c( sqrt(g) e^{-f} xi^r ); Killing part is
            // divergence-free by theta-independence.
            let n = wt.grid.len();
            let mut prod = vec![0.0; n];
            for i in 0..n {
                prod[i] = wt.rho[i] * wt.phi[i] * (-fs[i]).exp() * radial[i];
            }
            let d = wt.grid.deriv(&prod);
            Ok(ScalarField::Profile(
                (0..n)
                    .map(|i| (fs[i]).exp() / (wt.rho[i] * wt.phi[i]) * d[i])
                    .collect(),
            ))
        }
        _ => {
            // left-invariant frame fields on unimodular groups are
            // divergence-free; f is constant in the class representation
            require_constant_f(f, g, "weighted_divergence")?;
            Ok(ScalarField::Constant(0.0))
        }
    }
}

/// Weighted Laplacian `L u = Delta u - <grad f, grad u>`, realized literally
/// as `weighted_divergence(gradient(u))` so the two operators satisfy the
/// composition identity exactly on the grid.
pub fn weighted_laplacian_apply(g: &Geometry, f: &ScalarField, u: &ScalarField) -> Result<ScalarField> {
    u.require_conforms(g, "weighted_laplacian_apply")?;
    let xi = gradient(g, u)?;
    weighted_divergence(g, f, &xi)
}

/// Plain Laplace–Beltrami operator.
pub fn laplace_beltrami(g: &Geometry, u: &ScalarField) -> Result<ScalarField> {
    weighted_laplacian_apply(g, &ScalarField::Constant(0.0), u)
}

/// `(L_xi g)_{ij}` in class representation.
///
/// Frame classes: the divergence-free remainder is spanned by the model-frame
/// directions, whose diagonal Lie-derivative components vanish; the class
/// projection is therefore zero.
pub fn lie_derivative_metric(g: &Geometry, xi: &VectorField) -> Result<SymmetricTensorField> {
    xi.require_conforms(g, "lie_derivative_metric")?;
    match g {
        Geometry::WarpedTorus(wt) => {
            let radial = match xi {
                VectorField::Torus { radial, .. } => radial,
                _ => unreachable!(),
            };
            let drho = wt.grid.deriv(&wt.rho);
            let dphi = wt.grid.deriv(&wt.phi);
            let dx = wt.grid.deriv(radial);
            let n = wt.grid.len();
            let mut rr = vec![0.0; n];
            let mut tt = vec![0.0; n];
            for i in 0..n {
                rr[i] = 2.0 * wt.rho[i] * drho[i] * radial[i]
                    + 2.0 * wt.rho[i] * wt.rho[i] * dx[i];
                tt[i] = 2.0 * wt.phi[i] * dphi[i] * radial[i];
            }
            Ok(SymmetricTensorField::TorusDiagonal { rr, thth: tt })
        }
        _ => Ok(SymmetricTensorField::zero(g)),
    }
}

/// Drift-modified squared curvature, the alpha-scaled tensor
/// `alpha Rm2(g, xi) = alpha Rm2(g) - 2 L_xi g`.
pub fn drift_modified_rm2(
    g: &Geometry,
    xi: &VectorField,
    alpha: f64,
) -> Result<SymmetricTensorField> {
    if !(alpha > 0.0) {
        return Err(RgError::InvalidCoupling(alpha));
    }
    let rm2 = curvature_package(g).rm_sq;
    let lie = lie_derivative_metric(g, xi)?;
    Ok(rm2.scaled(alpha).add(&lie.scaled(-2.0)))
}

/// Both sides of the weighted double-divergence identity for the Riemann
/// tensor, together with their difference.
#[derive(Debug, Clone)]
pub struct DivDivReport {
    pub lhs: SymmetricTensorField,
    pub rhs: SymmetricTensorField,
    pub residual: SymmetricTensorField,
    /// max absolute residual component (including off-diagonal chart
    /// components on the torus, which both sides must keep at zero)
    pub residual_max: f64,
}

/// Evaluates `e^f nabla^l nabla^i (e^{-f} R_{ijkl})` and the algebraic right
/// side `Dw Ric^BE - Ric^BE.Ric^BE + Rm(Ric^BE) - (1/2) L_X g`,
/// `X = (1/2) grad R^Per`, returning both and their residual.
pub fn divdiv_riemann(g: &Geometry, f: &ScalarField) -> Result<DivDivReport> {
    f.require_conforms(g, "divdiv_riemann")?;
    match g {
        Geometry::ConstantCurvature(cc) => {
            require_constant_f(f, g, "divdiv_riemann")?;
            let n = cc.dim as f64;
            let k = cc.curvature / cc.scale;
            // parallel curvature: the left side vanishes; on the right the
            // quadratic terms cancel exactly
            let be = k * (n - 1.0);
            let rhs_coeff = -(be * be) + k * (n - 1.0) * be;
            let lhs = SymmetricTensorField::Isotropic(0.0);
            let rhs = SymmetricTensorField::Isotropic(rhs_coeff);
            let residual = lhs.sub(&rhs);
            let residual_max = residual.max_abs();
            Ok(DivDivReport {
                lhs,
                rhs,
                residual,
                residual_max,
            })
        }
        Geometry::Homogeneous3(h) => {
            require_constant_f(f, g, "divdiv_riemann")?;
            let (r, k) = milnor_curvatures(h.structure, h.coeff);
            let alg = FrameAlgebra::new(milnor_mu(h.structure, h.coeff));
            // orthonormal Riemann from the frame-plane sectional curvatures
            let mut rm = FrameTensor::zeros(4);
            let kk = |a: usize, b: usize| -> f64 {
                match (a.min(b), a.max(b)) {
                    (0, 1) => k[0],
                    (0, 2) => k[1],
                    (1, 2) => k[2],
                    _ => 0.0,
                }
            };
            for a in 0..3 {
                for b in 0..3 {
                    if a == b {
                        continue;
                    }
                    rm.set(&[a, b, b, a], kk(a, b));
                    rm.set(&[a, b, a, b], -kk(a, b));
                }
            }
            // LHS: contract slot i of nabla Rm, differentiate, contract slot l
            let d1 = alg.nabla(&rm); // [a, i, j, k, l]
            let b3 = FrameAlgebra::contract(&d1, 0, 1); // B_{jkl}
            let d2 = alg.nabla(&b3); // [b, j, k, l]
            let c2 = FrameAlgebra::contract(&d2, 0, 3); // C_{jk}
            // RHS
            let mut ric = FrameTensor::zeros(2);
            for i in 0..3 {
                ric.set(&[i, i], r[i]);
            }
            let lap_ric = alg.rough_laplacian(&ric);
            let mut rhs = FrameTensor::zeros(2);
            for j in 0..3 {
                for kx in 0..3 {
                    let mut quad = 0.0;
                    for a in 0..3 {
                        quad += ric.get(&[kx, a]) * ric.get(&[a, j]);
                    }
                    let mut rm_be = 0.0;
                    for i in 0..3 {
                        for l in 0..3 {
                            rm_be += rm.get(&[i, j, kx, l]) * ric.get(&[i, l]);
                        }
                    }
                    // R^Per is constant: the L_X g term vanishes
                    rhs.set(&[j, kx], lap_ric.get(&[kx, j]) - quad + rm_be);
                }
            }
            let res = c2.sub(&rhs);
            let residual_max = res.comps.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let to_field = |t: &FrameTensor| {
                SymmetricTensorField::FrameDiagonal([
                    h.coeff[0] * t.get(&[0, 0]),
                    h.coeff[1] * t.get(&[1, 1]),
                    h.coeff[2] * t.get(&[2, 2]),
                ])
            };
            Ok(DivDivReport {
                lhs: to_field(&c2),
                rhs: to_field(&rhs),
                residual: to_field(&res),
                residual_max,
            })
        }
        Geometry::WarpedTorus(wt) => {
            let chart = TorusChart::new(wt);
            let n = chart.len();
            let fs = f.samples(g);
            let df = wt.grid.deriv(&fs);
            let gauss = torus_gauss_curvature(wt);
            let rm = chart.riemann(&gauss);

            // LHS = e^f nabla^l nabla^i (e^-f Rm)
            let emf: Vec<f64> = fs.iter().map(|v| (-v).exp()).collect();
            let a4 = rm.scale_by_profile(&emf);
            let d1 = chart.nabla(&a4); // [a, i, j, k, l]
            let b3 = chart.contract(&d1, 0, 1); // B_{jkl}
            let d2 = chart.nabla(&b3); // [b, j, k, l]
            let c2 = chart.contract(&d2, 0, 3); // C_{jk}
            let ef: Vec<f64> = fs.iter().map(|v| v.exp()).collect();
            let lhs_t = c2.scale_by_profile(&ef);

            // RHS
            let be = bakry_emery_ricci(g, f)?;
            let (be_rr, be_tt) = match &be {
                SymmetricTensorField::TorusDiagonal { rr, thth } => (rr.clone(), thth.clone()),
                _ => unreachable!(),
            };
            let mut be_t = ChartTensor::zeros(2, n);
            *be_t.get_mut(&[0, 0]) = be_rr.clone();
            *be_t.get_mut(&[1, 1]) = be_tt.clone();
            let lap_be = chart.rough_laplacian(&be_t);
            let drift_be = chart.grad_contraction(&df, &be_t);
            // quadratic term g^{ab} BE_ka BE_bj (diagonal)
            let mut quad = ChartTensor::zeros(2, n);
            for i in 0..n {
                quad.get_mut(&[0, 0])[i] = be_rr[i] * chart.ginv[0][i] * be_rr[i];
                quad.get_mut(&[1, 1])[i] = be_tt[i] * chart.ginv[1][i] * be_tt[i];
            }
            // Rm(BE)_{jk} = R_{ijkl} BE^{il}
            let mut rm_be = ChartTensor::zeros(2, n);
            for j in 0..2 {
                for kx in 0..2 {
                    let mut comp = vec![0.0; n];
                    for i in 0..2 {
                        for l in 0..2 {
                            let bev = if i == l {
                                if i == 0 { &be_rr } else { &be_tt }
                            } else {
                                continue;
                            };
                            let rv = rm.get(&[i, j, kx, l]);
                            for node in 0..n {
                                comp[node] += rv[node]
                                    * chart.ginv[i][node]
                                    * chart.ginv[l][node]
                                    * bev[node];
                            }
                        }
                    }
                    *rm_be.get_mut(&[j, kx]) = comp;
                }
            }
            // X = (1/2) grad R^Per; L_X g via the class formula
            let scalar = ScalarField::Profile(gauss.iter().map(|k| 2.0 * k).collect());
            let rper = perelman_scalar(g, f)?;
            let rper_s = rper.samples(g);
            let xvec = gradient(g, &ScalarField::Profile(rper_s))?.scaled(0.5);
            let lie = lie_derivative_metric(g, &xvec)?;
            let (lie_rr, lie_tt) = match &lie {
                SymmetricTensorField::TorusDiagonal { rr, thth } => (rr.clone(), thth.clone()),
                _ => unreachable!(),
            };
            let _ = scalar;

            let mut rhs_t = ChartTensor::zeros(2, n);
            for j in 0..2 {
                for kx in 0..2 {
                    let mut comp = vec![0.0; n];
                    let lapv = lap_be.get(&[kx, j]);
                    let driftv = drift_be.get(&[kx, j]);
                    let quadv = quad.get(&[kx, j]);
                    let rmv = rm_be.get(&[j, kx]);
                    for node in 0..n {
                        comp[node] = lapv[node] - driftv[node] - quadv[node] + rmv[node];
                    }
                    if j == kx {
                        let lv = if j == 0 { &lie_rr } else { &lie_tt };
                        for node in 0..n {
                            comp[node] -= 0.5 * lv[node];
                        }
                    }
                    *rhs_t.get_mut(&[j, kx]) = comp;
                }
            }

            let res_t = lhs_t.sub(&rhs_t);
            let residual_max = res_t
                .comps
                .iter()
                .flat_map(|c| c.iter())
                .fold(0.0f64, |m, v| m.max(v.abs()));
            let to_field = |t: &ChartTensor| SymmetricTensorField::TorusDiagonal {
                rr: t.get(&[0, 0]).clone(),
                thth: t.get(&[1, 1]).clone(),
            };
            Ok(DivDivReport {
                lhs: to_field(&lhs_t),
                rhs: to_field(&rhs_t),
                residual: to_field(&res_t),
                residual_max,
            })
        }
    }
}

/// Perelman's modified scalar curvature `R + 2 Delta f - |grad f|^2` with the
/// curvature-module (central difference) operators.
pub fn perelman_scalar(g: &Geometry, f: &ScalarField) -> Result<ScalarField> {
    f.require_conforms(g, "perelman_scalar")?;
    let r = curvature_package(g).scalar;
    match g {
        Geometry::WarpedTorus(wt) => {
            let fs = f.samples(g);
            let lap = laplace_beltrami(g, f)?.samples(g);
            let df = wt.grid.deriv(&fs);
            let rs = r.samples(g);
            Ok(ScalarField::Profile(
                (0..wt.grid.len())
                    .map(|i| {
                        let grad_sq = df[i] * df[i] / (wt.rho[i] * wt.rho[i]);
                        rs[i] + 2.0 * lap[i] - grad_sq
                    })
                    .collect(),
            ))
        }
        _ => {
            require_constant_f(f, g, "perelman_scalar")?;
            Ok(r)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn unit_sphere3() -> Geometry {
        Geometry::constant_curvature(3, 1.0, 1.0).unwrap()
    }

    fn flat_torus(n: usize) -> Geometry {
        Geometry::warped_torus(n, 2.0 * PI, vec![1.0; n], vec![1.0; n]).unwrap()
    }

    fn sin_torus(n: usize, amp: f64) -> Geometry {
        let l = 2.0 * PI;
        let grid = PeriodicGrid::new(n, l);
        let phi = grid.sample(|r| 1.0 + amp * (2.0 * PI * r / l).sin());
        Geometry::warped_torus(n, l, vec![1.0; n], phi).unwrap()
    }

    #[test]
    fn unit_three_sphere_package() {
        let pkg = curvature_package(&unit_sphere3());
        // Ric = 2 g, Rm2 = 4 g, R = 6, |Rm|^2 = 12, sectional range [1, 1]
        assert_eq!(pkg.ricci, SymmetricTensorField::Isotropic(2.0));
        assert_eq!(pkg.rm_sq, SymmetricTensorField::Isotropic(4.0));
        assert_eq!(pkg.scalar, ScalarField::Constant(6.0));
        assert_eq!(pkg.rm_norm_sq, ScalarField::Constant(12.0));
        assert_eq!(pkg.sectional_range, (1.0, 1.0));
    }

    #[test]
    fn flat_torus_package_is_zero() {
        let pkg = curvature_package(&flat_torus(32));
        assert!(pkg.ricci.max_abs() < 1e-14);
        assert!(pkg.rm_sq.max_abs() < 1e-14);
        assert!(pkg.sectional_range.0.abs() < 1e-14);
        assert!(pkg.sectional_range.1.abs() < 1e-14);
    }

    #[test]
    fn round_homogeneous3_matches_constant_curvature() {
        let g = Geometry::homogeneous3([2.0, 2.0, 2.0], [1.0, 1.0, 1.0]).unwrap();
        let pkg = curvature_package(&g);
        match &pkg.ricci {
            SymmetricTensorField::FrameDiagonal(t) => {
                for v in t {
                    assert_relative_eq!(*v, 2.0, epsilon = 1e-14);
                }
            }
            _ => panic!(),
        }
        assert_relative_eq!(pkg.sectional_range.0, 1.0, epsilon = 1e-14);
        assert_relative_eq!(pkg.sectional_range.1, 1.0, epsilon = 1e-14);
        match pkg.rm_norm_sq {
            ScalarField::Constant(v) => assert_relative_eq!(v, 12.0, epsilon = 1e-13),
            _ => panic!(),
        }
    }

    #[test]
    fn nil_geometry_sectional_range() {
        // Heisenberg-type structure (1, 0, 0) with the unit metric has
        // principal Ricci (1/2, -1/2, -1/2) and sectional range [-3/4, 1/4].
        let (r, k) = milnor_curvatures([1.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
        assert_relative_eq!(r[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(r[1], -0.5, epsilon = 1e-14);
        assert_relative_eq!(r[2], -0.5, epsilon = 1e-14);
        let kmin = k.iter().cloned().fold(f64::INFINITY, f64::min);
        let kmax = k.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(kmin, -0.75, epsilon = 1e-14);
        assert_relative_eq!(kmax, 0.25, epsilon = 1e-14);
    }

    #[test]
    fn trace_of_rm_sq_equals_norm_sq() {
        for g in [
            unit_sphere3(),
            Geometry::constant_curvature(4, -1.0, 2.0).unwrap(),
            Geometry::homogeneous3([2.0, 1.5, 0.5], [1.0, 2.0, 0.7]).unwrap(),
            sin_torus(48, 0.15),
        ] {
            let pkg = curvature_package(&g);
            let tr = pkg.rm_sq.trace(&g).samples(&g);
            let norm = pkg.rm_norm_sq.samples(&g);
            for (a, b) in tr.iter().zip(&norm) {
                assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn scalar_is_sum_of_frame_plane_sectionals() {
        let g = Geometry::homogeneous3([2.0, 1.0, 0.5], [1.3, 0.8, 2.0]).unwrap();
        let pkg = curvature_package(&g);
        let (_, k) = milnor_curvatures([2.0, 1.0, 0.5], [1.3, 0.8, 2.0]);
        let sum = 2.0 * (k[0] + k[1] + k[2]);
        match pkg.scalar {
            ScalarField::Constant(r) => assert_relative_eq!(r, sum, epsilon = 1e-13),
            _ => panic!(),
        }
    }

    #[test]
    fn scaling_laws_on_frame_classes() {
        let lambda = 3.7;
        for g in [
            unit_sphere3(),
            Geometry::constant_curvature(4, -0.5, 1.4).unwrap(),
            Geometry::homogeneous3([2.0, 1.5, 0.5], [1.0, 2.0, 0.7]).unwrap(),
        ] {
            let gs = g.rescale(lambda).unwrap();
            let p0 = curvature_package(&g);
            let p1 = curvature_package(&gs);
            // R -> R/lambda, |Rm|^2 -> |Rm|^2/lambda^2, K-range -> /lambda
            let r0 = p0.scalar.samples(&g)[0];
            let r1 = p1.scalar.samples(&gs)[0];
            assert_relative_eq!(r1, r0 / lambda, max_relative = 1e-12);
            let n0 = p0.rm_norm_sq.samples(&g)[0];
            let n1 = p1.rm_norm_sq.samples(&gs)[0];
            assert_relative_eq!(n1, n0 / (lambda * lambda), max_relative = 1e-12);
            assert_relative_eq!(
                p1.sectional_range.0,
                p0.sectional_range.0 / lambda,
                max_relative = 1e-12
            );
            // Ric invariant in tensor form: absolute components unchanged.
            match (&p0.ricci, &p1.ricci, &g) {
                (
                    SymmetricTensorField::Isotropic(c0),
                    SymmetricTensorField::Isotropic(c1),
                    Geometry::ConstantCurvature(cc),
                ) => {
                    assert_relative_eq!(
                        c1 * lambda * cc.scale,
                        c0 * cc.scale,
                        max_relative = 1e-12
                    );
                }
                (
                    SymmetricTensorField::FrameDiagonal(t0),
                    SymmetricTensorField::FrameDiagonal(t1),
                    _,
                ) => {
                    for i in 0..3 {
                        assert_relative_eq!(t1[i], t0[i], max_relative = 1e-12);
                    }
                }
                _ => panic!(),
            }
        }
    }

    #[test]
    fn bakry_emery_examples() {
        // constant f leaves Ric untouched
        let g = unit_sphere3();
        let be = bakry_emery_ricci(&g, &ScalarField::Constant(0.3)).unwrap();
        assert_eq!(be, SymmetricTensorField::Isotropic(2.0));
        assert_relative_eq!(be.min_eigenvalue_vs_metric(&g), 2.0, epsilon = 1e-14);

        // flat torus: Hess_rr = f'' (up to truncation), Hess_tt = 0
        let n = 64;
        let g = flat_torus(n);
        let wt = g.as_torus().unwrap();
        let f = ScalarField::Profile(wt.grid.sample(|r| 0.3 * (r).cos()));
        let be = bakry_emery_ricci(&g, &f).unwrap();
        match be {
            SymmetricTensorField::TorusDiagonal { rr, thth } => {
                let exact = wt.grid.sample(|r| -0.3 * (r).cos());
                let err = rr
                    .iter()
                    .zip(&exact)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                assert!(err < 5e-3, "Hessian error {err}");
                assert!(thth.iter().all(|v| v.abs() < 1e-14));
            }
            _ => panic!(),
        }

        // profile f on a frame class is a representation error
        assert!(bakry_emery_ricci(&unit_sphere3(), &ScalarField::Profile(vec![0.0; 4])).is_err());
    }

    #[test]
    fn weighted_laplacian_matches_closed_form() {
        let n = 128;
        let g = flat_torus(n);
        let wt = g.as_torus().unwrap();
        let f = ScalarField::Profile(wt.grid.sample(|r| r.cos()));
        let u = ScalarField::Profile(wt.grid.sample(|r| r.sin()));
        let lap = weighted_laplacian_apply(&g, &f, &u).unwrap().samples(&g);
        // u'' - f' u' = -sin r - (-sin r)(cos r)
        let exact = wt.grid.sample(|r| -r.sin() + r.sin() * r.cos());
        let err = lap
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 6e-3, "weighted Laplacian error {err}");

        // constant u maps to zero, constant f reduces to Laplace-Beltrami
        let z = weighted_laplacian_apply(&g, &f, &ScalarField::Constant(2.0))
            .unwrap()
            .samples(&g);
        assert!(z.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn weighted_divergence_identities() {
        let n = 96;
        let l = 2.0 * PI;
        let grid = PeriodicGrid::new(n, l);
        let rho = grid.sample(|r| 1.0 + 0.1 * r.cos());
        let phi = grid.sample(|r| 1.0 + 0.2 * (r + 0.3).sin());
        let g = Geometry::warped_torus(n, l, rho, phi).unwrap();
        let f = ScalarField::Profile(grid.sample(|r| 0.4 * (r).sin()));

        // div^w of a gradient equals the weighted Laplacian exactly
        let u = ScalarField::Profile(grid.sample(|r| 0.7 * (2.0 * r).cos()));
        let xi = gradient(&g, &u).unwrap();
        let a = weighted_divergence(&g, &f, &xi).unwrap().samples(&g);
        let b = weighted_laplacian_apply(&g, &f, &u).unwrap().samples(&g);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-13);
        }

        // weighted integral of div^w xi vanishes exactly (flux form)
        let quad = g.quadrature();
        let fs = f.samples(&g);
        let xi2 = VectorField::Torus {
            radial: grid.sample(|r| 0.5 + 0.3 * r.sin()),
            killing: 0.7,
        };
        let div = weighted_divergence(&g, &f, &xi2).unwrap().samples(&g);
        let total: f64 = (0..n)
            .map(|i| div[i] * (-fs[i]).exp() * quad.node_weights[i])
            .sum();
        assert!(total.abs() < 1e-10, "weighted divergence mass {total}");

        // zero field maps to zero; Killing field is divergence-free
        let z = weighted_divergence(&g, &f, &VectorField::zero(&g)).unwrap();
        assert!(z.samples(&g).iter().all(|v| v.abs() < 1e-15));
        let killing = VectorField::Torus {
            radial: vec![0.0; n],
            killing: 1.0,
        };
        let dk = weighted_divergence(&g, &f, &killing).unwrap();
        assert!(dk.samples(&g).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn lie_derivative_examples() {
        let n = 128;
        let g = flat_torus(n);
        let wt = g.as_torus().unwrap();

        // Killing field: zero
        let killing = VectorField::Torus {
            radial: vec![0.0; n],
            killing: 1.0,
        };
        let l = lie_derivative_metric(&g, &killing).unwrap();
        assert!(l.max_abs() < 1e-15);

        // gradient field on the flat torus: (L g)_rr = 2 psi'', (L g)_tt = 0
        let psi = ScalarField::Profile(wt.grid.sample(|r| r.sin()));
        let xi = gradient(&g, &psi).unwrap();
        let l = lie_derivative_metric(&g, &xi).unwrap();
        match l {
            SymmetricTensorField::TorusDiagonal { rr, thth } => {
                let exact = wt.grid.sample(|r| -2.0 * r.sin());
                let err = rr
                    .iter()
                    .zip(&exact)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                assert!(err < 5e-3, "Lie derivative error {err}");
                assert!(thth.iter().all(|v| v.abs() < 1e-14));
            }
            _ => panic!(),
        }

        // frame classes project to zero
        let g3 = Geometry::homogeneous3([2.0, 1.0, 0.5], [1.0, 2.0, 0.7]).unwrap();
        let v = VectorField::Frame(vec![0.3, -0.2, 0.9]);
        assert!(lie_derivative_metric(&g3, &v).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn drift_modified_rm2_examples() {
        let g = unit_sphere3();
        let xi = VectorField::zero(&g);
        // alpha = 1: alpha Rm2(g, 0) = Rm2 = 4 g
        let t = drift_modified_rm2(&g, &xi, 1.0).unwrap();
        assert_eq!(t, SymmetricTensorField::Isotropic(4.0));
        assert!(matches!(
            drift_modified_rm2(&g, &xi, 0.0),
            Err(RgError::InvalidCoupling(_))
        ));

        // flat torus: equals -2 L_xi g exactly
        let n = 64;
        let g = flat_torus(n);
        let wt = g.as_torus().unwrap();
        let xi = VectorField::Torus {
            radial: wt.grid.sample(|r| 0.2 * r.sin()),
            killing: 0.0,
        };
        let t = drift_modified_rm2(&g, &xi, 2.5).unwrap();
        let lie = lie_derivative_metric(&g, &xi).unwrap().scaled(-2.0);
        let d = t.sub(&lie);
        assert!(d.max_abs() < 1e-13);
    }

    #[test]
    fn divdiv_vanishes_on_einstein_and_flat() {
        // Einstein constant-curvature classes with f = 0
        for g in [
            unit_sphere3(),
            Geometry::constant_curvature(3, -1.0, 2.0).unwrap(),
            Geometry::constant_curvature(4, 1.0, 0.5).unwrap(),
        ] {
            let rep = divdiv_riemann(&g, &ScalarField::Constant(0.0)).unwrap();
            assert!(rep.residual_max < 1e-12, "residual {}", rep.residual_max);
            assert!(rep.lhs.max_abs() < 1e-14);
        }
        // flat torus with f = 0: both sides exactly zero
        let g = flat_torus(32);
        let rep = divdiv_riemann(&g, &ScalarField::Constant(0.0)).unwrap();
        assert_eq!(rep.residual_max, 0.0);

        // flat torus with f != 0: left side still exactly zero
        let wt = g.as_torus().unwrap();
        let f = ScalarField::Profile(wt.grid.sample(|r| 0.3 * r.cos()));
        let rep = divdiv_riemann(&g, &f).unwrap();
        assert_eq!(rep.lhs.max_abs(), 0.0);
    }

    #[test]
    fn divdiv_identity_is_algebraic_on_homogeneous3() {
        // In the frame algebra the identity must hold to machine precision,
        // anisotropy and all.
        for (structure, coeff) in [
            ([2.0, 2.0, 2.0], [1.0, 1.4, 0.6]),
            ([2.0, 1.0, 0.5], [1.0, 2.0, 0.7]),
            ([1.0, 0.0, 0.0], [1.0, 1.0, 1.0]),
            ([1.0, -1.0, 0.0], [0.8, 1.2, 1.0]),
        ] {
            let g = Geometry::homogeneous3(structure, coeff).unwrap();
            let rep = divdiv_riemann(&g, &ScalarField::Constant(0.1)).unwrap();
            assert!(
                rep.residual_max < 1e-12,
                "residual {} for {structure:?}/{coeff:?}",
                rep.residual_max
            );
        }
    }

    #[test]
    fn divdiv_second_order_on_warped_torus() {
        let l = 2.0 * PI;
        let res_at = |n: usize| {
            let grid = PeriodicGrid::new(n, l);
            let phi = grid.sample(|r| 1.0 + 0.1 * (2.0 * PI * r / l).sin());
            let g = Geometry::warped_torus(n, l, vec![1.0; n], phi).unwrap();
            let f = ScalarField::Profile(grid.sample(|r| 0.3 * r.cos()));
            divdiv_riemann(&g, &f).unwrap().residual_max
        };
        let e1 = res_at(64);
        let e2 = res_at(128);
        let order = (e1 / e2).log2();
        assert!(order > 1.9, "measured order {order} ({e1} -> {e2})");
    }
}
