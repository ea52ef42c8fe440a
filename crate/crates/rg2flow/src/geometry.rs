//! The three symmetry-reduced geometry classes and their quadrature.
//!
//! * `ConstantCurvature` — `g = sigma * g0` where `g0` is the model of constant
//!   sectional curvature `K` in dimension `n`. The effective sectional
//!   curvature is `K / sigma`.
//! * `Homogeneous3` — left-invariant diagonal metric `(a, b, c)` on a
//!   unimodular 3-dimensional Lie group in a Milnor frame with structure
//!   constants `(l1, l2, l3)`: `[e2, e3] = l1 e1` and cyclic.
//! * `WarpedTorus` — `rho(r)^2 dr^2 + phi(r)^2 dtheta^2` on `T^2` with periodic
//!   profile samples on a uniform grid, `theta` of coordinate period `2 pi`.
//!
//! Volume conventions: spheres use the closed form for curvature `K > 0`;
//! non-positive constant curvature stands for an implicitly represented
//! compact quotient with unit model volume. Homogeneous3 uses
//! `16 pi^2 sqrt(abc) / (l1 l2 l3)` when all structure constants are positive
//! (so that `(2,2,2)/(1,1,1)` is the round unit 3-sphere) and the unit-lattice
//! convention `sqrt(abc)` otherwise.

use crate::error::{Result, RgError};
use crate::grid::PeriodicGrid;

pub const MIN_TORUS_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryClass {
    ConstantCurvature,
    Homogeneous3,
    WarpedTorus,
}

impl std::fmt::Display for GeometryClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GeometryClass::ConstantCurvature => write!(f, "constant-curvature"),
            GeometryClass::Homogeneous3 => write!(f, "homogeneous-3"),
            GeometryClass::WarpedTorus => write!(f, "warped-torus"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantCurvature {
    pub dim: u32,
    pub curvature: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Homogeneous3 {
    pub structure: [f64; 3],
    pub coeff: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpedTorus {
    pub grid: PeriodicGrid,
    pub rho: Vec<f64>,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    ConstantCurvature(ConstantCurvature),
    Homogeneous3(Homogeneous3),
    WarpedTorus(WarpedTorus),
}

/// Riemannian volume weights `dmu` per node. Frame-homogeneous classes carry a
/// single node whose weight is the total volume.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureTable {
    pub node_weights: Vec<f64>,
    pub total_volume: f64,
}

/// n-volume of the unit n-sphere, `2 pi^{(n+1)/2} / Gamma((n+1)/2)`.
pub fn unit_sphere_volume(n: u32) -> f64 {
    use std::f64::consts::PI;
    // Gamma((n+1)/2) via the half-integer recursion.
    let mut x = 0.5 * (n as f64 + 1.0);
    let mut gamma = 1.0;
    while x > 1.5 {
        x -= 1.0;
        gamma *= x;
    }
    if (x - 0.5).abs() < 1e-12 {
        gamma *= PI.sqrt();
    }
    2.0 * PI.powf(0.5 * (n as f64 + 1.0)) / gamma
}

impl Geometry {
    pub fn constant_curvature(dim: u32, curvature: f64, scale: f64) -> Result<Self> {
        if dim < 2 {
            return Err(RgError::InvalidGeometry(format!(
                "constant-curvature dimension must be >= 2, got {dim}"
            )));
        }
        if !(scale > 0.0) || !scale.is_finite() || !curvature.is_finite() {
            return Err(RgError::InvalidGeometry(format!(
                "constant-curvature scale must be positive and finite, got sigma = {scale}, K = {curvature}"
            )));
        }
        Ok(Geometry::ConstantCurvature(ConstantCurvature {
            dim,
            curvature,
            scale,
        }))
    }

    pub fn homogeneous3(structure: [f64; 3], coeff: [f64; 3]) -> Result<Self> {
        if coeff.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
            return Err(RgError::InvalidGeometry(format!(
                "Milnor-frame metric coefficients must be positive, got {coeff:?}"
            )));
        }
        if structure.iter().any(|l| !l.is_finite()) {
            return Err(RgError::InvalidGeometry(
                "structure constants must be finite".into(),
            ));
        }
        Ok(Geometry::Homogeneous3(Homogeneous3 { structure, coeff }))
    }

    pub fn warped_torus(n: usize, length: f64, rho: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if n < MIN_TORUS_NODES {
            return Err(RgError::Resolution {
                n,
                min: MIN_TORUS_NODES,
            });
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(RgError::InvalidGeometry(format!(
                "torus domain length must be positive, got {length}"
            )));
        }
        if rho.len() != n || phi.len() != n {
            return Err(RgError::InvalidGeometry(format!(
                "profile sample count mismatch: N = {n}, |rho| = {}, |phi| = {}",
                rho.len(),
                phi.len()
            )));
        }
        if rho
            .iter()
            .chain(phi.iter())
            .any(|&v| !(v > 0.0) || !v.is_finite())
        {
            return Err(RgError::InvalidGeometry(
                "torus profiles must be strictly positive".into(),
            ));
        }
        Ok(Geometry::WarpedTorus(WarpedTorus {
            grid: PeriodicGrid::new(n, length),
            rho,
            phi,
        }))
    }

    pub fn class(&self) -> GeometryClass {
        match self {
            Geometry::ConstantCurvature(_) => GeometryClass::ConstantCurvature,
            Geometry::Homogeneous3(_) => GeometryClass::Homogeneous3,
            Geometry::WarpedTorus(_) => GeometryClass::WarpedTorus,
        }
    }

    pub fn dim(&self) -> u32 {
        match self {
            Geometry::ConstantCurvature(cc) => cc.dim,
            Geometry::Homogeneous3(_) => 3,
            Geometry::WarpedTorus(_) => 2,
        }
    }

    /// Number of spatial nodes carried by the class representation.
    pub fn node_count(&self) -> usize {
        match self {
            Geometry::WarpedTorus(wt) => wt.grid.len(),
            _ => 1,
        }
    }

    pub fn quadrature(&self) -> QuadratureTable {
        match self {
            Geometry::ConstantCurvature(cc) => {
                let model = if cc.curvature > 0.0 {
                    unit_sphere_volume(cc.dim) * cc.curvature.powf(-(cc.dim as f64) / 2.0)
                } else {
                    1.0
                };
                let vol = cc.scale.powf(cc.dim as f64 / 2.0) * model;
                QuadratureTable {
                    node_weights: vec![vol],
                    total_volume: vol,
                }
            }
            Geometry::Homogeneous3(h) => {
                let [l1, l2, l3] = h.structure;
                let root = (h.coeff[0] * h.coeff[1] * h.coeff[2]).sqrt();
                let vol = if l1 > 0.0 && l2 > 0.0 && l3 > 0.0 {
                    16.0 * std::f64::consts::PI.powi(2) * root / (l1 * l2 * l3)
                } else {
                    root
                };
                QuadratureTable {
                    node_weights: vec![vol],
                    total_volume: vol,
                }
            }
            Geometry::WarpedTorus(wt) => {
                let w = wt.grid.spacing() * 2.0 * std::f64::consts::PI;
                let node_weights: Vec<f64> = wt
                    .rho
                    .iter()
                    .zip(&wt.phi)
                    .map(|(r, p)| r * p * w)
                    .collect();
                let total_volume = node_weights.iter().sum();
                QuadratureTable {
                    node_weights,
                    total_volume,
                }
            }
        }
    }

    pub fn volume(&self) -> f64 {
        self.quadrature().total_volume
    }

    /// `g -> lambda g`.
    pub fn rescale(&self, lambda: f64) -> Result<Geometry> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(RgError::InvalidScale(lambda));
        }
        Ok(match self {
            Geometry::ConstantCurvature(cc) => Geometry::ConstantCurvature(ConstantCurvature {
                scale: lambda * cc.scale,
                ..*cc
            }),
            Geometry::Homogeneous3(h) => Geometry::Homogeneous3(Homogeneous3 {
                structure: h.structure,
                coeff: [
                    lambda * h.coeff[0],
                    lambda * h.coeff[1],
                    lambda * h.coeff[2],
                ],
            }),
            Geometry::WarpedTorus(wt) => {
                let s = lambda.sqrt();
                Geometry::WarpedTorus(WarpedTorus {
                    grid: wt.grid.clone(),
                    rho: wt.rho.iter().map(|v| s * v).collect(),
                    phi: wt.phi.iter().map(|v| s * v).collect(),
                })
            }
        })
    }

    /// Geodesic diameter where the class makes it computable: closed form for
    /// round spheres, a profile-integration estimate for the torus.
    pub fn diameter(&self) -> Option<f64> {
        match self {
            Geometry::ConstantCurvature(cc) if cc.curvature > 0.0 => {
                Some(std::f64::consts::PI * (cc.scale / cc.curvature).sqrt())
            }
            Geometry::WarpedTorus(wt) => {
                let r_circ = wt.grid.integrate(&wt.rho);
                let th_circ =
                    2.0 * std::f64::consts::PI * wt.phi.iter().cloned().fold(0.0f64, f64::max);
                Some(0.5 * (r_circ * r_circ + th_circ * th_circ).sqrt())
            }
            _ => None,
        }
    }

    pub fn as_torus(&self) -> Option<&WarpedTorus> {
        match self {
            Geometry::WarpedTorus(wt) => Some(wt),
            _ => None,
        }
    }
}

/// Scalar field in class representation: spatially constant on the
/// frame-homogeneous classes, an `r`-profile on the torus.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarField {
    Constant(f64),
    Profile(Vec<f64>),
}

impl ScalarField {
    pub fn zero(g: &Geometry) -> Self {
        match g {
            Geometry::WarpedTorus(wt) => ScalarField::Profile(vec![0.0; wt.grid.len()]),
            _ => ScalarField::Constant(0.0),
        }
    }

    pub fn conforms(&self, g: &Geometry) -> bool {
        match (self, g) {
            (ScalarField::Profile(v), Geometry::WarpedTorus(wt)) => v.len() == wt.grid.len(),
            (ScalarField::Constant(_), Geometry::WarpedTorus(_)) => true,
            (ScalarField::Constant(_), _) => true,
            (ScalarField::Profile(_), _) => false,
        }
    }

    /// Node samples matching the geometry's quadrature table.
    pub fn samples(&self, g: &Geometry) -> Vec<f64> {
        match self {
            ScalarField::Constant(c) => vec![*c; g.node_count()],
            ScalarField::Profile(v) => v.clone(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            ScalarField::Constant(_) => true,
            ScalarField::Profile(v) => {
                let first = v[0];
                v.iter().all(|&x| (x - first).abs() < 1e-14 * (1.0 + first.abs()))
            }
        }
    }

    pub fn require_conforms(&self, g: &Geometry, what: &str) -> Result<()> {
        if self.conforms(g) {
            Ok(())
        } else {
            Err(RgError::Representation(format!(
                "{what}: scalar profile does not match a {} geometry",
                g.class()
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn unit_three_sphere_volume() {
        let g = Geometry::constant_curvature(3, 1.0, 1.0).unwrap();
        assert_relative_eq!(g.volume(), 2.0 * PI * PI, max_relative = 1e-14);
    }

    #[test]
    fn flat_torus_volume() {
        let n = 64;
        let g = Geometry::warped_torus(n, 2.0 * PI, vec![1.0; n], vec![1.0; n]).unwrap();
        assert_relative_eq!(g.volume(), 4.0 * PI * PI, max_relative = 1e-13);
    }

    #[test]
    fn round_homogeneous3_matches_unit_sphere() {
        let g = Geometry::homogeneous3([2.0, 2.0, 2.0], [1.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(g.volume(), 2.0 * PI * PI, max_relative = 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Geometry::constant_curvature(1, 1.0, 1.0).is_err());
        assert!(Geometry::constant_curvature(3, 1.0, -1.0).is_err());
        assert!(Geometry::homogeneous3([2.0, 2.0, 2.0], [1.0, 0.0, 1.0]).is_err());
        assert!(matches!(
            Geometry::warped_torus(8, 1.0, vec![1.0; 8], vec![1.0; 8]),
            Err(RgError::Resolution { n: 8, min: 16 })
        ));
        let g = Geometry::constant_curvature(3, 1.0, 1.0).unwrap();
        assert!(matches!(g.rescale(0.0), Err(RgError::InvalidScale(_))));
        assert!(g.rescale(-2.0).is_err());
    }

    #[test]
    fn rescale_identity() {
        let g = Geometry::homogeneous3([2.0, 1.0, -0.5], [1.0, 2.0, 3.0]).unwrap();
        assert_eq!(g.rescale(1.0).unwrap(), g);
    }

    #[test]
    fn torus_quadrature_is_exact_for_smooth_profiles_and_second_order_for_corners() {
        // Smooth sin-perturbed profile: the periodic rectangle rule integrates
        // it exactly, so halving N changes nothing beyond roundoff.
        let vol = |n: usize| {
            let l = 2.0 * PI;
            let grid = PeriodicGrid::new(n, l);
            let phi = grid.sample(|r| 1.0 + 0.1 * (2.0 * PI * r / l).sin());
            Geometry::warped_torus(n, l, vec![1.0; n], phi)
                .unwrap()
                .volume()
        };
        assert!((vol(64) - vol(32)).abs() < 1e-12 * vol(64));

        // A C0 corner profile has a genuine O(N^-2) quadrature error; measure
        // the order against the closed form.
        let corner_vol = |n: usize| {
            let l = 2.0 * PI;
            let grid = PeriodicGrid::new(n, l);
            let phi = grid.sample(|r| 1.0 + 0.1 * (PI * r / l).sin().abs());
            Geometry::warped_torus(n, l, vec![1.0; n], phi)
                .unwrap()
                .volume()
        };
        // closed form: 2 pi * (L + 0.1 * 2L/pi)
        let exact = 2.0 * PI * (2.0 * PI + 0.1 * 4.0);
        let e1 = (corner_vol(64) - exact).abs();
        let e2 = (corner_vol(128) - exact).abs();
        let order = (e1 / e2).log2();
        assert!(order > 1.9 && order < 2.5, "measured order {order}");
    }

    proptest! {
        #[test]
        fn rescale_round_trip(lambda in 0.05f64..20.0, sigma in 0.1f64..10.0, k in -2.0f64..2.0) {
            let g = Geometry::constant_curvature(3, k, sigma).unwrap();
            let back = g.rescale(lambda).unwrap().rescale(1.0 / lambda).unwrap();
            match (&g, &back) {
                (Geometry::ConstantCurvature(a), Geometry::ConstantCurvature(b)) => {
                    prop_assert!((a.scale - b.scale).abs() <= 1e-14 * a.scale);
                }
                _ => unreachable!(),
            }
        }

        #[test]
        fn volume_scaling_law(lambda in 0.1f64..10.0) {
            for g in [
                Geometry::constant_curvature(3, 1.0, 1.3).unwrap(),
                Geometry::constant_curvature(4, 1.0, 0.7).unwrap(),
                Geometry::homogeneous3([2.0, 2.0, 2.0], [1.0, 1.5, 0.8]).unwrap(),
            ] {
                let n = g.dim() as f64;
                let scaled = g.rescale(lambda).unwrap();
                let expected = lambda.powf(n / 2.0) * g.volume();
                prop_assert!((scaled.volume() - expected).abs() <= 1e-12 * expected.abs());
            }
            // torus at the looser grid tolerance
            let n = 32;
            let l = 2.0 * PI;
            let grid = PeriodicGrid::new(n, l);
            let phi = grid.sample(|r| 1.0 + 0.2 * (2.0 * PI * r / l).cos());
            let g = Geometry::warped_torus(n, l, vec![1.0; n], phi).unwrap();
            let scaled = g.rescale(lambda).unwrap();
            let expected = lambda * g.volume();
            prop_assert!((scaled.volume() - expected).abs() <= 1e-10 * expected.abs());
        }
    }
}
