//! The manifold-with-density layer: reference measure `dw = e^{-f} dmu`, the
//! geometric coupling `alpha_g`, the weighted Helmholtz decomposition of
//! drift fields, and the Fokker–Planck step for the measure.
//!
//! The measure evolution is carried by the log-density `f`, which keeps the
//! density positive by construction, while the right-hand side is assembled
//! in flux form so the discrete total mass is a first integral of the
//! semi-discrete system (RK4 then preserves it to its order).

use crate::curvature::{gradient, weighted_divergence, weighted_laplacian_apply, VectorField};
use crate::error::{Result, RgError};
use crate::geometry::{Geometry, ScalarField};
use nalgebra::{DMatrix, DVector};

/// Density exponent plus the normalization flag for the probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityData {
    pub f: ScalarField,
    pub normalized: bool,
}

impl DensityData {
    pub fn new(g: &Geometry, f: ScalarField) -> Result<Self> {
        f.require_conforms(g, "DensityData")?;
        Ok(DensityData {
            f,
            normalized: false,
        })
    }

    /// Measure weights `e^{-f} dmu` per node.
    pub fn weights(&self, g: &Geometry) -> Vec<f64> {
        let quad = g.quadrature();
        let fs = self.f.samples(g);
        fs.iter()
            .zip(&quad.node_weights)
            .map(|(f, w)| (-f).exp() * w)
            .collect()
    }

    /// Total mass `int e^{-f} dmu`.
    pub fn mass(&self, g: &Geometry) -> f64 {
        self.weights(g).iter().sum()
    }

    /// Weights of the normalized probability measure; sums to one.
    pub fn normalized_weights(&self, g: &Geometry) -> Vec<f64> {
        let w = self.weights(g);
        let m: f64 = w.iter().sum();
        w.into_iter().map(|x| x / m).collect()
    }

    pub fn alpha(&self, g: &Geometry) -> f64 {
        alpha_from_mass(self.mass(g), g.dim())
    }
}

pub fn alpha_from_mass(mass: f64, dim: u32) -> f64 {
    mass.powf(2.0 / dim as f64)
}

/// The geometric coupling: `alpha_g^{n/2} = int e^{-f} dmu`.
pub fn alpha_g(g: &Geometry, f: &ScalarField) -> Result<f64> {
    f.require_conforms(g, "alpha_g")?;
    let d = DensityData::new(g, f.clone())?;
    Ok(d.alpha(g))
}

/// Drift field split into its gradient potential and divergence-free
/// remainder: `xi = grad psi + perp` with `div^w perp = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftField {
    pub psi: ScalarField,
    pub perp: VectorField,
}

impl DriftField {
    pub fn zero(g: &Geometry) -> Self {
        DriftField {
            psi: ScalarField::zero(g),
            perp: VectorField::zero(g),
        }
    }

    pub fn assembled(&self, g: &Geometry) -> Result<VectorField> {
        Ok(gradient(g, &self.psi)?.add(&self.perp))
    }

    pub fn is_zero(&self, g: &Geometry) -> bool {
        self.assembled(g)
            .map(|v| v.max_norm_sq(g) < 1e-28)
            .unwrap_or(false)
    }
}

/// Dense matrix of the composite weighted Laplacian used by the Poisson
/// solve, acting on node vectors.
fn weighted_laplacian_matrix(g: &Geometry, f: &ScalarField) -> DMatrix<f64> {
    let n = g.node_count();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = weighted_laplacian_apply(g, f, &ScalarField::Profile(e))
            .expect("representation checked by caller")
            .samples(g);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    m
}

/// Weighted Helmholtz decomposition via the Otto parametrization: solves
/// `Lw psi = div^w xi` for the zero-mean potential and returns the
/// decomposition with `perp = xi - grad psi`.
pub fn helmholtz_otto(g: &Geometry, f: &ScalarField, xi: &VectorField) -> Result<DriftField> {
    f.require_conforms(g, "helmholtz_otto")?;
    xi.require_conforms(g, "helmholtz_otto")?;
    match g {
        Geometry::WarpedTorus(_) => {
            let rhs_field = weighted_divergence(g, f, xi)?;
            let rhs = DVector::from_vec(rhs_field.samples(g));
            let m = weighted_laplacian_matrix(g, f);
            // singular system (constants, and the checkerboard mode of the
            // wide stencil, lie in the kernel): minimum-norm least squares
            let svd = m.clone().svd(true, true);
            let psi_vec = svd
                .solve(&rhs, 1e-10)
                .map_err(|_| RgError::SolverFailure { residual: f64::NAN })?;
            let residual = (&m * &psi_vec - &rhs).amax();
            let scale = rhs.amax().max(1.0);
            if residual > 1e-8 * scale {
                return Err(RgError::SolverFailure {
                    residual: residual / scale,
                });
            }
            // zero-mean representative with respect to dw
            let dd = DensityData::new(g, f.clone())?;
            let w = dd.weights(g);
            let mass: f64 = w.iter().sum();
            let mean: f64 = psi_vec
                .iter()
                .zip(&w)
                .map(|(p, wi)| p * wi)
                .sum::<f64>()
                / mass;
            let psi = ScalarField::Profile(psi_vec.iter().map(|p| p - mean).collect());
            let grad_psi = gradient(g, &psi)?;
            let perp = xi.sub(&grad_psi);
            Ok(DriftField { psi, perp })
        }
        _ => {
            // class scalars are constants: gradients vanish and every frame
            // field is already divergence-free
            Ok(DriftField {
                psi: ScalarField::Constant(0.0),
                perp: xi.clone(),
            })
        }
    }
}

/// Explicit stability bound for the measure step.
pub fn fokker_planck_step_bound(g: &Geometry, f: &ScalarField) -> f64 {
    match g {
        Geometry::WarpedTorus(wt) => {
            let h = wt.grid.spacing();
            let fs = f.samples(g);
            let df = wt.grid.deriv(&fs);
            let sup_grad = df
                .iter()
                .zip(&wt.rho)
                .map(|(d, r)| (d / r).abs())
                .fold(0.0f64, f64::max);
            let min_rho2 = wt
                .rho
                .iter()
                .map(|r| r * r)
                .fold(f64::INFINITY, f64::min);
            0.25 * h * h * min_rho2 / sup_grad.max(1.0)
        }
        _ => f64::INFINITY,
    }
}

/// One RK4 step of the measure evolution `d/d_eta dw = Lap dw + div^w xi dw`
/// on a frozen metric, carried by the log-density. Frame classes reduce
/// exactly to a stationary density shape.
pub fn fokker_planck_step(
    g: &Geometry,
    f: &ScalarField,
    xi: &DriftField,
    d_eta: f64,
) -> Result<ScalarField> {
    f.require_conforms(g, "fokker_planck_step")?;
    let bound = fokker_planck_step_bound(g, f);
    if d_eta > bound {
        return Err(RgError::StepSize { dt: d_eta, bound });
    }
    let wt = match g {
        Geometry::WarpedTorus(wt) => wt,
        // constant f, divergence-free drift: stationary
        _ => return Ok(f.clone()),
    };
    let n = wt.grid.len();
    let xi_radial = match xi.assembled(g)? {
        VectorField::Torus { radial, .. } => radial,
        _ => unreachable!(),
    };
    // diffusion coefficient sqrt(g) g^{rr} = phi/rho and density prefactors
    let diff_c: Vec<f64> = (0..n).map(|i| wt.phi[i] / wt.rho[i]).collect();
    let sqrt_g: Vec<f64> = (0..n).map(|i| wt.rho[i] * wt.phi[i]).collect();

    let rhs = |fs: &Vec<f64>| -> Result<Vec<f64>> {
        let u: Vec<f64> = (0..n).map(|i| (-fs[i]).exp()).collect();
        if u.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(RgError::Positivity);
        }
        let lap = wt.grid.flux_laplacian(&diff_c, &u);
        let drift_prod: Vec<f64> = (0..n).map(|i| sqrt_g[i] * xi_radial[i] * u[i]).collect();
        let drift = wt.grid.deriv(&drift_prod);
        // d_eta u_node = lap + drift, with u_node = e^{-f} sqrt(g);
        // d_eta f = -(d_eta u_node)/u_node
        Ok((0..n)
            .map(|i| -(lap[i] + drift[i]) / (u[i] * sqrt_g[i]))
            .collect())
    };

    let f0 = f.samples(g);
    let k1 = rhs(&f0)?;
    let stage = |base: &Vec<f64>, k: &Vec<f64>, c: f64| -> Vec<f64> {
        (0..n).map(|i| base[i] + c * k[i]).collect()
    };
    let k2 = rhs(&stage(&f0, &k1, 0.5 * d_eta))?;
    let k3 = rhs(&stage(&f0, &k2, 0.5 * d_eta))?;
    let k4 = rhs(&stage(&f0, &k3, d_eta))?;
    let fs: Vec<f64> = (0..n)
        .map(|i| f0[i] + d_eta / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if fs.iter().any(|v| !v.is_finite()) {
        return Err(RgError::Positivity);
    }
    Ok(ScalarField::Profile(fs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn flat_torus(n: usize) -> Geometry {
        Geometry::warped_torus(n, 2.0 * PI, vec![1.0; n], vec![1.0; n]).unwrap()
    }

    #[test]
    fn alpha_examples() {
        // flat torus, f = 0: alpha_g = 4 pi^2 (n = 2)
        let g = flat_torus(32);
        let a = alpha_g(&g, &ScalarField::Constant(0.0)).unwrap();
        assert_relative_eq!(a, 4.0 * PI * PI, max_relative = 1e-13);

        // unit 3-sphere, f = 0: (2 pi^2)^{2/3}
        let s = Geometry::constant_curvature(3, 1.0, 1.0).unwrap();
        let a = alpha_g(&s, &ScalarField::Constant(0.0)).unwrap();
        assert_relative_eq!(a, (2.0 * PI * PI).powf(2.0 / 3.0), max_relative = 1e-13);

        // scaling law: alpha_{lambda g} = lambda alpha_g
        for lambda in [0.5, 2.0, 4.0] {
            let gs = s.rescale(lambda).unwrap();
            let as_ = alpha_g(&gs, &ScalarField::Constant(0.0)).unwrap();
            assert_relative_eq!(as_, lambda * a, max_relative = 1e-12);
        }
    }

    #[test]
    fn normalized_weights_sum_to_one() {
        let n = 48;
        let l = 2.0 * PI;
        let grid = PeriodicGrid::new(n, l);
        let g = Geometry::warped_torus(
            n,
            l,
            grid.sample(|r| 1.0 + 0.1 * r.cos()),
            grid.sample(|r| 1.0 + 0.2 * r.sin()),
        )
        .unwrap();
        let d = DensityData::new(&g, ScalarField::Profile(grid.sample(|r| 0.3 * r.sin()))).unwrap();
        let total: f64 = d.normalized_weights(&g).iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn helmholtz_recovers_gradient_and_killing_parts() {
        let n = 128;
        let g = flat_torus(n);
        let wt = g.as_torus().unwrap();
        let f = ScalarField::Constant(0.0);

        // pure gradient input: psi recovered up to the mean, perp ~ 0
        let psi0 = ScalarField::Profile(wt.grid.sample(|r| (r).sin() + 0.3 * (2.0 * r).cos()));
        let xi = gradient(&g, &psi0).unwrap();
        let d = helmholtz_otto(&g, &f, &xi).unwrap();
        let psi_rec = d.psi.samples(&g);
        let psi_exp = psi0.samples(&g);
        let mean: f64 = psi_exp.iter().sum::<f64>() / n as f64;
        for (a, b) in psi_rec.iter().zip(&psi_exp) {
            assert!((a - (b - mean)).abs() < 1e-8, "{a} vs {}", b - mean);
        }
        assert!(d.perp.max_norm_sq(&g) < 1e-16);

        // divergence-free input passes through
        let killing = VectorField::Torus {
            radial: vec![0.0; n],
            killing: 1.0,
        };
        let d = helmholtz_otto(&g, &f, &killing).unwrap();
        assert!(d.psi.samples(&g).iter().all(|v| v.abs() < 1e-9));
        match &d.perp {
            VectorField::Torus { radial, killing } => {
                assert!((killing - 1.0).abs() < 1e-14);
                assert!(radial.iter().all(|v| v.abs() < 1e-9));
            }
            _ => panic!(),
        }

        // superposition with a weighted measure
        let fw = ScalarField::Profile(wt.grid.sample(|r| 0.4 * r.cos()));
        let both = gradient(&g, &psi0).unwrap().add(&killing);
        let d = helmholtz_otto(&g, &fw, &both).unwrap();
        let div_perp = weighted_divergence(&g, &fw, &d.perp).unwrap();
        let max_div = div_perp
            .samples(&g)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_div < 1e-8, "perp divergence {max_div}");

        // projection applied twice is the identity
        let again = helmholtz_otto(&g, &fw, &d.assembled(&g).unwrap()).unwrap();
        let p1 = d.psi.samples(&g);
        let p2 = again.psi.samples(&g);
        for (a, b) in p1.iter().zip(&p2) {
            assert!((a - b).abs() < 1e-11, "projection not idempotent: {a} vs {b}");
        }
    }

    #[test]
    fn zero_mean_convention_uses_the_weighted_measure() {
        let n = 64;
        let g = flat_torus(n);
        let wt = g.as_torus().unwrap();
        let f = ScalarField::Profile(wt.grid.sample(|r| 0.5 * r.sin()));
        let xi = gradient(
            &g,
            &ScalarField::Profile(wt.grid.sample(|r| (r + 0.2).cos())),
        )
        .unwrap();
        let d = helmholtz_otto(&g, &f, &xi).unwrap();
        let dd = DensityData::new(&g, f).unwrap();
        let w = dd.weights(&g);
        let mean: f64 = d
            .psi
            .samples(&g)
            .iter()
            .zip(&w)
            .map(|(p, wi)| p * wi)
            .sum();
        assert!(mean.abs() < 1e-10, "dw-mean {mean}");
    }

    #[test]
    fn fokker_planck_stationary_cases() {
        // flat metric, f = 0, xi = 0: exactly stationary
        let g = flat_torus(32);
        let f = ScalarField::Profile(vec![0.0; 32]);
        let out = fokker_planck_step(&g, &f, &DriftField::zero(&g), 1e-3).unwrap();
        assert!(out.samples(&g).iter().all(|v| v.abs() < 1e-15));

        // frame classes: stationary density shape
        let s = Geometry::constant_curvature(3, 1.0, 1.0).unwrap();
        let f = ScalarField::Constant(0.7);
        let out = fokker_planck_step(&s, &f, &DriftField::zero(&s), 1e-2).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn fokker_planck_step_bound_enforced() {
        let g = flat_torus(32);
        let f = ScalarField::Profile(vec![0.0; 32]);
        let h = 2.0 * PI / 32.0;
        let too_big = 0.3 * h * h;
        assert!(matches!(
            fokker_planck_step(&g, &f, &DriftField::zero(&g), too_big),
            Err(RgError::StepSize { .. })
        ));
    }

    #[test]
    fn fokker_planck_conserves_mass_and_matches_fourier_decay() {
        let n = 64;
        let l = 2.0 * PI;
        let g = flat_torus(n);
        let wt = g.as_torus().unwrap();
        let h = l / n as f64;
        let d_eta = 0.25 * h * h;
        let f0 = ScalarField::Profile(wt.grid.sample(|r| 0.3 * (2.0 * PI * r / l).cos()));
        let m0 = DensityData::new(&g, f0.clone()).unwrap().mass(&g);

        let steps = 1000;
        let mut f = f0.clone();
        for _ in 0..steps {
            f = fokker_planck_step(&g, &f, &DriftField::zero(&g), d_eta).unwrap();
        }
        let m1 = DensityData::new(&g, f.clone()).unwrap().mass(&g);
        assert!(
            ((m1 - m0) / m0).abs() < 1e-8,
            "mass drift {}",
            ((m1 - m0) / m0).abs()
        );

        // Fourier oracle for u = e^{-f}: the semi-discrete system is linear
        // with mode rates 4 sin^2(k h / 2) / h^2 for the compact Laplacian.
        let u0: Vec<f64> = f0.samples(&g).iter().map(|v| (-v).exp()).collect();
        let t = d_eta * steps as f64;
        let mut u_exact = vec![0.0; n];
        // real DFT by direct summation (test-side oracle)
        for k in 0..n {
            let mut re = 0.0;
            let mut im = 0.0;
            for (j, u) in u0.iter().enumerate() {
                let ang = 2.0 * PI * (k * j) as f64 / n as f64;
                re += u * ang.cos();
                im -= u * ang.sin();
            }
            let kk = 2.0 * (PI * k as f64 / n as f64).sin() / h;
            let decay = (-kk * kk * t).exp();
            for (j, val) in u_exact.iter_mut().enumerate() {
                let ang = 2.0 * PI * (k * j) as f64 / n as f64;
                *val += (re * ang.cos() - im * ang.sin()) * decay / n as f64;
            }
        }
        let u_num: Vec<f64> = f.samples(&g).iter().map(|v| (-v).exp()).collect();
        let err = u_num
            .iter()
            .zip(&u_exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-6, "Fourier decay mismatch {err}");

        // the density relaxes toward the constant equilibrium
        let spread0 = {
            let v = f0.samples(&g);
            v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - v.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        let spread1 = {
            let v = f.samples(&g);
            v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - v.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        // mode-1 decay over this horizon is exp(-2.41) ~ 0.09
        assert!(spread1 < 0.1 * spread0, "no relaxation: {spread1} vs {spread0}");
    }

    #[test]
    fn gauge_transformation_preserves_total_mass() {
        let n = 96;
        let l = 2.0 * PI;
        let grid = PeriodicGrid::new(n, l);
        let g = Geometry::warped_torus(
            n,
            l,
            grid.sample(|r| 1.0 + 0.1 * r.cos()),
            grid.sample(|r| 1.0 + 0.15 * (r + 0.5).sin()),
        )
        .unwrap();
        let f = ScalarField::Profile(grid.sample(|r| 0.2 * r.sin()));
        let xi = VectorField::Torus {
            radial: grid.sample(|r| 0.4 * (2.0 * r).cos()),
            killing: 0.3,
        };
        let dd = DensityData::new(&g, f.clone()).unwrap();
        let alpha = dd.alpha(&g);
        let w = dd.weights(&g);
        let div = weighted_divergence(&g, &f, &xi).unwrap().samples(&g);
        let m0: f64 = w.iter().sum();
        let m1: f64 = w
            .iter()
            .zip(&div)
            .map(|(wi, d)| wi * (1.0 + alpha * d))
            .sum();
        assert_relative_eq!(m0, m1, max_relative = 1e-12);
    }

    #[test]
    fn assembled_drift_scales_inversely_with_the_metric() {
        let n = 64;
        let g = flat_torus(n);
        let wt = g.as_torus().unwrap();
        let psi = ScalarField::Profile(wt.grid.sample(|r| r.sin()));
        let lambda = 3.0;
        let gs = g.rescale(lambda).unwrap();
        let xi = gradient(&g, &psi).unwrap();
        let xi_s = gradient(&gs, &psi).unwrap();
        match (&xi, &xi_s) {
            (
                VectorField::Torus { radial: a, .. },
                VectorField::Torus { radial: b, .. },
            ) => {
                for (x, y) in a.iter().zip(b) {
                    assert_relative_eq!(*y, x / lambda, max_relative = 1e-12);
                }
            }
            _ => panic!(),
        }
    }
}
