//! Periodic 1-D grid and the discrete operator families used on warped-product
//! profiles.
//!
//! Three families coexist on purpose:
//!
//! * `deriv` / `deriv2` — second-order central differences. Used for all
//!   curvature-type objects, so that refinement studies can measure the
//!   expected convergence order.
//! * `flux_laplacian` — compact three-point flux form. Self-adjoint with
//!   respect to the node weights and exactly conservative (the weighted sum of
//!   the output telescopes to zero). Used by the measure/drift evolutions and
//!   by the dense eigensolvers.
//! * `spectral_deriv` — FFT differentiation. Used only inside scalar
//!   functionals whose reference values are tight enough that a second-order
//!   truncation error would dominate them.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicGrid {
    n: usize,
    length: f64,
}

impl PeriodicGrid {
    pub fn new(n: usize, length: f64) -> Self {
        assert!(n >= 2, "grid needs at least two nodes");
        assert!(length > 0.0, "grid length must be positive");
        PeriodicGrid { n, length }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n).map(|i| i as f64 * h).collect()
    }

    /// Samples a smooth function at the grid nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes().into_iter().map(f).collect()
    }

    #[inline]
    fn ip(&self, i: usize) -> usize {
        if i + 1 == self.n {
            0
        } else {
            i + 1
        }
    }

    #[inline]
    fn im(&self, i: usize) -> usize {
        if i == 0 {
            self.n - 1
        } else {
            i - 1
        }
    }

    /// Second-order central first derivative.
    pub fn deriv(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.n);
        let two_h = 2.0 * self.spacing();
        (0..self.n)
            .map(|i| (u[self.ip(i)] - u[self.im(i)]) / two_h)
            .collect()
    }

    /// Central derivative applied twice. Wide five-point second derivative.
    pub fn deriv2(&self, u: &[f64]) -> Vec<f64> {
        self.deriv(&self.deriv(u))
    }

    /// Compact second derivative with a node coefficient:
    /// `[c u']'` discretized as half-node fluxes with arithmetic averaging of
    /// `c`. Exactly conservative: sum of the output vanishes.
    pub fn flux_laplacian(&self, c: &[f64], u: &[f64]) -> Vec<f64> {
        assert_eq!(c.len(), self.n);
        assert_eq!(u.len(), self.n);
        let h = self.spacing();
        let h2 = h * h;
        (0..self.n)
            .map(|i| {
                let ip = self.ip(i);
                let im = self.im(i);
                let cp = 0.5 * (c[i] + c[ip]);
                let cm = 0.5 * (c[i] + c[im]);
                (cp * (u[ip] - u[i]) - cm * (u[i] - u[im])) / h2
            })
            .collect()
    }

    /// Dirichlet form matching `flux_laplacian`:
    /// `sum c_{i+1/2} (u_{i+1}-u_i)(v_{i+1}-v_i) / h`.
    /// Satisfies `dirichlet_form(c,u,v) = -h * sum_i v_i flux_laplacian(c,u)_i`
    /// exactly.
    pub fn dirichlet_form(&self, c: &[f64], u: &[f64], v: &[f64]) -> f64 {
        assert_eq!(c.len(), self.n);
        let h = self.spacing();
        let mut acc = 0.0;
        for i in 0..self.n {
            let ip = self.ip(i);
            let cp = 0.5 * (c[i] + c[ip]);
            acc += cp * (u[ip] - u[i]) * (v[ip] - v[i]);
        }
        acc / h
    }

    /// Half-node square gradients folded back to nodes; together with the
    /// half-node coefficient convention this makes
    /// `sum_i w_i |grad u|^2_i == dirichlet_form` identities exact.
    pub fn node_grad_sq(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.n);
        let h = self.spacing();
        (0..self.n)
            .map(|i| {
                let gp = (u[self.ip(i)] - u[i]) / h;
                let gm = (u[i] - u[self.im(i)]) / h;
                0.5 * (gp * gp + gm * gm)
            })
            .collect()
    }

    /// Rectangle-rule quadrature (exact for smooth periodic integrands).
    pub fn integrate(&self, u: &[f64]) -> f64 {
        assert_eq!(u.len(), self.n);
        u.iter().sum::<f64>() * self.spacing()
    }

    fn fft_modes(&self, u: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(self.n).process(&mut buf);
        buf
    }

    fn ifft(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        FftPlanner::new().plan_fft_inverse(self.n).process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.into_iter().map(|z| z.re * scale).collect()
    }

    /// Wavenumber of FFT bin `j` (signed convention, `2*pi*m/L`).
    fn wavenumber(&self, j: usize) -> f64 {
        let m = if j <= self.n / 2 {
            j as isize
        } else {
            j as isize - self.n as isize
        };
        2.0 * std::f64::consts::PI * m as f64 / self.length
    }

    /// FFT first derivative. Exact for band-limited samples.
    pub fn spectral_deriv(&self, u: &[f64]) -> Vec<f64> {
        let mut modes = self.fft_modes(u);
        for (j, z) in modes.iter_mut().enumerate() {
            let k = self.wavenumber(j);
            // The Nyquist bin has no well-defined odd derivative; drop it.
            if self.n % 2 == 0 && j == self.n / 2 {
                *z = Complex64::new(0.0, 0.0);
            } else {
                *z *= Complex64::new(0.0, k);
            }
        }
        self.ifft(modes)
    }

    /// FFT second derivative.
    pub fn spectral_deriv2(&self, u: &[f64]) -> Vec<f64> {
        let mut modes = self.fft_modes(u);
        for (j, z) in modes.iter_mut().enumerate() {
            let k = self.wavenumber(j);
            *z *= -k * k;
        }
        self.ifft(modes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn central_derivative_second_order() {
        let mut errs = Vec::new();
        for &n in &[32usize, 64, 128] {
            let g = PeriodicGrid::new(n, 2.0 * PI);
            let u = g.sample(|r| (2.0 * r).sin());
            let du = g.deriv(&u);
            let exact = g.sample(|r| 2.0 * (2.0 * r).cos());
            let err = du
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            errs.push(err);
        }
        let order = (errs[0] / errs[2]).log2() / 2.0;
        assert!(order > 1.9, "measured order {order}");
    }

    #[test]
    fn flux_laplacian_is_conservative_and_self_adjoint() {
        let g = PeriodicGrid::new(48, 3.0);
        let c = g.sample(|r| 1.3 + 0.4 * (2.0 * PI * r / 3.0).cos());
        let u = g.sample(|r| (2.0 * PI * r / 3.0).sin() + 0.2 * (4.0 * PI * r / 3.0).cos());
        let v = g.sample(|r| 0.7 * (2.0 * PI * r / 3.0).cos());
        let lu = g.flux_laplacian(&c, &u);
        let lv = g.flux_laplacian(&c, &v);
        assert!(lu.iter().sum::<f64>().abs() < 1e-13);
        let a: f64 = u.iter().zip(&lv).map(|(x, y)| x * y).sum();
        let b: f64 = v.iter().zip(&lu).map(|(x, y)| x * y).sum();
        assert_relative_eq!(a, b, max_relative = 1e-12);
        // quadratic form matches the Dirichlet form
        let q = g.dirichlet_form(&c, &u, &u);
        let m: f64 = -g.spacing() * u.iter().zip(&lu).map(|(x, y)| x * y).sum::<f64>();
        assert_relative_eq!(q, m, max_relative = 1e-12);
    }

    #[test]
    fn spectral_derivative_exact_on_band_limited() {
        let g = PeriodicGrid::new(16, 2.0 * PI);
        let u = g.sample(|r| (3.0 * r).cos());
        let du = g.spectral_deriv(&u);
        let exact = g.sample(|r| -3.0 * (3.0 * r).sin());
        for (a, b) in du.iter().zip(&exact) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        let d2 = g.spectral_deriv2(&u);
        let exact2 = g.sample(|r| -9.0 * (3.0 * r).cos());
        for (a, b) in d2.iter().zip(&exact2) {
            assert_relative_eq!(a, b, epsilon = 1e-11);
        }
    }
}
