//! Reduced tensor calculus.
//!
//! Two small engines back every genuinely tensorial computation:
//!
//! * [`TorusChart`] works on the `(r, theta)` chart of the warped torus. All
//!   components are `r`-profiles; `theta`-derivatives vanish identically.
//!   Covariant derivatives use the same second-order central differences as
//!   the curvature module, so identity residuals converge at second order.
//! * [`FrameAlgebra`] works in the orthonormal Milnor frame of a homogeneous
//!   3-geometry where every tensor of interest is frame-constant and
//!   covariant derivatives reduce to contractions with constant connection
//!   coefficients obtained from the Koszul formula.
//!
//! Sign conventions (fixed so that round spheres have positive sectional
//! curvature and the quadratic-curvature trace identity holds):
//! `R_{ijkl} = K (g_il g_jk - g_ik g_jl)` on space forms,
//! `Ric_{jk} = g^{il} R_{ijkl}`, and the sectional curvature of an
//! orthonormal plane `(e_a, e_b)` is `R_{abba}`.

use crate::geometry::WarpedTorus;
use crate::grid::PeriodicGrid;

const DIM2: usize = 2;

/// Tensor with all-lower indices on the torus chart; components are node
/// profiles, flattened row-major (first index most significant).
#[derive(Debug, Clone)]
pub struct ChartTensor {
    pub rank: usize,
    pub comps: Vec<Vec<f64>>,
}

impl ChartTensor {
    pub fn zeros(rank: usize, n: usize) -> Self {
        ChartTensor {
            rank,
            comps: vec![vec![0.0; n]; DIM2.pow(rank as u32)],
        }
    }

    #[inline]
    pub fn flat(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank);
        idx.iter().fold(0, |acc, &i| acc * DIM2 + i)
    }

    pub fn get(&self, idx: &[usize]) -> &Vec<f64> {
        &self.comps[self.flat(idx)]
    }

    pub fn get_mut(&mut self, idx: &[usize]) -> &mut Vec<f64> {
        let f = self.flat(idx);
        &mut self.comps[f]
    }

    pub fn scale_by_profile(&self, p: &[f64]) -> ChartTensor {
        ChartTensor {
            rank: self.rank,
            comps: self
                .comps
                .iter()
                .map(|c| c.iter().zip(p).map(|(a, b)| a * b).collect())
                .collect(),
        }
    }

    pub fn add(&self, other: &ChartTensor) -> ChartTensor {
        assert_eq!(self.rank, other.rank);
        ChartTensor {
            rank: self.rank,
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        }
    }

    pub fn sub(&self, other: &ChartTensor) -> ChartTensor {
        assert_eq!(self.rank, other.rank);
        ChartTensor {
            rank: self.rank,
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
        }
    }

    fn unflatten(rank: usize, mut f: usize) -> Vec<usize> {
        let mut idx = vec![0; rank];
        for m in (0..rank).rev() {
            idx[m] = f % DIM2;
            f /= DIM2;
        }
        idx
    }
}

#[derive(Debug, Clone)]
pub struct TorusChart {
    pub grid: PeriodicGrid,
    pub rho: Vec<f64>,
    pub phi: Vec<f64>,
    /// gamma[a][b][c] = Gamma^a_{bc}, node profiles.
    pub gamma: [[[Vec<f64>; DIM2]; DIM2]; DIM2],
    pub ginv: [Vec<f64>; DIM2],
    pub gdiag: [Vec<f64>; DIM2],
}

impl TorusChart {
    pub fn new(wt: &WarpedTorus) -> Self {
        let grid = wt.grid.clone();
        let n = grid.len();
        let rho = wt.rho.clone();
        let phi = wt.phi.clone();
        let drho = grid.deriv(&rho);
        let dphi = grid.deriv(&phi);

        let zeros = || vec![0.0; n];
        let mut gamma: [[[Vec<f64>; DIM2]; DIM2]; DIM2] = [
            [[zeros(), zeros()], [zeros(), zeros()]],
            [[zeros(), zeros()], [zeros(), zeros()]],
        ];
        for i in 0..n {
            // Gamma^r_rr = rho'/rho
            gamma[0][0][0][i] = drho[i] / rho[i];
            // Gamma^r_tt = -phi phi' / rho^2
            gamma[0][1][1][i] = -phi[i] * dphi[i] / (rho[i] * rho[i]);
            // Gamma^t_rt = Gamma^t_tr = phi'/phi
            gamma[1][0][1][i] = dphi[i] / phi[i];
            gamma[1][1][0][i] = dphi[i] / phi[i];
        }
        let ginv = [
            rho.iter().map(|v| 1.0 / (v * v)).collect(),
            phi.iter().map(|v| 1.0 / (v * v)).collect(),
        ];
        let gdiag = [
            rho.iter().map(|v| v * v).collect(),
            phi.iter().map(|v| v * v).collect(),
        ];
        TorusChart {
            grid,
            rho,
            phi,
            gamma,
            ginv,
            gdiag,
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The metric as a rank-2 chart tensor.
    pub fn metric(&self) -> ChartTensor {
        let mut t = ChartTensor::zeros(2, self.len());
        *t.get_mut(&[0, 0]) = self.gdiag[0].clone();
        *t.get_mut(&[1, 1]) = self.gdiag[1].clone();
        t
    }

    /// Riemann tensor of the chart metric from the Gauss curvature profile,
    /// filled through the space-form pattern (exact in two dimensions).
    pub fn riemann(&self, gauss: &[f64]) -> ChartTensor {
        let n = self.len();
        let mut t = ChartTensor::zeros(4, n);
        for f in 0..DIM2.pow(4) {
            let idx = ChartTensor::unflatten(4, f);
            let (i, j, k, l) = (idx[0], idx[1], idx[2], idx[3]);
            let mut comp = vec![0.0; n];
            for node in 0..n {
                let gil = if i == l { self.gdiag[i][node] } else { 0.0 };
                let gjk = if j == k { self.gdiag[j][node] } else { 0.0 };
                let gik = if i == k { self.gdiag[i][node] } else { 0.0 };
                let gjl = if j == l { self.gdiag[j][node] } else { 0.0 };
                comp[node] = gauss[node] * (gil * gjk - gik * gjl);
            }
            t.comps[f] = comp;
        }
        t
    }

    /// Covariant derivative; the new (derivative) index comes first.
    pub fn nabla(&self, t: &ChartTensor) -> ChartTensor {
        let n = self.len();
        let rank = t.rank;
        let mut out = ChartTensor::zeros(rank + 1, n);
        for f_out in 0..DIM2.pow((rank + 1) as u32) {
            let idx = ChartTensor::unflatten(rank + 1, f_out);
            let a = idx[0];
            let inner = &idx[1..];
            let mut comp = if a == 0 {
                self.grid.deriv(t.get(inner))
            } else {
                vec![0.0; n] // theta-derivatives vanish
            };
            // -Gamma^b_{a i_m} T_{.. b ..}
            for m in 0..rank {
                for b in 0..DIM2 {
                    let mut swapped = inner.to_vec();
                    swapped[m] = b;
                    let gam = &self.gamma[b][a][inner[m]];
                    let tv = t.get(&swapped);
                    for node in 0..n {
                        comp[node] -= gam[node] * tv[node];
                    }
                }
            }
            out.comps[f_out] = comp;
        }
        out
    }

    /// Contract two lower slots with the inverse metric.
    pub fn contract(&self, t: &ChartTensor, slot_a: usize, slot_b: usize) -> ChartTensor {
        assert!(slot_a < slot_b && slot_b < t.rank);
        let n = self.len();
        let rank_out = t.rank - 2;
        let mut out = ChartTensor::zeros(rank_out, n);
        for f_out in 0..DIM2.pow(rank_out as u32) {
            let rem = ChartTensor::unflatten(rank_out, f_out);
            let mut comp = vec![0.0; n];
            for p in 0..DIM2 {
                // diagonal inverse metric: q == p
                let mut full = Vec::with_capacity(t.rank);
                let mut r_iter = rem.iter();
                for s in 0..t.rank {
                    if s == slot_a || s == slot_b {
                        full.push(p);
                    } else {
                        full.push(*r_iter.next().unwrap());
                    }
                }
                let tv = t.get(&full);
                for node in 0..n {
                    comp[node] += self.ginv[p][node] * tv[node];
                }
            }
            out.comps[f_out] = comp;
        }
        out
    }

    /// Rough Laplacian of a tensor: `g^{ab} (nabla nabla T)_{ab...}`.
    pub fn rough_laplacian(&self, t: &ChartTensor) -> ChartTensor {
        let dd = self.nabla(&self.nabla(t));
        self.contract(&dd, 0, 1)
    }

    /// `<grad f, nabla T>`: contraction of the derivative slot with `df`.
    pub fn grad_contraction(&self, df: &[f64], t: &ChartTensor) -> ChartTensor {
        let d = self.nabla(t);
        let n = self.len();
        let mut out = ChartTensor::zeros(t.rank, n);
        for f_out in 0..DIM2.pow(t.rank as u32) {
            let rem = ChartTensor::unflatten(t.rank, f_out);
            let mut comp = vec![0.0; n];
            // grad f has only an r-component: g^{rr} f' ; contract with slot 0.
            let mut full = vec![0usize; t.rank + 1];
            full[0] = 0;
            full[1..].copy_from_slice(&rem);
            let dv = d.get(&full);
            for node in 0..n {
                comp[node] += self.ginv[0][node] * df[node] * dv[node];
            }
            out.comps[f_out] = comp;
        }
        out
    }

    /// Pointwise squared norm of a rank-2 tensor (all indices raised against
    /// the chart metric).
    pub fn norm_sq_rank2(&self, t: &ChartTensor) -> Vec<f64> {
        assert_eq!(t.rank, 2);
        let n = self.len();
        let mut out = vec![0.0; n];
        for a in 0..DIM2 {
            for b in 0..DIM2 {
                let tv = t.get(&[a, b]);
                for node in 0..n {
                    let v = tv[node] * self.ginv[a][node] * self.ginv[b][node] * tv[node];
                    out[node] += v;
                }
            }
        }
        out
    }
}

const DIM3: usize = 3;

/// Frame-constant tensor in the orthonormal Milnor frame (metric = identity,
/// so index position is immaterial).
#[derive(Debug, Clone)]
pub struct FrameTensor {
    pub rank: usize,
    pub comps: Vec<f64>,
}

impl FrameTensor {
    pub fn zeros(rank: usize) -> Self {
        FrameTensor {
            rank,
            comps: vec![0.0; DIM3.pow(rank as u32)],
        }
    }

    #[inline]
    pub fn flat(idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * DIM3 + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.comps[Self::flat(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let f = Self::flat(idx);
        self.comps[f] = v;
    }

    fn unflatten(rank: usize, mut f: usize) -> Vec<usize> {
        let mut idx = vec![0; rank];
        for m in (0..rank).rev() {
            idx[m] = f % DIM3;
            f /= DIM3;
        }
        idx
    }

    pub fn add(&self, other: &FrameTensor) -> FrameTensor {
        assert_eq!(self.rank, other.rank);
        FrameTensor {
            rank: self.rank,
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &FrameTensor) -> FrameTensor {
        assert_eq!(self.rank, other.rank);
        FrameTensor {
            rank: self.rank,
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> FrameTensor {
        FrameTensor {
            rank: self.rank,
            comps: self.comps.iter().map(|a| a * s).collect(),
        }
    }
}

/// Connection algebra of a left-invariant orthonormal frame with
/// `[f_2, f_3] = mu_1 f_1` (cyclic).
#[derive(Debug, Clone)]
pub struct FrameAlgebra {
    /// gamma[k][i][j] = <nabla_{f_i} f_j, f_k>
    pub gamma: [[[f64; DIM3]; DIM3]; DIM3],
}

impl FrameAlgebra {
    pub fn new(mu: [f64; 3]) -> Self {
        // structure constants c[i][j][k]: [f_i, f_j] = c_ij^k f_k
        let mut c = [[[0.0f64; DIM3]; DIM3]; DIM3];
        c[1][2][0] = mu[0];
        c[2][1][0] = -mu[0];
        c[2][0][1] = mu[1];
        c[0][2][1] = -mu[1];
        c[0][1][2] = mu[2];
        c[1][0][2] = -mu[2];

        let mut gamma = [[[0.0f64; DIM3]; DIM3]; DIM3];
        for i in 0..DIM3 {
            for j in 0..DIM3 {
                for k in 0..DIM3 {
                    // Koszul for left-invariant fields and metric:
                    // 2 <nabla_i f_j, f_k> = c_ij^k - c_jk^i + c_ki^j
                    gamma[k][i][j] = 0.5 * (c[i][j][k] - c[j][k][i] + c[k][i][j]);
                }
            }
        }
        FrameAlgebra { gamma }
    }

    /// A trivial algebra (all connection coefficients zero). Appropriate for
    /// frame-constant tensors on symmetric spaces, where every tensor built
    /// from `g` and `Rm` is parallel.
    pub fn parallel() -> Self {
        FrameAlgebra {
            gamma: [[[0.0; DIM3]; DIM3]; DIM3],
        }
    }

    /// Covariant derivative of a frame-constant tensor; derivative index
    /// first.
    pub fn nabla(&self, t: &FrameTensor) -> FrameTensor {
        let rank = t.rank;
        let mut out = FrameTensor::zeros(rank + 1);
        for f_out in 0..DIM3.pow((rank + 1) as u32) {
            let idx = FrameTensor::unflatten(rank + 1, f_out);
            let a = idx[0];
            let inner = &idx[1..];
            let mut v = 0.0;
            for m in 0..rank {
                for b in 0..DIM3 {
                    let mut swapped = inner.to_vec();
                    swapped[m] = b;
                    v -= self.gamma[b][a][inner[m]] * t.get(&swapped);
                }
            }
            out.comps[f_out] = v;
        }
        out
    }

    /// Contract two slots (orthonormal frame: plain trace).
    pub fn contract(t: &FrameTensor, slot_a: usize, slot_b: usize) -> FrameTensor {
        assert!(slot_a < slot_b && slot_b < t.rank);
        let rank_out = t.rank - 2;
        let mut out = FrameTensor::zeros(rank_out);
        for f_out in 0..DIM3.pow(rank_out as u32) {
            let rem = FrameTensor::unflatten(rank_out, f_out);
            let mut v = 0.0;
            for p in 0..DIM3 {
                let mut full = Vec::with_capacity(t.rank);
                let mut r_iter = rem.iter();
                for s in 0..t.rank {
                    if s == slot_a || s == slot_b {
                        full.push(p);
                    } else {
                        full.push(*r_iter.next().unwrap());
                    }
                }
                v += t.get(&full);
            }
            out.comps[f_out] = v;
        }
        out
    }

    pub fn rough_laplacian(&self, t: &FrameTensor) -> FrameTensor {
        let dd = self.nabla(&self.nabla(t));
        Self::contract(&dd, 0, 1)
    }
}
