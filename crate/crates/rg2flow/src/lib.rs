//! Numerical laboratory for the RG-2 geometric flow and its scale-invariant
//! coupled formulation on symmetry-reduced geometries.
//!
//! The flow evolves a metric by the second-order curvature correction to
//! Ricci flow,
//!
//! ```text
//! dg/dt = -2 Ric - (alpha/2) Rm2,      Rm2_ij = R_iklm R_j^klm,
//! ```
//!
//! optionally coupled to a reference measure `dw = e^{-f} dmu` whose total
//! mass defines the geometric coupling `alpha_g^{n/2} = int dw`. The crate
//! provides the three symmetry-reduced geometry classes, their curvature
//! packages, the measure/drift layer (weighted Laplacian, Helmholtz
//! decomposition, Fokker–Planck stepping), the flow integrators (plain,
//! scale-invariant, drift-modified gradient system, see-saw), the entropy and
//! eigenvalue functionals, and a deterministic scenario runner.

pub mod chart;
pub mod curvature;
pub mod density;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod scenario;
pub mod variational;

pub use error::{Result, RgError};
pub use geometry::{Geometry, GeometryClass, QuadratureTable, ScalarField};
