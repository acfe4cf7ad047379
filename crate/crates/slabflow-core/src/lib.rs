//! Spectral simulation of viscous incompressible free-surface flow in a
//! horizontally periodic slab of finite depth.
//!
//! The moving fluid domain is flattened onto the fixed slab
//! `Omega = (L1*T) x (L2*T) x (-b0, 0)` by extending the surface function
//! `eta` into the slab with a parameterized Poisson integral and pulling the
//! Navier-Stokes operators back through the resulting coordinate map. The
//! solver pipeline is:
//!
//! * [`spectral`] — Fourier x Chebyshev function spaces, derivatives,
//!   quadrature and Sobolev norms,
//! * [`geometry`] — the surface extension, the coefficient fields
//!   `A, B, J, K` and the transformed operators,
//! * [`elliptic`] — per-mode flat Stokes/Poisson kernels plus a
//!   perturbation (defect-correction) outer loop for the variable
//!   coefficient problems,
//! * [`evolution`] — forcing assembly, initial-data construction, the
//!   backward-Euler linear Navier-Stokes window solver and the RK4 surface
//!   transport solver,
//! * [`iteration`] — the Picard coupling of the two solvers over a time
//!   window together with its contraction metrics,
//! * [`diagnostics`] — energy-identity residuals, norm-equivalence ratios
//!   and identity/inequality suites.

pub mod config;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod io;
pub mod iteration;
pub mod spectral;

pub use error::{Result, SlabflowError};
pub use spectral::{Grid, GridSpec, SlabField, SlabVectorField, SurfaceField, SurfaceVectorField};
