//! Numerical laboratory for the free-boundary Euler--Fourier system in
//! Lagrangian coordinates on the slab T² x (0,1): spectral/collocation
//! discretization, flow-map geometry, mollification operators, elliptic
//! solves, time-jet data construction, semi-implicit time integration and a
//! low-Mach-number sweep harness, together with runtime verification of the
//! algebraic and energy identities the construction relies on.

pub mod elliptic;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod jets;
pub mod smoothing;

pub use error::{Error, Result};
