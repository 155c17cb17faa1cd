//! Modified energies for the periodic defocusing nonlinear Schrödinger
//! equation `i∂ₜu + ∂ₓ²u − u|u|^{2p} = 0`.
//!
//! * [`density`]: exact algebra of multilinear integrated densities.
//! * [`energy`]: construction and checking of the correction `ℱ_k`.
//! * [`document`]: versioned JSON form of a solved energy.
//! * [`spectral`]: pseudo-spectral evaluation and time stepping.
//! * [`monitor`]: numerical cross-checks and the experiment report.

pub mod coeff;
pub mod density;
pub mod document;
pub mod energy;
pub mod linalg;
pub mod monitor;
pub mod reduce;
pub mod spectral;
pub mod text;

pub use coeff::{Coeff, Rational};
pub use density::{DensityExpr, DensityMonomial, Signature};
