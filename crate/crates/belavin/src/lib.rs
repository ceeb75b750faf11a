//! Numerical library for the (Z/nZ)-symmetric vertex model and its dual
//! face model: arbitrary-precision theta functions, the R-matrix built two
//! independent ways, face Boltzmann weights, intertwining vectors and their
//! duals, tail-operator weights, corner-transfer-matrix characters, and the
//! contour-integral pipeline for the spontaneous polarization.
//!
//! Every identity the library implements is exposed as a residual that a
//! verification harness (see the companion CLI) can evaluate at a configured
//! precision and seed.

pub mod checks;
pub mod error;
pub mod mp;
pub mod correlation;
pub mod ctm;
pub mod params;
pub mod report;
pub mod lattice;
pub mod weights;
pub mod qelliptic;
pub mod vertexface;

pub use error::{Error, Result};
pub use mp::{Cplx, Ctx, Precision, Real};
pub use params::{Env, ModelParams};
