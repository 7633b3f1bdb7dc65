//! Geometry of backward light cones in (2+1) Lorentzian spacetimes and the
//! representation formulas built on it.

pub mod config;
pub mod error;
pub mod fdtd;
pub mod field;
pub mod frames;
pub mod geodesic;
pub mod harness;
pub mod identities;
pub mod injectivity;
pub mod metric;
pub mod null_cone;
pub mod quadrature;
pub mod representation;
pub mod rho_field;
pub mod transport;

pub use error::{DescentError, Result};
