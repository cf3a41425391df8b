//! Local Weyl law laboratory: forward eigensolves on discretized Riemannian
//! charts and the inverse pipeline that rebuilds eigenfunctions, volume density
//! and metric from the local counting function `N(x, λ)`.

pub mod density;
pub mod error;
pub mod forward;
pub mod inversion;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod metric;
pub mod pipeline;
pub mod probe;

pub use error::{Error, Result};
