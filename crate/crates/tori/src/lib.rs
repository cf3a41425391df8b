//! Flat tori `Rᵈ/Λ`: exact Gram algebra, lattice norm spectra, counting
//! functions and integral isometry search.
//!
//! A torus is given by the Gram matrix `A` of a basis of `Λ`. Its Laplace
//! spectrum is `λ = 2π√(vᵀA*v)` over `v ∈ Zᵈ` with `A* = A⁻¹` the dual form.

pub mod catalog;
pub mod enumerate;
pub mod error;
pub mod form;
pub mod isometry;

pub use enumerate::{
    counting_function, enumerate_norms, enumerate_norms_box, local_weyl_torus, torus_spectrum, weyl_ratio, NormSpectrum,
};
pub use error::{Result, ToriError};
pub use form::{dual_form, LatticeForm};
pub use isometry::{search_isometry, IsometryCertificate, IsometrySearch};
