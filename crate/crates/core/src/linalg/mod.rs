//! Linear-algebra kernels: sparse storage, banded indefinite factorization and dense
//! symmetric eigenvalue routines.

pub mod band;
pub mod dense;
pub mod sparse;

pub use band::{BandLdlt, Inertia, SymBand};
pub use sparse::CsrMatrix;
