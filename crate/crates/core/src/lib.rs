//! Spectral laboratory for the sign-changing diffusion eigenproblem
//! `-div(sigma grad u) = lambda u` on a half-annulus with a rounded pi/4 corner.

pub mod eig;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod linalg;
pub mod material;
pub mod mesh;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
