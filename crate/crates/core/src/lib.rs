//! Non-equilibrium Green's functions, frequency-resolved winding numbers and
//! response functions of quadratic bosonic and fermionic open lattices.

pub mod doubled;
pub mod error;
pub mod keldysh;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod response;
pub mod winding;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector};
pub use model::{
    build_hatano_nelson, hatano_nelson_bloch, validate, BlochModel, Boundary, HatanoNelsonParams, ModelSpec,
    Statistics, ValidationReport,
};
