//! Brute-force steady states that do not go through the Green's-function code:
//! the closed moment equations of the master equation, a truncated-Fock
//! Lindbladian, and the quantum-regression two-time spectrum.
//!
//! From the master equation, `C_jl = <psi_l^dagger psi_j>` obeys
//! `dC/dt = -i K C + i C K^dagger + gamma_p` with the drift matrix
//! `K = H - i(gamma_d^T -+ gamma_p)/2` (upper sign bosons, lower fermions).

mod fock;
mod moments;
mod regression;

pub use fock::{fock_lindblad_steady_state, FockOptions, MAX_CUTOFF, MAX_OPERATOR_DIM, MAX_SITES};
pub use moments::{moment_ode_steady_state, moment_rhs};
pub use regression::{regression_spectrum, RegressionOptions};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, I};
use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    MomentOde,
    FockIntegrator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSteadyState {
    /// `C_jl = <psi_l^dagger psi_j>`.
    pub covariance: CMatrix,
    pub method: OracleMethod,
    /// Method-specific self-consistency residual.
    pub residual: f64,
}

impl CovarianceSteadyState {
    pub fn occupations(&self) -> Vec<f64> {
        self.covariance.diagonal().iter().map(|z| z.re).collect()
    }
}

/// Drift matrix of the single-particle moments.
pub fn drift_matrix(model: &ModelSpec) -> CMatrix {
    let sign = model.statistics().pump_sign();
    let damping = model.gamma_decay().transpose() - model.gamma_pump() * c(sign);
    model.hamiltonian() - damping * (I * 0.5)
}

/// Rejects drift matrices with an eigenvalue on or above the real axis.
pub(crate) fn require_decaying(k: &CMatrix) -> Result<()> {
    let max_im = linalg::eigenvalues(k)?.iter().map(|z| z.im).fold(f64::NEG_INFINITY, f64::max);
    if max_im >= -crate::keldysh::STABILITY_MARGIN {
        return Err(Error::UnstableModel { max_im });
    }
    Ok(())
}
