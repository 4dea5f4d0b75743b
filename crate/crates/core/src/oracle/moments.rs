use nalgebra::DVector;

use super::{drift_matrix, require_decaying, CovarianceSteadyState, OracleMethod};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, I};
use crate::model::ModelSpec;

/// Right-hand side `-i K C + i C K^dagger + gamma_p` of the moment equation.
pub fn moment_rhs(model: &ModelSpec, covariance: &CMatrix) -> CMatrix {
    let k = drift_matrix(model);
    (&k * covariance) * (-I) + (covariance * k.adjoint()) * I + model.gamma_pump()
}

/// Fixed point of the moment equation, `K C - C K^dagger = -i gamma_p`,
/// solved as one dense linear system in `vec(C)`.
pub fn moment_ode_steady_state(model: &ModelSpec) -> Result<CovarianceSteadyState> {
    let k = drift_matrix(model);
    require_decaying(&k)?;
    let n = model.n_sites();
    let id = CMatrix::identity(n, n);
    // Column-major vec: vec(K C) = (I (x) K) vec C, vec(C K^dagger) = (conj K (x) I) vec C.
    let system = id.kronecker(&k) - k.map(|z| z.conj()).kronecker(&id);
    let source = model.gamma_pump() * (-I);
    let rhs = DVector::from_column_slice(source.as_slice());
    let solution = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NotConverged("moment equations are singular".into()))?;
    let raw = CMatrix::from_column_slice(n, n, solution.as_slice());
    let covariance = (&raw + raw.adjoint()) * linalg::c(0.5);
    let residual = linalg::max_abs(&moment_rhs(model, &covariance));
    Ok(CovarianceSteadyState { covariance, method: OracleMethod::MomentOde, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::model::{build_hatano_nelson, Boundary, HatanoNelsonParams, Statistics};

    fn site(kappa: f64, pump: f64, stats: Statistics) -> ModelSpec {
        let one = |x: f64| CMatrix::from_element(1, 1, c(x));
        ModelSpec::new(one(0.5), one(kappa), one(pump), stats, Boundary::Open).unwrap()
    }

    #[test]
    fn single_site_rate_equations() {
        let b = moment_ode_steady_state(&site(4.0, 1.0, Statistics::Bosonic)).unwrap();
        assert!((b.occupations()[0] - 1.0 / 3.0).abs() < 1e-14);
        let f = moment_ode_steady_state(&site(4.0, 1.0, Statistics::Fermionic)).unwrap();
        assert!((f.occupations()[0] - 0.2).abs() < 1e-14);
        let f = moment_ode_steady_state(&site(1.0, 50.0, Statistics::Fermionic)).unwrap();
        assert!((f.occupations()[0] - 50.0 / 51.0).abs() < 1e-14);
    }

    #[test]
    fn no_pump_empty_state() {
        let s = moment_ode_steady_state(&site(2.0, 0.0, Statistics::Bosonic)).unwrap();
        assert_eq!(linalg::max_abs(&s.covariance), 0.0);
    }

    #[test]
    fn amplifying_site_has_no_steady_state() {
        assert!(matches!(moment_ode_steady_state(&site(1.0, 2.0, Statistics::Bosonic)), Err(Error::UnstableModel { .. })));
    }

    #[test]
    fn chain_solution_is_hermitian_psd_with_tiny_residual() {
        let m = build_hatano_nelson(&HatanoNelsonParams::figure(7.0, 6, Statistics::Bosonic, Boundary::Open)).unwrap();
        let s = moment_ode_steady_state(&m).unwrap();
        assert!(s.residual < 1e-10);
        assert!(linalg::hermiticity_residual(&s.covariance) < 1e-14);
        assert!(linalg::hermitian_eigenvalues(&s.covariance)[0] > -1e-12);
    }
}
