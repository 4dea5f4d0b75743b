use num_complex::Complex64;
use rayon::prelude::*;

use super::{drift_matrix, moment_ode_steady_state};
use crate::error::{Error, Result};
use crate::linalg::{self, c, I};
use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionOptions {
    /// Time step is `1 / (steps_per_radian * Omega)`, with `Omega` bounding the
    /// fastest oscillation of the integrand.
    pub steps_per_radian: f64,
    /// Propagation stops once `|X(s)|` falls below this fraction of `|C|`.
    pub tail_tol: f64,
    pub max_steps: usize,
}

impl Default for RegressionOptions {
    fn default() -> Self {
        Self { steps_per_radian: 20.0, tail_tol: 1e-14, max_steps: 2_000_000 }
    }
}

/// `M_jl(omega) = int dtau e^{-i omega tau} <psi_l^dagger(t + tau) psi_j(t)>` in
/// the steady state, from the regression theorem.
///
/// With `X(s) = e^{-i K s} C`, the correlation is `conj(X_lj(s))` for
/// `tau = s > 0` and `X_jl(s)` for `tau = -s < 0`; both half-line transforms
/// are done by composite Simpson quadrature.
pub fn regression_spectrum(
    model: &ModelSpec,
    j: usize,
    l: usize,
    omegas: &[f64],
    opts: RegressionOptions,
) -> Result<Vec<Complex64>> {
    let n = model.n_sites();
    if j >= n || l >= n {
        return Err(Error::InvalidParameter(format!("sites ({j}, {l}) outside a chain of {n} sites")));
    }
    let steady = moment_ode_steady_state(model)?;
    let k = drift_matrix(model);
    let scale = linalg::max_abs(&steady.covariance);
    if scale == 0.0 {
        return Ok(vec![c(0.0); omegas.len()]);
    }
    let fastest = omegas.iter().fold(0.0f64, |m, w| m.max(w.abs())) + linalg::spectral_norm(&k);
    let h = 1.0 / (opts.steps_per_radian * fastest.max(1e-3));
    let step = (&k * (-I * h)).exp();

    let mut forward = Vec::new();
    let mut backward = Vec::new();
    let mut x = steady.covariance.clone();
    loop {
        forward.push(x[(l, j)].conj());
        backward.push(x[(j, l)]);
        let done = linalg::max_abs(&x) < opts.tail_tol * scale && forward.len() % 2 == 1 && forward.len() > 2;
        if done {
            break;
        }
        if forward.len() > opts.max_steps {
            return Err(Error::NotConverged("two-time correlation did not decay".into()));
        }
        x = &step * x;
    }

    let weights: Vec<f64> = (0..forward.len())
        .map(|i| {
            let w = if i == 0 || i == forward.len() - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            w * h / 3.0
        })
        .collect();
    Ok(omegas
        .par_iter()
        .map(|&w| {
            let rot = Complex64::from_polar(1.0, w * h);
            let mut phase = c(1.0);
            let mut sum = c(0.0);
            for i in 0..forward.len() {
                sum += (forward[i] * phase.conj() + backward[i] * phase) * weights[i];
                phase *= rot;
                if i % 256 == 255 {
                    phase = Complex64::from_polar(1.0, w * h * (i + 1) as f64);
                }
            }
            sum
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMatrix;
    use crate::model::{Boundary, Statistics};

    #[test]
    fn single_site_lorentzian() {
        let one = |x: f64| CMatrix::from_element(1, 1, c(x));
        let (omega0, kappa, p) = (0.3, 4.0, 1.0);
        let m = ModelSpec::new(one(omega0), one(kappa), one(p), Statistics::Bosonic, Boundary::Open).unwrap();
        let omegas = [-2.0, 0.0, 0.3, 1.0, 4.0];
        let s = regression_spectrum(&m, 0, 0, &omegas, RegressionOptions::default()).unwrap();
        let width = 0.5 * (kappa - p);
        for (w, v) in omegas.iter().zip(&s) {
            let expected = p / ((w - omega0).powi(2) + width * width);
            assert!((v - c(expected)).norm() < 1e-6 * expected, "{w}: {v} vs {expected}");
        }
    }

    #[test]
    fn no_pump_zero_spectrum() {
        let one = |x: f64| CMatrix::from_element(1, 1, c(x));
        let m = ModelSpec::new(one(0.0), one(1.0), one(0.0), Statistics::Bosonic, Boundary::Open).unwrap();
        let s = regression_spectrum(&m, 0, 0, &[0.0, 1.0], RegressionOptions::default()).unwrap();
        assert!(s.iter().all(|z| z.norm() == 0.0));
    }
}
