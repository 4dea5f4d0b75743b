//! Keldysh blocks, Green's functions and the frequency-resolved correlation
//! matrix of a quadratic gain/loss lattice.
//!
//! Bosons: `H_R = H - i(gamma_d - gamma_p)/2`, `Gamma = gamma_d + gamma_p`.
//! Fermions: `H_R = H - i(gamma_d + gamma_p)/2`, `Gamma = gamma_d - gamma_p`.
//! In both cases `H_A = H_R^dagger`, and the retarded block carries the minus
//! sign so that a pure-loss site has its pole in the lower half plane.
//!
//! Frequency convention: `M(omega)` is the Fourier transform with `e^{-i omega tau}`
//! of the two-time correlation, so the equal-time covariance is
//! `(1/2pi) int M(omega) d omega` and `M_jj(omega)` is the frequency-resolved
//! occupation of site `j`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, I};
use crate::model::{BlochModel, ModelSpec, Statistics};

/// Reciprocal condition number below which `omega - H_R` counts as singular.
pub const SINGULAR_RCOND: f64 = 1e-12;

/// `max Im lambda(H_R)` must be below `-STABILITY_MARGIN` for a steady state.
pub const STABILITY_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct KeldyshBlocks {
    pub h_r: CMatrix,
    pub h_a: CMatrix,
    pub gamma: CMatrix,
    pub statistics: Statistics,
}

impl KeldyshBlocks {
    fn from_parts(h: &CMatrix, decay: &CMatrix, pump: &CMatrix, statistics: Statistics) -> Self {
        let sign = statistics.pump_sign();
        let h_r = h - (decay - pump * c(sign)) * (I * 0.5);
        let gamma = decay + pump * c(sign);
        let h_a = h_r.adjoint();
        Self { h_r, h_a, gamma, statistics }
    }

    pub fn dim(&self) -> usize {
        self.h_r.nrows()
    }

    /// `omega - H_R`.
    pub fn shifted(&self, omega: f64) -> CMatrix {
        CMatrix::identity(self.dim(), self.dim()) * c(omega) - &self.h_r
    }
}

pub fn blocks_real_space(model: &ModelSpec) -> KeldyshBlocks {
    KeldyshBlocks::from_parts(model.hamiltonian(), model.gamma_decay(), model.gamma_pump(), model.statistics())
}

/// 1x1 blocks of a Bloch model at quasi-momentum `k`.
pub fn blocks_bloch(model: &BlochModel, k: f64) -> KeldyshBlocks {
    let one = |x: f64| CMatrix::from_element(1, 1, c(x));
    KeldyshBlocks::from_parts(
        &one(model.hamiltonian_at(k)),
        &one(model.decay_at(k)),
        &one(model.pump_at(k)),
        model.statistics(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreensFunctions {
    pub omega: f64,
    pub g_r: CMatrix,
    pub g_a: CMatrix,
    pub g_k: CMatrix,
}

/// `G_R = (omega - H_R)^{-1}` alone.
pub fn retarded(blocks: &KeldyshBlocks, omega: f64) -> Result<CMatrix> {
    linalg::invert_checked(&blocks.shifted(omega), SINGULAR_RCOND)
        .map_err(|rcond| Error::SingularAtFrequency { omega, rcond })
}

/// Retarded, advanced and Keldysh Green's functions at `omega`, with
/// `G_K = G_R (-i Gamma) G_A`.
pub fn greens(blocks: &KeldyshBlocks, omega: f64) -> Result<GreensFunctions> {
    let g_r = retarded(blocks, omega)?;
    let g_a = g_r.adjoint();
    let g_k = &g_r * (&blocks.gamma * (-I)) * &g_a;
    Ok(GreensFunctions { omega, g_r, g_a, g_k })
}

/// `M(omega) = G_R gamma_p G_A`, identical for both statistics.
pub fn correlation_matrix(model: &ModelSpec, omega: f64) -> Result<CMatrix> {
    let g_r = retarded(&blocks_real_space(model), omega)?;
    Ok(&g_r * model.gamma_pump() * g_r.adjoint())
}

/// The statistics-dependent route `(i eta / 2)(G_K + G_A - G_R)`.
pub fn correlation_from_keldysh(greens: &GreensFunctions, statistics: Statistics) -> CMatrix {
    let eta = match statistics {
        Statistics::Bosonic => 1.0,
        Statistics::Fermionic => -1.0,
    };
    (&greens.g_k + &greens.g_a - &greens.g_r) * (I * (0.5 * eta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    pub max_im: f64,
    pub stable: bool,
}

pub fn stability(model: &ModelSpec) -> Result<Stability> {
    let blocks = blocks_real_space(model);
    let max_im = linalg::eigenvalues(&blocks.h_r)?
        .iter()
        .map(|z| z.im)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Stability { max_im, stable: max_im < -STABILITY_MARGIN })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    /// Convergence threshold on the largest entry change between refinements.
    pub tol: f64,
    pub initial_points: usize,
    pub max_points: usize,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self { tol: 1e-8, initial_points: 128, max_points: 1 << 18 }
    }
}

/// Result of [`integrated_occupation`].
#[derive(Debug, Clone)]
pub struct FrequencyIntegral {
    pub covariance: CMatrix,
    pub points: usize,
    pub last_change: f64,
}

/// `(1/2pi) int M(omega) d omega` over the whole real line.
///
/// The line is mapped onto `theta in (-pi/2, pi/2)` by
/// `omega = center + scale tan(theta)`. The transformed integrand tends to
/// `gamma_p / scale` at both ends, so it is smooth and periodic and the
/// midpoint rule converges geometrically; the point count is doubled until
/// the result changes by less than `tol`.
pub fn integrated_occupation(model: &ModelSpec, opts: IntegrationOptions) -> Result<FrequencyIntegral> {
    let st = stability(model)?;
    if !st.stable {
        return Err(Error::UnstableModel { max_im: st.max_im });
    }
    let blocks = blocks_real_space(model);
    let eig = linalg::eigenvalues(&blocks.h_r)?;
    let n_eig = eig.len() as f64;
    let center = eig.iter().map(|z| z.re).sum::<f64>() / n_eig;
    let spread = eig.iter().map(|z| (z.re - center).abs().max(z.im.abs())).fold(0.0, f64::max);
    let scale = spread.max(1e-3);

    let estimate = |points: usize| -> Result<CMatrix> {
        let h = PI / points as f64;
        let terms: Vec<CMatrix> = (0..points)
            .into_par_iter()
            .map(|m| {
                let theta = -PI / 2.0 + (m as f64 + 0.5) * h;
                let omega = center + scale * theta.tan();
                let jac = scale / theta.cos().powi(2);
                correlation_matrix(model, omega).map(|mm| mm * c(jac))
            })
            .collect::<Result<_>>()?;
        let n = model.n_sites();
        let total = terms.iter().fold(CMatrix::zeros(n, n), |acc, t| acc + t);
        Ok(total * c(h / (2.0 * PI)))
    };

    let mut points = opts.initial_points.max(8);
    let mut previous = estimate(points)?;
    loop {
        points *= 2;
        let next = estimate(points)?;
        let change = linalg::max_abs(&(&next - &previous));
        let size = linalg::max_abs(&next).max(1.0);
        if change < opts.tol * size {
            return Ok(FrequencyIntegral { covariance: next, points, last_change: change });
        }
        if points >= opts.max_points {
            return Err(Error::NotConverged(format!(
                "frequency integral changed by {change:e} at {points} points"
            )));
        }
        previous = next;
    }
}

/// Scalar `omega - H_R(k)`, the function whose phase defines the winding.
pub fn bloch_detuning(model: &BlochModel, omega: f64, k: f64) -> Complex64 {
    c(omega) - model.retarded_at(k)
}
