//! The chiral doubled Hamiltonian `[[0, omega - H_R], [omega - H_A, 0]]` and
//! its spectrum, obtained from the singular value decomposition of
//! `omega - H_R`.
//!
//! With `omega - H_R = sum_n eps_n u_n v_n^dagger`, the doubled matrix has
//! eigenpairs `(u_n, +-v_n)` with eigenvalues `+-eps_n`, and the retarded
//! Green's function is `G_R = sum_n v_n u_n^dagger / eps_n`. Near-zero `eps_n`
//! in an open chain are the boundary modes: `u_n` sits on one edge and `v_n` on
//! the other.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::keldysh::{self, KeldyshBlocks};
use crate::linalg::{self, c, CMatrix, CVector};
use crate::model::{BlochModel, Boundary, ModelSpec};

/// Below this singular value `greens_from_svd` refuses to invert.
pub const SVD_SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SingularTriple {
    pub epsilon: f64,
    /// Left singular vector.
    pub u: CVector,
    /// Right singular vector.
    pub v: CVector,
}

/// Singular triples of `omega - H_R`, ascending in `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSpectrum {
    pub omega: f64,
    pub triples: Vec<SingularTriple>,
}

impl SingularSpectrum {
    pub fn epsilons(&self) -> Vec<f64> {
        self.triples.iter().map(|t| t.epsilon).collect()
    }

    pub fn min_epsilon(&self) -> f64 {
        self.triples.first().map_or(f64::INFINITY, |t| t.epsilon)
    }

    pub fn max_epsilon(&self) -> f64 {
        self.triples.last().map_or(0.0, |t| t.epsilon)
    }

    /// Sorted eigenvalues `{-eps_n} U {+eps_n}` of the doubled Hamiltonian.
    pub fn doubled_eigenvalues(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.triples.iter().flat_map(|t| [-t.epsilon, t.epsilon]).collect();
        out.sort_by(f64::total_cmp);
        out
    }
}

pub fn doubled_hamiltonian(blocks: &KeldyshBlocks, omega: f64) -> CMatrix {
    let n = blocks.dim();
    let shifted = blocks.shifted(omega);
    let mut out = CMatrix::zeros(2 * n, 2 * n);
    out.view_mut((0, n), (n, n)).copy_from(&shifted);
    out.view_mut((n, 0), (n, n)).copy_from(&shifted.adjoint());
    out
}

pub fn singular_spectrum(blocks: &KeldyshBlocks, omega: f64) -> SingularSpectrum {
    let svd = linalg::svd_ascending(&blocks.shifted(omega));
    let triples = svd
        .values
        .iter()
        .enumerate()
        .map(|(n, &epsilon)| SingularTriple {
            epsilon,
            u: svd.u.column(n).into_owned(),
            v: svd.v.column(n).into_owned(),
        })
        .collect();
    SingularSpectrum { omega, triples }
}

/// `G_R(omega)_{jl} = sum_n (v_n)_j conj((u_n)_l) / eps_n`.
pub fn greens_from_svd(spectrum: &SingularSpectrum) -> Result<CMatrix> {
    let n = spectrum.triples.first().map_or(0, |t| t.u.len());
    if let Some(bad) = spectrum.triples.iter().find(|t| t.epsilon <= SVD_SINGULAR_TOL) {
        return Err(Error::SingularAtFrequency { omega: spectrum.omega, rcond: bad.epsilon });
    }
    let mut g = CMatrix::zeros(n, n);
    for t in &spectrum.triples {
        g += (&t.v * t.u.adjoint()) * c(1.0 / t.epsilon);
    }
    Ok(g)
}

/// How the zero-mode threshold is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZeroModeThreshold {
    Absolute(f64),
    /// Multiple of the spectral norm of `omega - H_R`.
    Relative(f64),
}

impl Default for ZeroModeThreshold {
    fn default() -> Self {
        ZeroModeThreshold::Relative(1e-6)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeOptions {
    pub threshold: ZeroModeThreshold,
    /// Fraction of sites counted as "edge" on each side.
    pub window_fraction: f64,
    /// Weight above which a vector counts as edge-localized.
    pub criterion: f64,
}

impl Default for EdgeOptions {
    fn default() -> Self {
        Self { threshold: ZeroModeThreshold::default(), window_fraction: 0.2, criterion: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeMode {
    pub epsilon: f64,
    /// Weight of `|u_n|^2` on the left edge window.
    pub left_weight: f64,
    /// Weight of `|v_n|^2` on the right edge window.
    pub right_weight: f64,
    pub edge_localized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeModeReport {
    pub omega: f64,
    pub threshold: f64,
    pub count: usize,
    pub modes: Vec<EdgeMode>,
}

impl EdgeModeReport {
    pub fn epsilons(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.epsilon).collect()
    }
}

fn edge_weight(vec: &CVector, window: usize, left: bool) -> f64 {
    let n = vec.len();
    let total: f64 = vec.iter().map(|z| z.norm_sqr()).sum();
    let range = if left { 0..window } else { n - window..n };
    vec.rows_range(range).iter().map(|z| z.norm_sqr()).sum::<f64>() / total
}

pub fn edge_modes(model: &ModelSpec, omega: f64, opts: EdgeOptions) -> Result<EdgeModeReport> {
    if model.boundary() != Boundary::Open {
        return Err(Error::PeriodicBoundary);
    }
    let spectrum = singular_spectrum(&keldysh::blocks_real_space(model), omega);
    let threshold = match opts.threshold {
        ZeroModeThreshold::Absolute(t) => t,
        ZeroModeThreshold::Relative(r) => r * spectrum.max_epsilon(),
    };
    let n = model.n_sites();
    let window = ((opts.window_fraction * n as f64).round() as usize).clamp(1, n);
    let modes: Vec<EdgeMode> = spectrum
        .triples
        .iter()
        .take_while(|t| t.epsilon < threshold)
        .map(|t| {
            let left_weight = edge_weight(&t.u, window, true);
            let right_weight = edge_weight(&t.v, window, false);
            EdgeMode {
                epsilon: t.epsilon,
                left_weight,
                right_weight,
                edge_localized: left_weight > opts.criterion || right_weight > opts.criterion,
            }
        })
        .collect();
    Ok(EdgeModeReport { omega, threshold, count: modes.len(), modes })
}

/// Doubled-Hamiltonian eigenvalues over a grid; row `i` holds the sorted
/// `+-eps` values at `grid[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFlow {
    pub grid: Vec<f64>,
    pub bands: Vec<Vec<f64>>,
}

impl SpectralFlow {
    /// Smallest non-negative doubled eigenvalue at every grid point.
    pub fn min_epsilons(&self) -> Vec<f64> {
        self.bands
            .iter()
            .map(|row| row.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min))
            .collect()
    }
}

/// Real-space spectral flow versus `omega`.
pub fn spectral_flow_omega(model: &ModelSpec, omegas: &[f64]) -> SpectralFlow {
    let blocks = keldysh::blocks_real_space(model);
    let bands = omegas
        .par_iter()
        .map(|&w| singular_spectrum(&blocks, w).doubled_eigenvalues())
        .collect();
    SpectralFlow { grid: omegas.to_vec(), bands }
}

/// Bloch spectral flow versus `k` at fixed `omega`: `+-|omega - H_R(k)|`.
pub fn spectral_flow_k(bloch: &BlochModel, omega: f64, ks: &[f64]) -> SpectralFlow {
    let bands = ks
        .iter()
        .map(|&k| {
            let e = keldysh::bloch_detuning(bloch, omega, k).norm();
            vec![-e, e]
        })
        .collect();
    SpectralFlow { grid: ks.to_vec(), bands }
}

/// Periodic bands versus `omega`: at each `omega` the values
/// `+-|omega - H_R(k_m)|` over a uniform `n_k` grid, sorted.
pub fn bloch_bands_vs_omega(bloch: &BlochModel, omegas: &[f64], n_k: usize) -> SpectralFlow {
    let ks = uniform_k_grid(n_k);
    let bands = omegas
        .par_iter()
        .map(|&w| {
            let mut row: Vec<f64> = ks
                .iter()
                .flat_map(|&k| {
                    let e = keldysh::bloch_detuning(bloch, w, k).norm();
                    [-e, e]
                })
                .collect();
            row.sort_by(f64::total_cmp);
            row
        })
        .collect();
    SpectralFlow { grid: omegas.to_vec(), bands }
}

/// `n` points `-pi + 2 pi m / n`.
pub fn uniform_k_grid(n: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    (0..n).map(|m| -PI + 2.0 * PI * m as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_hatano_nelson, hatano_nelson_bloch, HatanoNelsonParams, Statistics};
    use num_complex::Complex64;

    fn figure(kappa: f64, n: usize, stats: Statistics, boundary: Boundary) -> ModelSpec {
        build_hatano_nelson(&HatanoNelsonParams::figure(kappa, n, stats, boundary)).unwrap()
    }

    #[test]
    fn doubled_is_hermitian_with_paired_spectrum() {
        let m = figure(5.0, 6, Statistics::Bosonic, Boundary::Open);
        let b = keldysh::blocks_real_space(&m);
        let d = doubled_hamiltonian(&b, 0.7);
        assert!(linalg::hermiticity_residual(&d) < 1e-12);
        let ev = linalg::hermitian_eigenvalues(&d);
        for (a, b) in ev.iter().zip(ev.iter().rev()) {
            assert!((a + b).abs() < 1e-10);
        }
    }

    #[test]
    fn scalar_doubled_eigenvalues_are_plus_minus_modulus() {
        let mut b = keldysh::blocks_real_space(&figure(5.0, 2, Statistics::Bosonic, Boundary::Open));
        b.h_r = CMatrix::from_element(1, 1, Complex64::new(0.4, -1.3));
        b.h_a = b.h_r.adjoint();
        let ev = linalg::hermitian_eigenvalues(&doubled_hamiltonian(&b, 1.0));
        let modulus = Complex64::new(0.6, 1.3).norm();
        assert!((ev[0] + modulus).abs() < 1e-14 && (ev[1] - modulus).abs() < 1e-14);
    }

    #[test]
    fn scalar_svd_green_function() {
        let mut b = keldysh::blocks_real_space(&figure(5.0, 2, Statistics::Bosonic, Boundary::Open));
        b.h_r = CMatrix::from_element(1, 1, Complex64::new(0.4, -1.3));
        b.h_a = b.h_r.adjoint();
        let g = greens_from_svd(&singular_spectrum(&b, 1.0)).unwrap();
        let z = Complex64::new(0.6, 1.3);
        // 1/z = conj(z)/|z|^2: conjugate phase over the modulus.
        let expected = (z.conj() / z.norm()) / z.norm();
        assert!((g[(0, 0)] - expected).norm() < 1e-14);
    }

    #[test]
    fn far_frequency_gap_bound() {
        let b = keldysh::blocks_real_space(&figure(7.0, 10, Statistics::Bosonic, Boundary::Open));
        let norm = linalg::spectral_norm(&b.h_r);
        let s = singular_spectrum(&b, 100.0);
        assert!(s.min_epsilon() >= 100.0 - norm - 1e-9);
    }

    #[test]
    fn zero_mode_inside_window_and_gap_outside() {
        let b = keldysh::blocks_real_space(&figure(4.0, 20, Statistics::Bosonic, Boundary::Open));
        assert!(singular_spectrum(&b, 0.0).min_epsilon() < 1e-6);
        assert!(singular_spectrum(&b, 3.0).min_epsilon() > 0.1);
    }

    #[test]
    fn svd_inverse_matches_direct_inverse() {
        let b = keldysh::blocks_real_space(&figure(7.0, 8, Statistics::Bosonic, Boundary::Open));
        let s = singular_spectrum(&b, 0.9);
        let g = greens_from_svd(&s).unwrap();
        let direct = keldysh::retarded(&b, 0.9).unwrap();
        assert!(linalg::max_abs(&(g - &direct)) < 1e-10 * linalg::max_abs(&direct));
    }

    #[test]
    fn smallest_singular_value_dominates_green_function() {
        let b = keldysh::blocks_real_space(&figure(4.0, 12, Statistics::Bosonic, Boundary::Open));
        let s = singular_spectrum(&b, 0.5);
        let g = greens_from_svd(&s).unwrap();
        let t = &s.triples[0];
        let leading = (&t.v * t.u.adjoint()) * c(1.0 / t.epsilon);
        assert!(linalg::max_abs(&(g - &leading)) < 1e-3 * linalg::max_abs(&leading));
    }

    #[test]
    fn edge_modes_examples() {
        let m = figure(4.0, 40, Statistics::Bosonic, Boundary::Open);
        let r = edge_modes(&m, 0.0, EdgeOptions { threshold: ZeroModeThreshold::Absolute(1e-4), ..Default::default() }).unwrap();
        assert_eq!(r.count, 1);
        assert!(r.modes[0].left_weight > 0.9 && r.modes[0].right_weight > 0.9);

        for w in [-1.5, 0.0, 0.8, 2.5] {
            let f = figure(4.0, 40, Statistics::Fermionic, Boundary::Open);
            let r = edge_modes(&f, w, EdgeOptions { threshold: ZeroModeThreshold::Absolute(1e-4), ..Default::default() }).unwrap();
            assert_eq!(r.count, 0);
        }

        let trivial = figure(12.0, 40, Statistics::Bosonic, Boundary::Open);
        let r = edge_modes(&trivial, 0.0, EdgeOptions { threshold: ZeroModeThreshold::Absolute(1e-4), ..Default::default() }).unwrap();
        assert_eq!(r.count, 0);

        let pbc = figure(4.0, 10, Statistics::Bosonic, Boundary::Periodic);
        assert_eq!(edge_modes(&pbc, 0.0, EdgeOptions::default()), Err(Error::PeriodicBoundary));
    }

    #[test]
    fn k_flow_examples() {
        let ks = uniform_k_grid(1024);
        let bos = hatano_nelson_bloch(&HatanoNelsonParams::figure(4.0, 2, Statistics::Bosonic, Boundary::Periodic)).unwrap();
        let at2 = spectral_flow_k(&bos, 2.0, &ks).min_epsilons();
        assert!(at2.iter().cloned().fold(f64::INFINITY, f64::min) < 1e-12);
        let at0 = spectral_flow_k(&bos, 0.0, &ks).min_epsilons();
        assert!(at0.iter().all(|&e| (e - 2.0).abs() < 1e-12));

        let fer = bos.with_statistics(Statistics::Fermionic);
        for w in [-3.0, 0.0, 2.0, 5.0] {
            let flow = spectral_flow_k(&fer, w, &ks);
            assert!(flow.min_epsilons().iter().all(|&e| e >= 2.0 - 1e-10));
        }
    }

    #[test]
    fn omega_flow_rows_are_sorted_pairs() {
        let m = figure(4.0, 8, Statistics::Bosonic, Boundary::Open);
        let flow = spectral_flow_omega(&m, &[-1.0, 0.5, 2.5]);
        for row in &flow.bands {
            assert_eq!(row.len(), 16);
            assert!(row.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
