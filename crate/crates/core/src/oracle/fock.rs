//! Full master equation on a truncated Fock space.
//!
//! Every term of the Lindbladian conserves `N(ket) - N(bra)`, so the unique
//! steady state lives in the block spanned by `|a><b|` with `N(a) = N(b)`.
//! Only that block is assembled.

use std::collections::HashMap;

use num_complex::Complex64;

use super::{drift_matrix, require_decaying, CovarianceSteadyState, OracleMethod};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector, I};
use crate::model::{ModelSpec, Statistics};

/// Largest number-conserving operator block the oracle will build.
pub const MAX_OPERATOR_DIM: usize = 2048;
pub const MAX_SITES: usize = 3;
pub const MAX_CUTOFF: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockOptions {
    /// Largest boson number per site; ignored for fermions.
    pub cutoff: usize,
    /// Relative covariance change tolerated when the cutoff is raised by one.
    pub cutoff_tol: f64,
}

impl Default for FockOptions {
    fn default() -> Self {
        Self { cutoff: 8, cutoff_tol: 0.01 }
    }
}

struct FockSpace {
    states: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
    statistics: Statistics,
}

impl FockSpace {
    fn new(n_sites: usize, max_per_site: usize, statistics: Statistics) -> Self {
        let mut states = vec![Vec::new()];
        for _ in 0..n_sites {
            states = states
                .into_iter()
                .flat_map(|s| {
                    (0..=max_per_site).map(move |q| {
                        let mut t = s.clone();
                        t.push(q);
                        t
                    })
                })
                .collect();
        }
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Self { states, index, statistics }
    }

    fn dim(&self) -> usize {
        self.states.len()
    }

    fn number(&self, i: usize) -> usize {
        self.states[i].iter().sum()
    }

    fn sign(&self, state: &[usize], site: usize) -> f64 {
        match self.statistics {
            Statistics::Bosonic => 1.0,
            Statistics::Fermionic => {
                if state[..site].iter().sum::<usize>() % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// `psi_site |i> = amp |out>`.
    fn lower(&self, site: usize, i: usize) -> Option<(usize, f64)> {
        let s = &self.states[i];
        if s[site] == 0 {
            return None;
        }
        let mut t = s.clone();
        t[site] -= 1;
        let amp = self.sign(s, site) * (s[site] as f64).sqrt();
        Some((self.index[&t], amp))
    }

    /// `psi_site^dagger |i> = amp |out>`, zero at the truncation edge.
    fn raise(&self, site: usize, i: usize) -> Option<(usize, f64)> {
        let s = &self.states[i];
        let mut t = s.clone();
        t[site] += 1;
        let out = *self.index.get(&t)?;
        Some((out, self.sign(s, site) * (t[site] as f64).sqrt()))
    }

    fn lowering_matrix(&self, site: usize) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim(), self.dim());
        for i in 0..self.dim() {
            if let Some((o, amp)) = self.lower(site, i) {
                m[(o, i)] = c(amp);
            }
        }
        m
    }
}

fn covariance_at_cutoff(model: &ModelSpec, per_site: usize) -> Result<(CMatrix, f64)> {
    let n = model.n_sites();
    let space = FockSpace::new(n, per_site, model.statistics());
    let d = space.dim();

    let mut sector = Vec::new();
    for a in 0..d {
        for b in 0..d {
            if space.number(a) == space.number(b) {
                sector.push((a, b));
            }
        }
    }
    let s_dim = sector.len();
    if s_dim > MAX_OPERATOR_DIM {
        return Err(Error::InvalidParameter(format!(
            "Fock operator block has dimension {s_dim} > {MAX_OPERATOR_DIM}; lower the cutoff"
        )));
    }
    let slot: HashMap<(usize, usize), usize> = sector.iter().enumerate().map(|(i, &p)| (p, i)).collect();

    let psi: Vec<CMatrix> = (0..n).map(|j| space.lowering_matrix(j)).collect();
    let psi_dag: Vec<CMatrix> = psi.iter().map(|m| m.adjoint()).collect();
    let (h, gd, gp) = (model.hamiltonian(), model.gamma_decay(), model.gamma_pump());
    let mut h_eff = CMatrix::zeros(d, d);
    for a in 0..n {
        for b in 0..n {
            if h[(a, b)] != c(0.0) {
                h_eff += (&psi_dag[a] * &psi[b]) * h[(a, b)];
            }
            if gd[(a, b)] != c(0.0) {
                h_eff -= (&psi_dag[b] * &psi[a]) * (gd[(a, b)] * I * 0.5);
            }
            if gp[(a, b)] != c(0.0) {
                h_eff -= (&psi[b] * &psi_dag[a]) * (gp[(a, b)] * I * 0.5);
            }
        }
    }
    let h_eff_dag = h_eff.adjoint();

    // L(rho) = -i H_eff rho + i rho H_eff^dagger
    //        + sum gd_jl psi_j rho psi_l^dagger + sum gp_jl psi_j^dagger rho psi_l
    let mut lindblad = CMatrix::zeros(s_dim, s_dim);
    for (col, &(a, b)) in sector.iter().enumerate() {
        for cidx in 0..d {
            let v = h_eff[(cidx, a)];
            if v != c(0.0) {
                lindblad[(slot[&(cidx, b)], col)] += -I * v;
            }
            let w = h_eff_dag[(b, cidx)];
            if w != c(0.0) {
                lindblad[(slot[&(a, cidx)], col)] += I * w;
            }
        }
        for j in 0..n {
            for l in 0..n {
                if gd[(j, l)] != c(0.0) {
                    if let (Some((a2, x)), Some((b2, y))) = (space.lower(j, a), space.lower(l, b)) {
                        lindblad[(slot[&(a2, b2)], col)] += gd[(j, l)] * (x * y);
                    }
                }
                if gp[(j, l)] != c(0.0) {
                    if let (Some((a2, x)), Some((b2, y))) = (space.raise(j, a), space.raise(l, b)) {
                        lindblad[(slot[&(a2, b2)], col)] += gp[(j, l)] * (x * y);
                    }
                }
            }
        }
    }

    let rho = kernel_vector(&lindblad, &sector)?;
    let residual = (&lindblad * &rho).iter().fold(0.0f64, |m, z| m.max(z.norm()));

    let mut cov = CMatrix::zeros(n, n);
    for j in 0..n {
        for l in 0..n {
            let op = &psi_dag[l] * &psi[j];
            let mut acc = c(0.0);
            for (idx, &(a, b)) in sector.iter().enumerate() {
                acc += rho[idx] * op[(b, a)];
            }
            cov[(j, l)] = acc;
        }
    }
    Ok((cov, residual))
}

/// Null vector of `l` by shifted inverse iteration from two unrelated starts,
/// normalised to unit trace. Different limits mean a degenerate kernel.
fn kernel_vector(l: &CMatrix, sector: &[(usize, usize)]) -> Result<CVector> {
    let dim = l.nrows();
    let shift = 1e-10 * linalg::max_abs(l).max(1.0);
    let shifted = l - CMatrix::identity(dim, dim) * c(shift);
    let lu = shifted.lu();
    let normalise = |v: CVector| -> Result<CVector> {
        let trace: Complex64 = sector.iter().enumerate().filter(|(_, p)| p.0 == p.1).map(|(i, _)| v[i]).sum();
        if trace.norm() < 1e-300 {
            return Err(Error::DegenerateSteadyState("steady state has zero trace".into()));
        }
        Ok(v / trace)
    };
    let iterate = |mut v: CVector| -> Result<CVector> {
        for _ in 0..4 {
            v = lu.solve(&v).ok_or_else(|| Error::NotConverged("singular shifted Lindbladian".into()))?;
            let norm = v.norm();
            v /= c(norm);
        }
        normalise(v)
    };
    let diag_start = CVector::from_iterator(dim, sector.iter().map(|p| c(if p.0 == p.1 { 1.0 } else { 0.0 })));
    let twisted = CVector::from_iterator(dim, (0..dim).map(|i| Complex64::new((0.7 * i as f64).cos() + 1.5, (1.3 * i as f64).sin())));
    let first = iterate(diag_start)?;
    let second = iterate(twisted)?;
    let spread = (&first - &second).iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if spread > 1e-6 * first.iter().fold(0.0f64, |m, z| m.max(z.norm())) {
        return Err(Error::DegenerateSteadyState(format!("two starts differ by {spread:.3e}")));
    }
    Ok(first)
}

/// Steady-state covariance from the full master equation on a truncated Fock
/// space. Bosons are checked against `cutoff + 1`.
pub fn fock_lindblad_steady_state(model: &ModelSpec, opts: FockOptions) -> Result<CovarianceSteadyState> {
    let n = model.n_sites();
    if n > MAX_SITES {
        return Err(Error::InvalidParameter(format!("Fock oracle supports at most {MAX_SITES} sites, got {n}")));
    }
    require_decaying(&drift_matrix(model))?;
    let (covariance, residual) = match model.statistics() {
        Statistics::Fermionic => covariance_at_cutoff(model, 1)?,
        Statistics::Bosonic => {
            if opts.cutoff == 0 || opts.cutoff > MAX_CUTOFF {
                return Err(Error::InvalidParameter(format!("cutoff must be in 1..={MAX_CUTOFF}, got {}", opts.cutoff)));
            }
            let (cov, residual) = covariance_at_cutoff(model, opts.cutoff)?;
            let (next, _) = covariance_at_cutoff(model, opts.cutoff + 1)?;
            let scale = linalg::max_abs(&cov).max(linalg::max_abs(&next));
            let change = linalg::max_abs(&(&next - &cov)) / scale.max(f64::MIN_POSITIVE);
            if change > opts.cutoff_tol {
                return Err(Error::CutoffTooSmall { cutoff: opts.cutoff, change });
            }
            (cov, residual)
        }
    };
    let covariance = (&covariance + covariance.adjoint()) * c(0.5);
    Ok(CovarianceSteadyState { covariance, method: OracleMethod::FockIntegrator, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_hatano_nelson, Boundary, HatanoNelsonParams};
    use crate::oracle::moment_ode_steady_state;

    fn site(kappa: f64, pump: f64, stats: Statistics) -> ModelSpec {
        let one = |x: f64| CMatrix::from_element(1, 1, c(x));
        ModelSpec::new(one(0.0), one(kappa), one(pump), stats, Boundary::Open).unwrap()
    }

    #[test]
    fn single_bosonic_site() {
        let s = fock_lindblad_steady_state(&site(4.0, 1.0, Statistics::Bosonic), FockOptions::default()).unwrap();
        assert!((s.occupations()[0] - 1.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn single_fermionic_site_and_pauli_bound() {
        let s = fock_lindblad_steady_state(&site(4.0, 1.0, Statistics::Fermionic), FockOptions::default()).unwrap();
        assert!((s.occupations()[0] - 0.2).abs() < 1e-10);
        let strong = fock_lindblad_steady_state(&site(0.1, 40.0, Statistics::Fermionic), FockOptions::default()).unwrap();
        let n = strong.occupations()[0];
        assert!((0.0..=1.0).contains(&n) && (n - 40.0 / 40.1).abs() < 1e-10);
    }

    #[test]
    fn small_cutoff_is_reported() {
        let r = fock_lindblad_steady_state(&site(1.0, 0.8, Statistics::Bosonic), FockOptions { cutoff: 3, ..Default::default() });
        assert!(matches!(r, Err(Error::CutoffTooSmall { cutoff: 3, .. })));
    }

    #[test]
    fn two_site_chain_matches_moments() {
        let p = HatanoNelsonParams { t_d: 0.2, kappa: 2.0, ..HatanoNelsonParams::figure(2.0, 2, Statistics::Bosonic, Boundary::Open) };
        let m = build_hatano_nelson(&p).unwrap();
        let fock = fock_lindblad_steady_state(&m, FockOptions::default()).unwrap();
        let moments = moment_ode_steady_state(&m).unwrap();
        let scale = linalg::max_abs(&moments.covariance);
        assert!(linalg::max_abs(&(fock.covariance - moments.covariance)) < 0.02 * scale);
    }

    #[test]
    fn three_site_fermions_match_moments() {
        let m = build_hatano_nelson(&HatanoNelsonParams::figure(3.0, 3, Statistics::Fermionic, Boundary::Open)).unwrap();
        let fock = fock_lindblad_steady_state(&m, FockOptions::default()).unwrap();
        let moments = moment_ode_steady_state(&m).unwrap();
        assert!(linalg::max_abs(&(&fock.covariance - &moments.covariance)) < 1e-9);
        let ev = linalg::hermitian_eigenvalues(&fock.covariance);
        assert!(ev[0] > -1e-12 && ev[2] < 1.0 + 1e-12);
    }
}
