//! Particle-number susceptibility `chi_jl(omega) = d<n_j(omega)>/d Omega_l` to a
//! local frequency shift `H_ll -> H_ll + Omega_l`, and extraction of the
//! critical frequency from the crossing of `log chi` lines.
//!
//! Sites are 0-based throughout.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::keldysh::{self, blocks_real_space};
use crate::linalg::{self, CMatrix};
use crate::model::ModelSpec;

/// `|max Im lambda(H_R)|` up to which a model counts as marginally stable.
pub const MARGINAL_TOL: f64 = 1e-9;
pub const DERIVATIVE_STEP: f64 = 1e-6;
/// Fewest frequencies per site the refined fit window may hold.
pub const MIN_WINDOW_POINTS: usize = 7;
pub const PARALLEL_SLOPE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SteadyState {
    Stable,
    /// The slowest mode sits on the real axis; `G_R` is still finite off its spectrum.
    Marginal,
}

/// Accepts stable and marginal models, rejects growing ones.
pub fn steady_state_gate(model: &ModelSpec) -> Result<SteadyState> {
    let s = keldysh::stability(model)?;
    if s.max_im > MARGINAL_TOL {
        return Err(Error::UnstableModel { max_im: s.max_im });
    }
    if s.max_im >= -MARGINAL_TOL {
        log::warn!("marginally stable model (max Im lambda = {:e})", s.max_im);
        return Ok(SteadyState::Marginal);
    }
    Ok(SteadyState::Stable)
}

fn check_site(model: &ModelSpec, l: usize) -> Result<()> {
    if l >= model.n_sites() {
        return Err(Error::InvalidParameter(format!("site {l} outside a chain of {} sites", model.n_sites())));
    }
    Ok(())
}

struct Response {
    g_r: CMatrix,
    m: CMatrix,
}

fn response_matrices(model: &ModelSpec, omega: f64) -> Result<Response> {
    let g_r = keldysh::retarded(&blocks_real_space(model), omega)?;
    let m = &g_r * model.gamma_pump() * g_r.adjoint();
    Ok(Response { g_r, m })
}

/// `chi_{jl}(omega) = 2 Re[G^R_{jl} M_{lj}]` for every `j`.
pub fn susceptibility(model: &ModelSpec, omega: f64, l: usize) -> Result<Vec<f64>> {
    check_site(model, l)?;
    steady_state_gate(model)?;
    let r = response_matrices(model, omega)?;
    Ok((0..model.n_sites()).map(|j| 2.0 * (r.g_r[(j, l)] * r.m[(l, j)]).re).collect())
}

/// `G^R_{jl} M_{lj} + M_{jl} G^A_{lj}`, kept complex so its imaginary part can be checked.
pub fn susceptibility_two_term(model: &ModelSpec, omega: f64, l: usize) -> Result<Vec<num_complex::Complex64>> {
    check_site(model, l)?;
    steady_state_gate(model)?;
    let r = response_matrices(model, omega)?;
    let g_a = r.g_r.adjoint();
    Ok((0..model.n_sites()).map(|j| r.g_r[(j, l)] * r.m[(l, j)] + r.m[(j, l)] * g_a[(l, j)]).collect())
}

/// Frequency-resolved occupations `<n_j(omega)> = M_jj(omega)`.
pub fn occupations(model: &ModelSpec, omega: f64) -> Result<Vec<f64>> {
    let m = keldysh::correlation_matrix(model, omega)?;
    Ok((0..model.n_sites()).map(|j| m[(j, j)].re).collect())
}

/// `chi_{jl}` by central differences of the occupations in `Omega_l`.
pub fn susceptibility_finite_difference(model: &ModelSpec, omega: f64, l: usize, eps: f64) -> Result<Vec<f64>> {
    check_site(model, l)?;
    let up = occupations(&model.with_onsite_shift(l, eps), omega)?;
    let down = occupations(&model.with_onsite_shift(l, -eps), omega)?;
    Ok(up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * eps)).collect())
}

/// `values[j][i] = chi_{j,source}(omegas[i])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SusceptibilityMap {
    pub omegas: Vec<f64>,
    pub source: usize,
    pub values: Vec<Vec<f64>>,
}

/// Per-frequency `chi_{., l}` after a single stability check; frequencies
/// where `omega - H_R` is singular keep their error.
pub fn susceptibility_scan(model: &ModelSpec, omegas: &[f64], l: usize) -> Result<Vec<Result<Vec<f64>>>> {
    check_site(model, l)?;
    steady_state_gate(model)?;
    let blocks = blocks_real_space(model);
    Ok(omegas
        .par_iter()
        .map(|&w| {
            let g_r = keldysh::retarded(&blocks, w)?;
            let m = &g_r * model.gamma_pump() * g_r.adjoint();
            Ok((0..model.n_sites()).map(|j| 2.0 * (g_r[(j, l)] * m[(l, j)]).re).collect())
        })
        .collect())
}

pub fn susceptibility_map(model: &ModelSpec, omegas: &[f64], l: usize) -> Result<SusceptibilityMap> {
    let columns = susceptibility_scan(model, omegas, l)?.into_iter().collect::<Result<Vec<_>>>()?;
    let values = (0..model.n_sites()).map(|j| columns.iter().map(|col| col[j]).collect()).collect();
    Ok(SusceptibilityMap { omegas: omegas.to_vec(), source: l, values })
}

/// Relative residual of `dG_R/dOmega_l = G_R 1_l G_R` with a forward step `eps`.
pub fn greens_derivative_residual(model: &ModelSpec, omega: f64, l: usize, eps: f64) -> Result<f64> {
    check_site(model, l)?;
    let g0 = keldysh::retarded(&blocks_real_space(model), omega)?;
    let g1 = keldysh::retarded(&blocks_real_space(&model.with_onsite_shift(l, eps)), omega)?;
    let exact = g0.column(l) * g0.row(l);
    let numeric = (g1 - &g0) / linalg::c(eps);
    Ok(linalg::spectral_norm(&(numeric - &exact)) / linalg::spectral_norm(&exact))
}

pub fn greens_derivative_identity(model: &ModelSpec, omega: f64, l: usize) -> Result<f64> {
    greens_derivative_residual(model, omega, l, DERIVATIVE_STEP)
}

/// Joint fit of `log|chi_{j,l}(omega)| = alpha - x_j (omega - beta)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalFit {
    pub beta: f64,
    pub alpha: f64,
    /// Fitted `x_j`, one per probe site.
    pub slopes: Vec<f64>,
    /// Root-mean-square residual of the final fit.
    pub residual: f64,
    /// Pairwise crossings of independent per-site lines in the final window.
    pub crossings: Vec<f64>,
    pub window: (f64, f64),
    pub points: usize,
}

struct Projected {
    sse: f64,
    alpha: f64,
    x: Vec<f64>,
}

/// Least squares in `(alpha, x_j)` at fixed `beta`, via the normal equations
/// of the arrow-shaped design matrix.
fn project(omegas: &[f64], logs: &[Vec<f64>], beta: f64) -> Projected {
    let d: Vec<f64> = omegas.iter().map(|w| beta - w).collect();
    let n = omegas.len() as f64;
    let sd: f64 = d.iter().sum();
    let sdd: f64 = d.iter().map(|v| v * v).sum();
    let sums: Vec<(f64, f64)> = logs
        .iter()
        .map(|y| (y.iter().sum(), y.iter().zip(&d).map(|(a, b)| a * b).sum()))
        .collect();
    // x_j = (s_yd - alpha s_d) / s_dd; substitute into the alpha equation.
    let j = logs.len() as f64;
    let sy_total: f64 = sums.iter().map(|s| s.0).sum();
    let syd_total: f64 = sums.iter().map(|s| s.1).sum();
    let alpha = (sy_total - sd * syd_total / sdd) / (j * (n - sd * sd / sdd));
    let x: Vec<f64> = sums.iter().map(|&(_, syd)| (syd - alpha * sd) / sdd).collect();
    let sse = logs
        .iter()
        .zip(&x)
        .map(|(y, &xj)| y.iter().zip(&d).map(|(yi, di)| (yi - alpha - xj * di).powi(2)).sum::<f64>())
        .sum();
    Projected { sse, alpha, x }
}

fn line_fit(omegas: &[f64], y: &[f64]) -> (f64, f64) {
    let n = omegas.len() as f64;
    let mw = omegas.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = omegas.iter().zip(y).map(|(w, v)| (w - mw) * (v - my)).sum();
    let sxx: f64 = omegas.iter().map(|w| (w - mw).powi(2)).sum();
    let slope = sxy / sxx;
    (my - slope * mw, slope)
}

fn pairwise_crossings(lines: &[(f64, f64)]) -> Vec<f64> {
    let mut out = Vec::new();
    for a in 0..lines.len() {
        for b in a + 1..lines.len() {
            let ds = lines[a].1 - lines[b].1;
            if ds.abs() > PARALLEL_SLOPE_TOL {
                out.push((lines[b].0 - lines[a].0) / ds);
            }
        }
    }
    out
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn golden_beta(omegas: &[f64], logs: &[Vec<f64>], lo: f64, hi: f64) -> f64 {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (project(omegas, logs, x1).sse, project(omegas, logs, x2).sse);
    for _ in 0..100 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = project(omegas, logs, x1).sse;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = project(omegas, logs, x2).sse;
        }
    }
    0.5 * (a + b)
}

/// Fit the crossing of `log|chi|` lines over `omegas` (ascending), then refit
/// on windows of halving width centred on the running estimate while each
/// window keeps at least `MIN_WINDOW_POINTS` frequencies. Curvature of the
/// lines away from the crossing biases a single wide fit.
pub fn fit_crossing(omegas: &[f64], logs: &[Vec<f64>]) -> Result<CriticalFit> {
    if logs.len() < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 probe sites, got {}", logs.len())));
    }
    if omegas.len() < MIN_WINDOW_POINTS || logs.iter().any(|y| y.len() != omegas.len()) {
        return Err(Error::InvalidParameter(format!("need at least {MIN_WINDOW_POINTS} frequencies per site")));
    }
    if logs.iter().flatten().all(|&v| v == f64::NEG_INFINITY) {
        // chi vanishes identically: flat, coincident lines.
        return Err(Error::NoCrossing);
    }
    if logs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("log susceptibility is not finite (chi = 0?)".into()));
    }
    let (w_min, w_max) = (omegas[0], omegas[omegas.len() - 1]);
    let span = w_max - w_min;

    let lines: Vec<(f64, f64)> = logs.iter().map(|y| line_fit(omegas, y)).collect();
    let (s_lo, s_hi) = lines.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), l| (lo.min(l.1), hi.max(l.1)));
    if s_hi - s_lo <= PARALLEL_SLOPE_TOL {
        return Err(Error::NoCrossing);
    }
    let start = median(&pairwise_crossings(&lines));
    let mut beta = golden_beta(omegas, logs, start - span, start + span);
    let mut window: Vec<usize> = (0..omegas.len()).collect();
    let mut half = 0.5 * span;
    loop {
        half *= 0.5;
        let next: Vec<usize> = (0..omegas.len()).filter(|&i| (omegas[i] - beta).abs() <= half).collect();
        if next.len() < MIN_WINDOW_POINTS {
            break;
        }
        let w: Vec<f64> = next.iter().map(|&i| omegas[i]).collect();
        let y: Vec<Vec<f64>> = logs.iter().map(|row| next.iter().map(|&i| row[i]).collect()).collect();
        beta = golden_beta(&w, &y, beta - 2.0 * half, beta + 2.0 * half);
        window = next;
    }
    if !(w_min..=w_max).contains(&beta) {
        return Err(Error::CrossingOutsideWindow { beta, min: w_min, max: w_max });
    }
    let w: Vec<f64> = window.iter().map(|&i| omegas[i]).collect();
    let y: Vec<Vec<f64>> = logs.iter().map(|row| window.iter().map(|&i| row[i]).collect()).collect();
    let p = project(&w, &y, beta);
    let points = w.len() * y.len();
    let local_lines: Vec<(f64, f64)> = y.iter().map(|row| line_fit(&w, row)).collect();
    Ok(CriticalFit {
        beta,
        alpha: p.alpha,
        slopes: p.x,
        residual: (p.sse / points as f64).sqrt(),
        crossings: pairwise_crossings(&local_lines),
        window: (w[0], w[w.len() - 1]),
        points,
    })
}

/// Critical frequency from `log|chi_{j,l}|` at the probe sites over `omegas`.
pub fn critical_point(model: &ModelSpec, omegas: &[f64], l: usize, probes: &[usize]) -> Result<CriticalFit> {
    for &j in probes {
        check_site(model, j)?;
    }
    if omegas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("frequency grid must be strictly ascending".into()));
    }
    let map = susceptibility_map(model, omegas, l)?;
    let logs: Vec<Vec<f64>> = probes.iter().map(|&j| map.values[j].iter().map(|v| v.abs().ln()).collect()).collect();
    fit_crossing(omegas, &logs)
}
