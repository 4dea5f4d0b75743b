//! Frequency-resolved winding number `W1(omega)` of `omega - H_R(k)`.
//!
//! Orientation: `W1` is minus the number of counter-clockwise turns the curve
//! `omega - H_R(k)` makes around the origin as `k` runs from `-pi` to `pi`.
//! With this sign the bosonic Hatano-Nelson chain at `t_c = t_d`, `phi = pi/2`
//! reports `W1 = +1` inside its topological window. Loop windings about a probe
//! `E` use the same orientation, so the loop winding about `E = omega` equals
//! `W1(omega)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::keldysh;
use crate::linalg::{self, c, CMatrix};
use crate::model::{hatano_nelson_bloch, BlochModel, HatanoNelsonParams, Statistics};

/// Gap (and `||z| - 1|` for roots) below which the winding is undefined.
pub const CRITICAL_TOL: f64 = 1e-8;
pub const DEFAULT_NK: usize = 1024;
pub const MIN_NK: usize = 64;

/// Sign applied to the counter-clockwise turn count.
const ORIENTATION: i64 = -1;

const MAX_BISECTIONS: u32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindingResult {
    pub w1: i64,
    pub gap: f64,
    /// Grid size that passed the doubling check.
    pub n_k: usize,
}

fn grid_point(n: usize, m: usize) -> f64 {
    -PI + 2.0 * PI * m as f64 / n as f64
}

/// Phase change of `f` from `k0` to `k1`, bisecting until each chord is short
/// compared with its distance from the origin.
fn phase_increment(f: &impl Fn(f64) -> Complex64, k0: f64, f0: Complex64, k1: f64, f1: Complex64, depth: u32) -> Option<f64> {
    let reach = f0.norm().min(f1.norm());
    if (f1 - f0).norm() < 0.5 * reach {
        return Some((f1 * f0.conj()).arg());
    }
    if depth == MAX_BISECTIONS || reach == 0.0 {
        return None;
    }
    let km = 0.5 * (k0 + k1);
    let fm = f(km);
    Some(phase_increment(f, k0, f0, km, fm, depth + 1)? + phase_increment(f, km, fm, k1, f1, depth + 1)?)
}

/// Counter-clockwise turns of the periodic curve `f` sampled on `n` points.
fn turns(f: &impl Fn(f64) -> Complex64, n: usize) -> Option<i64> {
    let values: Vec<Complex64> = (0..n).map(|m| f(grid_point(n, m))).collect();
    let mut total = 0.0;
    for m in 0..n {
        let (k0, k1) = (grid_point(n, m), grid_point(n, m) + 2.0 * PI / n as f64);
        total += phase_increment(f, k0, values[m], k1, values[(m + 1) % n], 0)?;
    }
    Some((total / (2.0 * PI)).round() as i64)
}

/// `min_k |f(k)|`, refined by golden-section search around the best grid point.
fn min_modulus(f: &impl Fn(f64) -> Complex64, n: usize) -> f64 {
    let (best, best_val) = (0..n)
        .map(|m| (m, f(grid_point(n, m)).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid");
    let h = 2.0 * PI / n as f64;
    let centre = grid_point(n, best);
    let (mut a, mut b) = (centre - h, centre + h);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (f(x1).norm(), f(x2).norm());
    for _ in 0..80 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = f(x1).norm();
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = f(x2).norm();
        }
    }
    best_val.min(f1).min(f2)
}

fn check_scalar_grid(n_k: usize) -> Result<()> {
    if n_k < MIN_NK {
        return Err(Error::InvalidParameter(format!("n_k = {n_k} < {MIN_NK}")));
    }
    Ok(())
}

fn wind(f: impl Fn(f64) -> Complex64, omega: f64, n_k: usize) -> Result<WindingResult> {
    check_scalar_grid(n_k)?;
    let gap = min_modulus(&f, n_k);
    if gap < CRITICAL_TOL {
        return Err(Error::CriticalPoint { omega, gap });
    }
    let critical = || Error::CriticalPoint { omega, gap };
    let coarse = turns(&f, n_k).ok_or_else(critical)?;
    let fine = turns(&f, 2 * n_k).ok_or_else(critical)?;
    if coarse != fine {
        return Err(Error::NotConverged(format!("winding changed from {coarse} to {fine} on grid doubling")));
    }
    Ok(WindingResult { w1: ORIENTATION * fine, gap, n_k: 2 * n_k })
}

/// `W1(omega)` by phase accumulation over the Brillouin zone.
pub fn winding_numerical(bloch: &BlochModel, omega: f64, n_k: usize) -> Result<WindingResult> {
    wind(|k| keldysh::bloch_detuning(bloch, omega, k), omega, n_k)
}

/// `W1(omega)` by counting the roots of the Laurent polynomial
/// `omega - sum_d a_d z^d` inside the unit circle.
///
/// Writing the polynomial as `z^lo q(z)` with `q(0) != 0`, the curve turns
/// `lo + #{roots of q inside}` times counter-clockwise.
pub fn winding_laurent(retarded: &BTreeMap<i32, Complex64>, omega: f64) -> Result<i64> {
    let mut coeffs = BTreeMap::new();
    for (&d, &a) in retarded {
        coeffs.insert(d, -a);
    }
    *coeffs.entry(0).or_insert(c(0.0)) += c(omega);
    let scale = coeffs.values().fold(0.0f64, |m, z| m.max(z.norm()));
    let kept: Vec<(i32, Complex64)> = coeffs.into_iter().filter(|(_, z)| z.norm() > 1e-14 * scale).collect();
    let (Some(&(lo, _)), Some(&(hi, lead))) = (kept.first(), kept.last()) else {
        return Err(Error::CriticalPoint { omega, gap: 0.0 });
    };
    let degree = (hi - lo) as usize;
    let roots = if degree == 0 {
        Vec::new()
    } else {
        let dense: BTreeMap<i32, Complex64> = kept.iter().cloned().collect();
        let coeff = |p: usize| dense.get(&(lo + p as i32)).copied().unwrap_or(c(0.0));
        // Companion matrix of the monic q(z) / lead.
        let mut companion = CMatrix::zeros(degree, degree);
        for i in 1..degree {
            companion[(i, i - 1)] = c(1.0);
        }
        for i in 0..degree {
            companion[(i, degree - 1)] = -coeff(i) / lead;
        }
        linalg::eigenvalues(&companion)?
    };
    if let Some(z) = roots.iter().find(|z| (z.norm() - 1.0).abs() < CRITICAL_TOL) {
        return Err(Error::CriticalPoint { omega, gap: (z.norm() - 1.0).abs() });
    }
    let inside = roots.iter().filter(|z| z.norm() < 1.0).count() as i64;
    Ok(ORIENTATION * (lo as i64 + inside))
}

/// Root-counting winding of the Hatano-Nelson chain.
pub fn winding_analytic(params: &HatanoNelsonParams, omega: f64) -> Result<i64> {
    winding_laurent(&hatano_nelson_bloch(params)?.retarded_coeffs(), omega)
}

/// Half-width of the topological window around `omega0` for the bosonic chain
/// at `phi = pi/2`, where `H_R(k)` traces an ellipse with semi-axes `2 t_c`
/// and `2 t_d`. `None` when the window is empty or the formula does not apply.
pub fn critical_frequency(params: &HatanoNelsonParams) -> Option<f64> {
    let quarter = (crate::model::unit_phase(params.phi) - linalg::I).norm() < 1e-15;
    if params.statistics != Statistics::Bosonic || !quarter || params.t_d <= 0.0 {
        return None;
    }
    let offset = (params.kappa / 2.0 - 2.0 * params.t_d) / (2.0 * params.t_d);
    (offset.abs() < 1.0).then(|| 2.0 * params.t_c * (1.0 - offset * offset).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeWinding {
    pub probe: Complex64,
    /// `None` when the probe lies on the loop.
    pub winding: Option<i64>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointGapLoop {
    /// `n_k + 1` points from `-pi` to `pi`; the last repeats the first.
    pub k_grid: Vec<f64>,
    pub loci: Vec<Complex64>,
    pub winding_about: Vec<ProbeWinding>,
}

/// The eigenvalue loop `H_R(k)` and its winding about each probe.
pub fn point_gap_loop(bloch: &BlochModel, n_k: usize, probes: &[Complex64]) -> Result<PointGapLoop> {
    check_scalar_grid(n_k)?;
    if let Some(p) = probes.iter().find(|p| !(p.re.is_finite() && p.im.is_finite())) {
        return Err(Error::InvalidParameter(format!("probe {p} is not finite")));
    }
    let k_grid: Vec<f64> = (0..=n_k).map(|m| grid_point(n_k, m)).collect();
    let loci = k_grid.iter().map(|&k| bloch.retarded_at(k)).collect();
    let winding_about = probes
        .iter()
        .map(|&probe| {
            let f = |k: f64| bloch.retarded_at(k) - probe;
            match wind(f, probe.re, n_k) {
                Ok(r) => ProbeWinding { probe, winding: Some(r.w1), distance: r.gap },
                Err(Error::CriticalPoint { gap, .. }) => ProbeWinding { probe, winding: None, distance: gap },
                Err(e) => panic!("unexpected winding failure: {e}"),
            }
        })
        .collect();
    Ok(PointGapLoop { k_grid, loci, winding_about })
}

/// One frequency of a winding scan; `w1` is `None` at critical points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindingCell {
    pub omega: f64,
    pub w1: Option<i64>,
    pub gap: f64,
}

impl WindingCell {
    fn evaluate(bloch: &BlochModel, omega: f64, n_k: usize) -> Result<Self> {
        match winding_numerical(bloch, omega, n_k) {
            Ok(r) => Ok(Self { omega, w1: Some(r.w1), gap: r.gap }),
            Err(Error::CriticalPoint { gap, .. }) => Ok(Self { omega, w1: None, gap }),
            Err(e) => Err(e),
        }
    }

    pub fn is_critical(&self) -> bool {
        self.w1.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindingCurve {
    pub cells: Vec<WindingCell>,
}

pub fn winding_curve(bloch: &BlochModel, omegas: &[f64], n_k: usize) -> Result<WindingCurve> {
    check_scalar_grid(n_k)?;
    let cells = omegas.par_iter().map(|&w| WindingCell::evaluate(bloch, w, n_k)).collect::<Result<_>>()?;
    Ok(WindingCurve { cells })
}

/// `W1` over an `(omega, kappa)` grid; `rows[i]` belongs to `kappas[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseDiagram {
    pub omegas: Vec<f64>,
    pub kappas: Vec<f64>,
    pub rows: Vec<Vec<WindingCell>>,
}

pub fn phase_diagram(base: &HatanoNelsonParams, omegas: &[f64], kappas: &[f64], n_k: usize) -> Result<PhaseDiagram> {
    if omegas.is_empty() || kappas.is_empty() {
        return Err(Error::InvalidParameter("phase diagram grids must be non-empty".into()));
    }
    check_scalar_grid(n_k)?;
    let blochs = kappas
        .iter()
        .map(|&kappa| hatano_nelson_bloch(&HatanoNelsonParams { kappa, ..*base }))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<WindingCell> = blochs
        .par_iter()
        .flat_map_iter(|b| omegas.iter().map(move |&w| (b, w)))
        .map(|(b, w)| WindingCell::evaluate(b, w, n_k))
        .collect::<Result<_>>()?;
    let rows = cells.chunks(omegas.len()).map(|r| r.to_vec()).collect();
    Ok(PhaseDiagram { omegas: omegas.to_vec(), kappas: kappas.to_vec(), rows })
}
