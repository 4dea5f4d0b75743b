//! Quadratic open-lattice models.
//!
//! A model is the triple of single-particle matrices entering a gain/loss
//! master equation: the Hamiltonian `H`, the decay matrix `gamma_decay` and the
//! pump (gain) matrix `gamma_pump`, together with the particle statistics.
//!
//! # Bloch convention
//!
//! For translation-invariant chains the coefficient stored at integer offset
//! `d` multiplies `e^{i d k}`, and equals the real-space element
//! `M[j][j + d]`. Plane waves are `psi_j = e^{i k j}`, so a periodic matrix acts
//! on them as multiplication by `sum_d c_d e^{i d k}`. Every winding sign in the
//! crate inherits this choice.
//!
//! # Hatano-Nelson chain
//!
//! The coherent hopping places `t_c e^{i phi}` on the subdiagonal
//! (`H[j+1][j]`) and its conjugate on the superdiagonal. In Bloch form this is
//! `H(k) = omega0 + 2 t_c cos(k - phi)`. With `phi = pi/2` and `t_c = t_d` the
//! bosonic retarded matrix is lower triangular and excitations are amplified
//! from site 1 toward site N.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix};

/// Tolerance on Hermiticity residuals and on negative eigenvalues of the rates.
pub const VALIDATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Bosonic,
    Fermionic,
}

impl Statistics {
    /// Sign multiplying the pump inside `H_R`: `+1` for bosons, `-1` for fermions.
    pub fn pump_sign(self) -> f64 {
        match self {
            Statistics::Bosonic => 1.0,
            Statistics::Fermionic => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Open,
}

/// Real-space definition of an open lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    hamiltonian: CMatrix,
    gamma_decay: CMatrix,
    gamma_pump: CMatrix,
    statistics: Statistics,
    boundary: Boundary,
}

impl ModelSpec {
    /// Checks shapes only; physical validity is reported by [`validate`].
    pub fn new(
        hamiltonian: CMatrix,
        gamma_decay: CMatrix,
        gamma_pump: CMatrix,
        statistics: Statistics,
        boundary: Boundary,
    ) -> Result<Self> {
        let n = hamiltonian.nrows();
        if n == 0 {
            return Err(Error::InvalidModel("model has no sites".into()));
        }
        for (name, m) in [("hamiltonian", &hamiltonian), ("gamma_decay", &gamma_decay), ("gamma_pump", &gamma_pump)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidModel(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidModel(format!("{name} has non-finite entries")));
            }
        }
        Ok(Self { hamiltonian, gamma_decay, gamma_pump, statistics, boundary })
    }

    pub fn n_sites(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn gamma_decay(&self) -> &CMatrix {
        &self.gamma_decay
    }

    pub fn gamma_pump(&self) -> &CMatrix {
        &self.gamma_pump
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Same matrices, other particle statistics.
    pub fn with_statistics(&self, statistics: Statistics) -> Self {
        Self { statistics, ..self.clone() }
    }

    /// Adds a local frequency shift `shift` to site `site` (0-based).
    pub fn with_onsite_shift(&self, site: usize, shift: f64) -> Self {
        let mut out = self.clone();
        out.hamiltonian[(site, site)] += c(shift);
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidModel(format!("model JSON: {e}")))?;
        file.into_model()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from_model(self)).expect("model serializes")
    }
}

/// On-disk JSON layout of a generic model; complex numbers are `[re, im]`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    statistics: Statistics,
    #[serde(default = "default_boundary")]
    boundary: Boundary,
    hamiltonian: Vec<Vec<[f64; 2]>>,
    gamma_decay: Vec<Vec<[f64; 2]>>,
    gamma_pump: Vec<Vec<[f64; 2]>>,
}

fn default_boundary() -> Boundary {
    Boundary::Open
}

fn rows_to_matrix(name: &str, rows: &[Vec<[f64; 2]>]) -> Result<CMatrix> {
    let n = rows.len();
    if let Some(bad) = rows.iter().position(|r| r.len() != n) {
        return Err(Error::InvalidModel(format!("{name}: row {bad} has {} entries, expected {n}", rows[bad].len())));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])))
}

fn matrix_to_rows(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    m.row_iter().map(|r| r.iter().map(|z| [z.re, z.im]).collect()).collect()
}

impl ModelFile {
    fn into_model(self) -> Result<ModelSpec> {
        ModelSpec::new(
            rows_to_matrix("hamiltonian", &self.hamiltonian)?,
            rows_to_matrix("gamma_decay", &self.gamma_decay)?,
            rows_to_matrix("gamma_pump", &self.gamma_pump)?,
            self.statistics,
            self.boundary,
        )
    }

    fn from_model(m: &ModelSpec) -> Self {
        Self {
            statistics: m.statistics,
            boundary: m.boundary,
            hamiltonian: matrix_to_rows(&m.hamiltonian),
            gamma_decay: matrix_to_rows(&m.gamma_decay),
            gamma_pump: matrix_to_rows(&m.gamma_pump),
        }
    }
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub hamiltonian_residual: f64,
    pub decay_residual: f64,
    pub pump_residual: f64,
    pub decay_min_eigenvalue: f64,
    pub pump_min_eigenvalue: f64,
    pub passed: bool,
}

/// Hermiticity of all three matrices and positivity of the two rate matrices.
pub fn validate(model: &ModelSpec) -> ValidationReport {
    let hamiltonian_residual = linalg::hermiticity_residual(&model.hamiltonian);
    let decay_residual = linalg::hermiticity_residual(&model.gamma_decay);
    let pump_residual = linalg::hermiticity_residual(&model.gamma_pump);
    let min_eig = |m: &CMatrix| linalg::hermitian_eigenvalues(m).first().cloned().unwrap_or(0.0);
    let decay_min_eigenvalue = min_eig(&model.gamma_decay);
    let pump_min_eigenvalue = min_eig(&model.gamma_pump);
    let passed = hamiltonian_residual < VALIDATION_TOL
        && decay_residual < VALIDATION_TOL
        && pump_residual < VALIDATION_TOL
        && decay_min_eigenvalue >= -VALIDATION_TOL
        && pump_min_eigenvalue >= -VALIDATION_TOL;
    ValidationReport {
        hamiltonian_residual,
        decay_residual,
        pump_residual,
        decay_min_eigenvalue,
        pump_min_eigenvalue,
        passed,
    }
}

/// `e^{i phi}` with `phi` reduced mod 2pi; exact at quarter turns so that
/// `cos(pi/2)` does not leave a `6e-17` residue in otherwise vanishing hoppings.
pub fn unit_phase(phi: f64) -> Complex64 {
    let reduced = phi.rem_euclid(2.0 * PI);
    let quarters = reduced / (PI / 2.0);
    let nearest = quarters.round();
    if (quarters - nearest).abs() < 1e-12 {
        return match (nearest as i64).rem_euclid(4) {
            0 => c(1.0),
            1 => Complex64::new(0.0, 1.0),
            2 => c(-1.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    Complex64::from_polar(1.0, reduced)
}

/// Parameters of the Hatano-Nelson chain with engineered non-local gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HatanoNelsonParams {
    pub omega0: f64,
    pub t_c: f64,
    pub phi: f64,
    pub kappa: f64,
    pub t_d: f64,
    pub n_sites: usize,
    pub statistics: Statistics,
    pub boundary: Boundary,
}

impl HatanoNelsonParams {
    /// Desk-scale defaults used throughout the figures: `t_c = t_d = 1`, `phi = pi/2`.
    pub fn figure(kappa: f64, n_sites: usize, statistics: Statistics, boundary: Boundary) -> Self {
        Self { omega0: 0.0, t_c: 1.0, phi: PI / 2.0, kappa, t_d: 1.0, n_sites, statistics, boundary }
    }

    pub fn check(&self) -> Result<()> {
        let finite = [self.omega0, self.t_c, self.phi, self.kappa, self.t_d].iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("parameters must be finite".into()));
        }
        if self.n_sites < 2 {
            return Err(Error::InvalidParameter(format!("n_sites = {} < 2", self.n_sites)));
        }
        if self.t_c <= 0.0 {
            return Err(Error::InvalidParameter(format!("t_c = {} must be positive", self.t_c)));
        }
        if self.kappa < 0.0 {
            return Err(Error::InvalidParameter(format!("kappa = {} is negative", self.kappa)));
        }
        if self.t_d < 0.0 {
            return Err(Error::InvalidParameter(format!("t_d = {} is negative", self.t_d)));
        }
        Ok(())
    }
}

pub fn build_hatano_nelson(params: &HatanoNelsonParams) -> Result<ModelSpec> {
    params.check()?;
    let n = params.n_sites;
    let hop = unit_phase(params.phi) * params.t_c;
    let mut h = CMatrix::zeros(n, n);
    let mut pump = CMatrix::zeros(n, n);
    for j in 0..n {
        h[(j, j)] = c(params.omega0);
        pump[(j, j)] = c(4.0 * params.t_d);
    }
    let bonds = match params.boundary {
        Boundary::Open => n - 1,
        Boundary::Periodic => n,
    };
    for j in 0..bonds {
        let next = (j + 1) % n;
        h[(next, j)] += hop;
        h[(j, next)] += hop.conj();
        pump[(next, j)] += c(2.0 * params.t_d);
        pump[(j, next)] += c(2.0 * params.t_d);
    }
    let decay = CMatrix::identity(n, n) * c(params.kappa);
    ModelSpec::new(h, decay, pump, params.statistics, params.boundary)
}

/// Scalar Bloch form of a single-band chain; see the module docs for the
/// offset convention.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochModel {
    hopping: BTreeMap<i32, Complex64>,
    decay: BTreeMap<i32, Complex64>,
    pump: BTreeMap<i32, Complex64>,
    statistics: Statistics,
}

fn eval_laurent(coeffs: &BTreeMap<i32, Complex64>, k: f64) -> Complex64 {
    coeffs.iter().map(|(&d, &v)| v * Complex64::from_polar(1.0, d as f64 * k)).sum()
}

const BLOCH_CHECK_POINTS: usize = 1024;

impl BlochModel {
    /// Rejects coefficient maps that are not Hermitian in k-space, and rate
    /// functions that go negative on a uniform check grid.
    pub fn new(
        hopping: BTreeMap<i32, Complex64>,
        decay: BTreeMap<i32, Complex64>,
        pump: BTreeMap<i32, Complex64>,
        statistics: Statistics,
    ) -> Result<Self> {
        for (name, map) in [("hopping", &hopping), ("decay", &decay), ("pump", &pump)] {
            for (&d, &v) in map {
                let partner = map.get(&-d).cloned().unwrap_or_default();
                if (v - partner.conj()).norm() > VALIDATION_TOL {
                    return Err(Error::InvalidModel(format!(
                        "{name} coefficients not Hermitian: c({d}) = {v}, c({}) = {partner}",
                        -d
                    )));
                }
            }
        }
        let model = Self { hopping, decay, pump, statistics };
        for m in 0..BLOCH_CHECK_POINTS {
            let k = -PI + 2.0 * PI * m as f64 / BLOCH_CHECK_POINTS as f64;
            if model.pump_at(k) < -VALIDATION_TOL || model.decay_at(k) < -VALIDATION_TOL {
                return Err(Error::InvalidModel(format!("negative rate at k = {k}")));
            }
        }
        Ok(model)
    }

    pub fn hopping_coeffs(&self) -> &BTreeMap<i32, Complex64> {
        &self.hopping
    }

    pub fn decay_coeffs(&self) -> &BTreeMap<i32, Complex64> {
        &self.decay
    }

    pub fn pump_coeffs(&self) -> &BTreeMap<i32, Complex64> {
        &self.pump
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn with_statistics(&self, statistics: Statistics) -> Self {
        Self { statistics, ..self.clone() }
    }

    pub fn hamiltonian_at(&self, k: f64) -> f64 {
        eval_laurent(&self.hopping, k).re
    }

    pub fn decay_at(&self, k: f64) -> f64 {
        eval_laurent(&self.decay, k).re
    }

    pub fn pump_at(&self, k: f64) -> f64 {
        eval_laurent(&self.pump, k).re
    }

    /// Laurent coefficients of `H_R(k)`.
    pub fn retarded_coeffs(&self) -> BTreeMap<i32, Complex64> {
        let sign = self.statistics.pump_sign();
        let mut out: BTreeMap<i32, Complex64> = BTreeMap::new();
        for (&d, &v) in &self.hopping {
            *out.entry(d).or_default() += v;
        }
        for (&d, &v) in &self.decay {
            *out.entry(d).or_default() -= linalg::I * v * 0.5;
        }
        for (&d, &v) in &self.pump {
            *out.entry(d).or_default() += linalg::I * v * (0.5 * sign);
        }
        out
    }

    /// Scalar `H_R(k)`.
    pub fn retarded_at(&self, k: f64) -> Complex64 {
        let sign = self.statistics.pump_sign();
        c(self.hamiltonian_at(k)) - linalg::I * ((self.decay_at(k) - sign * self.pump_at(k)) * 0.5)
    }

    /// Periodic real-space chain of `n_sites` sites with the same coefficients.
    pub fn to_real_space(&self, n_sites: usize) -> Result<ModelSpec> {
        let build = |map: &BTreeMap<i32, Complex64>| {
            let mut m = CMatrix::zeros(n_sites, n_sites);
            for j in 0..n_sites {
                for (&d, &v) in map {
                    let col = (j as i64 + d as i64).rem_euclid(n_sites as i64) as usize;
                    m[(j, col)] += v;
                }
            }
            m
        };
        ModelSpec::new(build(&self.hopping), build(&self.decay), build(&self.pump), self.statistics, Boundary::Periodic)
    }
}

/// Bloch form of the Hatano-Nelson chain (the `boundary` field is ignored).
pub fn hatano_nelson_bloch(params: &HatanoNelsonParams) -> Result<BlochModel> {
    params.check()?;
    let hop = unit_phase(params.phi) * params.t_c;
    let hopping = BTreeMap::from([(-1, hop), (0, c(params.omega0)), (1, hop.conj())]);
    let decay = BTreeMap::from([(0, c(params.kappa))]);
    let pump = BTreeMap::from([(-1, c(2.0 * params.t_d)), (0, c(4.0 * params.t_d)), (1, c(2.0 * params.t_d))]);
    BlochModel::new(hopping, decay, pump, params.statistics)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kappa: f64, t_d: f64, n: usize, boundary: Boundary) -> HatanoNelsonParams {
        HatanoNelsonParams {
            omega0: 0.0,
            t_c: 1.0,
            phi: 0.0,
            kappa,
            t_d,
            n_sites: n,
            statistics: Statistics::Bosonic,
            boundary,
        }
    }

    #[test]
    fn three_site_open_pump_and_decay() {
        let m = build_hatano_nelson(&params(2.0, 1.0, 3, Boundary::Open)).unwrap();
        let expected = [[4.0, 2.0, 0.0], [2.0, 4.0, 2.0], [0.0, 2.0, 4.0]];
        for (i, row) in expected.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                assert_eq!(m.gamma_pump()[(i, j)], c(p));
                let d = if i == j { 2.0 } else { 0.0 };
                assert_eq!(m.gamma_decay()[(i, j)], c(d));
            }
        }
    }

    #[test]
    fn no_dissipative_hopping_means_no_gain() {
        let m = build_hatano_nelson(&params(2.0, 0.0, 5, Boundary::Periodic)).unwrap();
        assert!(m.gamma_pump().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn local_pump_is_twice_the_nonlocal_one() {
        for t_d in [0.3, 1.0, 2.5] {
            let m = build_hatano_nelson(&params(1.0, t_d, 7, Boundary::Open)).unwrap();
            let g = m.gamma_pump();
            for j in 1..6 {
                assert_eq!(g[(j, j)], g[(j, j + 1)] * 2.0);
                assert_eq!(g[(j, j)], g[(j, j - 1)] * 2.0);
            }
        }
    }

    #[test]
    fn periodic_wraps_corners_open_does_not() {
        let mut p = params(1.0, 1.0, 4, Boundary::Periodic);
        p.phi = 0.3;
        let pbc = build_hatano_nelson(&p).unwrap();
        assert_eq!(pbc.hamiltonian()[(0, 3)], unit_phase(0.3));
        assert_eq!(pbc.gamma_pump()[(3, 0)], c(2.0));
        p.boundary = Boundary::Open;
        let obc = build_hatano_nelson(&p).unwrap();
        assert_eq!(obc.hamiltonian()[(0, 3)], c(0.0));
        assert_eq!(obc.hamiltonian()[(1, 0)], unit_phase(0.3));
        assert_eq!(obc.hamiltonian()[(0, 1)], unit_phase(0.3).conj());
    }

    #[test]
    fn constructor_rejects_bad_params() {
        assert!(build_hatano_nelson(&params(1.0, 1.0, 1, Boundary::Open)).is_err());
        assert!(build_hatano_nelson(&params(-1.0, 1.0, 4, Boundary::Open)).is_err());
        assert!(build_hatano_nelson(&params(1.0, -0.1, 4, Boundary::Open)).is_err());
        assert!(hatano_nelson_bloch(&params(1.0, -0.1, 4, Boundary::Open)).is_err());
    }

    #[test]
    fn bloch_examples() {
        let b = hatano_nelson_bloch(&params(1.0, 1.0, 4, Boundary::Periodic)).unwrap();
        assert!((b.hamiltonian_at(0.0) - 2.0).abs() < 1e-15);
        assert!(b.pump_at(PI).abs() < 1e-14);
        assert!((b.pump_at(0.0) - 8.0).abs() < 1e-14);
    }

    #[test]
    fn bloch_hamiltonian_is_cos_k_minus_phi() {
        let mut p = params(1.0, 1.0, 4, Boundary::Periodic);
        p.phi = 0.7;
        p.omega0 = -0.4;
        let b = hatano_nelson_bloch(&p).unwrap();
        for k in [-3.0, -1.0, 0.2, 2.9] {
            let expected = -0.4 + 2.0 * (k - 0.7f64).cos();
            assert!((b.hamiltonian_at(k) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn non_hermitian_bloch_coeffs_rejected() {
        let hopping = BTreeMap::from([(1, c(1.0)), (-1, c(2.0))]);
        let err = BlochModel::new(hopping, BTreeMap::new(), BTreeMap::new(), Statistics::Bosonic);
        assert!(err.is_err());
    }

    #[test]
    fn validate_examples() {
        let good = build_hatano_nelson(&params(3.0, 1.0, 5, Boundary::Open)).unwrap();
        assert!(validate(&good).passed);

        let zero = CMatrix::zeros(2, 2);
        let bad_pump = CMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(2.0), c(1.0)]);
        let m = ModelSpec::new(zero.clone(), zero.clone(), bad_pump, Statistics::Bosonic, Boundary::Open).unwrap();
        let report = validate(&m);
        assert!(!report.passed);
        assert!((report.pump_min_eigenvalue + 1.0).abs() < 1e-12);

        let mut h = zero.clone();
        h[(0, 1)] = c(1.0);
        h[(1, 0)] = Complex64::new(1.0, 0.5);
        let m = ModelSpec::new(h, zero.clone(), zero, Statistics::Bosonic, Boundary::Open).unwrap();
        assert!(!validate(&m).passed);
    }

    #[test]
    fn unit_phase_is_exact_at_quarter_turns() {
        assert_eq!(unit_phase(PI / 2.0), Complex64::new(0.0, 1.0));
        assert_eq!(unit_phase(-PI / 2.0), Complex64::new(0.0, -1.0));
        assert_eq!(unit_phase(5.0 * PI / 2.0), Complex64::new(0.0, 1.0));
        assert_eq!(unit_phase(PI), c(-1.0));
        let z = unit_phase(0.3);
        assert!((z - Complex64::from_polar(1.0, 0.3)).norm() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let m = build_hatano_nelson(&params(3.0, 1.0, 3, Boundary::Open)).unwrap();
        let back = ModelSpec::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert!(ModelSpec::from_json(r#"{"statistics":"bosonic","hamiltonian":[[[0,0]]],"gamma_decay":[],"gamma_pump":[[[0,0]]]}"#).is_err());
    }
}
