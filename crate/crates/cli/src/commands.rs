//! The five subcommands. Each turns a [`RunConfig`] into a [`Document`];
//! grid work is parallel with ordered collection so output order never
//! depends on scheduling.

use anyhow::Result;
use clap::ValueEnum;
use rayon::prelude::*;
use serde_json::json;

use nhtopo_core::doubled::{self, EdgeOptions, ZeroModeThreshold};
use nhtopo_core::keldysh::{self, blocks_real_space, IntegrationOptions};
use nhtopo_core::linalg;
use nhtopo_core::oracle::{self, FockOptions, RegressionOptions};
use nhtopo_core::winding::{self, DEFAULT_NK};
use nhtopo_core::{build_hatano_nelson, response, validate, Boundary, Error, HatanoNelsonParams, ModelSpec, Statistics};

use crate::config::RunConfig;
use crate::output::{Cell, Document, Table, FLAG_OK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Loop,
    Winding,
    Spectrum,
    Susceptibility,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Loop => "loop",
            Command::Winding => "winding",
            Command::Spectrum => "spectrum",
            Command::Susceptibility => "susceptibility",
            Command::Validate => "validate",
        }
    }
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<Document> {
    let mut doc = match command {
        Command::Loop => cmd_loop(cfg),
        Command::Winding => cmd_winding(cfg),
        Command::Spectrum => cmd_spectrum(cfg),
        Command::Susceptibility => cmd_susceptibility(cfg),
        Command::Validate => cmd_validate(cfg),
    }?;
    doc.set_meta("tool", json!(concat!("nhtopo ", env!("CARGO_PKG_VERSION"))));
    doc.set_meta("command", json!(command.name()));
    doc.set_meta("config", cfg.echo());
    Ok(doc)
}

fn flag(ok: bool, bad: &str) -> Cell {
    Cell::text(if ok { FLAG_OK } else { bad })
}

fn with_boundary(p: &HatanoNelsonParams, boundary: Boundary) -> HatanoNelsonParams {
    HatanoNelsonParams { boundary, ..*p }
}

/// PBC loop of `H_R(k)`, OBC eigenvalues of the finite chain, and windings
/// of the loop about each probe.
pub fn cmd_loop(cfg: &RunConfig) -> Result<Document> {
    let params = cfg.params()?;
    let bloch = cfg.bloch()?;
    let n_k = cfg.raw.k_steps.unwrap_or(512);
    let lp = winding::point_gap_loop(&bloch, n_k, &cfg.probes())?;

    let mut pbc = Table::new("pbc_loop", &["k", "re", "im"]);
    for (k, z) in lp.k_grid.iter().zip(&lp.loci) {
        pbc.push(vec![Cell::float(*k), Cell::float(z.re), Cell::float(z.im)]);
    }

    let open = build_hatano_nelson(&with_boundary(&params, Boundary::Open))?;
    let mut eig = linalg::eigenvalues(&blocks_real_space(&open).h_r)?;
    eig.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut obc = Table::new("obc_eigenvalues", &["index", "re", "im"]);
    for (i, z) in eig.iter().enumerate() {
        obc.push(vec![Cell::Int(i as i64 + 1), Cell::float(z.re), Cell::float(z.im)]);
    }

    let mut windings = Table::new("windings", &["probe_re", "probe_im", "winding", "distance", "flag"]);
    for w in &lp.winding_about {
        windings.push(vec![
            Cell::float(w.probe.re),
            Cell::float(w.probe.im),
            w.winding.map_or(Cell::Empty, Cell::Int),
            Cell::float(w.distance),
            flag(w.winding.is_some(), "on_loop"),
        ]);
    }
    Ok(Document { tables: vec![pbc, obc, windings], ..Default::default() })
}

/// `W1(omega)` per `kappa`, with the analytic root count alongside the
/// numerical winding.
pub fn cmd_winding(cfg: &RunConfig) -> Result<Document> {
    let params = cfg.params()?;
    let omegas = cfg.omega_grid((-4.0, 4.0, 161));
    let kappas = cfg.raw.kappas.clone().unwrap_or_else(|| vec![params.kappa]);
    let n_k = cfg.raw.k_steps.unwrap_or(DEFAULT_NK);
    let diagram = winding::phase_diagram(&params, &omegas, &kappas, n_k)?;

    let mut table = Table::new("winding", &["kappa", "omega", "w1", "w1_analytic", "gap", "flag"]);
    for (kappa, row) in diagram.kappas.iter().zip(&diagram.rows) {
        let p = HatanoNelsonParams { kappa: *kappa, ..params };
        let analytic: Vec<Option<i64>> = row.par_iter().map(|c| winding::winding_analytic(&p, c.omega).ok()).collect();
        for (cell, exact) in row.iter().zip(analytic) {
            let status = match (cell.w1, exact) {
                (None, _) => "critical",
                (Some(a), Some(b)) if a != b => "mismatch",
                _ => FLAG_OK,
            };
            table.push(vec![
                Cell::float(*kappa),
                Cell::float(cell.omega),
                cell.w1.map_or(Cell::Empty, Cell::Int),
                exact.map_or(Cell::Empty, Cell::Int),
                Cell::float(cell.gap),
                Cell::text(status),
            ]);
        }
    }
    Ok(Document { tables: vec![table], ..Default::default() })
}

/// Doubled-Hamiltonian bands against `omega` for periodic and open chains,
/// open-chain zero modes, and the Bloch bands against `k` at a fixed `omega`.
pub fn cmd_spectrum(cfg: &RunConfig) -> Result<Document> {
    let params = cfg.params()?;
    let bloch = cfg.bloch()?;
    let omegas = cfg.omega_grid((-4.0, 4.0, 161));
    let periodic = build_hatano_nelson(&with_boundary(&params, Boundary::Periodic))?;
    let open = build_hatano_nelson(&with_boundary(&params, Boundary::Open))?;

    let mut bands = Table::new("bands_vs_omega", &["omega", "boundary", "index", "epsilon"]);
    let flows = [("periodic", doubled::spectral_flow_omega(&periodic, &omegas)), ("open", doubled::spectral_flow_omega(&open, &omegas))];
    for (i, &w) in omegas.iter().enumerate() {
        for (name, flow) in &flows {
            for (idx, e) in flow.bands[i].iter().enumerate() {
                bands.push(vec![Cell::float(w), Cell::text(*name), Cell::Int(idx as i64 + 1), Cell::float(*e)]);
            }
        }
    }

    let opts = EdgeOptions {
        threshold: cfg.raw.threshold.map_or(ZeroModeThreshold::default(), ZeroModeThreshold::Absolute),
        ..EdgeOptions::default()
    };
    let reports = omegas.par_iter().map(|&w| doubled::edge_modes(&open, w, opts)).collect::<nhtopo_core::Result<Vec<_>>>()?;
    let mut zero = Table::new("zero_modes", &["omega", "min_epsilon", "zero_modes", "left_weight", "right_weight"]);
    let open_blocks = blocks_real_space(&open);
    for r in &reports {
        let min_eps = doubled::singular_spectrum(&open_blocks, r.omega).min_epsilon();
        let lowest = r.modes.first();
        zero.push(vec![
            Cell::float(r.omega),
            Cell::float(min_eps),
            Cell::Int(r.count as i64),
            lowest.map_or(Cell::Empty, |m| Cell::float(m.left_weight)),
            lowest.map_or(Cell::Empty, |m| Cell::float(m.right_weight)),
        ]);
    }

    let fixed = cfg.raw.fixed_omega.unwrap_or(cfg.omega0());
    let ks = doubled::uniform_k_grid(cfg.raw.k_steps.unwrap_or(256));
    let flow_k = doubled::spectral_flow_k(&bloch, fixed, &ks);
    let mut vs_k = Table::new("bands_vs_k", &["k", "epsilon_minus", "epsilon_plus"]);
    for (k, row) in flow_k.grid.iter().zip(&flow_k.bands) {
        vs_k.push(vec![Cell::float(*k), Cell::float(row[0]), Cell::float(row[1])]);
    }

    let mut doc = Document { tables: vec![bands, zero, vs_k], ..Default::default() };
    doc.set_meta("fixed_omega", json!(fixed));
    Ok(doc)
}

/// `chi_{j,l}(omega)` on the probe sites and the joint crossing fit.
pub fn cmd_susceptibility(cfg: &RunConfig) -> Result<Document> {
    let model = cfg.model()?;
    let n = model.n_sites();
    let omegas = cfg.omega_grid((0.2, 3.5, 67));
    let source = cfg.raw.source_site.unwrap_or(1);
    let probes: Vec<usize> = cfg.raw.probe_sites.clone().unwrap_or_else(|| (2..=n).step_by(2).collect());
    let columns = response::susceptibility_scan(&model, &omegas, source - 1)?;

    let mut table = Table::new("chi", &["omega", "site", "chi", "log_abs_chi", "flag"]);
    let mut logs = vec![Vec::with_capacity(omegas.len()); probes.len()];
    for (w, col) in omegas.iter().zip(&columns) {
        for (p, &site) in probes.iter().enumerate() {
            let row = match col {
                Ok(chi) => {
                    let v = chi[site - 1];
                    let log = v.abs().ln();
                    logs[p].push(log);
                    vec![Cell::float(*w), Cell::Int(site as i64), Cell::float(v), finite(log), Cell::text(FLAG_OK)]
                }
                Err(Error::SingularAtFrequency { .. }) => {
                    vec![Cell::float(*w), Cell::Int(site as i64), Cell::Empty, Cell::Empty, Cell::text("singular")]
                }
                Err(e) => return Err(e.clone().into()),
            };
            table.push(row);
        }
    }

    let fit = if logs[0].len() < omegas.len() {
        json!({"flag": "singular", "error": "susceptibility is singular somewhere on the grid"})
    } else if probes.len() < 2 {
        json!({"flag": "too_few_probes", "error": "a crossing needs at least two probe sites"})
    } else {
        match response::fit_crossing(&omegas, &logs) {
            Ok(f) => json!({
                "alpha": f.alpha,
                "beta": f.beta,
                "slopes": f.slopes,
                "residual": f.residual,
                "crossings": f.crossings,
                "window": [f.window.0, f.window.1],
                "flag": FLAG_OK,
            }),
            Err(e @ Error::NoCrossing) => json!({"flag": "no_crossing", "error": e.to_string()}),
            Err(e @ Error::CrossingOutsideWindow { .. }) => json!({"flag": "crossing_outside_window", "error": e.to_string()}),
            Err(e) => return Err(e.into()),
        }
    };
    let mut doc = Document { tables: vec![table], ..Default::default() };
    doc.set_meta("fit", fit);
    Ok(doc)
}

fn finite(x: f64) -> Cell {
    if x.is_finite() {
        Cell::float(x)
    } else {
        Cell::Empty
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Pass,
    Fail,
    Skipped,
    Unstable,
    Error,
}

impl Status {
    fn label(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skipped => "skipped",
            Status::Unstable => "unstable",
            Status::Error => "error",
        }
    }
}

struct Check {
    name: &'static str,
    value: Option<f64>,
    tolerance: Option<f64>,
    status: Status,
    detail: String,
}

impl Check {
    fn measured(name: &'static str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        let status = if value <= tolerance { Status::Pass } else { Status::Fail };
        Self { name, value: Some(value), tolerance: Some(tolerance), status, detail: detail.into() }
    }

    fn skipped(name: &'static str, detail: impl Into<String>) -> Self {
        Self { name, value: None, tolerance: None, status: Status::Skipped, detail: detail.into() }
    }

    fn failed(name: &'static str, err: &Error) -> Self {
        let status = if matches!(err, Error::UnstableModel { .. }) { Status::Unstable } else { Status::Error };
        Self { name, value: None, tolerance: None, status, detail: err.to_string() }
    }

    fn row(&self) -> Vec<Cell> {
        let ok = matches!(self.status, Status::Pass | Status::Skipped);
        vec![
            Cell::text(self.name),
            self.value.map_or(Cell::Empty, Cell::float),
            self.tolerance.map_or(Cell::Empty, Cell::float),
            Cell::text(self.status.label()),
            Cell::text(self.detail.replace(',', ";")),
            flag(ok, self.status.label()),
        ]
    }
}

fn relative(diff: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Max over `omegas` of `f`, skipping frequencies where `omega - H_R` is singular.
fn over_frequencies(omegas: &[f64], f: impl Fn(f64) -> nhtopo_core::Result<f64> + Sync) -> nhtopo_core::Result<(f64, usize)> {
    let results: Vec<nhtopo_core::Result<f64>> = omegas.par_iter().map(|&w| f(w)).collect();
    let mut worst = 0.0f64;
    let mut skipped = 0;
    for r in results {
        match r {
            Ok(v) => worst = worst.max(v),
            Err(Error::SingularAtFrequency { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((worst, skipped))
}

fn frequency_check(name: &'static str, tol: f64, omegas: &[f64], f: impl Fn(f64) -> nhtopo_core::Result<f64> + Sync) -> Check {
    match over_frequencies(omegas, f) {
        Ok((_, skipped)) if skipped == omegas.len() => Check::skipped(name, "every sample frequency is singular"),
        Ok((v, skipped)) => Check::measured(name, v, tol, format!("{} frequencies; {skipped} singular", omegas.len())),
        Err(e) => Check::failed(name, &e),
    }
}

/// The oracle suite: model sanity, Green's-function identities that hold for
/// any model, and steady-state cross-checks that need a stable model.
pub fn cmd_validate(cfg: &RunConfig) -> Result<Document> {
    let model = cfg.model()?;
    let n = model.n_sites();
    let omegas: Vec<f64> = cfg.omega_grid((-2.5, 2.5, 6)).iter().map(|w| w + cfg.omega0()).collect();
    let blocks = blocks_real_space(&model);
    let mut checks = Vec::new();

    let report = validate(&model);
    let residual = report.hamiltonian_residual.max(report.decay_residual).max(report.pump_residual);
    let mut c = Check::measured("model_hermiticity", residual, nhtopo_core::model::VALIDATION_TOL, "");
    if !report.passed {
        c.status = Status::Fail;
        c.detail = format!("min eigenvalues: decay {:e}; pump {:e}", report.decay_min_eigenvalue, report.pump_min_eigenvalue);
    }
    checks.push(c);

    let gate = response::steady_state_gate(&model);
    checks.push(match keldysh::stability(&model) {
        Ok(s) => Check {
            name: "stability",
            value: Some(s.max_im),
            tolerance: Some(response::MARGINAL_TOL),
            status: if gate.is_ok() { Status::Pass } else { Status::Unstable },
            detail: match &gate {
                Ok(state) => format!("{state:?}").to_lowercase(),
                Err(e) => e.to_string(),
            },
        },
        Err(e) => Check::failed("stability", &e),
    });

    checks.push(frequency_check("keldysh_route", 1e-10, &omegas, |w| {
        let g = keldysh::greens(&blocks, w)?;
        let direct = keldysh::correlation_matrix(&model, w)?;
        let via_keldysh = keldysh::correlation_from_keldysh(&g, model.statistics());
        Ok(relative(linalg::max_abs(&(via_keldysh - &direct)), linalg::max_abs(&direct)))
    }));
    checks.push(frequency_check("svd_inverse", 1e-10, &omegas, |w| {
        let direct = keldysh::retarded(&blocks, w)?;
        let svd = doubled::greens_from_svd(&doubled::singular_spectrum(&blocks, w))?;
        Ok(relative(linalg::spectral_norm(&(svd - &direct)), linalg::spectral_norm(&direct)))
    }));
    checks.push(frequency_check("chiral_pairing", 1e-10, &omegas, |w| {
        let spectrum = doubled::singular_spectrum(&blocks, w);
        let ev = linalg::hermitian_eigenvalues(&doubled::doubled_hamiltonian(&blocks, w));
        let scale = spectrum.max_epsilon().max(1.0);
        Ok(ev.iter().zip(spectrum.doubled_eigenvalues()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale)
    }));
    checks.push(frequency_check("derivative_identity", 1e-4, &omegas, |w| {
        let sites = if n > 1 { vec![0, n - 1] } else { vec![0] };
        sites.iter().try_fold(0.0f64, |m, &l| Ok(m.max(response::greens_derivative_identity(&model, w, l)?)))
    }));

    let steady = gate.and_then(|_| oracle::moment_ode_steady_state(&model));
    match &steady {
        Err(e) => {
            for name in ["moment_residual", "sum_rule", "regression_spectrum", "fock_oracle", "susceptibility_fd", "covariance_physical", "rate_equation"] {
                checks.push(Check::failed(name, e));
            }
        }
        Ok(moments) => steady_state_checks(&model, &omegas, moments, cfg, &mut checks),
    }

    let mut table = Table::new("checks", &["check", "value", "tolerance", "status", "detail", "flag"]);
    for c in &checks {
        table.push(c.row());
    }
    Ok(Document { tables: vec![table], ..Default::default() })
}

fn steady_state_checks(model: &ModelSpec, omegas: &[f64], moments: &oracle::CovarianceSteadyState, cfg: &RunConfig, checks: &mut Vec<Check>) {
    let n = model.n_sites();
    let c = &moments.covariance;
    let scale = linalg::max_abs(c);
    checks.push(Check::measured("moment_residual", moments.residual, 1e-10, ""));

    checks.push(match keldysh::integrated_occupation(model, IntegrationOptions::default()) {
        Ok(int) => Check::measured("sum_rule", linalg::max_abs(&(&int.covariance - c)), 1e-6, format!("{} points", int.points)),
        Err(e) => Check::failed("sum_rule", &e),
    });

    let blocks = blocks_real_space(model);
    let pairs: Vec<(usize, usize)> = if n > 1 { vec![(0, 0), (n - 1, 0)] } else { vec![(0, 0)] };
    let regression = (|| -> nhtopo_core::Result<f64> {
        let mut worst = 0.0f64;
        for &(j, l) in &pairs {
            let spectrum = oracle::regression_spectrum(model, j, l, omegas, RegressionOptions::default())?;
            for (w, s) in omegas.iter().zip(&spectrum) {
                let m = match keldysh::retarded(&blocks, *w) {
                    Ok(g) => (&g * model.gamma_pump() * g.adjoint())[(j, l)],
                    Err(Error::SingularAtFrequency { .. }) => continue,
                    Err(e) => return Err(e),
                };
                worst = worst.max((s - m).norm() / m.norm().max(1e-3));
            }
        }
        Ok(worst)
    })();
    checks.push(match regression {
        Ok(v) => Check::measured("regression_spectrum", v, 1e-4, format!("{} entries", pairs.len())),
        Err(e) => Check::failed("regression_spectrum", &e),
    });

    checks.push(if n > oracle::MAX_SITES {
        Check::skipped("fock_oracle", format!("{n} sites exceed the Fock limit of {}", oracle::MAX_SITES))
    } else {
        let opts = FockOptions { cutoff: cfg.raw.cutoff.unwrap_or(FockOptions::default().cutoff), ..FockOptions::default() };
        match oracle::fock_lindblad_steady_state(model, opts) {
            Ok(f) => Check::measured("fock_oracle", relative(linalg::max_abs(&(&f.covariance - c)), scale), 0.02, ""),
            Err(e) => Check::failed("fock_oracle", &e),
        }
    });

    checks.push(frequency_check("susceptibility_fd", 1e-4, omegas, |w| {
        let chi = response::susceptibility(model, w, 0)?;
        let fd = response::susceptibility_finite_difference(model, w, 0, response::DERIVATIVE_STEP)?;
        let top = chi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(chi.iter().zip(&fd).map(|(a, b)| (a - b).abs() / (a.abs() + 1e-3 * top).max(1e-300)).fold(0.0, f64::max))
    }));

    let eig = linalg::hermitian_eigenvalues(c);
    let (lo, hi) = (eig[0], *eig.last().expect("non-empty"));
    let violation = match model.statistics() {
        Statistics::Bosonic => (-lo).max(0.0),
        Statistics::Fermionic => (-lo).max(hi - 1.0).max(0.0),
    };
    checks.push(Check::measured("covariance_physical", violation, 1e-10, format!("eigenvalues in [{lo:e}; {hi:e}]")));

    checks.push(if n == 1 {
        let kappa = model.gamma_decay()[(0, 0)].re;
        let p = model.gamma_pump()[(0, 0)].re;
        let expected = p / (kappa - model.statistics().pump_sign() * p);
        let got = c[(0, 0)].re;
        Check::measured("rate_equation", relative((got - expected).abs(), expected.abs()), 1e-10, format!("occupation {got}"))
    } else {
        Check::skipped("rate_equation", "single-site models only")
    });
}
