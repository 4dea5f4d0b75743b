use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nhtopo_cli::output::{Cell, Document, Format, Table};

struct Scratch(PathBuf);

impl Scratch {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("nhtopo-cli-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        Self(dir)
    }

    fn file(&self, name: &str, body: &str) -> PathBuf {
        let path = self.0.join(name);
        std::fs::write(&path, body).unwrap();
        path
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        std::fs::remove_dir_all(&self.0).ok();
    }
}

fn nhtopo(command: &str, config: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nhtopo"))
        .arg(command)
        .arg("--config")
        .arg(config)
        .args(extra)
        .env_remove("NHTOPO_THREADS")
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn document(out: &Output, format: Format) -> Document {
    Document::parse(std::str::from_utf8(&out.stdout).unwrap(), format).unwrap()
}

fn column<'a>(table: &'a Table, name: &str) -> impl Iterator<Item = &'a Cell> {
    let i = table.columns.iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"));
    table.rows.iter().map(move |r| &r[i])
}

fn float(cell: &Cell) -> f64 {
    match cell {
        Cell::Float(x) => *x,
        Cell::Int(i) => *i as f64,
        other => panic!("not a number: {other:?}"),
    }
}

#[test]
fn every_command_round_trips_in_both_formats() {
    let dir = Scratch::new("roundtrip");
    let hn = dir.file("hn.toml", "kappa = 7.0\nn_sites = 3\nomega_steps = 9\nk_steps = 64\n");
    for command in ["loop", "winding", "spectrum", "susceptibility", "validate"] {
        for (format, flag) in [(Format::Csv, "csv"), (Format::Json, "json")] {
            let out = nhtopo(command, &hn, &["--format", flag]);
            assert!(matches!(out.status.code(), Some(0 | 2)), "{command}: {}", String::from_utf8_lossy(&out.stderr));
            let text = String::from_utf8(out.stdout).unwrap();
            let doc = Document::parse(&text, format).unwrap();
            assert_eq!(doc.emit(format), text, "{command} {flag}");
            assert_eq!(doc.meta["command"], command);
            assert!(doc.meta["tool"].as_str().unwrap().starts_with("nhtopo "));
            assert_eq!(doc.meta["config"]["kappa"], 7.0);
        }
    }
}

#[test]
fn out_flag_writes_the_same_bytes() {
    let dir = Scratch::new("out");
    let cfg = dir.file("run.toml", "kappa = 4.0\nn_sites = 6\nomega_steps = 5\n");
    let target = dir.0.join("curve.csv");
    let to_file = nhtopo("winding", &cfg, &["--out", target.to_str().unwrap()]);
    assert!(to_file.stdout.is_empty());
    assert_eq!(std::fs::read(&target).unwrap(), nhtopo("winding", &cfg, &[]).stdout);
}

#[test]
fn loop_examples() {
    let dir = Scratch::new("loop");
    let boson = dir.file("b.toml", "kappa = 4.0\nn_sites = 10\n");
    let fermion = dir.file("f.toml", "kappa = 4.0\nn_sites = 10\nstatistics = \"fermionic\"\n");
    let b = document(&nhtopo("loop", &boson, &[]), Format::Csv);
    let f = document(&nhtopo("loop", &fermion, &[]), Format::Csv);
    assert_eq!(column(b.table("windings").unwrap(), "winding").next(), Some(&Cell::Int(1)));
    assert_eq!(column(f.table("windings").unwrap(), "winding").next(), Some(&Cell::Int(0)));

    let obc = b.table("obc_eigenvalues").unwrap();
    assert_eq!(obc.rows.len(), 10);
    let re: Vec<f64> = column(obc, "re").map(float).collect();
    let im: Vec<f64> = column(obc, "im").map(float).collect();
    for (x, y) in re.iter().zip(&im) {
        assert!((x - re[0]).hypot(y - im[0]) < 1e-8);
    }

    let flat = dir.file("flat.toml", "kappa = 3.0\nt_d = 0.0\nn_sites = 4\n");
    let d = document(&nhtopo("loop", &flat, &[]), Format::Csv);
    let pbc = d.table("pbc_loop").unwrap();
    assert!(column(pbc, "im").all(|c| (float(c) + 1.5).abs() < 1e-12));
    let re: Vec<f64> = column(pbc, "re").map(float).collect();
    assert!(re.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - re.iter().cloned().fold(f64::INFINITY, f64::min) > 3.9);
}

#[test]
fn winding_examples() {
    let dir = Scratch::new("winding");
    let cfg = dir.file("w.toml", "kappa = 4.0\nn_sites = 10\nkappas = [4.0, 12.0]\n");
    let out = nhtopo("winding", &cfg, &[]);
    assert_eq!(out.status.code(), Some(2), "omega = +-2 cells are gap-flagged");
    let summary: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(summary["status"], "flagged");
    assert_eq!(summary["flagged"]["winding"], 2);

    let doc = document(&out, Format::Csv);
    let t = doc.table("winding").unwrap();
    for row in &t.rows {
        let (kappa, omega, w1, flag) = (float(&row[0]), float(&row[1]), &row[2], &row[5]);
        match (kappa, omega.abs()) {
            (k, w) if k == 4.0 && w == 2.0 => assert_eq!((w1, flag), (&Cell::Empty, &Cell::text("critical"))),
            (k, w) if k == 4.0 && w < 2.0 => assert_eq!(w1, &Cell::Int(1)),
            _ => assert_eq!(w1, &Cell::Int(0), "kappa {kappa}, omega {omega}"),
        }
        assert_eq!(row[2], row[3], "numerical and analytic columns agree");
    }

    let fermion = dir.file("f.toml", "kappa = 4.0\nn_sites = 10\nstatistics = \"fermionic\"\n");
    let out = nhtopo("winding", &fermion, &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(column(document(&out, Format::Csv).table("winding").unwrap(), "w1").all(|c| c == &Cell::Int(0)));
}

#[test]
fn spectrum_examples() {
    let dir = Scratch::new("spectrum");
    let cfg = dir.file("s.toml", "kappa = 4.0\nn_sites = 40\nfixed_omega = 2.0\nk_steps = 1024\nomega_steps = 17\n");
    let doc = document(&nhtopo("spectrum", &cfg, &[]), Format::Csv);
    let vs_k = doc.table("bands_vs_k").unwrap();
    assert!(column(vs_k, "epsilon_plus").map(float).fold(f64::INFINITY, f64::min) < 1e-8);
    for row in &doc.table("zero_modes").unwrap().rows {
        let omega = float(&row[0]);
        if omega.abs() <= 1.25 {
            assert!(float(&row[1]) < 1e-6, "open chain has a zero mode at {omega}");
            assert_eq!(row[2], Cell::Int(1));
        }
        if omega.abs() > 2.1 {
            assert_eq!(row[2], Cell::Int(0));
        }
    }
    let bands = doc.table("bands_vs_omega").unwrap();
    assert_eq!(bands.rows.len(), 17 * 2 * 80);

    let fermion = dir.file("f.toml", "kappa = 5.0\nn_sites = 12\nstatistics = \"fermionic\"\n");
    let doc = document(&nhtopo("spectrum", &fermion, &[]), Format::Csv);
    let bands = doc.table("bands_vs_omega").unwrap();
    assert!(column(bands, "epsilon").all(|e| float(e).abs() >= 2.5 - 1e-10));
}

#[test]
fn susceptibility_examples() {
    let dir = Scratch::new("chi");
    for (kappa, beta) in [(4.0, 2.0), (7.0, 1.323)] {
        let cfg = dir.file("c.toml", &format!("kappa = {kappa}\nn_sites = 10\n"));
        let out = nhtopo("susceptibility", &cfg, &["--format", "json"]);
        assert_eq!(out.status.code(), Some(0));
        let doc = document(&out, Format::Json);
        let fit = &doc.meta["fit"];
        assert_eq!(fit["flag"], "ok");
        assert!((fit["beta"].as_f64().unwrap() - beta).abs() < 0.05 * beta);
        assert_eq!(fit["slopes"].as_array().unwrap().len(), 5);
        let chi = doc.table("chi").unwrap();
        assert_eq!(chi.rows.len(), 67 * 5);
        assert_eq!(column(chi, "site").take(5).cloned().collect::<Vec<_>>(), [2, 4, 6, 8, 10].map(Cell::Int));
    }

    let quiet = dir.file("q.toml", "kappa = 4.0\nt_d = 0.0\nn_sites = 10\n");
    let out = nhtopo("susceptibility", &quiet, &[]);
    assert_eq!(out.status.code(), Some(2));
    let doc = document(&out, Format::Csv);
    assert!(column(doc.table("chi").unwrap(), "chi").all(|c| float(c) == 0.0));
    assert_eq!(doc.meta["fit"]["flag"], "no_crossing");
}

#[test]
fn validate_examples() {
    let dir = Scratch::new("validate");
    let stable = dir.file("s.toml", "kappa = 7.0\nn_sites = 6\n");
    let out = nhtopo("validate", &stable, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let unstable = dir.file("u.toml", "kappa = 4.0\nn_sites = 10\nboundary = \"periodic\"\n");
    let out = nhtopo("validate", &unstable, &[]);
    assert_eq!(out.status.code(), Some(2));
    let doc = document(&out, Format::Csv);
    let checks = doc.table("checks").unwrap();
    let status = |name: &str| checks.rows.iter().find(|r| r[0] == Cell::text(name)).unwrap()[3].clone();
    assert_eq!(status("stability"), Cell::text("unstable"));
    assert_eq!(status("sum_rule"), Cell::text("unstable"));
    for name in ["keldysh_route", "svd_inverse", "chiral_pairing", "derivative_identity"] {
        assert_eq!(status(name), Cell::text("pass"), "{name}");
    }

    dir.file(
        "site.json",
        r#"{"statistics": "fermionic", "hamiltonian": [[[0.2, 0]]], "gamma_decay": [[[3.0, 0]]], "gamma_pump": [[[5.0, 0]]]}"#,
    );
    let single = dir.file("one.toml", "model_file = \"site.json\"\n");
    let out = nhtopo("validate", &single, &[]);
    assert_eq!(out.status.code(), Some(0));
    let doc = document(&out, Format::Csv);
    let rate = doc.table("checks").unwrap().rows.iter().find(|r| r[0] == Cell::text("rate_equation")).unwrap().clone();
    assert_eq!(rate[3], Cell::text("pass"));
    assert!(matches!(&rate[4], Cell::Text(t) if t.starts_with("occupation 0.62")), "{:?}", rate[4]);
}

#[test]
fn config_errors_exit_one_with_line_numbers() {
    let dir = Scratch::new("errors");
    let cases = [
        ("kappa = 4.0\nn_sites = 10\nomega_steps = 1\n", ":3:"),
        ("kappa = 4.0\n\nn_sites = \"ten\"\n", ":3:"),
        ("kappa = 4.0\nn_sites = 10\nkapa = 3.0\n", ":3:"),
        ("n_sites = 10\nkappa = -2.0\n", ":2:"),
    ];
    for (body, line) in cases {
        let cfg = dir.file("bad.toml", body);
        let out = nhtopo("winding", &cfg, &[]);
        assert_eq!(out.status.code(), Some(1), "{body}");
        assert!(out.stdout.is_empty());
        let summary: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(summary["status"], "error");
        assert!(summary["error"].as_str().unwrap().contains(line), "{body}: {}", summary["error"]);
    }

    let missing = nhtopo("loop", &dir.0.join("absent.toml"), &[]);
    assert_eq!(missing.status.code(), Some(1));

    let unstable = dir.file("u.toml", "kappa = 4.0\nn_sites = 10\nboundary = \"periodic\"\n");
    let out = nhtopo("susceptibility", &unstable, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no steady state"));
}

#[test]
fn thread_count_from_environment_does_not_change_output() {
    let dir = Scratch::new("threads");
    let cfg = dir.file("t.toml", "kappa = 7.0\nn_sites = 10\nkappas = [3.0, 7.0]\n");
    let base = nhtopo("winding", &cfg, &["--threads", "1"]).stdout;
    let env = Command::new(env!("CARGO_BIN_EXE_nhtopo"))
        .args(["winding", "--config", cfg.to_str().unwrap()])
        .env("NHTOPO_THREADS", "6")
        .output()
        .unwrap();
    assert_eq!(env.stdout, base);
}
