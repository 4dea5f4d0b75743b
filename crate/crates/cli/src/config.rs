//! Run configuration: a flat TOML file holding either inline Hatano-Nelson
//! parameters or a `model_file` pointing at a generic JSON model, plus the
//! grids a command needs. Every error carries the line it refers to.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use nhtopo_core::{build_hatano_nelson, hatano_nelson_bloch, BlochModel, Boundary, HatanoNelsonParams, ModelSpec, Statistics};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.path, line, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub model_file: Option<String>,
    pub omega0: Option<f64>,
    pub t_c: Option<f64>,
    pub phi: Option<f64>,
    pub kappa: Option<f64>,
    pub t_d: Option<f64>,
    pub n_sites: Option<usize>,
    pub statistics: Option<Statistics>,
    pub boundary: Option<Boundary>,

    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub omega_steps: Option<usize>,
    pub k_steps: Option<usize>,
    pub kappas: Option<Vec<f64>>,
    /// Complex probe points as `[re, im]`.
    pub probes: Option<Vec<[f64; 2]>>,
    pub fixed_omega: Option<f64>,
    /// 1-based.
    pub source_site: Option<usize>,
    /// 1-based.
    pub probe_sites: Option<Vec<usize>>,
    pub threshold: Option<f64>,
    pub cutoff: Option<usize>,
}

#[derive(Debug, Clone)]
pub enum ModelSource {
    Inline(HatanoNelsonParams),
    File { path: PathBuf, model: ModelSpec },
}

/// A parsed config with its source text kept for line lookups.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub model: ModelSource,
    path: String,
    text: String,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.display().to_string(),
            line: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(&text, &path.display().to_string(), path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str, path: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
            path: path.to_string(),
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        let mut cfg = Self { raw: raw.clone(), model: ModelSource::Inline(HatanoNelsonParams::figure(0.0, 2, Statistics::Bosonic, Boundary::Open)), path: path.to_string(), text: text.to_string() };
        cfg.model = cfg.resolve_model(base_dir)?;
        cfg.check_common()?;
        Ok(cfg)
    }

    /// Error pinned to the line where `key` is assigned.
    pub fn error_at(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError { path: self.path.clone(), line: line_of_key(&self.text, key), message: message.into() }
    }

    fn resolve_model(&self, base_dir: &Path) -> Result<ModelSource, ConfigError> {
        let r = &self.raw;
        if let Some(file) = &r.model_file {
            let inline = [
                ("omega0", r.omega0.is_some()),
                ("t_c", r.t_c.is_some()),
                ("phi", r.phi.is_some()),
                ("kappa", r.kappa.is_some()),
                ("t_d", r.t_d.is_some()),
                ("n_sites", r.n_sites.is_some()),
                ("statistics", r.statistics.is_some()),
                ("boundary", r.boundary.is_some()),
            ];
            if let Some((key, _)) = inline.iter().find(|(_, set)| *set) {
                return Err(self.error_at(key, format!("`{key}` cannot be combined with `model_file`")));
            }
            let path = base_dir.join(file);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| self.error_at("model_file", format!("cannot read {}: {e}", path.display())))?;
            let model = ModelSpec::from_json(&text).map_err(|e| self.error_at("model_file", e.to_string()))?;
            return Ok(ModelSource::File { path, model });
        }
        let kappa = r.kappa.ok_or_else(|| self.error_at("kappa", "missing `kappa` (or `model_file`)"))?;
        let n_sites = r.n_sites.ok_or_else(|| self.error_at("n_sites", "missing `n_sites` (or `model_file`)"))?;
        let params = HatanoNelsonParams {
            omega0: r.omega0.unwrap_or(0.0),
            t_c: r.t_c.unwrap_or(1.0),
            phi: r.phi.unwrap_or(PI / 2.0),
            kappa,
            t_d: r.t_d.unwrap_or(1.0),
            n_sites,
            statistics: r.statistics.unwrap_or(Statistics::Bosonic),
            boundary: r.boundary.unwrap_or(Boundary::Open),
        };
        if let Err(e) = params.check() {
            let key = ["n_sites", "t_c", "kappa", "t_d", "phi", "omega0"]
                .into_iter()
                .find(|k| e.to_string().contains(k))
                .unwrap_or("kappa");
            return Err(self.error_at(key, e.to_string()));
        }
        Ok(ModelSource::Inline(params))
    }

    fn check_common(&self) -> Result<(), ConfigError> {
        let r = &self.raw;
        for (key, value) in [("omega_steps", r.omega_steps), ("k_steps", r.k_steps)] {
            if let Some(v) = value {
                if v < 2 {
                    return Err(self.error_at(key, format!("`{key}` must be at least 2, got {v}")));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (r.omega_min, r.omega_max) {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(self.error_at("omega_max", format!("`omega_max` ({hi}) must exceed `omega_min` ({lo})")));
            }
        }
        if matches!(&r.kappas, Some(k) if k.is_empty()) {
            return Err(self.error_at("kappas", "`kappas` must not be empty"));
        }
        if matches!(&r.probes, Some(p) if p.is_empty()) {
            return Err(self.error_at("probes", "`probes` must not be empty"));
        }
        let n = self.n_sites();
        if let Some(s) = r.source_site {
            if s == 0 || s > n {
                return Err(self.error_at("source_site", format!("`source_site` must be in 1..={n}, got {s}")));
            }
        }
        if let Some(sites) = &r.probe_sites {
            if let Some(bad) = sites.iter().find(|&&s| s == 0 || s > n) {
                return Err(self.error_at("probe_sites", format!("probe site {bad} outside 1..={n}")));
            }
        }
        if matches!(r.threshold, Some(t) if t.is_nan() || t <= 0.0) {
            return Err(self.error_at("threshold", "`threshold` must be positive"));
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        match &self.model {
            ModelSource::Inline(p) => p.n_sites,
            ModelSource::File { model, .. } => model.n_sites(),
        }
    }

    pub fn model(&self) -> Result<ModelSpec, ConfigError> {
        match &self.model {
            ModelSource::Inline(p) => build_hatano_nelson(p).map_err(|e| self.error_at("kappa", e.to_string())),
            ModelSource::File { model, .. } => Ok(model.clone()),
        }
    }

    pub fn params(&self) -> Result<HatanoNelsonParams, ConfigError> {
        match &self.model {
            ModelSource::Inline(p) => Ok(*p),
            ModelSource::File { .. } => {
                Err(self.error_at("model_file", "this command needs inline Hatano-Nelson parameters, not `model_file`"))
            }
        }
    }

    pub fn bloch(&self) -> Result<BlochModel, ConfigError> {
        let p = self.params()?;
        hatano_nelson_bloch(&p).map_err(|e| self.error_at("kappa", e.to_string()))
    }

    pub fn omega0(&self) -> f64 {
        match &self.model {
            ModelSource::Inline(p) => p.omega0,
            ModelSource::File { .. } => 0.0,
        }
    }

    /// Uniform grid from `omega_min`, `omega_max`, `omega_steps`.
    pub fn omega_grid(&self, default: (f64, f64, usize)) -> Vec<f64> {
        let lo = self.raw.omega_min.unwrap_or(default.0);
        let hi = self.raw.omega_max.unwrap_or(default.1);
        let steps = self.raw.omega_steps.unwrap_or(default.2);
        linspace(lo, hi, steps)
    }

    pub fn probes(&self) -> Vec<Complex64> {
        match &self.raw.probes {
            Some(p) => p.iter().map(|&[re, im]| Complex64::new(re, im)).collect(),
            None => vec![Complex64::new(self.omega0(), 0.0)],
        }
    }

    /// Resolved settings echoed into every output file.
    pub fn echo(&self) -> serde_json::Value {
        let mut map: BTreeMap<String, serde_json::Value> = match serde_json::to_value(&self.raw) {
            Ok(serde_json::Value::Object(m)) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
            _ => BTreeMap::new(),
        };
        if let ModelSource::Inline(p) = &self.model {
            if let Ok(serde_json::Value::Object(m)) = serde_json::to_value(p) {
                map.extend(m);
            }
        }
        serde_json::to_value(map).expect("config echoes as JSON")
    }
}

/// `steps` evenly spaced points; the ends are hit exactly.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|i| if i + 1 == steps { hi } else { lo + (hi - lo) * i as f64 / (steps - 1) as f64 })
        .collect()
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn line_of_key(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|line| {
        let t = line.trim_start();
        t.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}
