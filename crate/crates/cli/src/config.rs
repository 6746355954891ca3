//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use fsfd_core::detect::{GammaChoice, Mode};
use fsfd_core::ltisim::{FaultProfile, FaultShape, NoiseModel, StateSpaceModel};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

/// Spectral-gap ratio used when the latent order is estimated from data.
pub const AUTO_GAP_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Length N of the simulated test record.
    pub n_samples: usize,
    /// Length of the fault-free training record; defaults to `n_samples`.
    #[serde(default)]
    pub train_samples: Option<usize>,
    pub s: usize,
    #[serde(default)]
    pub latent: LatentSpec,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default = "default_input_std")]
    pub input_std: f64,
    pub model: ModelSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub fault: FaultSpec,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub bench: BenchSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_mode() -> String {
    "chi2".into()
}
fn default_alpha() -> f64 {
    0.01
}
fn default_c() -> f64 {
    0.05
}
fn default_ridge() -> f64 {
    fsfd_core::detect::DEFAULT_RIDGE
}
fn default_input_std() -> f64 {
    1.0
}

/// Latent order `n`: an integer or `"auto"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LatentSpec {
    Order(usize),
    Keyword(String),
}

impl Default for LatentSpec {
    fn default() -> Self {
        Self::Keyword("auto".into())
    }
}

/// Inline matrices (rows as arrays) or a file holding the same table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub process_std: f64,
    #[serde(default)]
    pub measurement_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    #[default]
    None,
    SensorStep,
    SensorRamp,
    SensorGain,
    ActuatorStep,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    #[serde(default)]
    pub kind: FaultKind,
    /// 0-based sample position in the test record.
    #[serde(default)]
    pub onset: usize,
    #[serde(default)]
    pub magnitude: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "default_random_models")]
    pub random_models: usize,
}

fn default_random_models() -> usize {
    10
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self { random_models: default_random_models() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    #[serde(default = "default_amplitudes")]
    pub amplitudes: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Past horizon of the LS output baseline; defaults to `n + 1`.
    #[serde(default)]
    pub rho: Option<usize>,
}

fn default_amplitudes() -> Vec<f64> {
    vec![0.0, 1.0, 2.0, 4.0]
}
fn default_trials() -> usize {
    20
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self { amplitudes: default_amplitudes(), trials: default_trials(), rho: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

/// Validated configuration together with the objects built from it.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: StateSpaceModel,
    pub noise: Option<NoiseModel>,
    pub fault: Option<FaultProfile>,
    pub mode: Mode,
    /// Known latent order, `None` for auto.
    pub latent: Option<usize>,
}

impl Experiment {
    pub fn train_samples(&self) -> usize {
        self.config.train_samples.unwrap_or(self.config.n_samples)
    }

    pub fn gamma_choice(&self) -> GammaChoice {
        let (s, p) = (self.config.s, self.model.p());
        match self.latent {
            Some(n) => GammaChoice::Fixed(s * p + n),
            None => GammaChoice::Auto { gap_factor: AUTO_GAP_FACTOR, fallback_n: None },
        }
    }

    /// Fault profile with magnitudes scaled by `amplitude`; `None` at zero.
    pub fn scaled_fault(&self, amplitude: f64) -> Option<FaultProfile> {
        if amplitude == 0.0 {
            return None;
        }
        fault_profile(&self.config.fault, amplitude)
    }
}

pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    let mut cfg = parse(&text)?;
    if let Some(file) = cfg.model.file.as_mut() {
        if file.is_relative() {
            if let Some(dir) = path.parent() {
                *file = dir.join(&*file);
            }
        }
    }
    Ok(cfg)
}

pub fn parse(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| {
        let path = e.span().map(|s| format!("config (bytes {}..{})", s.start, s.end)).unwrap_or_else(|| "config".into());
        CliError::config(path, e.message().to_string())
    })
}

fn matrix(rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(CliError::config(path, "matrix must have at least one row and one column"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(CliError::config(format!("{path}[{i}]"), format!("row has {} entries, expected {cols}", rows[i].len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::config(path, "entries must be finite"));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.iter().flatten().copied()))
}

fn resolve_model(spec: &ModelSpec) -> Result<StateSpaceModel> {
    let spec = match &spec.file {
        Some(file) => {
            if spec.a.is_some() || spec.b.is_some() || spec.c.is_some() || spec.d.is_some() {
                return Err(CliError::config("model.file", "give either a file or inline matrices, not both"));
            }
            let text = std::fs::read_to_string(file).map_err(|source| CliError::Io { path: file.clone(), source })?;
            let inner: ModelSpec = toml::from_str(&text)
                .map_err(|e| CliError::config(format!("model.file ({})", file.display()), e.message().to_string()))?;
            if inner.file.is_some() {
                return Err(CliError::config("model.file", "model files cannot reference further files"));
            }
            inner
        }
        None => spec.clone(),
    };
    let need = |m: &Option<Vec<Vec<f64>>>, name: &str| {
        m.as_deref().ok_or_else(|| CliError::config(format!("model.{name}"), "missing matrix")).and_then(|r| matrix(r, &format!("model.{name}")))
    };
    let a = need(&spec.a, "a")?;
    let b = need(&spec.b, "b")?;
    let c = need(&spec.c, "c")?;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(CliError::config("model.a", format!("must be square, got {}x{}", n, a.ncols())));
    }
    if b.nrows() != n {
        return Err(CliError::config("model.b", format!("must have {n} rows, got {}", b.nrows())));
    }
    if c.ncols() != n {
        return Err(CliError::config("model.c", format!("must have {n} columns, got {}", c.ncols())));
    }
    let d = match &spec.d {
        Some(rows) => matrix(rows, "model.d")?,
        None => DMatrix::zeros(c.nrows(), b.ncols()),
    };
    if d.shape() != (c.nrows(), b.ncols()) {
        return Err(CliError::config("model.d", format!("must be {}x{}, got {}x{}", c.nrows(), b.ncols(), d.nrows(), d.ncols())));
    }
    StateSpaceModel::new(a, b, c, d).map_err(|e| CliError::config("model", e.to_string()))
}

fn fault_profile(spec: &FaultSpec, amplitude: f64) -> Option<FaultProfile> {
    let v = DVector::from_iterator(spec.magnitude.len(), spec.magnitude.iter().map(|x| x * amplitude));
    let (sensor, actuator) = match spec.kind {
        FaultKind::None => return None,
        FaultKind::SensorStep => (Some(FaultShape::Step(v)), None),
        FaultKind::SensorRamp => (Some(FaultShape::Ramp(v)), None),
        FaultKind::SensorGain => (Some(FaultShape::Gain(v)), None),
        FaultKind::ActuatorStep => (None, Some(FaultShape::Step(v))),
    };
    Some(FaultProfile { onset: spec.onset, sensor, actuator })
}

fn check(cond: bool, path: &str, message: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(CliError::config(path, message()))
    }
}

/// Checks every field and builds the model, noise and fault objects.
pub fn validate(cfg: &ExperimentConfig) -> Result<Experiment> {
    let model = resolve_model(&cfg.model)?;
    let (n, p, m) = (model.n(), model.p(), model.m());
    let s = cfg.s;
    check(s >= 1, "s", || "window length s must be at least 1".into())?;
    check(cfg.n_samples >= s, "n_samples", || format!("N = {} must be at least s = {s}", cfg.n_samples))?;
    let train = cfg.train_samples.unwrap_or(cfg.n_samples);
    let need = s * (p + m) + s - 1;
    check(train >= need, "train_samples", || {
        format!("training length {train} is below s(p+m) + s - 1 = {need} for s = {s}, p = {p}, m = {m}")
    })?;
    let mode = match cfg.mode.as_str() {
        "chi2" => Mode::Chi2 { alpha: cfg.alpha },
        "svdd" => Mode::Svdd { c: cfg.c },
        other => return Err(CliError::config("mode", format!("expected \"chi2\" or \"svdd\", got {other:?}"))),
    };
    check(cfg.alpha > 0.0 && cfg.alpha < 1.0, "alpha", || format!("alpha = {} must lie in (0, 1)", cfg.alpha))?;
    check(cfg.c > 0.0 && cfg.c <= 1.0, "c", || format!("C = {} must lie in (0, 1]", cfg.c))?;
    if cfg.mode == "svdd" {
        let cols = train + 1 - s;
        check(cfg.c * cols as f64 >= 1.0, "c", || format!("C = {} is infeasible for {cols} training windows (need C >= 1/{cols})", cfg.c))?;
    }
    check(cfg.ridge >= 0.0 && cfg.ridge.is_finite(), "ridge", || format!("ridge = {} must be finite and non-negative", cfg.ridge))?;
    check(cfg.input_std > 0.0 && cfg.input_std.is_finite(), "input_std", || "input_std must be positive".into())?;
    let latent = match &cfg.latent {
        LatentSpec::Order(k) => {
            check(*k <= s * m, "latent", || format!("latent order {k} exceeds s*m = {}", s * m))?;
            Some(*k)
        }
        LatentSpec::Keyword(w) if w == "auto" => None,
        LatentSpec::Keyword(w) => return Err(CliError::config("latent", format!("expected an integer or \"auto\", got {w:?}"))),
    };
    let ns = &cfg.noise;
    for (v, path) in [(ns.process_std, "noise.process_std"), (ns.measurement_std, "noise.measurement_std")] {
        check(v >= 0.0 && v.is_finite(), path, || format!("{v} must be finite and non-negative"))?;
    }
    let noise = if ns.process_std == 0.0 && ns.measurement_std == 0.0 {
        None
    } else {
        Some(NoiseModel::isotropic(n, m, ns.process_std, ns.measurement_std).map_err(|e| CliError::config("noise", e.to_string()))?)
    };
    let fs = &cfg.fault;
    if fs.kind != FaultKind::None {
        let dim = if fs.kind == FaultKind::ActuatorStep { p } else { m };
        check(fs.magnitude.len() == dim, "fault.magnitude", || format!("expected {dim} entries, got {}", fs.magnitude.len()))?;
        check(fs.magnitude.iter().all(|v| v.is_finite()), "fault.magnitude", || "entries must be finite".into())?;
        check(fs.onset < cfg.n_samples, "fault.onset", || format!("onset {} must be below N = {}", fs.onset, cfg.n_samples))?;
    }
    check(cfg.bench.trials >= 1, "bench.trials", || "need at least one trial".into())?;
    check(!cfg.bench.amplitudes.is_empty(), "bench.amplitudes", || "need at least one amplitude".into())?;
    if let Some(i) = cfg.bench.amplitudes.iter().position(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(CliError::config(format!("bench.amplitudes[{i}]"), "amplitudes must be finite and non-negative"));
    }
    if let Some(rho) = cfg.bench.rho {
        check(rho > n, "bench.rho", || format!("rho = {rho} must exceed the model order {n}"))?;
    }
    Ok(Experiment { config: cfg.clone(), fault: fault_profile(fs, 1.0), model, noise, mode, latent })
}
