//! Config files, dotted `--key=value` overrides and unknown-key reporting.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use nsde_core::data::SynthSpec;
use nsde_core::model::{DiffusionForm, ModelConfig, ModelKind};
use nsde_core::solver::{GbmParams, SolveConfig};
use nsde_core::stability::{CurveSpec, DissipativeSpec, RunSpec, DIFFUSION_VARIANTS};
use nsde_core::train::TrainConfig;

/// A config type whose root seed `--seed` replaces.
pub trait Seeded {
    fn set_seed(&mut self, seed: u64);
}

/// Where a run's data comes from; `csv` wins over `synth` when both are set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSource {
    pub csv: Option<PathBuf>,
    pub synth: SynthSpec,
}

impl Default for DataSource {
    fn default() -> Self {
        Self { csv: None, synth: SynthSpec::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSource,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub solve: SolveConfig,
    pub missing_rate: f64,
    pub uniform_length: Option<usize>,
    pub normalize: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spec = RunSpec::default();
        Self {
            data: DataSource::default(),
            model: ModelConfig::new(ModelKind::Lnsde, 1, 1),
            train: spec.train,
            solve: spec.solve,
            missing_rate: spec.missing_rate,
            uniform_length: spec.uniform_length,
            normalize: spec.normalize,
            seed: spec.seed,
        }
    }
}

impl RunConfig {
    pub fn spec(&self) -> RunSpec {
        RunSpec {
            model: self.model.clone(),
            train: self.train.clone(),
            solve: self.solve.clone(),
            missing_rate: self.missing_rate,
            uniform_length: self.uniform_length,
            normalize: self.normalize,
            seed: self.seed,
        }
    }
}

impl Seeded for RunConfig {
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub synth: SynthSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { synth: SynthSpec::default() }
    }
}

impl Seeded for SynthConfig {
    fn set_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorruptConfig {
    pub missing_rate: f64,
    pub uniform_length: Option<usize>,
    pub seed: u64,
}

impl Default for CorruptConfig {
    fn default() -> Self {
        Self { missing_rate: 0.5, uniform_length: None, seed: 0 }
    }
}

impl Seeded for CorruptConfig {
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub n_models: usize,
    pub n_paths: usize,
    /// `(m, sigma)` pairs for the moment check.
    pub moment_grid: Vec<(f64, f64)>,
    pub moment_z0: Vec<f64>,
    pub moment_t_end: f64,
    pub moment_steps: usize,
    pub moment_paths: usize,
    pub seed: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            n_models: 20,
            n_paths: 50,
            moment_grid: vec![(1.0, 0.1), (1.0, 0.5), (2.0, 0.5)],
            moment_z0: vec![1.0, 1.0],
            moment_t_end: 5.0,
            moment_steps: 500,
            moment_paths: 10_000,
            seed: 0,
        }
    }
}

impl Seeded for StabilityConfig {
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessConfig {
    pub data: SynthSpec,
    pub kinds: Vec<ModelKind>,
    pub rho: f64,
    pub n_seeds: usize,
    pub curve: CurveSpec,
    pub model: DissipativeSpec,
    pub seed: u64,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            data: SynthSpec::default(),
            kinds: vec![ModelKind::Lsde, ModelKind::Lnsde, ModelKind::Gsde],
            rho: 0.1,
            n_seeds: 3,
            curve: CurveSpec::default(),
            model: DissipativeSpec::default(),
            seed: 0,
        }
    }
}

impl Seeded for RobustnessConfig {
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionConfig {
    pub run: RunConfig,
    pub forms: Vec<DiffusionForm>,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        let mut run = RunConfig { missing_rate: 0.5, ..RunConfig::default() };
        run.train.max_epochs = 100;
        Self { run, forms: DIFFUSION_VARIANTS.to_vec() }
    }
}

impl Seeded for DiffusionConfig {
    fn set_seed(&mut self, seed: u64) {
        self.run.seed = seed;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub gbm: GbmParams,
    pub levels: Vec<usize>,
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            gbm: GbmParams { mu: 0.05, sigma: 0.2, z0: 1.0, t_end: 1.0 },
            levels: vec![16, 32, 64, 128, 256, 512],
            n_paths: 2000,
            seed: 0,
        }
    }
}

impl Seeded for ConvergenceConfig {
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { tolerance: 1e-4, seed: 0 }
    }
}

impl Seeded for GradcheckConfig {
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

/// Keys of `user` absent from `reference`, as dotted paths. Subtrees whose
/// reference is `null` (unset options) are left to the deserializer.
pub fn unknown_keys(user: &Value, reference: &Value, prefix: &str) -> Vec<String> {
    let (Value::Object(u), Value::Object(r)) = (user, reference) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (k, v) in u {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match r.get(k) {
            None => out.push(path),
            Some(rv) => out.extend(unknown_keys(v, rv, &path)),
        }
    }
    out
}

fn set_path(root: &mut Value, key: &str, value: Value) {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        if !cur.is_object() {
            *cur = Value::Object(Map::new());
        }
        cur = cur.as_object_mut().expect("object").entry(part.to_string()).or_insert(Value::Null);
    }
    if !cur.is_object() {
        *cur = Value::Object(Map::new());
    }
    cur.as_object_mut().expect("object").insert(parts[parts.len() - 1].to_string(), value);
}

/// Parses `key=value`; the value is read as JSON when it parses, else as a string.
pub fn parse_override(raw: &str) -> Result<(String, Value)> {
    let (k, v) = raw.split_once('=').with_context(|| format!("override `{raw}` is not key=value"))?;
    if k.is_empty() {
        bail!("override `{raw}` has an empty key");
    }
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

fn decode<T: DeserializeOwned + Serialize + Default>(value: Value, what: &str) -> Result<T> {
    let reference = serde_json::to_value(T::default())?;
    let unknown = unknown_keys(&value, &reference, "");
    if !unknown.is_empty() {
        bail!("unknown config keys in {what}: {}", unknown.join(", "));
    }
    serde_json::from_value(value).with_context(|| format!("invalid {what}"))
}

/// Defaults, then the config file, then overrides, then `--seed`.
pub fn load<T>(file: Option<&Path>, overrides: &[(String, Value)], seed: Option<u64>) -> Result<T>
where
    T: DeserializeOwned + Serialize + Default + Seeded,
{
    let mut cfg: T = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
            decode(v, &format!("config {}", p.display()))?
        }
        None => T::default(),
    };
    if !overrides.is_empty() {
        let mut v = serde_json::to_value(&cfg)?;
        for (k, val) in overrides {
            set_path(&mut v, k, val.clone());
        }
        cfg = decode(v, "overrides")?;
    }
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}
