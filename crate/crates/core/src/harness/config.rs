//! Experiment configuration (TOML) and its resolution against flags and environment.
//!
//! Precedence for the global settings is flag > environment (`WGLOC_*`) > file > default.
//! Unknown keys in a file are an error.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::disorder::{BaseModel, DisorderSpec, Distribution, LengthPolicy};
use crate::lyapunov::Window;
use crate::scaling::Figure4Config;
use crate::waveguide::LayerStack;

use super::HarnessError;

pub const ENV_PREFIX: &str = "WGLOC_";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    /// Grid points for frequency scans.
    pub resolution: Option<usize>,
    pub model: ModelConfig,
    pub disorder: DisorderConfig,
    pub scan: ScanConfig,
    pub run: RunConfig,
    pub whitenoise: WhiteNoiseConfig,
    pub fit: FitConfig,
    pub figure4: Figure4Overrides,
}

/// One period as `(n, l)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub layers: Vec<(f64, f64)>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { layers: vec![(1.0, 1.0), (2.5, 0.1)] }
    }
}

impl ModelConfig {
    pub fn stack(&self) -> Result<LayerStack, HarnessError> {
        LayerStack::from_pairs(&self.layers).map_err(|e| HarnessError::Config(format!("model.layers: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisorderKindName {
    Thickness,
    IndexNoise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisorderConfig {
    pub kind: DisorderKindName,
    /// σ values to run.
    pub sigma: Vec<f64>,
    /// Cell width Δ (index noise only).
    pub delta: f64,
    /// Defaults to uniform for thickness and standard normal for index noise.
    pub distribution: Option<Distribution>,
    pub length_policy: LengthPolicy,
}

impl Default for DisorderConfig {
    fn default() -> Self {
        Self {
            kind: DisorderKindName::Thickness,
            sigma: vec![0.01],
            delta: 0.01,
            distribution: None,
            length_policy: LengthPolicy::Fail,
        }
    }
}

impl DisorderConfig {
    pub fn spec(&self, stack: &LayerStack, sigma: f64) -> Result<DisorderSpec, HarnessError> {
        let mut spec = match self.kind {
            DisorderKindName::Thickness => DisorderSpec::thickness(stack.clone(), sigma),
            DisorderKindName::IndexNoise => DisorderSpec::index_noise(BaseModel::Stack(stack.clone()), sigma, self.delta),
        }
        .map_err(|e| HarnessError::Config(format!("disorder: {e}")))?;
        if let Some(d) = self.distribution {
            spec = spec.with_distribution(d);
        }
        spec.length_policy = self.length_policy;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    pub nu_min: f64,
    pub nu_max: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { nu_min: 0.01, nu_max: 12.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GammaMethod {
    Mc,
    Transmission,
}

/// Settings shared by `lyapunov` and `transmission`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub nu: Vec<f64>,
    pub n_periods: usize,
    pub window: Window,
    pub realizations: usize,
    pub method: GammaMethod,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { nu: vec![9.0], n_periods: 1000, window: Window::default(), realizations: 200, method: GammaMethod::Mc }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WhiteNoiseConfig {
    /// `λ` values, each mapped to an `(ω, σ)` pair.
    pub lambda: Vec<f64>,
    /// Explicit `(ω, σ)` pairs, run in addition to `lambda`.
    pub pairs: Vec<(f64, f64)>,
    pub delta: f64,
    pub length: f64,
    /// SDE paths per point; 0 runs the quadrature only.
    pub realizations: usize,
    /// `λ` values whose density table is written.
    pub density_lambda: Vec<f64>,
    pub z_range: (f64, f64),
    pub z_points: usize,
}

impl Default for WhiteNoiseConfig {
    fn default() -> Self {
        Self {
            lambda: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            pairs: Vec::new(),
            delta: 0.01,
            length: 1000.0,
            realizations: 0,
            density_lambda: vec![1.0],
            z_range: (-5.0, 5.0),
            z_points: 201,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// CSV with `sigma,gamma` columns and optional `std_err` and `point` columns.
    pub input: Option<PathBuf>,
    pub weighted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Figure4Overrides {
    pub realizations: Option<usize>,
    pub per_decade: Option<usize>,
    pub weighted: Option<bool>,
    pub n_periods: Option<usize>,
}

impl Figure4Overrides {
    pub fn apply(&self, model: &ModelConfig, seed: u64) -> Result<Figure4Config, HarnessError> {
        let mut c = Figure4Config { stack: model.stack()?, seed, ..Figure4Config::default() };
        if let Some(r) = self.realizations {
            c.realizations = r;
        }
        if let Some(k) = self.per_decade {
            for p in &mut c.points {
                p.sigma.per_decade = k;
            }
        }
        if let Some(w) = self.weighted {
            c.weighted = w;
        }
        if let Some(n) = self.n_periods {
            c.n_periods = n;
            c.window = Window { lo: n / 2, hi: n };
        }
        Ok(c)
    }
}

impl ExperimentConfig {
    /// Parses TOML, rejecting unknown keys (all of them are listed).
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let mut unknown = Vec::new();
        let de = toml::Deserializer::parse(text).map_err(|e| HarnessError::Config(format!("config: {e}")))?;
        let cfg: ExperimentConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| HarnessError::Config(format!("config: {e}")))?;
        if !unknown.is_empty() {
            return Err(HarnessError::Config(format!("unknown config keys: {}", unknown.join(", "))));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn resolution(&self) -> usize {
        self.resolution.unwrap_or(20_000)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips() {
        let mut c = ExperimentConfig { seed: Some(17), ..Default::default() };
        c.whitenoise.pairs.push((1.0, 0.5));
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_listed() {
        let err = ExperimentConfig::from_toml("sed = 3\n[run]\nnu = [1.0]\nrelaizations = 5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sed") && msg.contains("run.relaizations"), "{msg}");
    }

    #[test]
    fn partial_file_uses_defaults() {
        let c = ExperimentConfig::from_toml("[disorder]\nsigma = [0.1, 0.2]\n").unwrap();
        assert_eq!(c.disorder.sigma, vec![0.1, 0.2]);
        assert_eq!(c.run, RunConfig::default());
    }
}
