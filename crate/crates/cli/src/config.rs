//! Experiment configuration (one JSON file per experiment).
//!
//! ```json
//! {
//!   "space": {"S": 3, "d": 2},
//!   "q0": {"kind": "point-mass", "index": 0},
//!   "provider": {"perturbation": {"kind": "constant", "c": 2.0}, "clip_bound": 100.0},
//!   "sampler": {"kind": "tau-leaping", "out_of_range_policy": "clamp"},
//!   "schedule": "cted", "T": 4.0, "delta": 0.004, "kappa": 0.1,
//!   "mode": {"kind": "exact"},
//!   "master_seed": 7,
//!   "output": "run.jsonl"
//! }
//! ```
//!
//! Tokens and point-mass indices are 0-based.

use std::path::{Path, PathBuf};

use ctmc_lab::{
    cted_grid, uniform_grid, DensePmf, PerturbationSpec, RateMode, SamplerConfig, SamplerKind, SpaceConfig, TimeGrid,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Q0Spec {
    Uniform,
    PointMass { index: usize },
    RandomDirichlet { seed: u64, alpha: f64 },
}

fn infinite() -> f64 {
    f64::INFINITY
}

fn is_infinite(m: &f64) -> bool {
    m.is_infinite()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    #[serde(default = "no_perturbation")]
    pub perturbation: PerturbationSpec,
    /// `M`; omitted means unclipped.
    #[serde(default = "infinite", skip_serializing_if = "is_infinite")]
    pub clip_bound: f64,
}

fn no_perturbation() -> PerturbationSpec {
    PerturbationSpec::None
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            perturbation: PerturbationSpec::None,
            clip_bound: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Uniform,
    Cted,
}

/// Only the constant noise schedule `β ≡ 1` is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseSchedule {
    #[default]
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModeConfig {
    Exact,
    MonteCarlo { n: usize },
}

fn default_substeps() -> usize {
    16
}

fn default_true() -> bool {
    true
}

fn default_rate_mode() -> RateMode {
    RateMode::FrozenPerStep
}

/// KL-bound evaluation, attempted for τ-leaping and truncated samplers in
/// exact mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSettings {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_rate_mode")]
    pub rate_mode: RateMode,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

impl Default for BoundSettings {
    fn default() -> Self {
        BoundSettings {
            enabled: true,
            rate_mode: RateMode::FrozenPerStep,
            substeps: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: SpaceConfig,
    pub q0: Q0Spec,
    #[serde(default)]
    pub provider: ProviderConfig,
    pub sampler: SamplerConfig,
    pub schedule: ScheduleKind,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Defaults to `1e-3 · T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(default)]
    pub noise_schedule: NoiseSchedule,
    pub mode: ModeConfig,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub bound: BoundSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Optional per-step CSV of exact marginal diagnostics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_csv: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(".", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(1e-3 * self.horizon)
    }

    /// Schema-level checks beyond what deserialization enforces.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.space.validate().map_err(|e| ConfigError::new("space", e.to_string()))?;
        match self.mode {
            ModeConfig::Exact => {
                self.space.exact_size().map_err(|e| ConfigError::new("mode", e.to_string()))?;
            }
            ModeConfig::MonteCarlo { n } => {
                if n == 0 {
                    return Err(ConfigError::new("mode.n", "Monte-Carlo mode needs n >= 1"));
                }
                // the only available scores are exact ones
                self.space.exact_size().map_err(|e| ConfigError::new("space", e.to_string()))?;
            }
        }
        match self.q0 {
            Q0Spec::PointMass { index } => {
                let n = self.space.cardinality().unwrap_or(usize::MAX);
                if index >= n {
                    return Err(ConfigError::new("q0.index", format!("index {index} outside 0..{n}")));
                }
            }
            Q0Spec::RandomDirichlet { alpha, .. } if !(alpha > 0.0 && alpha.is_finite()) => {
                return Err(ConfigError::new("q0.alpha", format!("alpha = {alpha} must be positive")));
            }
            _ => {}
        }
        self.provider
            .perturbation
            .validate()
            .map_err(|e| ConfigError::new("provider.perturbation", e.to_string()))?;
        if !(self.provider.clip_bound >= 1.0) {
            return Err(ConfigError::new("provider.clip_bound", "clip bound M must be at least 1"));
        }
        self.sampler.validate().map_err(|e| ConfigError::new("sampler", e.to_string()))?;
        if self.bound.substeps == 0 {
            return Err(ConfigError::new("bound.substeps", "need at least one quadrature substep"));
        }
        self.grid()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid, ConfigError> {
        let delta = self.delta();
        match self.schedule {
            ScheduleKind::Cted => {
                let kappa = self.kappa.ok_or_else(|| ConfigError::new("kappa", "missing field `kappa`"))?;
                cted_grid(self.horizon, delta, kappa).map_err(|e| ConfigError::new("schedule", e.to_string()))
            }
            ScheduleKind::Uniform => {
                let n = self.n_steps.ok_or_else(|| ConfigError::new("N", "missing field `N`"))?;
                uniform_grid(self.horizon, delta, n).map_err(|e| ConfigError::new("schedule", e.to_string()))
            }
        }
    }

    pub fn q0(&self) -> Result<DensePmf, ctmc_lab::Error> {
        build_q0(&self.q0, self.space)
    }

    /// Whether a KL-bound report is produced for this configuration.
    pub fn wants_bound(&self) -> bool {
        self.bound.enabled
            && self.mode == ModeConfig::Exact
            && matches!(self.sampler.kind, SamplerKind::TauLeaping | SamplerKind::Truncated)
    }

    /// Short hex digest of the canonical JSON form.
    pub fn hash(&self) -> String {
        hash_json(&serde_json::to_string(self).expect("config serializes"))
    }
}

pub fn hash_json(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(&digest[..8])
}

pub fn build_q0(spec: &Q0Spec, space: SpaceConfig) -> Result<DensePmf, ctmc_lab::Error> {
    match *spec {
        Q0Spec::Uniform => DensePmf::uniform(space),
        Q0Spec::PointMass { index } => DensePmf::point_mass(space, index),
        Q0Spec::RandomDirichlet { seed, alpha } => {
            let n = space.exact_size()?;
            let gamma = Gamma::new(alpha, 1.0)
                .map_err(|e| ctmc_lab::Error::InvalidInput(format!("Dirichlet alpha {alpha}: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let weights: Vec<f64> = (0..n).map(|_| gamma.sample(&mut rng)).collect();
            DensePmf::from_weights(space, weights)
        }
    }
}
