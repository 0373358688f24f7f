//! TOML experiment files.
//!
//! Every section is optional and falls back to the library defaults; unknown
//! keys are rejected. The resolved document (defaults filled in) is what
//! `report.json` echoes.

use std::fmt;
use std::path::Path;

use lipgan_core::loss::{LossKind, LossMetric};
use lipgan_core::penalty::{PenaltyKind, PenaltySpec};
use lipgan_core::train::{Activation, AdamConfig, Gaussian, MlpConfig, Rect, SyntheticSpec, TrainConfig};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: &str = "1";
pub const SEED_ENV: &str = "LIPGAN_SEED";
const DEFAULT_ALPHA: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub penalty: PenaltySection,
    #[serde(default = "NetSection::critic")]
    pub critic: NetSection,
    #[serde(default)]
    pub generator: GeneratorSection,
    #[serde(default)]
    pub adam: AdamSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default = "DataSection::two_gaussians")]
    pub data: DataSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fake_data: Option<DataSection>,
    #[serde(default)]
    pub field: FieldSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl Default for LossSection {
    fn default() -> Self {
        Self { kind: LossKind::Logistic.name().into(), alpha: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltySection {
    pub kind: String,
    pub lambda: f64,
    pub k0: f64,
    pub smax: usize,
}

impl Default for PenaltySection {
    fn default() -> Self {
        let p = TrainConfig::default().penalty;
        Self { kind: p.kind.name().into(), lambda: p.lambda, k0: p.k0, smax: p.smax }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSection {
    pub width: usize,
    pub depth: usize,
    pub activation: String,
}

impl NetSection {
    fn critic() -> Self {
        let c = TrainConfig::default().critic;
        Self { width: c.hidden_width, depth: c.depth, activation: c.activation.name().into() }
    }
}

impl Default for NetSection {
    fn default() -> Self {
        Self::critic()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub noise_dim: usize,
    pub width: usize,
    pub depth: usize,
    pub activation: String,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        let g = TrainConfig::default().generator;
        Self { noise_dim: g.input_dim, width: g.hidden_width, depth: g.depth, activation: g.activation.name().into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSection {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self { lr: a.lr, beta1: a.beta1, beta2: a.beta2, eps: a.eps }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub n_critic: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub fix_generator: bool,
    pub drift_window: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            n_critic: t.n_critic,
            iterations: t.iterations,
            batch_size: t.batch_size,
            seed: t.seed,
            fix_generator: t.fix_generator,
            drift_window: t.drift_window,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSection {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub resolution: [usize; 2],
}

impl Default for FieldSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self { lo: t.field_lo, hi: t.field_hi, resolution: t.field_resolution }
    }
}

/// A sample distribution. Rectangles are `[lo_x, lo_y, hi_x, hi_y]`;
/// mixtures take either isotropic `sigmas` or full `covs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSection {
    ParallelLines {
        x: f64,
    },
    TwoDensityRegions {
        regions: Vec<[f64; 4]>,
        masses: Vec<f64>,
    },
    GaussianMixture {
        means: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigmas: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        covs: Option<Vec<Vec<Vec<f64>>>>,
        weights: Vec<f64>,
    },
    DiscretePoints {
        atoms: Vec<Vec<f64>>,
        masses: Vec<f64>,
    },
}

impl DataSection {
    pub fn two_gaussians() -> Self {
        DataSection::GaussianMixture {
            means: vec![vec![-2.0, 0.0], vec![2.0, 0.0]],
            sigmas: Some(vec![0.25, 0.25]),
            covs: None,
            weights: vec![0.5, 0.5],
        }
    }

    fn to_spec(&self, key: &str) -> Result<SyntheticSpec, ConfigError> {
        let spec = match self {
            DataSection::ParallelLines { x } => SyntheticSpec::ParallelLines { x: *x },
            DataSection::TwoDensityRegions { regions, masses } => SyntheticSpec::TwoDensityRegions {
                regions: regions.iter().map(|r| Rect { lo: [r[0], r[1]], hi: [r[2], r[3]] }).collect(),
                masses: masses.clone(),
            },
            DataSection::GaussianMixture { means, sigmas, covs, weights } => {
                if means.len() != weights.len() {
                    return err(format!("{key}.weights: one weight per mean"));
                }
                let components = match (sigmas, covs) {
                    (Some(s), None) if s.len() == means.len() => means
                        .iter()
                        .zip(s)
                        .zip(weights)
                        .map(|((m, &s), &w)| Gaussian::isotropic(m.clone(), s, w))
                        .collect(),
                    (None, Some(c)) if c.len() == means.len() => means
                        .iter()
                        .zip(c)
                        .zip(weights)
                        .map(|((m, c), &w)| Gaussian { mean: m.clone(), cov: c.clone(), weight: w })
                        .collect(),
                    (Some(_), Some(_)) | (None, None) => {
                        return err(format!("{key}: give exactly one of `sigmas` or `covs`"))
                    }
                    _ => return err(format!("{key}: one sigma or covariance per mean")),
                };
                SyntheticSpec::GaussianMixture { components }
            }
            DataSection::DiscretePoints { atoms, masses } => {
                SyntheticSpec::DiscretePoints { atoms: atoms.clone(), masses: masses.clone() }
            }
        };
        spec.validate().map_err(|e| ConfigError(format!("{key}: {e}")))?;
        Ok(spec)
    }
}

fn activation(key: &str, name: &str) -> Result<Activation, ConfigError> {
    name.parse().map_err(|_| ConfigError(format!("{key}: unknown activation `{name}` (expected relu or selu)")))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        if cfg.schema != SCHEMA_VERSION {
            return err(format!("schema: unsupported version `{}` (this build reads `{SCHEMA_VERSION}`)", cfg.schema));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies `LIPGAN_SEED` when it is set.
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<(), ConfigError> {
        if let Some(v) = value {
            self.train.seed = v
                .trim()
                .parse()
                .map_err(|_| ConfigError(format!("{SEED_ENV}: `{v}` is not an unsigned 64-bit integer")))?;
        }
        Ok(())
    }

    /// Fills in the default `alpha` for quadratic and hinge losses.
    pub fn resolve(&mut self) -> Result<(), ConfigError> {
        let kind: LossKind =
            self.loss.kind.parse().map_err(|_| ConfigError(format!("loss.kind: unknown loss `{}`", self.loss.kind)))?;
        match (kind.has_alpha(), self.loss.alpha) {
            (true, None) => self.loss.alpha = Some(DEFAULT_ALPHA),
            (false, Some(_)) => return err(format!("loss.alpha: `{kind}` takes no alpha")),
            _ => {}
        }
        Ok(())
    }

    pub fn to_train_config(&self) -> Result<TrainConfig, ConfigError> {
        let mut resolved = self.clone();
        resolved.resolve()?;
        let metric: LossKind = resolved.loss.kind.parse().expect("resolved");
        let penalty_kind: PenaltyKind = self
            .penalty
            .kind
            .parse()
            .map_err(|_| ConfigError(format!("penalty.kind: unknown penalty `{}`", self.penalty.kind)))?;
        let data = self.data.to_spec("data")?;
        let fake_data = self.fake_data.as_ref().map(|d| d.to_spec("fake_data")).transpose()?;
        let dim = data.dim();
        let critic = MlpConfig {
            activation: activation("critic.activation", &self.critic.activation)?,
            ..MlpConfig::new(dim, self.critic.width, self.critic.depth, 1)
        };
        let g = &self.generator;
        let generator = MlpConfig {
            activation: activation("generator.activation", &g.activation)?,
            ..MlpConfig::new(g.noise_dim, g.width, g.depth, dim)
        };
        let cfg = TrainConfig {
            metric,
            alpha: resolved.loss.alpha,
            penalty: PenaltySpec {
                kind: penalty_kind,
                lambda: self.penalty.lambda,
                k0: self.penalty.k0,
                smax: self.penalty.smax,
            },
            critic,
            generator,
            adam: AdamConfig { lr: self.adam.lr, beta1: self.adam.beta1, beta2: self.adam.beta2, eps: self.adam.eps },
            n_critic: self.train.n_critic,
            iterations: self.train.iterations,
            batch_size: self.train.batch_size,
            seed: self.train.seed,
            data,
            fix_generator: self.train.fix_generator,
            fake_data,
            field_lo: self.field.lo,
            field_hi: self.field.hi,
            field_resolution: self.field.resolution,
            drift_window: self.train.drift_window,
        };
        cfg.validate().map_err(|e| ConfigError(format!("invalid configuration: {e}")))?;
        Ok(cfg)
    }

    /// The metric the config resolves to.
    pub fn metric(&self) -> Result<LossMetric, ConfigError> {
        let cfg = self.to_train_config()?;
        lipgan_core::loss::make_metric(cfg.metric, cfg.alpha).map_err(|e| ConfigError(e.to_string()))
    }
}
