//! Experiment configuration: JSON-loadable, CLI-overridable, fingerprinted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpectralError};
use crate::training::{LR_LIUNET, LR_ROCKET_HEAD};

/// Which classifier a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Liunet,
    Minirocket,
    HdcMinirocket,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Liunet => write!(f, "liunet"),
            ModelKind::Minirocket => write!(f, "minirocket"),
            ModelKind::HdcMinirocket => write!(f, "hdc-minirocket"),
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = SpectralError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "liunet" => Ok(ModelKind::Liunet),
            "minirocket" => Ok(ModelKind::Minirocket),
            "hdc-minirocket" => Ok(ModelKind::HdcMinirocket),
            other => Err(SpectralError::Config(format!(
                "unknown model '{other}'; expected liunet, minirocket or hdc-minirocket"
            ))),
        }
    }
}

fn default_shares() -> Vec<u32> {
    vec![5, 10, 25, 50, 75, 100]
}

fn default_scales() -> Vec<f64> {
    vec![1.0, 2.0, 5.0, 7.0, 10.0, 20.0, 50.0, 100.0]
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

fn default_epochs() -> usize {
    10
}

fn default_batch() -> usize {
    4096
}

fn default_scale() -> f64 {
    5.0
}

/// Full description of an experiment run. Loadable from a JSON file;
/// individual fields are overridable from the command line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Path to the dataset manifest.
    pub manifest: PathBuf,
    pub model: ModelKind,
    /// Training-image shares (percent) for the limited-data sweep.
    #[serde(default = "default_shares")]
    pub shares: Vec<u32>,
    /// Positional-encoding scales for the scale sweep.
    #[serde(default = "default_scales")]
    pub scales: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Overrides the per-model default learning rate when set.
    #[serde(default)]
    pub learning_rate: Option<f64>,
    /// Encoding scale for single-scale runs of the HDC model.
    #[serde(default = "default_scale")]
    pub scale: f64,
    pub out_dir: PathBuf,
    /// Reuse existing cell results instead of retraining them.
    #[serde(default)]
    pub resume: bool,
    /// Standardize transform features to zero mean / unit variance using
    /// training-split statistics. Off by default: raw graded-PPV features
    /// already live in `[0, 1]`.
    #[serde(default)]
    pub standardize_features: bool,
    /// Cap on the number of training samples consumed by bias fitting;
    /// unset means one full batch.
    #[serde(default)]
    pub bias_fit_samples: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(SpectralError::Config("at least one seed is required".into()));
        }
        if self.shares.iter().any(|&p| p == 0 || p > 100) {
            return Err(SpectralError::Config("shares must lie in 1..=100".into()));
        }
        if self.scales.iter().any(|&s| s < 0.0 || !s.is_finite()) {
            return Err(SpectralError::Config("scales must be finite and nonnegative".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(SpectralError::Config("epochs and batch_size must be positive".into()));
        }
        if self.scale < 0.0 || !self.scale.is_finite() {
            return Err(SpectralError::Config("scale must be finite and nonnegative".into()));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(SpectralError::Config("learning_rate must be positive".into()));
            }
        }
        Ok(())
    }

    /// Learning rate for this run: the explicit override, or the per-model
    /// default.
    pub fn effective_lr(&self) -> f64 {
        self.learning_rate.unwrap_or(match self.model {
            ModelKind::Liunet => LR_LIUNET,
            ModelKind::Minirocket | ModelKind::HdcMinirocket => LR_ROCKET_HEAD,
        })
    }

    /// Stable fingerprint of the configuration, recorded in every result row
    /// so rows from different configurations never mix silently.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", super::fnv1a64(canonical.as_bytes()))
    }
}

/// Version string recorded alongside results.
pub fn code_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig {
            manifest: "manifest.json".into(),
            model: ModelKind::HdcMinirocket,
            shares: default_shares(),
            scales: default_scales(),
            seeds: default_seeds(),
            epochs: 10,
            batch_size: 4096,
            learning_rate: None,
            scale: 5.0,
            out_dir: "out".into(),
            resume: false,
            standardize_features: false,
            bias_fit_samples: None,
        }
    }

    #[test]
    fn defaults_fill_in_from_minimal_json() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"manifest": "m.json", "model": "liunet", "out_dir": "o"}"#,
        )
        .unwrap();
        assert_eq!(cfg.shares, vec![5, 10, 25, 50, 75, 100]);
        assert_eq!(cfg.scales, vec![1.0, 2.0, 5.0, 7.0, 10.0, 20.0, 50.0, 100.0]);
        assert_eq!(cfg.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(cfg.epochs, 10);
        assert_eq!(cfg.batch_size, 4096);
        assert!(!cfg.resume);
    }

    #[test]
    fn model_names_round_trip() {
        for (kind, name) in [
            (ModelKind::Liunet, "liunet"),
            (ModelKind::Minirocket, "minirocket"),
            (ModelKind::HdcMinirocket, "hdc-minirocket"),
        ] {
            assert_eq!(kind.to_string(), name);
            assert_eq!(name.parse::<ModelKind>().unwrap(), kind);
        }
        assert!("resnet".parse::<ModelKind>().is_err());
    }

    #[test]
    fn default_learning_rates_per_model() {
        let mut cfg = base();
        cfg.model = ModelKind::Liunet;
        assert_eq!(cfg.effective_lr(), 1e-3);
        cfg.model = ModelKind::Minirocket;
        assert_eq!(cfg.effective_lr(), 3e-5);
        cfg.learning_rate = Some(0.5);
        assert_eq!(cfg.effective_lr(), 0.5);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut cfg = base();
        cfg.shares = vec![0];
        assert!(cfg.validate().is_err());
        let mut cfg = base();
        cfg.shares = vec![101];
        assert!(cfg.validate().is_err());
        let mut cfg = base();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = base();
        cfg.scales = vec![-1.0];
        assert!(cfg.validate().is_err());
        let mut cfg = base();
        cfg.epochs = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let cfg = base();
        assert_eq!(cfg.hash(), cfg.clone().hash());
        let mut other = base();
        other.scale = 7.0;
        assert_ne!(cfg.hash(), other.hash());
        assert_eq!(cfg.hash().len(), 16);
    }
}
