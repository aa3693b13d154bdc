use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpectralError};

/// Split assignment of one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Val => write!(f, "val"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// One image of the dataset: id, cube directory, split assignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: String,
    pub path: PathBuf,
    pub split: Split,
}

/// Per-band min/max, fitted on the training split and persisted so that
/// val/test normalization never sees their own statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizationBounds {
    pub min: Vec<f32>,
    pub max: Vec<f32>,
}

/// Dataset description: schema, class names, band drop list, image entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    /// Bands per pixel before any drop.
    pub band_count: usize,
    pub class_count: usize,
    pub class_names: Vec<String>,
    #[serde(default)]
    pub wavelength_nm: Option<Vec<f64>>,
    #[serde(default)]
    pub band_drop: Vec<usize>,
    pub images: Vec<ImageEntry>,
    #[serde(default)]
    pub ignore_label: Option<u8>,
    /// Fitted by `ingest`; bounds cover the bands remaining after drop.
    #[serde(default)]
    pub normalization: Option<NormalizationBounds>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.band_count == 0 || self.class_count == 0 {
            return Err(SpectralError::Schema(
                "band_count and class_count must be positive".into(),
            ));
        }
        if self.class_names.len() != self.class_count {
            return Err(SpectralError::Schema(format!(
                "class_names has length {}, class_count is {}",
                self.class_names.len(),
                self.class_count
            )));
        }
        if let Some(w) = &self.wavelength_nm {
            if w.len() != self.band_count {
                return Err(SpectralError::Schema(format!(
                    "wavelength_nm has length {}, band_count is {}",
                    w.len(),
                    self.band_count
                )));
            }
        }
        let mut seen = vec![false; self.band_count];
        for &b in &self.band_drop {
            if b >= self.band_count {
                return Err(SpectralError::Schema(format!(
                    "band_drop index {} >= band_count {}",
                    b, self.band_count
                )));
            }
            if seen[b] {
                return Err(SpectralError::Schema(format!("duplicate band_drop index {b}")));
            }
            seen[b] = true;
        }
        let mut ids = std::collections::HashSet::new();
        for entry in &self.images {
            if !ids.insert(entry.id.as_str()) {
                return Err(SpectralError::Schema(format!("duplicate image id {}", entry.id)));
            }
        }
        Ok(())
    }

    /// Bands remaining after the drop list is applied.
    pub fn effective_bands(&self) -> usize {
        self.band_count - self.band_drop.len()
    }

    /// Image entries of one split whose cube directory exists on disk.
    /// Entries with missing files are skipped with a warning.
    pub fn present_images(&self, split: Split) -> Vec<&ImageEntry> {
        self.images
            .iter()
            .filter(|e| e.split == split)
            .filter(|e| {
                if e.path.exists() {
                    true
                } else {
                    warn!("image {} missing at {}, skipping", e.id, e.path.display());
                    false
                }
            })
            .collect()
    }

    /// All image entries of one split, whether or not their files exist.
    pub fn split_images(&self, split: Split) -> Vec<&ImageEntry> {
        self.images.iter().filter(|e| e.split == split).collect()
    }
}
