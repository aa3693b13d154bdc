//! Dataset ingestion: on-disk cube format, manifests, preprocessing and
//! sampling utilities.
//!
//! A dataset is a JSON manifest ([`DatasetManifest`]) plus one directory per
//! image in the cube format described in [`cube`]. Preprocessing removes the
//! manifest's dropped bands and min-max normalizes every value into `[0, 1]`
//! using per-band bounds fitted on the training split and persisted in the
//! manifest, so that validation and test data never influence normalization.

mod cube;
mod manifest;
mod sampling;

pub use cube::{load_cube, write_cube, HyperspectralCube};
pub use manifest::{
    DatasetManifest, ImageEntry, NormalizationBounds, Split,
};
pub use sampling::{epoch_batches, sample_share};

use crate::error::{Result, SpectralError};
use log::warn;

/// One pixel's reflectance sequence plus its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSample {
    /// Reflectance values, length = bands after drop.
    pub spectrum: Vec<f32>,
    /// Class id in `0..class_count`; never the ignore label.
    pub label: usize,
    /// Id of the image the pixel came from.
    pub source_image: String,
}

/// Remove the manifest's dropped bands from a cube. Labels are untouched.
pub fn drop_bands(cube: &HyperspectralCube, band_drop: &[usize]) -> Result<HyperspectralCube> {
    for &b in band_drop {
        if b >= cube.bands {
            return Err(SpectralError::Schema(format!(
                "band_drop index {} out of range for {} bands",
                b, cube.bands
            )));
        }
    }
    let mut dropped = vec![false; cube.bands];
    for &b in band_drop {
        if dropped[b] {
            return Err(SpectralError::Schema(format!("duplicate band_drop index {b}")));
        }
        dropped[b] = true;
    }
    let kept: Vec<usize> = (0..cube.bands).filter(|&b| !dropped[b]).collect();
    let mut values = Vec::with_capacity(cube.height * cube.width * kept.len());
    for px in 0..cube.height * cube.width {
        let spectrum = &cube.values[px * cube.bands..(px + 1) * cube.bands];
        values.extend(kept.iter().map(|&b| spectrum[b]));
    }
    Ok(HyperspectralCube {
        height: cube.height,
        width: cube.width,
        bands: kept.len(),
        values,
        labels: cube.labels.clone(),
    })
}

/// Per-band min-max bounds over a set of cubes that already had bands dropped.
pub fn compute_bounds(cubes: &[HyperspectralCube]) -> Result<NormalizationBounds> {
    let first = cubes
        .first()
        .ok_or_else(|| SpectralError::EmptyInput("no cubes to compute bounds over".into()))?;
    let bands = first.bands;
    let mut min = vec![f32::INFINITY; bands];
    let mut max = vec![f32::NEG_INFINITY; bands];
    for cube in cubes {
        if cube.bands != bands {
            return Err(SpectralError::Shape(format!(
                "band count mismatch while computing bounds: {} vs {}",
                cube.bands, bands
            )));
        }
        for px in 0..cube.height * cube.width {
            let spectrum = &cube.values[px * bands..(px + 1) * bands];
            for b in 0..bands {
                min[b] = min[b].min(spectrum[b]);
                max[b] = max[b].max(spectrum[b]);
            }
        }
    }
    Ok(NormalizationBounds { min, max })
}

/// Drop bands and normalize a cube into `[0, 1]`.
///
/// Uses the bounds persisted in the manifest when present; otherwise the
/// cube's own per-band min/max. Out-of-range values (possible on val/test
/// cubes under persisted train-split bounds) are clamped. A degenerate band
/// (`max == min`) maps to zero everywhere and emits a warning.
pub fn preprocess(
    cube: &HyperspectralCube,
    manifest: &DatasetManifest,
) -> Result<HyperspectralCube> {
    let mut out = drop_bands(cube, &manifest.band_drop)?;
    let bounds = match &manifest.normalization {
        Some(b) => {
            if b.min.len() != out.bands {
                return Err(SpectralError::Schema(format!(
                    "normalization bounds cover {} bands, cube has {}",
                    b.min.len(),
                    out.bands
                )));
            }
            b.clone()
        }
        None => compute_bounds(std::slice::from_ref(&out))?,
    };
    for b in 0..out.bands {
        if bounds.max[b] <= bounds.min[b] {
            warn!("degenerate band {b}: min == max, mapping to 0");
        }
    }
    let bands = out.bands;
    for px in 0..out.height * out.width {
        let spectrum = &mut out.values[px * bands..(px + 1) * bands];
        for b in 0..bands {
            let (lo, hi) = (bounds.min[b], bounds.max[b]);
            spectrum[b] = if hi <= lo {
                0.0
            } else {
                ((spectrum[b] - lo) / (hi - lo)).clamp(0.0, 1.0)
            };
        }
    }
    Ok(out)
}

/// One labeled sample per pixel whose label is not the ignore label,
/// in row-major pixel order.
pub fn extract_labeled_pixels(
    cube: &HyperspectralCube,
    manifest: &DatasetManifest,
    image_id: &str,
) -> Vec<SpectralSample> {
    let mut samples = Vec::new();
    for px in 0..cube.height * cube.width {
        let label = cube.labels[px];
        if Some(label) == manifest.ignore_label {
            continue;
        }
        samples.push(SpectralSample {
            spectrum: cube.values[px * cube.bands..(px + 1) * cube.bands].to_vec(),
            label: label as usize,
            source_image: image_id.to_string(),
        });
    }
    samples
}
