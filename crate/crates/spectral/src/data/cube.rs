//! On-disk cube format.
//!
//! One directory per image:
//!
//! ```text
//! <image>/
//!   meta.json    # {"height": H, "width": W, "bands": B, "dtype": "f32le"}
//!   values.bin   # H*W*B little-endian f32, row-major (H, W, B)
//!   labels.bin   # H*W u8, row-major (H, W)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::DatasetManifest;
use crate::error::{Result, SpectralError};

const DTYPE: &str = "f32le";

#[derive(Serialize, Deserialize)]
struct CubeMeta {
    height: usize,
    width: usize,
    bands: usize,
    dtype: String,
}

/// An H×W×B reflectance image with a per-pixel label map.
///
/// `values` is row-major `(H, W, B)`, so each pixel's spectrum is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperspectralCube {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub values: Vec<f32>,
    pub labels: Vec<u8>,
}

impl HyperspectralCube {
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn spectrum(&self, y: usize, x: usize) -> &[f32] {
        let px = y * self.width + x;
        &self.values[px * self.bands..(px + 1) * self.bands]
    }

    pub fn label(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }
}

/// Load a cube directory, checking the header's band count against the
/// manifest's (pre-drop) `band_count`. No normalization is applied.
pub fn load_cube(dir: &Path, manifest: &DatasetManifest) -> Result<HyperspectralCube> {
    let cube = read_cube(dir)?;
    if cube.bands != manifest.band_count {
        return Err(SpectralError::Schema(format!(
            "cube at {} has {} bands, manifest expects {}",
            dir.display(),
            cube.bands,
            manifest.band_count
        )));
    }
    Ok(cube)
}

/// Load a cube directory without a manifest check.
pub fn read_cube(dir: &Path) -> Result<HyperspectralCube> {
    let meta_path = dir.join("meta.json");
    if !meta_path.exists() {
        return Err(SpectralError::MissingFile(meta_path));
    }
    let meta: CubeMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)
        .map_err(|e| SpectralError::Format(format!("malformed meta.json: {e}")))?;
    if meta.dtype != DTYPE {
        return Err(SpectralError::Format(format!(
            "unsupported dtype {:?}, expected {:?}",
            meta.dtype, DTYPE
        )));
    }
    if meta.height == 0 || meta.width == 0 || meta.bands == 0 {
        return Err(SpectralError::Format("zero dimension in meta.json".into()));
    }

    let n_values = meta.height * meta.width * meta.bands;
    let mut values = vec![0f32; n_values];
    let mut reader = std::io::BufReader::new(std::fs::File::open(dir.join("values.bin"))?);
    reader
        .read_f32_into::<LittleEndian>(&mut values)
        .map_err(|e| SpectralError::Format(format!("values.bin truncated or unreadable: {e}")))?;
    let mut rest = [0u8; 1];
    if reader.read(&mut rest)? != 0 {
        return Err(SpectralError::Format("values.bin longer than header implies".into()));
    }

    let mut labels = vec![0u8; meta.height * meta.width];
    let mut reader = std::io::BufReader::new(std::fs::File::open(dir.join("labels.bin"))?);
    reader.read_exact(&mut labels).map_err(|e| {
        SpectralError::Format(format!("labels.bin truncated or unreadable: {e}"))
    })?;
    if reader.read(&mut rest)? != 0 {
        return Err(SpectralError::Format("labels.bin longer than header implies".into()));
    }

    Ok(HyperspectralCube {
        height: meta.height,
        width: meta.width,
        bands: meta.bands,
        values,
        labels,
    })
}

/// Write a cube to a directory in the documented format.
pub fn write_cube(dir: &Path, cube: &HyperspectralCube) -> Result<()> {
    if cube.values.len() != cube.height * cube.width * cube.bands {
        return Err(SpectralError::Shape(format!(
            "values length {} does not match {}x{}x{}",
            cube.values.len(),
            cube.height,
            cube.width,
            cube.bands
        )));
    }
    if cube.labels.len() != cube.height * cube.width {
        return Err(SpectralError::Shape(format!(
            "labels length {} does not match {}x{}",
            cube.labels.len(),
            cube.height,
            cube.width
        )));
    }
    std::fs::create_dir_all(dir)?;
    let meta = CubeMeta {
        height: cube.height,
        width: cube.width,
        bands: cube.bands,
        dtype: DTYPE.into(),
    };
    std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;

    let mut writer = std::io::BufWriter::new(std::fs::File::create(dir.join("values.bin"))?);
    for &v in &cube.values {
        writer.write_f32::<LittleEndian>(v)?;
    }
    writer.flush()?;

    let mut writer = std::io::BufWriter::new(std::fs::File::create(dir.join("labels.bin"))?);
    writer.write_all(&cube.labels)?;
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DatasetManifest, ImageEntry};

    fn manifest(bands: usize) -> DatasetManifest {
        DatasetManifest {
            name: "t".into(),
            band_count: bands,
            class_count: 2,
            class_names: vec!["x".into(), "y".into()],
            wavelength_nm: None,
            band_drop: vec![],
            images: Vec::<ImageEntry>::new(),
            ignore_label: None,
            normalization: None,
        }
    }

    #[test]
    fn identity_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let cube = HyperspectralCube {
            height: 2,
            width: 2,
            bands: 3,
            values: (0..12).map(|v| v as f32).collect(),
            labels: vec![0, 1, 0, 1],
        };
        write_cube(dir.path(), &cube).unwrap();
        let back = load_cube(dir.path(), &manifest(3)).unwrap();
        assert_eq!(back.spectrum(0, 0), &[0.0, 1.0, 2.0]);
        assert_eq!(back, cube);
    }

    #[test]
    fn band_mismatch_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let cube = HyperspectralCube {
            height: 1,
            width: 1,
            bands: 120,
            values: vec![0.0; 120],
            labels: vec![0],
        };
        write_cube(dir.path(), &cube).unwrap();
        let err = load_cube(dir.path(), &manifest(25)).unwrap_err();
        assert!(matches!(err, SpectralError::Schema(_)), "got {err:?}");
    }

    #[test]
    fn malformed_header_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("meta.json"), "{not json").unwrap();
        let err = read_cube(dir.path()).unwrap_err();
        assert!(matches!(err, SpectralError::Format(_)), "got {err:?}");
    }

    #[test]
    fn truncated_values_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let cube = HyperspectralCube {
            height: 2,
            width: 2,
            bands: 2,
            values: vec![0.0; 8],
            labels: vec![0; 4],
        };
        write_cube(dir.path(), &cube).unwrap();
        let bytes = std::fs::read(dir.path().join("values.bin")).unwrap();
        std::fs::write(dir.path().join("values.bin"), &bytes[..bytes.len() - 4]).unwrap();
        let err = read_cube(dir.path()).unwrap_err();
        assert!(matches!(err, SpectralError::Format(_)), "got {err:?}");
    }
}
