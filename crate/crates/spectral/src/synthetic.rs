//! Deterministic synthetic datasets.
//!
//! Classes are Gaussian bumps centered at distinct bands, so the task is
//! trivially separable at low noise while still exercising the whole
//! pipeline (cube files, manifests, splits, transforms, training). Also
//! provides the sharp-peak pair used to probe positional sensitivity.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{write_cube, DatasetManifest, HyperspectralCube, ImageEntry, Split};
use crate::error::Result;

/// Shape of a generated dataset.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub name: String,
    pub classes: usize,
    pub bands: usize,
    pub train_images: usize,
    pub val_images: usize,
    pub test_images: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub noise: f32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            name: "synthetic".into(),
            classes: 3,
            bands: 25,
            train_images: 4,
            val_images: 1,
            test_images: 1,
            image_height: 16,
            image_width: 16,
            noise: 0.02,
            seed: 0,
        }
    }
}

/// Band index of a class's bump center, spread evenly over the spectrum.
pub fn bump_center(class: usize, classes: usize, bands: usize) -> usize {
    (bands * (class + 1)) / (classes + 1)
}

/// One spectrum of `class`: a Gaussian bump plus uniform noise.
pub fn class_spectrum(
    class: usize,
    classes: usize,
    bands: usize,
    noise: f32,
    rng: &mut impl Rng,
) -> Vec<f32> {
    let center = bump_center(class, classes, bands) as f32;
    let sigma = 1.5f32;
    (0..bands)
        .map(|b| {
            let d = (b as f32 - center) / sigma;
            let bump = (-0.5 * d * d).exp();
            bump + noise * (rng.random::<f32>() - 0.5)
        })
        .collect()
}

/// Write a full synthetic dataset (cube directories plus `manifest.json`)
/// under `dir`. Returns the manifest path.
pub fn generate_dataset(dir: &Path, spec: &SyntheticSpec) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut images = Vec::new();
    let splits = [
        (Split::Train, spec.train_images),
        (Split::Val, spec.val_images),
        (Split::Test, spec.test_images),
    ];
    for (split, count) in splits {
        for idx in 0..count {
            let id = format!("{split}{idx}");
            let cube_dir = dir.join(&id);
            let cube = generate_cube(spec, &mut rng);
            write_cube(&cube_dir, &cube)?;
            images.push(ImageEntry { id, path: cube_dir, split });
        }
    }
    let manifest = DatasetManifest {
        name: spec.name.clone(),
        band_count: spec.bands,
        class_count: spec.classes,
        class_names: (0..spec.classes).map(|c| format!("class{c}")).collect(),
        wavelength_nm: None,
        band_drop: vec![],
        images,
        ignore_label: None,
        normalization: None,
    };
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

fn generate_cube(spec: &SyntheticSpec, rng: &mut impl Rng) -> HyperspectralCube {
    let pixels = spec.image_height * spec.image_width;
    let mut values = Vec::with_capacity(pixels * spec.bands);
    let mut labels = Vec::with_capacity(pixels);
    for _ in 0..pixels {
        let class = rng.random_range(0..spec.classes);
        values.extend(class_spectrum(class, spec.classes, spec.bands, spec.noise, rng));
        labels.push(class as u8);
    }
    HyperspectralCube {
        height: spec.image_height,
        width: spec.image_width,
        bands: spec.bands,
        values,
        labels,
    }
}

/// Two spectra that are permutations of each other: zero background with a
/// unit peak at `p1` vs `p2`.
pub fn peak_pair(bands: usize, p1: usize, p2: usize) -> (Vec<f32>, Vec<f32>) {
    let mut a = vec![0f32; bands];
    let mut b = vec![0f32; bands];
    a[p1] = 1.0;
    b[p2] = 1.0;
    (a, b)
}

/// A fixed-size workload of random spectra for throughput benchmarking.
pub fn bench_spectra(count: usize, bands: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..bands).map(|_| rng.random::<f32>()).collect()).collect()
}
