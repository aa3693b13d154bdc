//! Inference throughput measurement on a fixed synthetic workload.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ModelKind;
use crate::error::{Result, SpectralError};
use crate::rocket::FittedTransform;
use crate::synthetic::bench_spectra;
use crate::training::{LinearHead, LiuNetModel, Model};

/// Throughput of one model on the synthetic workload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchResult {
    pub model: String,
    pub spectra: usize,
    pub bands: usize,
    pub classes: usize,
    pub spectra_per_sec_single: f64,
    pub spectra_per_sec_multi: f64,
    pub workers: usize,
    pub machine: String,
}

fn machine_descriptor(workers: usize) -> String {
    format!("{} {}, {workers} threads", std::env::consts::OS, std::env::consts::ARCH)
}

enum Predictor {
    Liunet(LiuNetModel),
    Rocket { fitted: FittedTransform, head: LinearHead, hdc: bool },
}

impl Predictor {
    fn predict(&self, x: &[f32]) -> Result<usize> {
        match self {
            Predictor::Liunet(m) => m.predict_one(x),
            Predictor::Rocket { fitted, head, hdc } => {
                let features =
                    if *hdc { fitted.hdc_transform(x)? } else { fitted.transform(x)? };
                let f32s: Vec<f32> = features.iter().map(|&v| v as f32).collect();
                head.predict_one(&f32s)
            }
        }
    }
}

/// Measure end-to-end per-pixel prediction throughput, single-threaded and
/// with the rayon pool. The same spectra run through both paths and the
/// predictions are checked for equality, so the parallel path cannot trade
/// correctness for speed.
pub fn bench_inference(
    model: ModelKind,
    bands: usize,
    classes: usize,
    count: usize,
    seed: u64,
) -> Result<BenchResult> {
    if count == 0 || bands == 0 || classes == 0 {
        return Err(SpectralError::Config("bench needs positive count, bands, classes".into()));
    }
    let spectra = bench_spectra(count, bands, seed);
    let predictor = match model {
        ModelKind::Liunet => Predictor::Liunet(LiuNetModel::init(bands, classes, seed)?),
        ModelKind::Minirocket | ModelKind::HdcMinirocket => {
            let hdc = model == ModelKind::HdcMinirocket;
            let scale = if hdc { 5.0 } else { 0.0 };
            let fit_batch: Vec<Vec<f32>> = spectra.iter().take(64).cloned().collect();
            let fitted = FittedTransform::fit(&fit_batch, scale, seed)?;
            let head = LinearHead::new(fitted.feature_dim(), classes);
            Predictor::Rocket { fitted, head, hdc }
        }
    };

    let start = Instant::now();
    let single: Vec<usize> =
        spectra.iter().map(|x| predictor.predict(x)).collect::<Result<_>>()?;
    let single_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let multi: Vec<usize> =
        spectra.par_iter().map(|x| predictor.predict(x)).collect::<Result<_>>()?;
    let multi_secs = start.elapsed().as_secs_f64();

    if single != multi {
        return Err(SpectralError::Format(
            "parallel predictions diverged from the sequential ones".into(),
        ));
    }
    let workers = rayon::current_num_threads();
    Ok(BenchResult {
        model: model.to_string(),
        spectra: count,
        bands,
        classes,
        spectra_per_sec_single: count as f64 / single_secs,
        spectra_per_sec_multi: count as f64 / multi_secs,
        workers,
        machine: machine_descriptor(workers),
    })
}
