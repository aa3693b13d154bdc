//! Per-pixel hyperspectral classification toolkit.
//!
//! Implements three spectral classifiers over single-pixel reflectance
//! sequences: MiniROCKET (fixed convolutional kernel set with PPV pooling),
//! HDC-MiniROCKET (the same transform with positional encodings bound into
//! the features) and a small 1D CNN (LiuNet-style) trained from scratch.
//! On top of the models sit a training loop with validation-mIoU checkpoint
//! selection, segmentation-style metrics (OA / AA / macro-F1 / mIoU) and an
//! experiment harness for limited-data and scale sweeps.
//!
//! The crate is organized to mirror the pipeline:
//!
//! - [`data`]: on-disk cube format, manifests, preprocessing, sampling
//! - [`rocket`]: the MiniROCKET feature transform
//! - [`hdc`]: positional encodings and the HDC extension of the transform
//! - [`liunet`]: the 1D CNN forward/backward pass
//! - [`training`]: loss, AdamW, training loop, checkpoints
//! - [`metrics`]: confusion matrices and aggregate metrics
//! - [`harness`]: experiment orchestration, sweeps, benchmarking, reports
//! - [`synthetic`]: deterministic synthetic datasets for tests and benchmarks

pub mod data;
pub mod error;
pub mod harness;
pub mod hdc;
pub mod liunet;
pub mod metrics;
pub mod rocket;
pub mod synthetic;
pub mod training;

pub use error::{Result, SpectralError};
