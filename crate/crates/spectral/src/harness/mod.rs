//! Experiment orchestration: configuration, the share/scale grids, inference
//! benchmarking and report generation.
//!
//! Every grid cell (model, share, scale, seed) is trained independently and
//! its result persisted as JSON under `<out_dir>/cells/`, written atomically
//! (temp file plus rename). With `resume` enabled, existing cell files are
//! loaded instead of retrained, so interrupted sweeps restart cheaply.
//! Aggregate CSVs and SVG curves are derived from the cell files.

mod bench;
mod config;
mod experiment;
mod report;

pub use bench::{bench_inference, BenchResult};
pub use config::{ExperimentConfig, ModelKind};
pub use experiment::{
    ingest, load_dataset, run_cell, run_full_eval, run_scale_sweep, run_share_sweep, train_cell,
    CellResult, DatasetSamples, EpochRow, MetricsRow, TrainedModel,
};
pub use report::{difference_rows, load_cells, svg_line_chart, write_report, DiffRow};

use std::path::Path;

use crate::error::Result;

/// 64-bit FNV-1a; used to fingerprint configurations in result rows.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Write a file atomically: to a sibling temp path first, then rename over
/// the target, so a crash never leaves a partial result behind.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
