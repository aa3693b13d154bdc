//! Dataset loading, grid-cell training and the sweep drivers.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{code_version, ExperimentConfig, ModelKind};
use super::atomic_write;
use crate::data::{
    compute_bounds, drop_bands, epoch_batches, extract_labeled_pixels, load_cube, preprocess,
    sample_share, DatasetManifest, SpectralSample, Split,
};
use crate::error::{Result, SpectralError};
use crate::metrics::MetricSummary;
use crate::rocket::FittedTransform;
use crate::training::{evaluate, train, LabeledVectors, LinearHead, LiuNetModel, TrainConfig};

/// A dataset loaded, preprocessed and flattened to labeled pixels per split.
#[derive(Debug)]
pub struct DatasetSamples {
    pub manifest: DatasetManifest,
    pub train: Vec<SpectralSample>,
    pub val: Vec<SpectralSample>,
    pub test: Vec<SpectralSample>,
    /// Train image ids in manifest order; the unit of share sampling.
    pub train_image_ids: Vec<String>,
}

/// Fit per-band normalization bounds on the training split and persist them
/// into the manifest, so later runs normalize val/test under train statistics.
pub fn ingest(manifest_path: &Path) -> Result<DatasetManifest> {
    let mut manifest = DatasetManifest::load(manifest_path)?;
    check_files(&manifest)?;
    let mut train_cubes = Vec::new();
    for entry in manifest.split_images(Split::Train) {
        let cube = load_cube(&entry.path, &manifest)?;
        train_cubes.push(drop_bands(&cube, &manifest.band_drop)?);
    }
    let bounds = compute_bounds(&train_cubes)?;
    manifest.normalization = Some(bounds);
    manifest.save(manifest_path)?;
    info!("ingested {}: bounds over {} train images", manifest.name, train_cubes.len());
    Ok(manifest)
}

fn check_files(manifest: &DatasetManifest) -> Result<()> {
    let missing: Vec<String> = manifest
        .images
        .iter()
        .filter(|e| !e.path.exists())
        .map(|e| format!("{} ({})", e.id, e.path.display()))
        .collect();
    if !missing.is_empty() {
        return Err(SpectralError::Schema(format!(
            "missing dataset files: {}",
            missing.join(", ")
        )));
    }
    Ok(())
}

/// Load every image, preprocess it and extract labeled pixels per split.
/// Aborts with the full list of missing files before touching any of them.
pub fn load_dataset(manifest_path: &Path) -> Result<DatasetSamples> {
    let mut manifest = DatasetManifest::load(manifest_path)?;
    check_files(&manifest)?;
    if manifest.normalization.is_none() {
        warn!(
            "manifest {} carries no normalization bounds; fitting them on the training split",
            manifest.name
        );
        let mut train_cubes = Vec::new();
        for entry in manifest.split_images(Split::Train) {
            let cube = load_cube(&entry.path, &manifest)?;
            train_cubes.push(drop_bands(&cube, &manifest.band_drop)?);
        }
        manifest.normalization = Some(compute_bounds(&train_cubes)?);
    }
    let mut per_split = Vec::new();
    for split in [Split::Train, Split::Val, Split::Test] {
        let mut samples = Vec::new();
        for entry in manifest.split_images(split) {
            let cube = load_cube(&entry.path, &manifest)?;
            let processed = preprocess(&cube, &manifest)?;
            samples.extend(extract_labeled_pixels(&processed, &manifest, &entry.id));
        }
        if samples.is_empty() {
            return Err(SpectralError::EmptyInput(format!(
                "split {split} of {} holds no labeled pixels",
                manifest.name
            )));
        }
        per_split.push(samples);
    }
    let test = per_split.pop().unwrap();
    let val = per_split.pop().unwrap();
    let train = per_split.pop().unwrap();
    let train_image_ids =
        manifest.split_images(Split::Train).iter().map(|e| e.id.clone()).collect();
    Ok(DatasetSamples { manifest, train, val, test, train_image_ids })
}

/// The four aggregates plus per-class accuracy, in serializable form.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsRow {
    pub oa: f64,
    pub aa: f64,
    pub f1: f64,
    pub miou: f64,
    pub per_class_acc: Vec<Option<f64>>,
}

impl From<&MetricSummary> for MetricsRow {
    fn from(s: &MetricSummary) -> Self {
        MetricsRow {
            oa: s.oa,
            aa: s.aa,
            f1: s.f1,
            miou: s.miou,
            per_class_acc: s.per_class_acc.clone(),
        }
    }
}

/// One line of the per-epoch training log.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_oa: f64,
    pub val_miou: f64,
}

/// Persisted outcome of one grid cell (model, share, scale, seed).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub dataset: String,
    pub model: String,
    pub share_pct: u32,
    pub scale: f64,
    pub seed: u64,
    pub best_epoch: usize,
    /// Labeled training samples per class in the selected share.
    pub train_counts: Vec<u64>,
    /// Validation metrics at the selected epoch.
    pub val: MetricsRow,
    pub test: MetricsRow,
    pub epochs: Vec<EpochRow>,
    pub config_hash: String,
    pub code_version: String,
}

impl CellResult {
    pub fn n_train(&self) -> u64 {
        self.train_counts.iter().sum()
    }
}

fn vectors_from(samples: &[&SpectralSample]) -> LabeledVectors {
    let mut data = LabeledVectors::default();
    for s in samples {
        data.push(s.spectrum.clone(), s.label);
    }
    data
}

fn transform_features(
    fitted: &FittedTransform,
    samples: &[&SpectralSample],
    hdc: bool,
) -> Result<LabeledVectors> {
    let xs: Vec<Vec<f32>> = samples
        .par_iter()
        .map(|s| {
            let f =
                if hdc { fitted.hdc_transform(&s.spectrum) } else { fitted.transform(&s.spectrum) };
            f.map(|v| v.iter().map(|&x| x as f32).collect())
        })
        .collect::<Result<_>>()?;
    let ys = samples.iter().map(|s| s.label).collect();
    Ok(LabeledVectors { xs, ys })
}

/// Per-feature zero-mean/unit-variance statistics fitted on one set.
fn standardize(train: &mut LabeledVectors, others: &mut [&mut LabeledVectors]) {
    let dim = train.xs[0].len();
    let n = train.xs.len() as f64;
    let mut mean = vec![0f64; dim];
    for x in &train.xs {
        for (m, &v) in mean.iter_mut().zip(x) {
            *m += v as f64;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0f64; dim];
    for x in &train.xs {
        for (f, (s, &v)) in var.iter_mut().zip(x).enumerate() {
            let d = v as f64 - mean[f];
            *s += d * d;
        }
    }
    let std: Vec<f64> = var.iter().map(|&v| (v / n).sqrt().max(1e-12)).collect();
    let apply = |data: &mut LabeledVectors| {
        for x in data.xs.iter_mut() {
            for (f, v) in x.iter_mut().enumerate() {
                *v = ((*v as f64 - mean[f]) / std[f]) as f32;
            }
        }
    };
    apply(train);
    for data in others {
        apply(data);
    }
}

/// The trained state of one cell, for checkpointing.
pub enum TrainedModel {
    Liunet(LiuNetModel),
    Head { fitted: FittedTransform, head: LinearHead },
}

/// Train and evaluate one grid cell, returning the result row only.
pub fn run_cell(
    ds: &DatasetSamples,
    cfg: &ExperimentConfig,
    share: u32,
    scale: f64,
    seed: u64,
) -> Result<CellResult> {
    train_cell(ds, cfg, share, scale, seed).map(|(cell, _)| cell)
}

/// Train and evaluate one grid cell.
///
/// The training set is the pixels of the share-selected training images.
/// Transform-based models fit their biases on the first shuffled batch of
/// epoch 0 (optionally capped by `bias_fit_samples`) before any step.
pub fn train_cell(
    ds: &DatasetSamples,
    cfg: &ExperimentConfig,
    share: u32,
    scale: f64,
    seed: u64,
) -> Result<(CellResult, TrainedModel)> {
    let classes = ds.manifest.class_count;
    let selected = sample_share(&ds.train_image_ids, share, seed)?;
    let picked: HashSet<&str> = selected.iter().map(String::as_str).collect();
    let train_samples: Vec<&SpectralSample> =
        ds.train.iter().filter(|s| picked.contains(s.source_image.as_str())).collect();
    if train_samples.is_empty() {
        return Err(SpectralError::EmptyInput(format!(
            "share {share}% selected images without labeled pixels"
        )));
    }
    let mut train_counts = vec![0u64; classes];
    for s in &train_samples {
        train_counts[s.label] += 1;
    }
    let val_samples: Vec<&SpectralSample> = ds.val.iter().collect();
    let test_samples: Vec<&SpectralSample> = ds.test.iter().collect();

    let mut tcfg = TrainConfig::new(cfg.effective_lr(), seed);
    tcfg.epochs = cfg.epochs;
    tcfg.batch_size = cfg.batch_size;

    let (outcome, test_summary, trained) = match cfg.model {
        ModelKind::Liunet => {
            let train_data = vectors_from(&train_samples);
            let val_data = vectors_from(&val_samples);
            let test_data = vectors_from(&test_samples);
            let bands = train_data.xs[0].len();
            let mut model = LiuNetModel::init(bands, classes, seed)?;
            let outcome = train(&mut model, &train_data, &val_data, &tcfg, classes)?;
            let summary = evaluate(&model, &test_data, classes)?.summary()?;
            (outcome, summary, TrainedModel::Liunet(model))
        }
        ModelKind::Minirocket | ModelKind::HdcMinirocket => {
            let batches = epoch_batches(train_samples.len(), cfg.batch_size, seed, 0, true);
            let mut fit_idx = batches.into_iter().next().unwrap();
            if let Some(cap) = cfg.bias_fit_samples {
                fit_idx.truncate(cap.max(1));
            }
            let fit_batch: Vec<Vec<f32>> =
                fit_idx.iter().map(|&i| train_samples[i].spectrum.clone()).collect();
            let fitted = FittedTransform::fit(&fit_batch, scale, seed)?;
            let hdc = cfg.model == ModelKind::HdcMinirocket;
            let mut train_data = transform_features(&fitted, &train_samples, hdc)?;
            let mut val_data = transform_features(&fitted, &val_samples, hdc)?;
            let mut test_data = transform_features(&fitted, &test_samples, hdc)?;
            if cfg.standardize_features {
                standardize(&mut train_data, &mut [&mut val_data, &mut test_data]);
            }
            let mut head = LinearHead::new(fitted.feature_dim(), classes);
            let outcome = train(&mut head, &train_data, &val_data, &tcfg, classes)?;
            let summary = evaluate(&head, &test_data, classes)?.summary()?;
            (outcome, summary, TrainedModel::Head { fitted, head })
        }
    };
    let cell = CellResult {
        dataset: ds.manifest.name.clone(),
        model: cfg.model.to_string(),
        share_pct: share,
        scale,
        seed,
        best_epoch: outcome.best_epoch,
        train_counts,
        val: (&outcome.log[outcome.best_epoch].val).into(),
        test: (&test_summary).into(),
        epochs: outcome
            .log
            .iter()
            .map(|e| EpochRow {
                epoch: e.epoch,
                train_loss: e.train_loss,
                val_oa: e.val.oa,
                val_miou: e.val.miou,
            })
            .collect(),
        config_hash: cfg.hash(),
        code_version: code_version().to_string(),
    };
    Ok((cell, trained))
}

fn cell_path(cfg: &ExperimentConfig, share: u32, scale: f64, seed: u64) -> PathBuf {
    cfg.out_dir.join("cells").join(format!("{}_p{share}_s{scale}_seed{seed}.json", cfg.model))
}

/// Run a cell, or load its persisted result when `resume` is set.
fn run_cell_cached(
    ds: &DatasetSamples,
    cfg: &ExperimentConfig,
    share: u32,
    scale: f64,
    seed: u64,
) -> Result<CellResult> {
    let path = cell_path(cfg, share, scale, seed);
    if cfg.resume && path.exists() {
        let text = std::fs::read_to_string(&path)?;
        let cell: CellResult = serde_json::from_str(&text)?;
        info!("resumed cell {}", path.display());
        return Ok(cell);
    }
    let cell = run_cell(ds, cfg, share, scale, seed)?;
    atomic_write(&path, serde_json::to_string_pretty(&cell)?.as_bytes())?;
    Ok(cell)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Seed-mean of the per-class accuracies; a class absent in every seed stays
/// absent.
fn mean_per_class(cells: &[&CellResult], pick: fn(&CellResult) -> &MetricsRow) -> Vec<Option<f64>> {
    let classes = pick(cells[0]).per_class_acc.len();
    (0..classes)
        .map(|c| {
            let vals: Vec<f64> =
                cells.iter().filter_map(|cell| pick(cell).per_class_acc[c]).collect();
            if vals.is_empty() {
                None
            } else {
                Some(vals.iter().sum::<f64>() / vals.len() as f64)
            }
        })
        .collect()
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn metric_header(class_names: &[String]) -> Vec<String> {
    let mut h = vec!["oa".into(), "aa".into(), "f1".into(), "miou".into()];
    h.extend(class_names.iter().map(|n| format!("acc_{n}")));
    h
}

fn metric_fields(row: &MetricsRow) -> Vec<String> {
    let mut f = vec![
        format!("{:.6}", row.oa),
        format!("{:.6}", row.aa),
        format!("{:.6}", row.f1),
        format!("{:.6}", row.miou),
    ];
    f.extend(row.per_class_acc.iter().map(|&a| opt_field(a)));
    f
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| SpectralError::Format(e.to_string()))?;
    atomic_write(path, &bytes)
}

/// Full-data evaluation: one cell per seed at share 100, test metrics per
/// seed plus a seed-mean row. Returns the path of the written CSV.
pub fn run_full_eval(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let ds = load_dataset(&cfg.manifest)?;
    let scale = if cfg.model == ModelKind::HdcMinirocket { cfg.scale } else { 0.0 };
    let cells: Vec<CellResult> = cfg
        .seeds
        .iter()
        .map(|&seed| run_cell_cached(&ds, cfg, 100, scale, seed))
        .collect::<Result<_>>()?;
    let mut header: Vec<String> =
        ["dataset", "model", "share_pct", "scale", "seed"].map(String::from).to_vec();
    header.extend(metric_header(&ds.manifest.class_names));
    header.push("config_hash".into());
    header.push("code_version".into());
    let mut rows = Vec::new();
    for cell in &cells {
        let mut row = vec![
            cell.dataset.clone(),
            cell.model.clone(),
            cell.share_pct.to_string(),
            cell.scale.to_string(),
            cell.seed.to_string(),
        ];
        row.extend(metric_fields(&cell.test));
        row.push(cell.config_hash.clone());
        row.push(cell.code_version.clone());
        rows.push(row);
    }
    let refs: Vec<&CellResult> = cells.iter().collect();
    let mean_row = MetricsRow {
        oa: mean(cells.iter().map(|c| c.test.oa)),
        aa: mean(cells.iter().map(|c| c.test.aa)),
        f1: mean(cells.iter().map(|c| c.test.f1)),
        miou: mean(cells.iter().map(|c| c.test.miou)),
        per_class_acc: mean_per_class(&refs, |c| &c.test),
    };
    let mut row = vec![
        ds.manifest.name.clone(),
        cfg.model.to_string(),
        "100".into(),
        scale.to_string(),
        "mean".into(),
    ];
    row.extend(metric_fields(&mean_row));
    row.push(cfg.hash());
    row.push(code_version().to_string());
    rows.push(row);
    let path = cfg.out_dir.join("results.csv");
    write_csv(&path, &header, &rows)?;
    Ok(path)
}

/// Limited-data sweep over training-image shares.
///
/// Writes `share_sweep.csv` (test aggregates per share and seed plus a mean
/// row per share) and `share_per_class.csv` (per-class accuracy together
/// with the absolute number of training samples backing it). Returns both
/// paths.
pub fn run_share_sweep(cfg: &ExperimentConfig) -> Result<(PathBuf, PathBuf)> {
    cfg.validate()?;
    let ds = load_dataset(&cfg.manifest)?;
    let scale = if cfg.model == ModelKind::HdcMinirocket { cfg.scale } else { 0.0 };
    let mut header: Vec<String> =
        ["dataset", "model", "share_pct", "scale", "seed", "n_train"].map(String::from).to_vec();
    header.extend(metric_header(&ds.manifest.class_names));
    header.push("config_hash".into());
    header.push("code_version".into());
    let mut rows = Vec::new();
    let mut class_rows = Vec::new();
    for &share in &cfg.shares {
        let mut cells = Vec::new();
        for &seed in &cfg.seeds {
            let cell = run_cell_cached(&ds, cfg, share, scale, seed)?;
            let mut row = vec![
                cell.dataset.clone(),
                cell.model.clone(),
                share.to_string(),
                scale.to_string(),
                seed.to_string(),
                cell.n_train().to_string(),
            ];
            row.extend(metric_fields(&cell.test));
            row.push(cell.config_hash.clone());
            row.push(cell.code_version.clone());
            rows.push(row);
            for (c, name) in ds.manifest.class_names.iter().enumerate() {
                class_rows.push(vec![
                    ds.manifest.name.clone(),
                    cfg.model.to_string(),
                    share.to_string(),
                    seed.to_string(),
                    c.to_string(),
                    name.clone(),
                    cell.train_counts[c].to_string(),
                    opt_field(cell.test.per_class_acc[c]),
                ]);
            }
            cells.push(cell);
        }
        let refs: Vec<&CellResult> = cells.iter().collect();
        let mean_row = MetricsRow {
            oa: mean(cells.iter().map(|c| c.test.oa)),
            aa: mean(cells.iter().map(|c| c.test.aa)),
            f1: mean(cells.iter().map(|c| c.test.f1)),
            miou: mean(cells.iter().map(|c| c.test.miou)),
            per_class_acc: mean_per_class(&refs, |c| &c.test),
        };
        let n_train = mean(cells.iter().map(|c| c.n_train() as f64));
        let mut row = vec![
            ds.manifest.name.clone(),
            cfg.model.to_string(),
            share.to_string(),
            scale.to_string(),
            "mean".into(),
            format!("{n_train:.1}"),
        ];
        row.extend(metric_fields(&mean_row));
        row.push(cfg.hash());
        row.push(code_version().to_string());
        rows.push(row);
    }
    let sweep_path = cfg.out_dir.join("share_sweep.csv");
    write_csv(&sweep_path, &header, &rows)?;
    let class_header: Vec<String> =
        ["dataset", "model", "share_pct", "seed", "class_index", "class_name", "train_count", "accuracy"]
            .map(String::from)
            .to_vec();
    let class_path = cfg.out_dir.join("share_per_class.csv");
    write_csv(&class_path, &class_header, &class_rows)?;
    Ok((sweep_path, class_path))
}

/// Scale sweep for the HDC model: every scale is trained at share 50 and
/// scored on the validation split, so the test split plays no part in scale
/// selection.
///
/// Writes `scale_sweep.csv` (validation aggregates per scale and seed plus
/// a mean row per scale) and `scale_argmax.csv` (the best scale per metric).
/// Returns both paths.
pub fn run_scale_sweep(cfg: &ExperimentConfig) -> Result<(PathBuf, PathBuf)> {
    cfg.validate()?;
    if cfg.model != ModelKind::HdcMinirocket {
        return Err(SpectralError::Config(
            "the scale sweep applies only to model hdc-minirocket".into(),
        ));
    }
    let ds = load_dataset(&cfg.manifest)?;
    let mut header: Vec<String> =
        ["dataset", "model", "share_pct", "scale", "seed"].map(String::from).to_vec();
    header.extend(metric_header(&ds.manifest.class_names));
    header.push("config_hash".into());
    header.push("code_version".into());
    let mut rows = Vec::new();
    // Per-scale seed-means of the four aggregates, in scale order.
    let mut scale_means: Vec<(f64, [f64; 4])> = Vec::new();
    for &scale in &cfg.scales {
        let mut cells = Vec::new();
        for &seed in &cfg.seeds {
            let cell = run_cell_cached(&ds, cfg, 50, scale, seed)?;
            let mut row = vec![
                cell.dataset.clone(),
                cell.model.clone(),
                "50".into(),
                scale.to_string(),
                seed.to_string(),
            ];
            row.extend(metric_fields(&cell.val));
            row.push(cell.config_hash.clone());
            row.push(cell.code_version.clone());
            rows.push(row);
            cells.push(cell);
        }
        let refs: Vec<&CellResult> = cells.iter().collect();
        let mean_row = MetricsRow {
            oa: mean(cells.iter().map(|c| c.val.oa)),
            aa: mean(cells.iter().map(|c| c.val.aa)),
            f1: mean(cells.iter().map(|c| c.val.f1)),
            miou: mean(cells.iter().map(|c| c.val.miou)),
            per_class_acc: mean_per_class(&refs, |c| &c.val),
        };
        scale_means.push((scale, [mean_row.oa, mean_row.aa, mean_row.f1, mean_row.miou]));
        let mut row = vec![
            ds.manifest.name.clone(),
            cfg.model.to_string(),
            "50".into(),
            scale.to_string(),
            "mean".into(),
        ];
        row.extend(metric_fields(&mean_row));
        row.push(cfg.hash());
        row.push(code_version().to_string());
        rows.push(row);
    }
    let sweep_path = cfg.out_dir.join("scale_sweep.csv");
    write_csv(&sweep_path, &header, &rows)?;
    let mut argmax_rows = Vec::new();
    for (m, name) in ["oa", "aa", "f1", "miou"].iter().enumerate() {
        let best = scale_means
            .iter()
            .max_by(|a, b| a.1[m].partial_cmp(&b.1[m]).unwrap())
            .unwrap();
        argmax_rows.push(vec![
            name.to_string(),
            best.0.to_string(),
            format!("{:.6}", best.1[m]),
        ]);
    }
    let argmax_path = cfg.out_dir.join("scale_argmax.csv");
    write_csv(
        &argmax_path,
        &["metric".into(), "best_scale".into(), "value".into()],
        &argmax_rows,
    )?;
    Ok((sweep_path, argmax_path))
}
