//! Command-line front end for the per-pixel hyperspectral classification
//! toolkit.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use spectral::data::{epoch_batches, Split};
use spectral::harness::{
    atomic_write, bench_inference, ingest, load_dataset, run_full_eval, run_scale_sweep,
    run_share_sweep, train_cell, write_report, ExperimentConfig, ModelKind, TrainedModel,
};
use spectral::liunet::LiuNetParams;
use spectral::rocket::FittedTransform;
use spectral::training::{evaluate, LabeledVectors, LinearHead, LiuNetModel};
use spectral::{Result, SpectralError};

#[derive(Parser)]
#[command(name = "spectral", version, about = "Per-pixel hyperspectral classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit training-split normalization bounds and persist them in the manifest.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Fit a feature transform on the first training batch and save it.
    FitTransform {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train one model and save its checkpoint plus the epoch log.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate a saved checkpoint on one split.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Model checkpoint: a CNN checkpoint, or a head checkpoint together
        /// with `--transform`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Fitted transform file; its stored scale decides between plain and
        /// positional-encoded features.
        #[arg(long)]
        transform: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Limited-data sweep over training-image shares.
    SweepShare {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Positional-encoding scale sweep (validation-selected).
    SweepScale {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Measure inference throughput on a synthetic workload.
    Bench {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 25)]
        bands: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 10_000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-class difference table and share curves for two result directories.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        /// Result directory of the first model.
        #[arg(long)]
        a: PathBuf,
        /// Result directory of the second model.
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Experiment parameters: an optional JSON config file, overridden by flags.
#[derive(Args)]
struct RunArgs {
    /// JSON file holding an experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// liunet, minirocket or hdc-minirocket.
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated share percents.
    #[arg(long, value_delimiter = ',')]
    shares: Option<Vec<u32>>,
    /// Comma-separated encoding scales.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Encoding scale for single-scale runs.
    #[arg(long)]
    scale: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reuse persisted cell results instead of retraining.
    #[arg(long)]
    resume: bool,
    /// Standardize transform features with training statistics.
    #[arg(long)]
    standardize_features: bool,
    /// Cap the number of samples consumed by bias fitting.
    #[arg(long)]
    bias_fit_samples: Option<usize>,
}

impl RunArgs {
    fn into_config(self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => {
                let manifest = self.manifest.clone().ok_or_else(|| {
                    SpectralError::Config("--manifest is required without --config".into())
                })?;
                let model = self.model.clone().ok_or_else(|| {
                    SpectralError::Config("--model is required without --config".into())
                })?;
                let out_dir = self.out.clone().ok_or_else(|| {
                    SpectralError::Config("--out is required without --config".into())
                })?;
                serde_json::from_value(serde_json::json!({
                    "manifest": manifest,
                    "model": model.parse::<ModelKind>()?,
                    "out_dir": out_dir,
                }))?
            }
        };
        if let Some(m) = self.manifest {
            cfg.manifest = m;
        }
        if let Some(m) = self.model {
            cfg.model = m.parse()?;
        }
        if let Some(s) = self.shares {
            cfg.shares = s;
        }
        if let Some(s) = self.scales {
            cfg.scales = s;
        }
        if let Some(s) = self.seeds {
            cfg.seeds = s;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(lr) = self.lr {
            cfg.learning_rate = Some(lr);
        }
        if let Some(s) = self.scale {
            cfg.scale = s;
        }
        if let Some(o) = self.out {
            cfg.out_dir = o;
        }
        cfg.resume |= self.resume;
        cfg.standardize_features |= self.standardize_features;
        if let Some(n) = self.bias_fit_samples {
            cfg.bias_fit_samples = Some(n);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(SpectralError::Config(format!("unknown split '{other}'"))),
    }
}

fn cmd_fit_transform(cfg: &ExperimentConfig) -> Result<()> {
    let ds = load_dataset(&cfg.manifest)?;
    let seed = cfg.seeds[0];
    let scale = if cfg.model == ModelKind::HdcMinirocket { cfg.scale } else { 0.0 };
    let batch = epoch_batches(ds.train.len(), cfg.batch_size, seed, 0, true)
        .into_iter()
        .next()
        .unwrap();
    let spectra: Vec<Vec<f32>> = batch.iter().map(|&i| ds.train[i].spectrum.clone()).collect();
    let fitted = FittedTransform::fit(&spectra, scale, seed)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join(format!("transform_seed{seed}.bin"));
    fitted.save(&path)?;
    println!(
        "fitted transform on {} samples (scale {scale}, seed {seed}) -> {}",
        spectra.len(),
        path.display()
    );
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    let ds = load_dataset(&cfg.manifest)?;
    let seed = cfg.seeds[0];
    let scale = if cfg.model == ModelKind::HdcMinirocket { cfg.scale } else { 0.0 };
    let (cell, trained) = train_cell(&ds, cfg, 100, scale, seed)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    match &trained {
        TrainedModel::Liunet(model) => {
            let path = cfg.out_dir.join(format!("liunet_seed{seed}.ckpt"));
            model.params.save(&path)?;
            println!("checkpoint -> {}", path.display());
        }
        TrainedModel::Head { fitted, head } => {
            let tpath = cfg.out_dir.join(format!("transform_seed{seed}.bin"));
            let hpath = cfg.out_dir.join(format!("head_seed{seed}.ckpt"));
            fitted.save(&tpath)?;
            head.save(&hpath)?;
            println!("transform -> {}", tpath.display());
            println!("checkpoint -> {}", hpath.display());
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "train_loss", "val_oa", "val_miou"])?;
    for e in &cell.epochs {
        w.write_record([
            e.epoch.to_string(),
            format!("{:.6}", e.train_loss),
            format!("{:.6}", e.val_oa),
            format!("{:.6}", e.val_miou),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| SpectralError::Format(e.to_string()))?;
    let log_path = cfg.out_dir.join(format!("epoch_log_seed{seed}.csv"));
    atomic_write(&log_path, &bytes)?;
    let cell_path = cfg.out_dir.join(format!("result_seed{seed}.json"));
    atomic_write(&cell_path, serde_json::to_string_pretty(&cell)?.as_bytes())?;
    println!(
        "best epoch {} | test OA {:.4} AA {:.4} F1 {:.4} mIoU {:.4}",
        cell.best_epoch, cell.test.oa, cell.test.aa, cell.test.f1, cell.test.miou
    );
    Ok(())
}

fn cmd_eval(
    manifest: &Path,
    checkpoint: &Path,
    transform: Option<&Path>,
    split: &str,
) -> Result<()> {
    let ds = load_dataset(manifest)?;
    let split = parse_split(split)?;
    let samples = match split {
        Split::Train => &ds.train,
        Split::Val => &ds.val,
        Split::Test => &ds.test,
    };
    let classes = ds.manifest.class_count;
    let cm = match transform {
        None => {
            let model = LiuNetModel { params: LiuNetParams::load(checkpoint)? };
            let mut data = LabeledVectors::default();
            for s in samples {
                data.push(s.spectrum.clone(), s.label);
            }
            evaluate(&model, &data, classes)?
        }
        Some(tpath) => {
            let fitted = FittedTransform::load(tpath)?;
            let head = LinearHead::load(checkpoint)?;
            let hdc = fitted.scale > 0.0;
            let mut data = LabeledVectors::default();
            for s in samples {
                let f =
                    if hdc { fitted.hdc_transform(&s.spectrum)? } else { fitted.transform(&s.spectrum)? };
                data.push(f.iter().map(|&v| v as f32).collect(), s.label);
            }
            evaluate(&head, &data, classes)?
        }
    };
    let summary = cm.summary()?;
    println!(
        "{split}: OA {:.4} AA {:.4} F1 {:.4} mIoU {:.4} ({} samples)",
        summary.oa,
        summary.aa,
        summary.f1,
        summary.miou,
        samples.len()
    );
    for (name, acc) in ds.manifest.class_names.iter().zip(&summary.per_class_acc) {
        match acc {
            Some(a) => println!("  {name}: {a:.4}"),
            None => println!("  {name}: absent"),
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { manifest } => {
            let m = ingest(&manifest)?;
            println!("ingested {}: {} images, {} bands", m.name, m.images.len(), m.band_count);
            Ok(())
        }
        Command::FitTransform { run } => cmd_fit_transform(&run.into_config()?),
        Command::Train { run } => cmd_train(&run.into_config()?),
        Command::Eval { manifest, checkpoint, transform, split } => {
            cmd_eval(&manifest, &checkpoint, transform.as_deref(), &split)
        }
        Command::SweepShare { run } => {
            let cfg = run.into_config()?;
            let (sweep, per_class) = run_share_sweep(&cfg)?;
            let results = run_full_eval(&cfg)?;
            println!("share sweep -> {}", sweep.display());
            println!("per-class -> {}", per_class.display());
            println!("full-data results -> {}", results.display());
            Ok(())
        }
        Command::SweepScale { run } => {
            let cfg = run.into_config()?;
            let (sweep, argmax) = run_scale_sweep(&cfg)?;
            println!("scale sweep -> {}", sweep.display());
            println!("best scales -> {}", argmax.display());
            Ok(())
        }
        Command::Bench { model, bands, classes, count, seed, out } => {
            let result = bench_inference(model.parse()?, bands, classes, count, seed)?;
            println!(
                "{}: {:.0} spectra/s single, {:.0} spectra/s on {} workers ({})",
                result.model,
                result.spectra_per_sec_single,
                result.spectra_per_sec_multi,
                result.workers,
                result.machine
            );
            if let Some(path) = out {
                atomic_write(&path, serde_json::to_string_pretty(&result)?.as_bytes())?;
                info!("bench result -> {}", path.display());
            }
            Ok(())
        }
        Command::Report { manifest, a, b, out } => {
            let ds = spectral::data::DatasetManifest::load(&manifest)?;
            let (diff, svg) = write_report(&out, &a, &b, &ds.class_names)?;
            println!("difference table -> {}", diff.display());
            println!("share curves -> {}", svg.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
