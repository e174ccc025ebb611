use std::fs;
use std::path::{Path, PathBuf};

use leafnet::data::{encode_png, scan_dataset, split_dataset, Dataset, DatasetManifest, ImagePipeline, Provenance};
use leafnet::metrics::METRICS_CSV_HEADER;
use leafnet::model::{
    epochs_to_csv, evaluate, parse_epoch_csv, predict, Checkpoint, ModelSpec, Trainer, TrainingConfig,
};
use leafnet::optim::OptimizerConfig;
use leafnet::{Precision, Real};

use crate::args::{EvaluateArgs, PredictArgs, PrepareArgs, ReportArgs, TrainArgs};
use crate::config::CliConfig;
use crate::error::{CliError, Result};
use crate::report::{self, Run};

const EVAL_BATCH: usize = 32;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    DatasetManifest::load(path).map_err(|e| CliError::file(path, e))
}

fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    Checkpoint::load(path).map_err(|e| CliError::file(path, e))
}

pub fn prepare(mut cfg: CliConfig, args: &PrepareArgs) -> Result<()> {
    cfg.apply_prepare(args);
    let root = cfg
        .dataset_root
        .clone()
        .ok_or_else(|| CliError::usage("prepare needs a dataset root (argument or `dataset_root` in the config)"))?;
    let root = root
        .canonicalize()
        .map_err(|e| CliError::file(&root, leafnet::Error::Layout(e.to_string())))?;
    let (names, originals) = scan_dataset(&root).map_err(|e| CliError::file(&root, e))?;
    let manifest = split_dataset(names, &originals, &cfg.ratios, cfg.seed, cfg.augment)?;

    let path = cfg.out.join("manifest.json");
    write(&path, manifest.to_json()?)?;

    println!(
        "{:<24} {:>7} {:>9} {:>5} {:>5}",
        "class", "train", "train_aug", "val", "test"
    );
    let (mut tr, mut aug, mut va, mut te) = (0, 0, 0, 0);
    for c in manifest.class_counts() {
        println!(
            "{:<24} {:>7} {:>9} {:>5} {:>5}",
            c.class, c.train_originals, c.train_augmented, c.val, c.test
        );
        tr += c.train_originals;
        aug += c.train_augmented;
        va += c.val;
        te += c.test;
    }
    println!("{:<24} {tr:>7} {aug:>9} {va:>5} {te:>5}", "total");
    println!("wrote {}", path.display());

    if args.export_augmented {
        let pipeline = ImagePipeline::new(cfg.image_size).with_cache(true);
        let dir = cfg.out.join("augmented");
        let mut written = 0;
        for r in manifest.records.iter().filter(|r| r.provenance != Provenance::Original) {
            let img = pipeline.load(r).map_err(|e| CliError::file(&r.path, e))?;
            let stem = r.path.file_stem().unwrap_or_default().to_string_lossy();
            let class_dir = dir.join(&manifest.class_names[r.label]);
            fs::create_dir_all(&class_dir).map_err(|e| CliError::io(&class_dir, e))?;
            let target = class_dir.join(format!("{stem}_{}.png", r.provenance.name()));
            encode_png(&img, &target).map_err(|e| CliError::file(&target, e))?;
            written += 1;
        }
        println!("wrote {written} augmented images under {}", dir.display());
    }
    Ok(())
}

pub fn train(mut cfg: CliConfig, args: &TrainArgs) -> Result<()> {
    cfg.apply_train(args);
    match cfg.precision {
        Precision::F32 => train_as::<f32>(&cfg, args.resume.as_deref()),
        Precision::F64 => train_as::<f64>(&cfg, args.resume.as_deref()),
    }
}

fn train_as<T: Real>(cfg: &CliConfig, resume: Option<&Path>) -> Result<()> {
    let manifest_path = cfg.manifest_path();
    let manifest = load_manifest(&manifest_path)?;
    let class_names = manifest.class_names.clone();

    let mut trainer: Trainer<T> = match resume {
        Some(path) => {
            let ck = load_checkpoint::<T>(path)?;
            ck.check_manifest(&manifest)?;
            let done = ck.epoch();
            let t = ck.into_trainer(cfg.epochs)?;
            println!("resumed {} after epoch {done}", path.display());
            t
        }
        None => {
            let mut optimizer = OptimizerConfig::new(cfg.optimizer);
            if let Some(lr) = cfg.learning_rate {
                optimizer = optimizer.with_learning_rate(lr);
            }
            let config = TrainingConfig {
                optimizer,
                batch_size: cfg.batch_size,
                max_epochs: cfg.epochs,
                seed: cfg.seed,
                precision: cfg.precision,
                track_best_validation: cfg.track_best,
                record_timing: cfg.timing,
            };
            let spec = ModelSpec::stack(
                cfg.image_size,
                &cfg.conv_filters,
                cfg.dense_units,
                cfg.dropout,
                manifest.num_classes(),
            )
            .with_padding(cfg.padding);
            spec.validate()?;
            Trainer::new(spec, config)?
        }
    };

    let [size, _, _] = trainer.network.spec().input_shape;
    let dataset = Dataset::new(manifest, ImagePipeline::new(size).with_cache(cfg.cache_images))
        .map_err(|e| CliError::file(&manifest_path, e))?;
    let c = &trainer.config;
    println!(
        "{} parameters, optimizer {} (lr {}), batch {}, seed {}",
        trainer.network.param_count(),
        c.optimizer.family,
        c.optimizer.learning_rate,
        c.batch_size,
        c.seed
    );

    let log = cfg.out.join("epochs.csv");
    let final_path = cfg.out.join("final.lfnt");
    let best_path = cfg.out.join("best.lfnt");
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    let save_err = |path: &Path| {
        let path = path.to_path_buf();
        move |e| CliError::file(&path, e)
    };
    for epoch in trainer.epochs_done() + 1..=trainer.config.max_epochs {
        let m = trainer.run_epoch(&dataset, epoch)?;
        println!(
            "epoch {:>3}  train_loss {:.4}  train_acc {:.4}  val_loss {:.4}  val_acc {:.4}",
            m.epoch, m.train_loss, m.train_accuracy, m.val_loss, m.val_accuracy
        );
        write(&log, epochs_to_csv(&trainer.history))?;
        Checkpoint::from_trainer(&trainer, &class_names)
            .save(&final_path)
            .map_err(save_err(&final_path))?;
        if trainer.best.as_ref().is_some_and(|b| b.epoch == epoch) {
            if let Some(ck) = Checkpoint::best_of(&trainer, &class_names) {
                ck.save(&best_path).map_err(save_err(&best_path))?;
            }
        }
    }
    if let Some(b) = &trainer.best {
        println!(
            "best val_acc {:.4} at epoch {} -> {}",
            b.val_accuracy,
            b.epoch,
            best_path.display()
        );
    }
    println!("wrote {} and {}", log.display(), final_path.display());
    Ok(())
}

/// Directory holding the class folders of a manifest.
fn dataset_name(manifest: &DatasetManifest) -> String {
    manifest
        .records
        .first()
        .and_then(|r| r.path.parent()?.parent()?.file_name())
        .map(|n| n.to_string_lossy().replace(',', "_"))
        .unwrap_or_else(|| "dataset".into())
}

pub fn evaluate_cmd(cfg: CliConfig, args: &EvaluateArgs) -> Result<()> {
    let manifest_path = args.manifest.clone().unwrap_or_else(|| cfg.manifest_path());
    let manifest = load_manifest(&manifest_path)?;
    let ck = load_checkpoint::<f32>(&args.checkpoint)?;
    ck.check_manifest(&manifest)?;
    let name = args.name.clone().unwrap_or_else(|| dataset_name(&manifest));
    let [size, _, _] = ck.network.spec().input_shape;
    let dataset = Dataset::new(manifest, ImagePipeline::new(size))?;
    let eval = evaluate(&ck.network, &dataset, args.split, EVAL_BATCH)?;

    let metrics = format!(
        "{METRICS_CSV_HEADER}\n{}\n",
        eval.report.csv_row(&name, args.split.name())
    );
    let metrics_path = cfg.out.join("metrics.csv");
    let confusion_path = cfg.out.join("confusion.csv");
    write(&metrics_path, &metrics)?;
    write(&confusion_path, eval.confusion.to_csv())?;
    print!("{metrics}");
    println!("loss {:.6} over {} images", eval.loss, eval.predictions.len());
    println!("wrote {} and {}", metrics_path.display(), confusion_path.display());
    Ok(())
}

pub fn predict_cmd(args: &PredictArgs) -> Result<()> {
    if args.top == 0 {
        return Err(CliError::usage("--top must be at least 1"));
    }
    let ck = load_checkpoint::<f32>(&args.checkpoint)?;
    let [size, _, _] = ck.network.spec().input_shape;
    let pipeline = ImagePipeline::new(size);
    let k = args.top.min(ck.class_names.len());
    let mut failed = 0;
    for path in &args.images {
        match predict(&ck.network, &pipeline, path, &ck.class_names) {
            Ok(ranked) => {
                println!("{}", path.display());
                for (rank, (class, p)) in ranked.iter().take(k).enumerate() {
                    println!("  {}. {class}\t{p:.8}", rank + 1);
                }
            }
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                failed += 1;
            }
        }
    }
    if failed == args.images.len() {
        return Err(CliError::Core(leafnet::Error::Empty(format!(
            "predictions: all {failed} images failed"
        ))));
    }
    Ok(())
}

fn run_name(path: &Path, all: &[PathBuf]) -> String {
    let stem = path.file_stem().unwrap_or_default();
    let clash = all.iter().filter(|p| p.file_stem() == Some(stem)).count() > 1;
    if clash {
        path.display().to_string()
    } else {
        stem.to_string_lossy().into_owned()
    }
}

pub fn report_cmd(cfg: CliConfig, args: &ReportArgs) -> Result<()> {
    let mut runs = Vec::with_capacity(args.logs.len());
    for path in &args.logs {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let rows = parse_epoch_csv(&text).map_err(|e| CliError::file(path, e))?;
        runs.push(Run {
            name: run_name(path, &args.logs),
            rows,
        });
    }
    let svg_path = cfg.out.join("report.svg");
    write(&svg_path, report::render_svg(&runs))?;
    print!("{}", report::summary(&runs));
    println!("wrote {}", svg_path.display());
    Ok(())
}
