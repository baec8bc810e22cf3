use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifacts::{write_file, ArtifactManifest};
use super::config::ExperimentConfig;
use super::CliError;
use crate::cascade::{load_tree, CascadeError, CascadeModels};
use crate::dataset::{
    class_distribution, load_manifest, oversample, read_records_csv, regroup_labels, split_with, write_records_csv,
    DatasetError, DatasetSplits, ImageRecord, TaskKind,
};
use crate::loader::{batch_tensor, DiskSource, LoadError};
use crate::metrics::{evaluate as evaluate_scores, EvalReport, Scores, TABLE_METRICS};
use crate::modelkit::{load_checkpoint, save_checkpoint, BackboneName, Classifier, ModelError};
use crate::trainer::{score_records, train as run_training, TrainError};

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Load(e) => e.into(),
            TrainError::Dataset(e) => e.into(),
            TrainError::InvalidConfig(_) => CliError::Config(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::BackboneUnavailable(name) => CliError::Config(format!(
                "backbone `{name}` needs pretrained weights that are not bundled; only `toy` trains natively"
            )),
            ModelError::UnsupportedCombination { .. } | ModelError::InputTooSmall(_) | ModelError::InvalidSpec(_) => {
                CliError::Config(e.to_string())
            }
            ModelError::Checkpoint(_) | ModelError::Io { .. } => CliError::Data(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<CascadeError> for CliError {
    fn from(e: CascadeError) -> Self {
        match e {
            CascadeError::Model(e) => e.into(),
            CascadeError::MissingNodeModel { .. } | CascadeError::File { .. } => CliError::Data(e.to_string()),
            CascadeError::InvalidTree(_) => CliError::Config(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

fn splits_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.paths.output_dir.join("splits")
}

fn disk_source(cfg: &ExperimentConfig) -> DiskSource {
    DiskSource {
        input_size: cfg.backbone.input_size,
        preprocess: cfg.preprocess.enabled.then(|| cfg.preprocess.config.clone()),
        augment: cfg.augment.clone(),
        cache_dir: Some(cfg.cache_dir()),
    }
}

fn read_splits(cfg: &ExperimentConfig) -> Result<DatasetSplits, CliError> {
    let dir = splits_dir(cfg);
    let read = |name: &str| {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(CliError::Data(format!("{} is missing; run `prepare` first", path.display())));
        }
        Ok(read_records_csv(&path, &cfg.paths.image_dir)?)
    };
    Ok(DatasetSplits { train: read("train.csv")?, val: read("val.csv")?, test: read("test.csv")?, seed: cfg.seed })
}

fn labels(records: &[ImageRecord]) -> Result<Vec<usize>, CliError> {
    Ok(records.iter().map(ImageRecord::label).collect::<Result<_, _>>()?)
}

/// Class counts per split; `train_before` is the raw training split,
/// `train_after` the balanced one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub task: TaskKind,
    pub train_before: Vec<usize>,
    pub train_after: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub files: Vec<PathBuf>,
}

impl PrepareSummary {
    pub fn distribution_csv(&self) -> String {
        let mut out = String::from("class,train_before,train_after,val,test\n");
        for c in 0..self.train_before.len() {
            let _ = writeln!(out, "{c},{},{},{},{}", self.train_before[c], self.train_after[c], self.val[c], self.test[c]);
        }
        out
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<PrepareSummary, CliError> {
    let manifest = load_manifest(&cfg.paths.manifest, &cfg.paths.image_dir)?;
    if let Some(r) = manifest.records.iter().find(|r| !r.image_path.is_file()) {
        return Err(CliError::Data(format!("image for `{}` not found at {}", r.id, r.image_path.display())));
    }
    let manifest = regroup_labels(manifest, cfg.task);
    let splits = split_with(&manifest, &cfg.split, cfg.seed)?;
    let k = cfg.task.class_count();
    let balanced = oversample(&splits.train, k, cfg.seed)?;
    let dist = |r: &[ImageRecord]| class_distribution(r, k).map(|d| d.counts);

    let dir = splits_dir(cfg);
    fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for (name, records) in [("train.csv", &balanced), ("val.csv", &splits.val), ("test.csv", &splits.test)] {
        let path = dir.join(name);
        write_records_csv(&path, records)?;
        files.push(path);
    }
    let mut summary = PrepareSummary {
        task: cfg.task,
        train_before: dist(&splits.train)?,
        train_after: dist(&balanced)?,
        val: dist(&splits.val)?,
        test: dist(&splits.test)?,
        files: Vec::new(),
    };
    files.push(write_file(dir.join("class_distribution.csv"), summary.distribution_csv())?);
    ArtifactManifest::record(&cfg.paths.output_dir, &files)?;
    eprint!("{}", summary.distribution_csv());
    summary.files = files;
    Ok(summary)
}

/// Runs preprocessing for every manifest image, filling the cache, and
/// writes an index of cache files with their hashes.
pub fn preprocess(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    if !cfg.preprocess.enabled {
        return Err(CliError::Config("preprocess.enabled is false".into()));
    }
    let manifest = load_manifest(&cfg.paths.manifest, &cfg.paths.image_dir)?;
    let source = disk_source(cfg);
    let rows: Vec<(String, PathBuf)> = manifest
        .records
        .par_iter()
        .map(|r| {
            source.load_original(r)?;
            Ok((r.id.clone(), source.cache_path(&r.id).expect("cache configured")))
        })
        .collect::<Result<_, LoadError>>()?;
    let mut index = String::from("id_code,cache_file,sha256\n");
    for (id, path) in rows {
        let _ = writeln!(index, "{id},{},{}", path.display(), super::artifacts::sha256_file(&path)?);
    }
    let path = write_file(cfg.paths.output_dir.join("preprocess/index.csv"), index)?;
    ArtifactManifest::record(&cfg.paths.output_dir, std::slice::from_ref(&path))?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    /// Relative to the output directory.
    pub checkpoint: PathBuf,
}

fn check_compatible(model: &Classifier, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let want = cfg.model_spec()?;
    let have = model.spec();
    if have.task != want.task
        || have.backbone.name != want.backbone.name
        || have.backbone.input_size != want.backbone.input_size
        || have.head != want.head
    {
        return Err(CliError::Config(format!(
            "checkpoint is a {} {}@{} model, config asks for {} {}@{}",
            have.task, have.backbone.name, have.backbone.input_size, want.task, want.backbone.name, want.backbone.input_size
        )));
    }
    Ok(())
}

pub fn train(cfg: &ExperimentConfig) -> Result<TrainSummary, CliError> {
    let splits = read_splits(cfg)?;
    let train_cfg = cfg.train_config()?;
    let mut model = match &cfg.trainer.resume_from {
        Some(path) => {
            if !path.is_file() {
                return Err(CliError::Data(format!("checkpoint {} not found", path.display())));
            }
            let (model, _) = load_checkpoint(path)?;
            check_compatible(&model, cfg)?;
            model
        }
        None => {
            if cfg.backbone.name != BackboneName::Toy {
                return Err(ModelError::BackboneUnavailable(cfg.backbone.name).into());
            }
            Classifier::new(cfg.model_spec()?, cfg.seed)?
        }
    };

    let out = &cfg.paths.output_dir;
    let log_path = out.join("train_log.jsonl");
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    let file = File::create(&log_path).map_err(|e| CliError::Runtime(format!("{}: {e}", log_path.display())))?;
    let mut log = BufWriter::new(file);
    let mut log_err = None;
    let result = run_training(&mut model, &splits, &disk_source(cfg), &train_cfg, &mut |rec| {
        let line = serde_json::to_string(rec).expect("log record serializes");
        eprintln!("{line}");
        if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(CliError::Runtime(format!("{}: {e}", log_path.display())));
    }

    let (tensors, meta) =
        save_checkpoint(&model, cfg.phase, Some(result.best_epoch), &out.join("checkpoint"), "best")
            .map_err(|e| CliError::Runtime(format!("writing checkpoint: {e}")))?;
    let summary = TrainSummary {
        best_epoch: result.best_epoch,
        best_val_acc: result.best_val_accuracy(),
        epochs_run: result.history.len(),
        stopped_early: result.stopped_early,
        checkpoint: meta.strip_prefix(out).unwrap_or(&meta).to_path_buf(),
    };
    let summary_path = write_file(out.join("train_summary.json"), serde_json::to_string_pretty(&summary).unwrap() + "\n")?;
    ArtifactManifest::record(out, &[log_path, tensors, meta, summary_path])?;
    Ok(summary)
}

/// Writes the report JSON, the metrics table, the confusion matrix and
/// every ROC curve into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<Vec<PathBuf>, CliError> {
    let json = serde_json::to_string_pretty(report).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
    let mut files = vec![
        write_file(dir.join("report.json"), json)?,
        write_file(dir.join("metrics_table.csv"), report.table_csv())?,
        write_file(dir.join("confusion.csv"), report.confusion.to_csv())?,
    ];
    for (c, curve) in report.roc.per_class.iter().enumerate() {
        if let Some(curve) = curve {
            files.push(write_file(dir.join(format!("roc_class_{c}.csv")), curve.to_csv())?);
        }
    }
    files.push(write_file(dir.join("roc_micro.csv"), report.roc.micro.to_csv())?);
    files.push(write_file(dir.join("roc_macro.csv"), report.roc.macro_average.to_csv())?);
    Ok(files)
}

pub fn evaluate(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<EvalReport, CliError> {
    let default_ckpt = cfg.paths.output_dir.join("checkpoint/best.json");
    let ckpt = checkpoint.unwrap_or(&default_ckpt);
    if !ckpt.is_file() {
        return Err(CliError::Data(format!("checkpoint {} not found", ckpt.display())));
    }
    let (model, _) = load_checkpoint(ckpt)?;
    check_compatible(&model, cfg)?;
    let test = read_splits(cfg)?.test;
    let scores = score_records(&model, &disk_source(cfg), &test, cfg.trainer.batch_size)?;
    let report = evaluate_scores(&scores, &labels(&test)?, cfg.task).map_err(|e| CliError::Data(e.to_string()))?;
    let files = write_report(&cfg.paths.output_dir.join("eval"), &report)?;
    ArtifactManifest::record(&cfg.paths.output_dir, &files)?;
    Ok(report)
}

pub fn cascade(cfg: &ExperimentConfig, cascade_file: &Path) -> Result<EvalReport, CliError> {
    let tree = load_tree(cascade_file)?;
    let base = cascade_file.parent().unwrap_or(Path::new("."));
    let models = CascadeModels::load(tree, base)?;
    for (id, m) in &models.models {
        if m.spec().backbone.input_size != cfg.backbone.input_size {
            return Err(CliError::Config(format!(
                "node `{id}` expects {}px input, config uses {}px",
                m.spec().backbone.input_size,
                cfg.backbone.input_size
            )));
        }
    }
    let test = read_splits(cfg)?.test;
    let source = disk_source(cfg);
    let mut rows = Vec::with_capacity(test.len());
    for chunk in test.chunks(cfg.trainer.batch_size) {
        let refs: Vec<&ImageRecord> = chunk.iter().collect();
        rows.extend(models.predict_proba(&batch_tensor(&source, &refs, cfg.backbone.input_size)?)?);
    }
    let grades: Vec<usize> = test.iter().map(|r| r.grade.value() as usize).collect();
    let report =
        evaluate_scores(&Scores::Multiclass(rows), &grades, TaskKind::Five).map_err(|e| CliError::Data(e.to_string()))?;
    let files = write_report(&cfg.paths.output_dir.join("cascade"), &report)?;
    ArtifactManifest::record(&cfg.paths.output_dir, &files)?;
    Ok(report)
}

/// Published binary-task figures for ResNet50 trained with Adam, in table
/// order.
pub const REFERENCE_BINARY_RESNET50_ADAM: [f64; 6] = [0.9659, 0.97, 0.97, 0.99, 0.99, 0.9659];

/// The metrics table of the last `evaluate` run, optionally beside the
/// reference figures and the difference.
pub fn report(cfg: &ExperimentConfig, reference: bool) -> Result<String, CliError> {
    let path = cfg.paths.output_dir.join("eval/report.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Data(format!("{}: {e}; run `evaluate` first", path.display())))?;
    let report: EvalReport =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out = String::new();
    let _ = writeln!(out, "task: {}, test samples: {}", report.task, report.samples);
    if reference {
        let _ = writeln!(out, "{:<20} {:>8} {:>10} {:>8}", "Metric", "Ours", "Reference", "Delta");
    } else {
        let _ = writeln!(out, "{:<20} {:>8}", "Metric", "Value");
    }
    for (i, (name, v)) in report.table_rows().into_iter().enumerate() {
        debug_assert_eq!(name, TABLE_METRICS[i]);
        if reference {
            let r = REFERENCE_BINARY_RESNET50_ADAM[i];
            let _ = writeln!(out, "{name:<20} {v:>8.4} {r:>10.4} {:>+8.4}", v - r);
        } else {
            let _ = writeln!(out, "{name:<20} {v:>8.4}");
        }
    }
    if reference && report.task != TaskKind::Binary {
        out.push_str("note: the reference figures are for the binary task\n");
    }
    for flag in &report.flags {
        let _ = writeln!(out, "note: {flag}");
    }
    Ok(out)
}
