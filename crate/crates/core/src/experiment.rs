//! File-level experiment commands: generate a dataset, train, evaluate,
//! draw barcodes and run ablation sweeps. Each command writes its resolved
//! configuration next to its outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::model::SegmentationModel;
use crate::pipeline::{
    evaluate, nearest_prototype_baseline, permuted_label_baseline, train, write_predictions, EvalOutput, Predictor,
    TrainOutcome, TrainStart,
};
use crate::plot::{barcode_svg, BarcodeStyle};
use crate::synthdata::{generate, read_dataset, read_labels, write_dataset, Split, SyntheticDataset};

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn metrics_csv(rows: &[(String, MetricReport)]) -> String {
    let mut out = format!("{}\n", MetricReport::CSV_HEADER);
    for (name, r) in rows {
        out.push_str(&r.csv_row(name));
        out.push('\n');
    }
    out
}

pub fn cmd_generate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let ds = generate(&cfg.data)?;
    write_dataset(out_dir, &ds)?;
    cfg.echo(out_dir)?;
    Ok(ds)
}

fn load_data(data_dir: &Path) -> Result<SyntheticDataset> {
    if !data_dir.is_dir() {
        return Err(Error::Validation(format!("data directory {} does not exist", data_dir.display())));
    }
    read_dataset(data_dir)
}

/// Trains from scratch, or continues from `resume`, and writes
/// `model.ckpt`, `train.log` and `config.toml` into `out_dir`.
pub fn cmd_train(cfg: &ExperimentConfig, data_dir: &Path, out_dir: &Path, resume: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let ds = load_data(data_dir)?;
    let schedule = cfg.schedule.build()?;
    let start = match resume {
        Some(path) => TrainStart::Resume(Checkpoint::load(path)?),
        None => TrainStart::Fresh(SegmentationModel::new(cfg.model.clone())?),
    };
    cfg.echo(out_dir)?;
    train(&ds, start, &cfg.train, &schedule, Some(out_dir))
}

/// Where evaluation gets its predictions from.
pub enum EvalSource<'a> {
    Checkpoint(&'a Path),
    Model(&'a SegmentationModel),
    Oracle,
}

/// Evaluates the test split. Writes `metrics.csv`, per-video predictions
/// under `predictions/`, barcodes under `plots/`, `baselines.csv` and
/// `config.toml`.
pub fn cmd_eval(cfg: &ExperimentConfig, source: EvalSource<'_>, data_dir: &Path, out_dir: &Path) -> Result<EvalOutput> {
    cfg.validate()?;
    let ds = load_data(data_dir)?;
    eval_dataset(cfg, source, &ds, out_dir)
}

pub fn eval_dataset(cfg: &ExperimentConfig, source: EvalSource<'_>, ds: &SyntheticDataset, out_dir: &Path) -> Result<EvalOutput> {
    let schedule = cfg.schedule.build()?;
    let loaded;
    let predictor = match source {
        EvalSource::Checkpoint(path) => {
            loaded = Checkpoint::load(path)?.into_model()?;
            Predictor::Model(&loaded)
        }
        EvalSource::Model(m) => Predictor::Model(m),
        EvalSource::Oracle => Predictor::Oracle,
    };
    let test = ds.split(Split::Test);
    if test.is_empty() {
        return Err(Error::Validation("dataset has no test videos".into()));
    }
    let out = evaluate(&test, ds.num_classes(), predictor, &schedule, &cfg.eval)?;
    cfg.echo(out_dir)?;
    write_file(&out_dir.join("metrics.csv"), &metrics_csv(&[("test".into(), out.report)]))?;
    write_predictions(&out_dir.join("predictions"), &out.predictions, &ds.class_names)?;
    for p in &out.predictions {
        write_file(&out_dir.join("plots").join(format!("{}.svg", p.id)), &prediction_svg(p)?)?;
    }

    let train_split = ds.split(Split::Train);
    let mut baselines = vec![("permuted_label".to_string(), permuted_label_baseline(&test, cfg.eval.seed, &cfg.eval.metrics)?)];
    if !train_split.is_empty() {
        baselines.insert(
            0,
            (
                "nearest_prototype".to_string(),
                nearest_prototype_baseline(&train_split, &test, ds.num_classes(), &cfg.eval.metrics)?,
            ),
        );
    }
    write_file(&out_dir.join("baselines.csv"), &metrics_csv(&baselines))?;
    Ok(out)
}

/// Renders label files (ground-truth format) as stacked barcodes. Row
/// titles are the file stems.
pub fn cmd_plot(label_files: &[PathBuf], mapping: &Path, out_svg: &Path) -> Result<()> {
    let text = fs::read_to_string(mapping).map_err(|e| Error::io(mapping, e))?;
    let index: std::collections::HashMap<String, usize> = text
        .lines()
        .filter_map(|l| l.trim().split_once(char::is_whitespace))
        .filter_map(|(i, n)| i.parse().ok().map(|i| (n.trim().to_string(), i)))
        .collect();
    let mut rows = Vec::with_capacity(label_files.len());
    for path in label_files {
        let title = path
            .parent()
            .and_then(|p| p.file_name())
            .map(|p| format!("{}/", p.to_string_lossy()))
            .unwrap_or_default()
            + &path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        rows.push((title.clone(), read_labels(path, &index, &title)?));
    }
    write_file(out_svg, &barcode_svg(&rows, &BarcodeStyle::default())?)
}

/// Barcode of ground truth over prediction for one evaluated video, with
/// the trajectory rows between them when they were kept.
pub fn prediction_svg(pred: &crate::pipeline::VideoPrediction) -> Result<String> {
    let mut rows = vec![("ground truth".to_string(), pred.ground_truth.clone())];
    for (step, labels) in &pred.trajectory {
        rows.push((format!("s={step}"), labels.clone()));
    }
    rows.push(("prediction".to_string(), pred.labels.clone()));
    barcode_svg(&rows, &BarcodeStyle::default())
}

/// Variants enumerated by a sweep; each non-empty list produces one
/// subdirectory per entry.
#[derive(Clone, Debug, Default)]
pub struct SweepPlan {
    /// Training mask sets, e.g. `["N", "NP", "NPBR"]`.
    pub train_masks: Vec<String>,
    /// Inference step counts, e.g. `[1, 8, 25]`.
    pub steps: Vec<usize>,
    /// Inference masks, e.g. `["N", "P", "B", "R"]`.
    pub infer_masks: Vec<String>,
}

/// Trains one model per training mask set, then evaluates each under every
/// step count and inference mask. Writes `summary.csv` with one row per
/// evaluation named `masks=<set>/steps=<n>/infer=<kind>`.
pub fn cmd_sweep(cfg: &ExperimentConfig, plan: &SweepPlan, data_dir: &Path, out_dir: &Path) -> Result<Vec<(String, MetricReport)>> {
    cfg.validate()?;
    let ds = load_data(data_dir)?;
    let train_masks = if plan.train_masks.is_empty() { vec![cfg.train.masks.clone()] } else { plan.train_masks.clone() };
    let steps = if plan.steps.is_empty() { vec![cfg.eval.steps] } else { plan.steps.clone() };
    let infer = if plan.infer_masks.is_empty() { vec![cfg.eval.mask.clone()] } else { plan.infer_masks.clone() };
    let schedule = cfg.schedule.build()?;
    let mut rows = Vec::new();
    for masks in &train_masks {
        let mut variant = cfg.clone();
        variant.train.masks = masks.clone();
        variant.validate()?;
        let train_dir = out_dir.join(format!("masks={masks}"));
        variant.echo(&train_dir)?;
        let model = SegmentationModel::new(variant.model.clone())?;
        let outcome = train(&ds, TrainStart::Fresh(model), &variant.train, &schedule, Some(&train_dir))?;
        for &n in &steps {
            for kind in &infer {
                let mut ev = variant.clone();
                ev.eval.steps = n;
                ev.eval.mask = kind.clone();
                ev.validate()?;
                let name = format!("masks={masks}/steps={n}/infer={kind}");
                let out = eval_dataset(&ev, EvalSource::Model(&outcome.model), &ds, &out_dir.join(&name))?;
                rows.push((name, out.report));
            }
        }
    }
    write_file(&out_dir.join("summary.csv"), &metrics_csv(&rows))?;
    Ok(rows)
}

/// Human-readable one-line-per-row rendering of a summary.
pub fn summary_table(rows: &[(String, MetricReport)]) -> String {
    let mut out = String::new();
    for (name, r) in rows {
        let _ = writeln!(out, "{name:<36} {r}");
    }
    out
}
