//! Training loop (corrupt → mask → denoise → loss → optimizer step) and
//! batched inference with evaluation.

use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, TrainState};
use crate::diffusion::{forward_corrupt, run_inference, Denoiser, OracleDenoiser};
use crate::error::{Error, Result};
use crate::losses::{loss_sum, LossBreakdown, LossWeights};
use crate::masking::{hard_boundaries, make_mask, sample_mask_kind, soften_boundaries, MaskKind};
use crate::metrics::{MetricAccumulator, MetricOptions, MetricReport};
use crate::model::SegmentationModel;
use crate::numerics::{Graph, Matrix};
use crate::schedule::{to_diffusion_space, NoiseSchedule, SkipTrajectory};
use crate::seed;
use crate::synthdata::{write_labels, SyntheticDataset, Video};

// stream tags for seed derivation
const EPOCH_ORDER: u64 = 0x01;
const SAMPLE: u64 = 0x02;
const MASK_AT_INFERENCE: u64 = 0x03;
const PERMUTED: u64 = 0x04;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Enabled condition-mask kinds, e.g. `"NPBR"` or `"N"`.
    pub masks: String,
    /// Standard deviation of the Gaussian that softens boundaries.
    pub boundary_std: f64,
    pub loss: LossWeights,
    /// Save a numbered checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Include elapsed wall-clock time in the log stream.
    pub log_wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 4,
            learning_rate: 1e-3,
            adam: AdamConfig::default(),
            seed: 0,
            masks: "NPBR".into(),
            boundary_std: 2.0,
            loss: LossWeights::default(),
            checkpoint_every: 0,
            log_wall_clock: true,
        }
    }
}

impl TrainConfig {
    pub fn mask_kinds(&self) -> Result<Vec<MaskKind>> {
        MaskKind::parse_set(&self.masks)
            .map_err(|e| Error::Config(format!("train.masks: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("train.learning_rate must be finite and >= 0".into()));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::Config("train.adam needs betas in [0, 1) and eps > 0".into()));
        }
        if !(self.boundary_std > 0.0 && self.boundary_std.is_finite()) {
            return Err(Error::Config("train.boundary_std must be > 0".into()));
        }
        self.mask_kinds()?;
        self.loss.validate()
    }
}

/// First-order adaptive-moment optimizer with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub learning_rate: f64,
    pub t: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl Adam {
    pub fn new(config: AdamConfig, learning_rate: f64, params: &[Matrix]) -> Self {
        let zeros: Vec<Matrix> = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self {
            config,
            learning_rate,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix]) {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let lr = self.learning_rate;
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let iter = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((p, &g), (m, v)) in iter {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

/// One optimizer step.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainLogRecord {
    pub iteration: u64,
    pub epoch: usize,
    /// Batch means.
    pub loss: LossBreakdown,
    pub steps: Vec<usize>,
    pub masks: Vec<MaskKind>,
    pub wall_ms: Option<f64>,
}

impl TrainLogRecord {
    /// `key=value` pairs separated by single spaces; list values are
    /// comma-joined. Keys in order: `iter epoch total ce smooth boundary
    /// aux_ce aux_smooth s mask`, then `wall_ms` when timing is recorded.
    pub fn to_line(&self) -> String {
        let l = &self.loss;
        let steps: Vec<String> = self.steps.iter().map(|s| s.to_string()).collect();
        let masks: Vec<String> = self.masks.iter().map(|m| m.to_string()).collect();
        let mut line = format!(
            "iter={} epoch={} total={:.9e} ce={:.9e} smooth={:.9e} boundary={:.9e} aux_ce={:.9e} aux_smooth={:.9e} s={} mask={}",
            self.iteration,
            self.epoch,
            l.total,
            l.ce,
            l.smooth,
            l.boundary,
            l.aux_ce,
            l.aux_smooth,
            steps.join(","),
            masks.join(",")
        );
        if let Some(ms) = self.wall_ms {
            let _ = write!(line, " wall_ms={ms:.1}");
        }
        line
    }
}

/// Splits a log line into its `(key, value)` pairs.
pub fn parse_log_line(line: &str) -> Result<Vec<(String, String)>> {
    line.split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Validation(format!("log field {kv:?} lacks '='")))
        })
        .collect()
}

/// Trains one batch and applies one optimizer update on the mean loss.
///
/// Every random choice of sample `j` comes from a stream keyed by
/// `(seed, iteration, j)`.
pub fn train_step(
    model: &mut SegmentationModel,
    optimizer: &mut Adam,
    batch: &[&Video],
    cfg: &TrainConfig,
    schedule: &NoiseSchedule,
    iteration: u64,
    epoch: usize,
) -> Result<TrainLogRecord> {
    if batch.is_empty() {
        return Err(Error::Validation("empty training batch".into()));
    }
    let kinds = cfg.mask_kinds()?;
    let c = model.config().num_classes;
    let n = batch.len() as f64;
    let mut grads: Vec<Matrix> = model
        .params()
        .values()
        .iter()
        .map(|p| Matrix::zeros(p.rows(), p.cols()))
        .collect();
    let mut mean = LossBreakdown::default();
    let mut steps = Vec::with_capacity(batch.len());
    let mut masks = Vec::with_capacity(batch.len());

    for (j, video) in batch.iter().enumerate() {
        let mut rng = seed::rng(cfg.seed, &[SAMPLE, iteration, j as u64]);
        let s = rng.gen_range(1..=schedule.steps());
        let y0 = Matrix::one_hot(&video.labels, c)?;
        let corrupted = forward_corrupt(&to_diffusion_space(&y0)?, s, schedule, &mut rng)?;
        let soft = soften_boundaries(&hard_boundaries(&video.labels), cfg.boundary_std)?;
        let kind = sample_mask_kind(&kinds, &mut rng)?;
        let mask = make_mask(kind, &video.labels, &soft, &mut rng)?;

        let mut g = Graph::new();
        let vars = model.bind(&mut g, true);
        let f = g.constant(video.features.clone());
        let (cond, aux) = model.encode_graph(&mut g, &vars, f)?;
        let masked = g.row_scale(cond, &mask.factors())?;
        let y_s = g.constant(corrupted.y_s);
        let p = model.decode_graph(&mut g, &vars, y_s, s, masked)?;
        let terms = loss_sum(&mut g, p, Some(aux), &y0, &soft, &cfg.loss)?;
        if !terms.breakdown.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss at iteration {iteration}, video {}, s={s}, mask {kind}: {:?}",
                video.id, terms.breakdown
            )));
        }
        let scaled = g.scale(terms.total, 1.0 / n);
        let mut sample_grads = g.backward(scaled)?;
        for (acc, &v) in grads.iter_mut().zip(&vars) {
            if let Some(gv) = sample_grads.take(v) {
                acc.add_assign(&gv);
            }
        }
        mean.accumulate(&terms.breakdown, 1.0 / n);
        steps.push(s);
        masks.push(kind);
    }
    for (gr, name) in grads.iter().zip(model.params().names()) {
        if !gr.is_finite() {
            return Err(Error::NonFinite(format!(
                "gradient of {name} at iteration {iteration} (s={steps:?}, masks={masks:?})"
            )));
        }
    }
    optimizer.step(model.params_mut().values_mut(), &grads);
    Ok(TrainLogRecord {
        iteration,
        epoch,
        loss: mean,
        steps,
        masks,
        wall_ms: None,
    })
}

pub struct TrainOutcome {
    pub model: SegmentationModel,
    pub optimizer: Adam,
    pub epochs_done: usize,
    pub log: Vec<TrainLogRecord>,
}

impl TrainOutcome {
    pub fn checkpoint(&self, seed: u64) -> Checkpoint {
        Checkpoint::from_model(
            &self.model,
            Some(TrainState {
                epoch: self.epochs_done,
                iteration: self.optimizer.t,
                seed,
                m: self.optimizer.m.clone(),
                v: self.optimizer.v.clone(),
            }),
        )
    }
}

/// Starting point of a run: fresh model or a checkpoint to continue.
pub enum TrainStart {
    Fresh(SegmentationModel),
    Resume(Checkpoint),
}

/// Runs epochs over the train split in shuffled batches until
/// `cfg.epochs` are complete.
///
/// With `out_dir`, log lines go to `train.log` (appended when resuming),
/// numbered checkpoints to `checkpoints/` at the configured cadence and the
/// final state to `model.ckpt`.
pub fn train(
    dataset: &SyntheticDataset,
    start: TrainStart,
    cfg: &TrainConfig,
    schedule: &NoiseSchedule,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let videos = dataset.split(crate::synthdata::Split::Train);
    if videos.is_empty() {
        return Err(Error::Validation("dataset has no training videos".into()));
    }
    let (mut model, mut optimizer, first_epoch, resuming) = match start {
        TrainStart::Fresh(model) => {
            let opt = Adam::new(cfg.adam.clone(), cfg.learning_rate, model.params().values());
            (model, opt, 0, false)
        }
        TrainStart::Resume(ck) => {
            let state = ck
                .state
                .clone()
                .ok_or_else(|| Error::Validation("checkpoint carries no training state".into()))?;
            if state.seed != cfg.seed {
                return Err(Error::Config(format!(
                    "resuming a run seeded {} with train.seed = {}",
                    state.seed, cfg.seed
                )));
            }
            let model = ck.into_model()?;
            let opt = Adam {
                config: cfg.adam.clone(),
                learning_rate: cfg.learning_rate,
                t: state.iteration,
                m: state.m,
                v: state.v,
            };
            (model, opt, state.epoch, true)
        }
    };
    if model.config().input_dim != dataset.feature_dim || model.config().num_classes != dataset.num_classes() {
        return Err(Error::Config(format!(
            "model expects D={} C={}, dataset has D={} C={}",
            model.config().input_dim,
            model.config().num_classes,
            dataset.feature_dim,
            dataset.num_classes()
        )));
    }

    let mut log_file = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("train.log");
            let file = OpenOptions::new()
                .create(true)
                .append(resuming)
                .write(true)
                .truncate(!resuming)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            Some((BufWriter::new(file), path))
        }
        None => None,
    };

    let clock = Instant::now();
    let mut log = Vec::new();
    for epoch in first_epoch..cfg.epochs {
        let mut order: Vec<usize> = (0..videos.len()).collect();
        order.shuffle(&mut seed::rng(cfg.seed, &[EPOCH_ORDER, epoch as u64]));
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Video> = chunk.iter().map(|&i| videos[i]).collect();
            let iteration = optimizer.t;
            let mut rec = train_step(&mut model, &mut optimizer, &batch, cfg, schedule, iteration, epoch)?;
            if cfg.log_wall_clock {
                rec.wall_ms = Some(clock.elapsed().as_secs_f64() * 1e3);
            }
            if let Some((w, path)) = log_file.as_mut() {
                writeln!(w, "{}", rec.to_line()).map_err(|e| Error::io(path.as_path(), e))?;
            }
            log.push(rec);
        }
        let done = epoch + 1;
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 {
                let outcome_ck = state_checkpoint(&model, &optimizer, done, cfg.seed);
                outcome_ck.save(&dir.join("checkpoints").join(format!("epoch_{done:04}.ckpt")))?;
            }
        }
    }
    if let Some((mut w, path)) = log_file {
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    let epochs_done = cfg.epochs.max(first_epoch);
    let outcome = TrainOutcome {
        model,
        optimizer,
        epochs_done,
        log,
    };
    if let Some(dir) = out_dir {
        outcome.checkpoint(cfg.seed).save(&dir.join("model.ckpt"))?;
    }
    Ok(outcome)
}

fn state_checkpoint(model: &SegmentationModel, opt: &Adam, epoch: usize, seed: u64) -> Checkpoint {
    Checkpoint::from_model(
        model,
        Some(TrainState {
            epoch,
            iteration: opt.t,
            seed,
            m: opt.m.clone(),
            v: opt.v.clone(),
        }),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Number of reverse steps in the skip trajectory.
    pub steps: usize,
    pub seed: u64,
    /// Condition mask applied at inference: `N` (unmasked) by default.
    pub mask: String,
    /// Keep the per-step argmax labels for trajectory dumps.
    pub keep_trajectory: bool,
    /// Gaussian std for inference-time boundary masks.
    pub boundary_std: f64,
    pub metrics: MetricOptions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            steps: 25,
            seed: 0,
            mask: "N".into(),
            keep_trajectory: false,
            boundary_std: 2.0,
            metrics: MetricOptions::default(),
        }
    }
}

impl EvalConfig {
    pub fn mask_kind(&self) -> Result<MaskKind> {
        self.mask
            .parse()
            .map_err(|e| Error::Config(format!("eval.mask: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("eval.steps must be >= 1".into()));
        }
        if !(self.boundary_std > 0.0) {
            return Err(Error::Config("eval.boundary_std must be > 0".into()));
        }
        self.mask_kind().map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoPrediction {
    pub id: String,
    pub labels: Vec<usize>,
    pub ground_truth: Vec<usize>,
    /// `(step, argmax labels of the prediction at that step)`, first step first.
    pub trajectory: Vec<(usize, Vec<usize>)>,
}

#[derive(Clone, Debug)]
pub struct EvalOutput {
    pub predictions: Vec<VideoPrediction>,
    pub report: MetricReport,
}

/// What produces the frame-wise probabilities during inference.
#[derive(Clone, Copy)]
pub enum Predictor<'a> {
    Model(&'a SegmentationModel),
    /// Returns the ground truth at every step.
    Oracle,
}

/// Runs inference on every video and scores the predictions.
///
/// The initial noise for a video is seeded from `cfg.seed` and its id, so the
/// result does not depend on evaluation order.
pub fn evaluate(
    videos: &[&Video],
    num_classes: usize,
    predictor: Predictor<'_>,
    schedule: &NoiseSchedule,
    cfg: &EvalConfig,
) -> Result<EvalOutput> {
    cfg.validate()?;
    let kind = cfg.mask_kind()?;
    let trajectory = SkipTrajectory::even(schedule.steps(), cfg.steps)?;
    let mut acc = MetricAccumulator::new(cfg.metrics.clone());
    let mut predictions = Vec::with_capacity(videos.len());
    for video in videos {
        let video_seed = seed::video_seed(cfg.seed, &video.id);
        let out = match predictor {
            Predictor::Model(model) => {
                let (cond, _) = model.encode(&video.features)?;
                let soft = soften_boundaries(&hard_boundaries(&video.labels), cfg.boundary_std)?;
                let mut rng = seed::rng(video_seed, &[MASK_AT_INFERENCE]);
                let mask = make_mask(kind, &video.labels, &soft, &mut rng)?;
                let cond = mask.apply(&cond)?;
                run_inference(&cond, model as &dyn Denoiser, schedule, &trajectory, video_seed)?
            }
            Predictor::Oracle => {
                let oracle = OracleDenoiser {
                    probs: Matrix::one_hot(&video.labels, num_classes)?,
                };
                run_inference(&video.features, &oracle, schedule, &trajectory, video_seed)?
            }
        };
        let labels = out.labels();
        acc.add(&labels, &video.labels)?;
        let trajectory = if cfg.keep_trajectory {
            out.trajectory
                .iter()
                .map(|p| (p.step, p.probs.argmax_rows()))
                .collect()
        } else {
            Vec::new()
        };
        predictions.push(VideoPrediction {
            id: video.id.clone(),
            labels,
            ground_truth: video.labels.clone(),
            trajectory,
        });
    }
    Ok(EvalOutput {
        predictions,
        report: acc.report(),
    })
}

/// Writes `<dir>/<id>.txt` prediction files in the ground-truth format, plus
/// `<dir>/trajectory/<id>.txt` (one `step:labels` line per step) when kept.
pub fn write_predictions(dir: &Path, predictions: &[VideoPrediction], class_names: &[String]) -> Result<()> {
    for p in predictions {
        write_labels(&dir.join(format!("{}.txt", p.id)), &p.labels, class_names)?;
        if !p.trajectory.is_empty() {
            let mut text = String::new();
            for (step, labels) in &p.trajectory {
                let names: Vec<&str> = labels.iter().map(|&l| class_names[l].as_str()).collect();
                let _ = writeln!(text, "{step}:{}", names.join(","));
            }
            let path = dir.join("trajectory").join(format!("{}.txt", p.id));
            fs::create_dir_all(path.parent().unwrap()).map_err(|e| Error::io(&path, e))?;
            let mut f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            f.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

/// Frame-wise nearest class mean, with means estimated on `train`.
pub fn nearest_prototype_baseline(train: &[&Video], test: &[&Video], num_classes: usize, metrics: &MetricOptions) -> Result<MetricReport> {
    let d = train
        .first()
        .map(|v| v.features.cols())
        .ok_or_else(|| Error::Validation("baseline needs training videos".into()))?;
    let mut means = Matrix::zeros(num_classes, d);
    let mut counts = vec![0usize; num_classes];
    for v in train {
        for (t, &l) in v.labels.iter().enumerate() {
            counts[l] += 1;
            for (m, x) in means.row_mut(l).iter_mut().zip(v.features.row(t)) {
                *m += x;
            }
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            means.row_mut(c).iter_mut().for_each(|m| *m /= n as f64);
        }
    }
    let mut acc = MetricAccumulator::new(metrics.clone());
    for v in test {
        let pred: Vec<usize> = (0..v.len())
            .map(|t| {
                let x = v.features.row(t);
                (0..num_classes)
                    .filter(|&c| counts[c] > 0)
                    .map(|c| {
                        let dist: f64 = means.row(c).iter().zip(x).map(|(m, x)| (m - x) * (m - x)).sum();
                        (c, dist)
                    })
                    .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
                    .0
            })
            .collect();
        acc.add(&pred, &v.labels)?;
    }
    Ok(acc.report())
}

/// Ground-truth labels shuffled over frames: a random guess that keeps the
/// class frequencies of each video.
pub fn permuted_label_baseline(test: &[&Video], seed: u64, metrics: &MetricOptions) -> Result<MetricReport> {
    let mut acc = MetricAccumulator::new(metrics.clone());
    for v in test {
        let mut pred = v.labels.clone();
        pred.shuffle(&mut seed::rng(seed, &[PERMUTED, seed::fnv1a(&v.id)]));
        acc.add(&pred, &v.labels)?;
    }
    Ok(acc.report())
}
