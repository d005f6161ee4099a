//! Frame accuracy, segmental edit score and F1 at IoU thresholds.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub label: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn iou(&self, other: &Segment) -> f64 {
        let inter = self.end.min(other.end).saturating_sub(self.start.max(other.start));
        let union = self.end.max(other.end) - self.start.min(other.start);
        inter as f64 / union as f64
    }
}

/// Maximal runs of equal labels.
pub fn to_segments(labels: &[usize]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for (t, &l) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(s) if s.label == l => s.end = t + 1,
            _ => out.push(Segment { label: l, start: t, end: t + 1 }),
        }
    }
    out
}

fn check_lengths(pred: &[usize], gt: &[usize]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Validation(format!(
            "prediction has {} frames, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccWeighting {
    /// Correct frames over all frames of the split.
    Frames,
    /// Mean of per-video accuracies.
    Videos,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricOptions {
    /// A match at exactly the threshold counts as a hit.
    pub iou_inclusive: bool,
    pub acc_weighting: AccWeighting,
    /// Classes left out of every metric (frames by ground truth, segments by label).
    pub ignore: Vec<usize>,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            iou_inclusive: true,
            acc_weighting: AccWeighting::Frames,
            ignore: Vec::new(),
        }
    }
}

pub const F1_THRESHOLDS: [f64; 3] = [0.10, 0.25, 0.50];

/// `(correct, counted)` frames, skipping frames whose ground truth is ignored.
fn frame_counts(pred: &[usize], gt: &[usize], ignore: &[usize]) -> (usize, usize) {
    pred.iter()
        .zip(gt)
        .filter(|(_, g)| !ignore.contains(g))
        .fold((0, 0), |(c, n), (p, g)| (c + (p == g) as usize, n + 1))
}

pub fn frame_accuracy(pred: &[usize], gt: &[usize]) -> Result<f64> {
    check_lengths(pred, gt)?;
    let (c, n) = frame_counts(pred, gt, &[]);
    Ok(if n == 0 { 100.0 } else { 100.0 * c as f64 / n as f64 })
}

fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + (x != y) as usize).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn kept_segments(labels: &[usize], ignore: &[usize]) -> Vec<Segment> {
    to_segments(labels)
        .into_iter()
        .filter(|s| !ignore.contains(&s.label))
        .collect()
}

fn edit_of(p: &[Segment], g: &[Segment]) -> f64 {
    let denom = p.len().max(g.len());
    if denom == 0 {
        return 100.0;
    }
    let a: Vec<usize> = p.iter().map(|s| s.label).collect();
    let b: Vec<usize> = g.iter().map(|s| s.label).collect();
    (100.0 * (1.0 - levenshtein(&a, &b) as f64 / denom as f64)).max(0.0)
}

pub fn edit_score(pred: &[usize], gt: &[usize]) -> f64 {
    edit_of(&to_segments(pred), &to_segments(gt))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MatchCounts {
    pub fn add(&mut self, other: MatchCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// `(precision, recall, f1)` as percentages.
    pub fn scores(&self) -> (f64, f64, f64) {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = ratio(self.tp, self.tp + self.fp);
        let r = ratio(self.tp, self.tp + self.fn_);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        (100.0 * p, 100.0 * r, 100.0 * f1)
    }
}

fn match_segments(p: &[Segment], g: &[Segment], tau: f64, inclusive: bool) -> MatchCounts {
    let mut used = vec![false; g.len()];
    let mut counts = MatchCounts::default();
    for ps in p {
        let best = g
            .iter()
            .enumerate()
            .filter(|(_, gs)| gs.label == ps.label)
            .map(|(j, gs)| (j, ps.iou(gs)))
            .fold(None, |best: Option<(usize, f64)>, (j, iou)| match best {
                Some((_, b)) if b >= iou => best,
                _ => Some((j, iou)),
            });
        let hit = match best {
            Some((j, iou)) if !used[j] && if inclusive { iou >= tau } else { iou > tau } => {
                used[j] = true;
                true
            }
            _ => false,
        };
        if hit {
            counts.tp += 1;
        } else {
            counts.fp += 1;
        }
    }
    counts.fn_ = used.iter().filter(|u| !**u).count();
    counts
}

/// Greedy best-IoU segment matching at threshold `tau`.
pub fn match_counts(pred: &[usize], gt: &[usize], tau: f64) -> MatchCounts {
    match_segments(&to_segments(pred), &to_segments(gt), tau, true)
}

/// `(precision, recall, f1)` as percentages.
pub fn f1_at(pred: &[usize], gt: &[usize], tau: f64) -> (f64, f64, f64) {
    match_counts(pred, gt, tau).scores()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub acc: f64,
    pub edit: f64,
    pub f1_10: f64,
    pub f1_25: f64,
    pub f1_50: f64,
    pub avg: f64,
}

impl MetricReport {
    pub fn new(acc: f64, edit: f64, f1: [f64; 3]) -> Self {
        Self {
            acc,
            edit,
            f1_10: f1[0],
            f1_25: f1[1],
            f1_50: f1[2],
            avg: (acc + edit + f1.iter().sum::<f64>()) / 5.0,
        }
    }

    pub fn values(&self) -> [f64; 6] {
        [self.acc, self.edit, self.f1_10, self.f1_25, self.f1_50, self.avg]
    }

    pub const CSV_HEADER: &'static str = "split,acc,edit,f1_10,f1_25,f1_50,avg";

    pub fn csv_row(&self, split: &str) -> String {
        let mut row = split.to_string();
        for v in self.values() {
            row.push_str(&format!(",{v:.4}"));
        }
        row
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Acc {:.2}  Edit {:.2}  F1@10 {:.2}  F1@25 {:.2}  F1@50 {:.2}  Avg {:.2}",
            self.acc, self.edit, self.f1_10, self.f1_25, self.f1_50, self.avg
        )
    }
}

/// Aggregates metrics over a split: edit is averaged per video, F1 counts
/// are pooled, accuracy follows [`MetricOptions::acc_weighting`].
#[derive(Clone, Debug)]
pub struct MetricAccumulator {
    options: MetricOptions,
    correct: usize,
    frames: usize,
    video_acc: Vec<f64>,
    edits: Vec<f64>,
    counts: [MatchCounts; 3],
}

impl MetricAccumulator {
    pub fn new(options: MetricOptions) -> Self {
        Self {
            options,
            correct: 0,
            frames: 0,
            video_acc: Vec::new(),
            edits: Vec::new(),
            counts: [MatchCounts::default(); 3],
        }
    }

    pub fn add(&mut self, pred: &[usize], gt: &[usize]) -> Result<()> {
        check_lengths(pred, gt)?;
        let ignore = &self.options.ignore;
        let (c, n) = frame_counts(pred, gt, ignore);
        self.correct += c;
        self.frames += n;
        if n > 0 {
            self.video_acc.push(100.0 * c as f64 / n as f64);
        }
        let p = kept_segments(pred, ignore);
        let g = kept_segments(gt, ignore);
        self.edits.push(edit_of(&p, &g));
        for (counts, &tau) in self.counts.iter_mut().zip(&F1_THRESHOLDS) {
            counts.add(match_segments(&p, &g, tau, self.options.iou_inclusive));
        }
        Ok(())
    }

    pub fn videos(&self) -> usize {
        self.edits.len()
    }

    pub fn report(&self) -> MetricReport {
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let acc = match self.options.acc_weighting {
            AccWeighting::Frames if self.frames > 0 => 100.0 * self.correct as f64 / self.frames as f64,
            AccWeighting::Frames => 0.0,
            AccWeighting::Videos => mean(&self.video_acc),
        };
        let f1 = self.counts.map(|c| c.scores().2);
        MetricReport::new(acc, mean(&self.edits), f1)
    }
}
