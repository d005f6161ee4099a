//! Procedural videos with position, ordering and boundary-ambiguity structure.
//!
//! A [`TaskGrammar`] fixes an ordered list of phases, each a set of candidate
//! classes, and per-class duration distributions. Each video realizes the
//! grammar (optionally swapping declared adjacent phase pairs), stretches the
//! durations to a random length, and emits features as class prototype plus
//! Gaussian noise with a linear cross-fade between prototypes around every
//! boundary.

mod io;

pub use io::{read_dataset, read_features, read_labels, write_dataset, write_features, write_labels};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub class: usize,
    /// Probability that the class occurs in a realization of its phase.
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    /// Candidates in the order they appear when present.
    pub candidates: Vec<Candidate>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Duration {
    pub mean: f64,
    pub std: f64,
    pub min: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSwap {
    /// Phase `first` trades places with phase `first + 1`.
    pub first: usize,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskGrammar {
    pub class_names: Vec<String>,
    pub phases: Vec<Phase>,
    /// One entry per class.
    pub durations: Vec<Duration>,
    pub swaps: Vec<PhaseSwap>,
}

impl TaskGrammar {
    /// Six classes in three ordered phases of two candidates each, with the
    /// last two phases swapped in 20% of videos.
    pub fn reference() -> Self {
        let phase = |a: usize, pa: f64, b: usize, pb: f64| Phase {
            candidates: vec![
                Candidate { class: a, prob: pa },
                Candidate { class: b, prob: pb },
            ],
        };
        Self {
            class_names: (0..6).map(|c| format!("action_{c}")).collect(),
            phases: vec![phase(0, 1.0, 1, 0.6), phase(2, 0.8, 3, 0.8), phase(4, 1.0, 5, 0.5)],
            durations: vec![
                Duration { mean: 40.0, std: 10.0, min: 10 },
                Duration { mean: 30.0, std: 8.0, min: 10 },
                Duration { mean: 50.0, std: 12.0, min: 10 },
                Duration { mean: 35.0, std: 10.0, min: 10 },
                Duration { mean: 45.0, std: 10.0, min: 10 },
                Duration { mean: 25.0, std: 6.0, min: 10 },
            ],
            swaps: vec![PhaseSwap { first: 1, prob: 0.2 }],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self, length_range: (usize, usize)) -> Result<()> {
        let c = self.num_classes();
        if c == 0 {
            return Err(Error::Config("grammar.class_names is empty".into()));
        }
        if self.durations.len() != c {
            return Err(Error::Config(format!(
                "grammar.durations has {} entries for {c} classes",
                self.durations.len()
            )));
        }
        if self.phases.is_empty() {
            return Err(Error::Config("grammar.phases is empty".into()));
        }
        let mut max_min_total = 0;
        for (i, p) in self.phases.iter().enumerate() {
            if p.candidates.is_empty() {
                return Err(Error::Config(format!("grammar.phases[{i}] has no candidates")));
            }
            for cand in &p.candidates {
                if cand.class >= c {
                    return Err(Error::Config(format!(
                        "grammar.phases[{i}] names class {} of {c}",
                        cand.class
                    )));
                }
                if !(0.0..=1.0).contains(&cand.prob) {
                    return Err(Error::Config(format!(
                        "grammar.phases[{i}] candidate probability {} outside [0, 1]",
                        cand.prob
                    )));
                }
                max_min_total += self.durations[cand.class].min.max(1);
            }
        }
        for (k, d) in self.durations.iter().enumerate() {
            if !(d.mean > 0.0 && d.std >= 0.0 && d.mean.is_finite() && d.std.is_finite()) {
                return Err(Error::Config(format!(
                    "grammar.durations[{k}] needs mean > 0 and std >= 0"
                )));
            }
        }
        for s in &self.swaps {
            if s.first + 1 >= self.phases.len() || !(0.0..=1.0).contains(&s.prob) {
                return Err(Error::Config(format!(
                    "grammar.swaps entry {s:?} is out of range"
                )));
            }
        }
        let (lo, hi) = length_range;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("invalid length range {lo}..={hi}")));
        }
        if max_min_total > lo {
            return Err(Error::Config(format!(
                "grammar.durations minimums can sum to {max_min_total} frames, longer than the shortest video ({lo})"
            )));
        }
        Ok(())
    }

    /// Class order of one realization.
    pub fn realize_order<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut phases: Vec<usize> = (0..self.phases.len()).collect();
        for s in &self.swaps {
            if rng.gen_bool(s.prob) {
                phases.swap(s.first, s.first + 1);
            }
        }
        let mut order = Vec::new();
        for &p in &phases {
            let cands = &self.phases[p].candidates;
            let picked: Vec<usize> = cands
                .iter()
                .filter(|c| rng.gen_bool(c.prob))
                .map(|c| c.class)
                .collect();
            if picked.is_empty() {
                let best = cands
                    .iter()
                    .fold(&cands[0], |b, c| if c.prob > b.prob { c } else { b });
                order.push(best.class);
            } else {
                order.extend(picked);
            }
        }
        order
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    pub id: String,
    /// `L×D`, values representable as 32-bit reals.
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub split: Split,
}

impl Video {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub class_names: Vec<String>,
    pub feature_dim: usize,
    /// `C×D` class prototypes; absent for externally supplied data.
    pub prototypes: Option<Matrix>,
    pub noise_std: f64,
    pub blend_width: usize,
    pub seed: u64,
    pub videos: Vec<Video>,
}

impl SyntheticDataset {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn split(&self, split: Split) -> Vec<&Video> {
        self.videos.iter().filter(|v| v.split == split).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub feature_dim: usize,
    pub train_videos: usize,
    pub test_videos: usize,
    pub min_length: usize,
    pub max_length: usize,
    pub noise_std: f64,
    pub blend_width: usize,
    pub seed: u64,
    pub grammar: TaskGrammar,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            feature_dim: 16,
            train_videos: 60,
            test_videos: 20,
            min_length: 150,
            max_length: 250,
            noise_std: 0.5,
            blend_width: 8,
            seed: 0,
            grammar: TaskGrammar::reference(),
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        self.grammar.validate((self.min_length, self.max_length))?;
        if self.feature_dim == 0 {
            return Err(Error::Config("data.feature_dim must be >= 1".into()));
        }
        if self.train_videos + self.test_videos == 0 {
            return Err(Error::Config("data needs at least one video".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config("data.noise_std must be >= 0".into()));
        }
        Ok(())
    }
}

/// Stretches raw durations to sum to `len` while keeping each at least its
/// minimum.
fn fit_durations(raw: &[f64], mins: &[usize], len: usize) -> Vec<usize> {
    let total: f64 = raw.iter().sum();
    let mut out: Vec<usize> = raw
        .iter()
        .zip(mins)
        .map(|(&r, &m)| ((r * len as f64 / total).floor() as usize).max(m.max(1)))
        .collect();
    let mut sum: usize = out.iter().sum();
    let n = out.len();
    let mut k = 0;
    while sum < len {
        out[k % n] += 1;
        sum += 1;
        k += 1;
    }
    // trim from the segment with the most slack above its minimum
    while sum > len {
        let (i, _) = out
            .iter()
            .zip(mins)
            .enumerate()
            .map(|(i, (&d, &m))| (i, d - m.max(1)))
            .max_by_key(|&(i, slack)| (slack, std::cmp::Reverse(i)))
            .expect("at least one segment");
        out[i] -= 1;
        sum -= 1;
    }
    out
}

/// Features for a label sequence: prototype plus noise, cross-faded over
/// `blend_width` frames centered on each boundary. Rounded to 32-bit.
pub fn synthesize_features<R: Rng + ?Sized>(
    labels: &[usize],
    prototypes: &Matrix,
    noise_std: f64,
    blend_width: usize,
    rng: &mut R,
) -> Matrix {
    let d = prototypes.cols();
    let len = labels.len();
    let boundaries: Vec<usize> = (1..len).filter(|&t| labels[t] != labels[t - 1]).collect();
    let half = blend_width as f64 / 2.0;
    let mut out = Matrix::zeros(len, d);
    for t in 0..len {
        let center = t as f64 + 0.5;
        let nearest = boundaries
            .iter()
            .copied()
            .min_by(|&a, &b| (center - a as f64).abs().total_cmp(&(center - b as f64).abs()));
        let row = out.row_mut(t);
        match nearest {
            Some(b) if blend_width > 0 && (center - b as f64).abs() < half => {
                let alpha = (center - (b as f64 - half)) / blend_width as f64;
                let (left, right) = (prototypes.row(labels[b - 1]), prototypes.row(labels[b]));
                for ((o, l), r) in row.iter_mut().zip(left).zip(right) {
                    *o = (1.0 - alpha) * l + alpha * r;
                }
            }
            _ => row.copy_from_slice(prototypes.row(labels[t])),
        }
    }
    if noise_std > 0.0 {
        let noise = Normal::new(0.0, noise_std).expect("validated std");
        for v in out.data_mut() {
            *v += noise.sample(rng);
        }
    }
    for v in out.data_mut() {
        *v = *v as f32 as f64;
    }
    out
}

/// Deterministic dataset from `cfg`. Video `i` draws from its own stream so
/// regeneration and per-video generation agree.
pub fn generate(cfg: &DataConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let grammar = &cfg.grammar;
    let c = grammar.num_classes();
    let mut proto_rng = seed::rng(cfg.seed, &[0]);
    let prototypes = Matrix::randn(c, cfg.feature_dim, &mut proto_rng);

    let n = cfg.train_videos + cfg.test_videos;
    let mut videos = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = seed::rng(cfg.seed, &[1, i as u64]);
        let order = grammar.realize_order(&mut rng);
        let len = rng.gen_range(cfg.min_length..=cfg.max_length);
        let mut raw = Vec::with_capacity(order.len());
        for &class in &order {
            let d = grammar.durations[class];
            let draw = if d.std > 0.0 {
                Normal::new(d.mean, d.std).expect("validated").sample(&mut rng)
            } else {
                d.mean
            };
            raw.push(draw.max(d.min.max(1) as f64));
        }
        let mins: Vec<usize> = order.iter().map(|&k| grammar.durations[k].min).collect();
        let durations = fit_durations(&raw, &mins, len);
        let labels: Vec<usize> = order
            .iter()
            .zip(&durations)
            .flat_map(|(&k, &d)| std::iter::repeat(k).take(d))
            .collect();
        let features = synthesize_features(&labels, &prototypes, cfg.noise_std, cfg.blend_width, &mut rng);
        videos.push(Video {
            id: format!("video_{i:03}"),
            features,
            labels,
            split: if i < cfg.train_videos { Split::Train } else { Split::Test },
        });
    }
    Ok(SyntheticDataset {
        class_names: grammar.class_names.clone(),
        feature_dim: cfg.feature_dim,
        prototypes: Some(prototypes.map(|v| v as f32 as f64)),
        noise_std: cfg.noise_std,
        blend_width: cfg.blend_width,
        seed: cfg.seed,
        videos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DataConfig {
        DataConfig {
            train_videos: 6,
            test_videos: 2,
            ..Default::default()
        }
    }

    #[test]
    fn regeneration_is_identical() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
    }

    #[test]
    fn labels_tile_and_respect_minimum_durations() {
        let cfg = small();
        let ds = generate(&cfg).unwrap();
        for v in &ds.videos {
            assert!((cfg.min_length..=cfg.max_length).contains(&v.len()));
            assert_eq!(v.features.shape(), (v.len(), 16));
            let segs = crate::metrics::to_segments(&v.labels);
            for s in &segs {
                assert!(s.end - s.start >= cfg.grammar.durations[s.label].min);
            }
        }
    }

    #[test]
    fn phase_order_is_respected_up_to_declared_swap() {
        let g = TaskGrammar::reference();
        let mut rng = seed::rng(4, &[]);
        let phase_of = |c: usize| c / 2;
        for _ in 0..200 {
            let order = g.realize_order(&mut rng);
            let phases: Vec<usize> = order.iter().map(|&c| phase_of(c)).collect();
            let mut dedup = phases.clone();
            dedup.dedup();
            assert!(dedup == vec![0, 1, 2] || dedup == vec![0, 2, 1], "{order:?}");
        }
    }

    #[test]
    fn zero_blend_uses_own_prototype() {
        let cfg = DataConfig {
            noise_std: 0.0,
            blend_width: 0,
            ..small()
        };
        let ds = generate(&cfg).unwrap();
        let protos = ds.prototypes.as_ref().unwrap();
        for v in &ds.videos {
            for (t, &c) in v.labels.iter().enumerate() {
                assert_eq!(v.features.row(t), protos.row(c));
            }
        }
    }

    #[test]
    fn blend_crossfades_between_neighbours() {
        let protos = Matrix::from_rows(&[[0.0], [8.0]]);
        let labels = [0, 0, 0, 0, 1, 1, 1, 1];
        let mut rng = seed::rng(0, &[]);
        let f = synthesize_features(&labels, &protos, 0.0, 4, &mut rng);
        let got: Vec<f64> = f.data().to_vec();
        assert_eq!(got, vec![0.0, 0.0, 1.0, 3.0, 5.0, 7.0, 8.0, 8.0]);
    }

    #[test]
    fn infeasible_durations_are_rejected() {
        let cfg = DataConfig {
            min_length: 30,
            max_length: 40,
            ..small()
        };
        let err = generate(&cfg).unwrap_err();
        assert!(err.to_string().contains("grammar.durations"), "{err}");
    }

    #[test]
    fn bad_grammar_is_rejected() {
        let mut cfg = small();
        cfg.grammar.phases[0].candidates[0].class = 9;
        assert!(generate(&cfg).is_err());
        let mut cfg = small();
        cfg.grammar.swaps[0].first = 2;
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn duration_fitting_hits_target_length() {
        let fitted = fit_durations(&[10.0, 20.0, 30.0], &[5, 5, 5], 101);
        assert_eq!(fitted.iter().sum::<usize>(), 101);
        let fitted = fit_durations(&[1.0, 100.0], &[20, 1], 50);
        assert_eq!(fitted.iter().sum::<usize>(), 50);
        assert!(fitted[0] >= 20);
    }

    #[test]
    fn splits_are_disjoint() {
        let ds = generate(&small()).unwrap();
        let train: Vec<_> = ds.split(Split::Train).iter().map(|v| v.id.clone()).collect();
        let test: Vec<_> = ds.split(Split::Test).iter().map(|v| v.id.clone()).collect();
        assert_eq!((train.len(), test.len()), (6, 2));
        assert!(train.iter().all(|id| !test.contains(id)));
    }
}
