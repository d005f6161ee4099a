//! Noise schedules, skipped-step trajectories and the affine map between
//! one-hot labels and the `[-1, 1]` diffusion space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Continuous `L×C` state in diffusion space.
pub type DiffusionState = Matrix;

/// `L×C` frame-wise class probabilities; rows sum to one.
pub type ProbSequence = Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub eta: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            eta: 1.0,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.steps, self.beta_start, self.beta_end, self.eta)
    }
}

/// Per-step noise tables for steps `1..=S`.
///
/// Index `s` is 1-based everywhere in the public API; `alpha_bar(0)` is 1 by
/// convention so the last reverse update lands exactly on the prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    steps: usize,
    eta: f64,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
}

impl NoiseSchedule {
    /// Linearly spaced β over steps `1..=S`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64, eta: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
            )));
        }
        let beta = if steps == 1 {
            vec![beta_start]
        } else {
            (0..steps)
                .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
                .collect()
        };
        Self::from_betas(beta, eta)
    }

    /// Builds the tables from an explicit β sequence (β_1 first).
    ///
    /// Zero entries are accepted here so that noiseless prefixes can be
    /// expressed; [`NoiseSchedule::linear`] keeps β strictly positive.
    pub fn from_betas(beta: Vec<f64>, eta: f64) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::Config(format!("eta must be finite and >= 0, got {eta}")));
        }
        if let Some(b) = beta.iter().find(|b| !(**b >= 0.0 && **b < 1.0)) {
            return Err(Error::Config(format!("beta values must lie in [0, 1), got {b}")));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(alpha.len());
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        let mut schedule = Self {
            steps: beta.len(),
            eta,
            beta,
            alpha,
            alpha_bar,
            sigma: Vec::new(),
        };
        schedule.sigma = (1..=schedule.steps)
            .map(|s| schedule.sigma_between(s, s - 1))
            .collect();
        Ok(schedule)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn beta(&self, s: usize) -> f64 {
        self.beta[s - 1]
    }

    pub fn alpha(&self, s: usize) -> f64 {
        self.alpha[s - 1]
    }

    /// ᾱ_s, with ᾱ_0 = 1.
    pub fn alpha_bar(&self, s: usize) -> f64 {
        if s == 0 {
            1.0
        } else {
            self.alpha_bar[s - 1]
        }
    }

    /// σ_s for the adjacent transition `s → s−1`.
    pub fn sigma(&self, s: usize) -> f64 {
        self.sigma[s - 1]
    }

    /// DDIM noise scale for a jump `s → s_prev`:
    /// `eta · sqrt((1−ᾱ_prev)/(1−ᾱ_s)) · sqrt(1 − ᾱ_s/ᾱ_prev)`.
    ///
    /// Equals [`NoiseSchedule::sigma`] when `s_prev = s − 1` and is zero for
    /// `s_prev = 0`.
    pub fn sigma_between(&self, s: usize, s_prev: usize) -> f64 {
        let ab = self.alpha_bar(s);
        let ab_prev = self.alpha_bar(s_prev);
        if self.eta == 0.0 || ab >= 1.0 {
            return 0.0;
        }
        let ratio = ((1.0 - ab_prev) / (1.0 - ab)).max(0.0);
        self.eta * ratio.sqrt() * (1.0 - ab / ab_prev).max(0.0).sqrt()
    }

    pub fn check_step(&self, s: usize) -> Result<()> {
        if s == 0 || s > self.steps {
            return Err(Error::Config(format!(
                "diffusion step {s} outside 1..={}",
                self.steps
            )));
        }
        Ok(())
    }
}

/// Strictly decreasing step indices from `S` down to `0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkipTrajectory {
    steps: Vec<usize>,
}

impl SkipTrajectory {
    /// `n_steps + 1` evenly spaced (rounded) indices from `total` to 0.
    pub fn even(total: usize, n_steps: usize) -> Result<Self> {
        if n_steps == 0 || n_steps > total {
            return Err(Error::Config(format!(
                "inference step count must be in 1..={total}, got {n_steps}"
            )));
        }
        let steps = (0..=n_steps)
            .map(|k| {
                let x = total as f64 * (n_steps - k) as f64 / n_steps as f64;
                x.round() as usize
            })
            .collect();
        Ok(Self { steps })
    }

    /// Validates an explicit trajectory.
    pub fn from_steps(steps: Vec<usize>) -> Result<Self> {
        if steps.len() < 2 || *steps.last().unwrap() != 0 {
            return Err(Error::Config(
                "trajectory needs at least two entries and must end at 0".into(),
            ));
        }
        if steps.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Config(format!(
                "trajectory must be strictly decreasing: {steps:?}"
            )));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn start(&self) -> usize {
        self.steps[0]
    }

    /// Consecutive `(s, s_prev)` pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.steps.windows(2).map(|w| (w[0], w[1]))
    }
}

/// `2y − 1` for one-hot rows.
pub fn to_diffusion_space(one_hot: &Matrix) -> Result<DiffusionState> {
    for (i, row) in one_hot.row_iter().enumerate() {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(Error::Validation(format!("row {i} is not one-hot: {row:?}")));
        }
    }
    Ok(one_hot.map(|v| 2.0 * v - 1.0))
}

/// Reads a diffusion-space state as probabilities: `(x+1)/2`, clipped to
/// `[0, 1]` and row-normalized. A row that clips to all zeros becomes uniform.
pub fn from_diffusion_space(x: &DiffusionState) -> ProbSequence {
    let mut out = x.map(|v| ((v + 1.0) / 2.0).clamp(0.0, 1.0));
    let cols = out.cols();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|v| *v /= total);
        } else {
            row.iter_mut().for_each(|v| *v = 1.0 / cols as f64);
        }
    }
    out
}
