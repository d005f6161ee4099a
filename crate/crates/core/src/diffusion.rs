//! Forward corruption of label sequences and the reverse DDIM-style update.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::schedule::{DiffusionState, NoiseSchedule, ProbSequence, SkipTrajectory};
use crate::seed;

/// A corrupted sequence together with the noise that produced it.
#[derive(Clone, Debug)]
pub struct CorruptionRecord {
    pub step: usize,
    pub epsilon: Matrix,
    pub y_s: DiffusionState,
}

/// `sqrt(ᾱ_s)·y0 + ε·sqrt(1−ᾱ_s)` for a given ε.
pub fn corrupt_with(
    y0: &DiffusionState,
    epsilon: &Matrix,
    s: usize,
    schedule: &NoiseSchedule,
) -> Result<DiffusionState> {
    schedule.check_step(s)?;
    let ab = schedule.alpha_bar(s);
    let (signal, noise) = (ab.sqrt(), (1.0 - ab).sqrt());
    y0.zip_map(epsilon, |y, e| signal * y + e * noise)
}

/// Draws unit-normal ε and corrupts `y0` to step `s`.
pub fn forward_corrupt<R: Rng + ?Sized>(
    y0: &DiffusionState,
    s: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<CorruptionRecord> {
    schedule.check_step(s)?;
    let epsilon = Matrix::randn(y0.rows(), y0.cols(), rng);
    let y_s = corrupt_with(y0, &epsilon, s, schedule)?;
    Ok(CorruptionRecord {
        step: s,
        epsilon,
        y_s,
    })
}

/// Recovers `y0` from a corrupted state and its recorded noise.
pub fn invert_corruption(
    y_s: &DiffusionState,
    epsilon: &Matrix,
    s: usize,
    schedule: &NoiseSchedule,
) -> Result<DiffusionState> {
    schedule.check_step(s)?;
    let ab = schedule.alpha_bar(s);
    let (signal, noise) = (ab.sqrt(), (1.0 - ab).sqrt());
    y_s.zip_map(epsilon, |y, e| (y - e * noise) / signal)
}

/// One reverse step `s → s_prev` driven by the predicted probabilities.
///
/// The prediction enters diffusion space as `x̂₀ = 2·p_s − 1`. When
/// `s_prev == 0` the result is `x̂₀` exactly and no noise is drawn.
pub fn ddim_update<R: Rng + ?Sized>(
    y_s: &DiffusionState,
    p_s: &ProbSequence,
    s: usize,
    s_prev: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<DiffusionState> {
    schedule.check_step(s)?;
    if s_prev >= s {
        return Err(Error::Config(format!(
            "reverse step must decrease, got {s} -> {s_prev}"
        )));
    }
    y_s.same_shape(p_s, "ddim_update")?;
    let x0 = p_s.map(|p| 2.0 * p - 1.0);
    if s_prev == 0 {
        return Ok(x0);
    }

    let ab = schedule.alpha_bar(s);
    let ab_prev = schedule.alpha_bar(s_prev);
    let sigma = schedule.sigma_between(s, s_prev);
    let dir_var = 1.0 - ab_prev - sigma * sigma;
    if dir_var < 0.0 {
        return Err(Error::Config(format!(
            "1 - alpha_bar({s_prev}) - sigma^2 = {dir_var} < 0 for step {s}; reduce eta"
        )));
    }
    let dir_scale = dir_var.sqrt() / (1.0 - ab).sqrt();
    let (sqrt_ab, sqrt_ab_prev) = (ab.sqrt(), ab_prev.sqrt());

    let mut out = x0.zip_map(y_s, |x, y| {
        sqrt_ab_prev * x + dir_scale * (y - sqrt_ab * x)
    })?;
    if sigma > 0.0 {
        let noise = Matrix::randn(out.rows(), out.cols(), rng);
        for (o, e) in out.data_mut().iter_mut().zip(noise.data()) {
            *o += sigma * e;
        }
    }
    Ok(out)
}

/// Anything that maps a noisy state, its step and conditioning features to
/// frame-wise class probabilities.
pub trait Denoiser {
    fn num_classes(&self) -> usize;

    fn denoise(&self, y_s: &DiffusionState, s: usize, cond: &Matrix) -> Result<ProbSequence>;
}

/// One visited point of the reverse trajectory.
#[derive(Clone, Debug)]
pub struct TrajectoryPoint {
    pub step: usize,
    /// State fed into the denoiser at this step.
    pub state: DiffusionState,
    /// Denoiser output at this step.
    pub probs: ProbSequence,
}

#[derive(Clone, Debug)]
pub struct InferenceOutput {
    /// Probabilities produced at the last reverse step.
    pub probs: ProbSequence,
    pub trajectory: Vec<TrajectoryPoint>,
}

impl InferenceOutput {
    pub fn labels(&self) -> Vec<usize> {
        self.probs.argmax_rows()
    }
}

/// Iterative denoising from unit-normal noise drawn from `seed`.
///
/// `cond` is passed to the denoiser unchanged at every step; callers that
/// want unmasked inference pass the raw encoder output.
pub fn run_inference(
    cond: &Matrix,
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    trajectory: &SkipTrajectory,
    seed: u64,
) -> Result<InferenceOutput> {
    if trajectory.start() > schedule.steps() {
        return Err(Error::Config(format!(
            "trajectory starts at {} but schedule has {} steps",
            trajectory.start(),
            schedule.steps()
        )));
    }
    let mut rng = seed::rng(seed, &[]);
    let mut state = Matrix::randn(cond.rows(), denoiser.num_classes(), &mut rng);
    let mut points = Vec::with_capacity(trajectory.steps().len() - 1);
    for (s, s_prev) in trajectory.pairs() {
        let probs = denoiser.denoise(&state, s, cond)?;
        let next = ddim_update(&state, &probs, s, s_prev, schedule, &mut rng)?;
        points.push(TrajectoryPoint {
            step: s,
            state,
            probs,
        });
        state = next;
    }
    let probs = points
        .last()
        .map(|p| p.probs.clone())
        .expect("trajectory has at least one transition");
    Ok(InferenceOutput {
        probs,
        trajectory: points,
    })
}

/// Denoiser that ignores its inputs and returns fixed probabilities.
/// Used to inject ground truth when checking the sampler and metrics.
#[derive(Clone, Debug)]
pub struct OracleDenoiser {
    pub probs: ProbSequence,
}

impl Denoiser for OracleDenoiser {
    fn num_classes(&self) -> usize {
        self.probs.cols()
    }

    fn denoise(&self, y_s: &DiffusionState, _s: usize, _cond: &Matrix) -> Result<ProbSequence> {
        y_s.same_shape(&self.probs, "oracle denoiser")?;
        Ok(self.probs.clone())
    }
}
