//! Corrupts a label sequence with the forward process, then denoises it with
//! an oracle denoiser and prints the argmax labels along the reverse
//! trajectory.
//!
//! ```text
//! cargo run --example diffusion_sampling -- [steps] [eta]
//! ```

use diffseg::diffusion::{forward_corrupt, run_inference, Denoiser, OracleDenoiser};
use diffseg::numerics::Matrix;
use diffseg::schedule::{from_diffusion_space, to_diffusion_space, NoiseSchedule, SkipTrajectory};
use diffseg::{seed, Result};

/// Oracle blurred toward uniform so intermediate steps are visibly noisy.
struct Blurred {
    oracle: OracleDenoiser,
    keep: f64,
}

impl Denoiser for Blurred {
    fn num_classes(&self) -> usize {
        self.oracle.num_classes()
    }

    fn denoise(&self, y_s: &Matrix, s: usize, cond: &Matrix) -> Result<Matrix> {
        let c = self.num_classes() as f64;
        let p = self.oracle.denoise(y_s, s, cond)?;
        // trust the oracle less at high noise
        let w = self.keep * (1.0 - s as f64 / 1000.0) + (1.0 - self.keep);
        Ok(p.map(|v| w * v + (1.0 - w) / c))
    }
}

fn row_string(labels: &[usize]) -> String {
    labels.iter().map(|&l| char::from(b'a' + l as u8)).collect()
}

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: usize = args.first().map_or(10, |s| s.parse().expect("steps"));
    let eta: f64 = args.get(1).map_or(1.0, |s| s.parse().expect("eta"));
    let schedule = NoiseSchedule::linear(1000, 1e-4, 0.02, eta)?;

    let labels: Vec<usize> = [(0, 20), (1, 15), (2, 25), (3, 12)]
        .iter()
        .flat_map(|&(l, n)| std::iter::repeat(l).take(n))
        .collect();
    let y0 = to_diffusion_space(&Matrix::one_hot(&labels, 4)?)?;
    println!("truth      {}", row_string(&labels));

    let mut rng = seed::rng(7, &[]);
    for s in [10, 200, 500, 900] {
        let rec = forward_corrupt(&y0, s, &schedule, &mut rng)?;
        println!("forward {s:>3} {}", row_string(&from_diffusion_space(&rec.y_s).argmax_rows()));
    }

    let denoiser = Blurred {
        oracle: OracleDenoiser {
            probs: Matrix::one_hot(&labels, 4)?,
        },
        keep: 0.9,
    };
    let traj = SkipTrajectory::even(1000, steps)?;
    let out = run_inference(&Matrix::zeros(labels.len(), 1), &denoiser, &schedule, &traj, 3)?;
    for point in &out.trajectory {
        println!("state {:>4}  {}", point.step, row_string(&from_diffusion_space(&point.state).argmax_rows()));
    }
    println!("final      {}", row_string(&out.labels()));
    Ok(())
}
