//! Compares autodiff gradients of the full training loss with central
//! finite differences on a toy encoder and decoder.
//!
//! ```text
//! cargo run --example gradient_check
//! ```

use diffseg::diffusion::forward_corrupt;
use diffseg::losses::{loss_sum, LossWeights};
use diffseg::masking::{hard_boundaries, soften_boundaries};
use diffseg::model::{DecoderConfig, EncoderConfig, ModelConfig, SegmentationModel};
use diffseg::numerics::{check_gradient, GradCheckConfig, Matrix};
use diffseg::schedule::{to_diffusion_space, NoiseSchedule};
use diffseg::seed;

fn main() -> diffseg::Result<()> {
    let model = SegmentationModel::new(ModelConfig {
        input_dim: 4,
        num_classes: 3,
        encoder: EncoderConfig {
            layers: 2,
            width: 6,
            ..Default::default()
        },
        decoder: DecoderConfig {
            layers: 2,
            width: 4,
            step_embed_dim: 8,
            ..Default::default()
        },
        ..Default::default()
    })?;
    let labels = [0, 0, 0, 1, 1, 1, 1, 2, 2, 0, 0, 0];
    let mut rng = seed::rng(1, &[]);
    let features = Matrix::randn(12, 4, &mut rng);
    let y0 = Matrix::one_hot(&labels, 3)?;
    let soft = soften_boundaries(&hard_boundaries(&labels), 1.0)?;
    let schedule = NoiseSchedule::linear(1000, 1e-4, 0.02, 1.0)?;
    let rec = forward_corrupt(&to_diffusion_space(&y0)?, 400, &schedule, &mut rng)?;

    let report = check_gradient(
        |g, v| {
            let x = g.constant(features.clone());
            let (cond, aux) = model.encode_graph(g, v, x)?;
            let ys = g.constant(rec.y_s.clone());
            let p = model.decode_graph(g, v, ys, 400, cond)?;
            Ok(loss_sum(g, p, Some(aux), &y0, &soft, &LossWeights::default())?.total)
        },
        &model.params().named(),
        &GradCheckConfig::default(),
    )?;
    for b in &report.blocks {
        println!("{:<24} {:>4} coords  max rel err {:.2e}", b.name, b.coords, b.max_rel_error);
    }
    println!(
        "{} coordinates, worst {:.2e}, {}",
        report.total_coords(),
        report.max_rel_error(),
        if report.passed() { "passed" } else { "FAILED" }
    );
    Ok(())
}
