//! Evaluates one trained model at several reverse-step counts.
//!
//! On the reference benchmark a single step is already near perfect, so the
//! default here is a harder variant: a one-layer encoder on features with
//! noise std 4, where the iterative refinement shows up in Edit and F1.
//!
//! ```text
//! cargo run --release --example step_count_ablation -- [encoder_layers] [noise_std] [epochs]
//! ```

use diffseg::config::ExperimentConfig;
use diffseg::model::SegmentationModel;
use diffseg::pipeline::{evaluate, train, Predictor, TrainStart};
use diffseg::synthdata::{generate, Split};

fn main() -> diffseg::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = ExperimentConfig::reference();
    cfg.train.log_wall_clock = false;
    cfg.model.encoder.layers = args.first().map_or(1, |s| s.parse().expect("encoder layers"));
    cfg.data.noise_std = args.get(1).map_or(4.0, |s| s.parse().expect("noise std"));
    if let Some(e) = args.get(2) {
        cfg.train.epochs = e.parse().expect("epochs");
    }
    cfg.validate()?;

    let ds = generate(&cfg.data)?;
    let schedule = cfg.schedule.build()?;
    let model = SegmentationModel::new(cfg.model.clone())?;
    let out = train(&ds, TrainStart::Fresh(model), &cfg.train, &schedule, None)?;
    let test = ds.split(Split::Test);
    for steps in [1, 2, 4, 8, 25] {
        let mut ev = cfg.eval.clone();
        ev.steps = steps;
        let r = evaluate(&test, ds.num_classes(), Predictor::Model(&out.model), &schedule, &ev)?;
        println!("steps={steps:<3} {}", r.report);
    }
    Ok(())
}
