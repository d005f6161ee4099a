//! Trains on the reference synthetic benchmark and prints test metrics next
//! to the two baselines.
//!
//! ```text
//! cargo run --release --example toy_benchmark -- [epochs] [noise_std] [masks]
//! ```

use std::time::Instant;

use diffseg::config::ExperimentConfig;
use diffseg::model::SegmentationModel;
use diffseg::pipeline::{evaluate, nearest_prototype_baseline, permuted_label_baseline, train, Predictor, TrainStart};
use diffseg::synthdata::{generate, Split};

fn main() -> diffseg::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = ExperimentConfig::reference();
    cfg.train.log_wall_clock = false;
    if let Some(e) = args.first() {
        cfg.train.epochs = e.parse().expect("epochs");
    }
    if let Some(n) = args.get(1) {
        cfg.data.noise_std = n.parse().expect("noise std");
    }
    if let Some(m) = args.get(2) {
        cfg.train.masks = m.clone();
    }
    cfg.validate()?;

    let ds = generate(&cfg.data)?;
    let (train_split, test) = (ds.split(Split::Train), ds.split(Split::Test));
    let schedule = cfg.schedule.build()?;
    let c = ds.num_classes();

    println!("nearest prototype  {}", nearest_prototype_baseline(&train_split, &test, c, &cfg.eval.metrics)?);
    println!("permuted labels    {}", permuted_label_baseline(&test, cfg.eval.seed, &cfg.eval.metrics)?);

    let start = Instant::now();
    let model = SegmentationModel::new(cfg.model.clone())?;
    let outcome = train(&ds, TrainStart::Fresh(model), &cfg.train, &schedule, None)?;
    let per_epoch = outcome.log.len() / cfg.train.epochs.max(1);
    for (i, rec) in outcome.log.iter().enumerate() {
        if per_epoch > 0 && i % (per_epoch * 10) == 0 {
            println!("{}", rec.to_line());
        }
    }
    println!("trained {} epochs in {:.1}s", cfg.train.epochs, start.elapsed().as_secs_f64());

    for (steps, mask) in [(25, "N"), (1, "N"), (25, "P")] {
        let mut ev = cfg.eval.clone();
        ev.steps = steps;
        ev.mask = mask.into();
        let t = Instant::now();
        let out = evaluate(&test, c, Predictor::Model(&outcome.model), &schedule, &ev)?;
        println!("steps={steps:<2} mask={mask}  {}  ({:.1}s)", out.report, t.elapsed().as_secs_f64());
    }
    Ok(())
}
