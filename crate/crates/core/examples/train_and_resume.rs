//! Trains a small model for a few epochs, stops halfway, resumes from the
//! saved checkpoint and checks that the result matches an uninterrupted run.
//!
//! ```text
//! cargo run --example train_and_resume -- [epochs]
//! ```

use diffseg::checkpoint::Checkpoint;
use diffseg::config::ExperimentConfig;
use diffseg::model::SegmentationModel;
use diffseg::pipeline::{train, TrainStart};
use diffseg::synthdata::generate;

fn main() -> diffseg::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(6, |s| s.parse().expect("epochs"));
    let mut cfg = ExperimentConfig::reference();
    cfg.data.train_videos = 12;
    cfg.data.test_videos = 4;
    cfg.train.epochs = epochs;
    cfg.train.checkpoint_every = 1;
    cfg.train.log_wall_clock = false;
    cfg.validate()?;

    let ds = generate(&cfg.data)?;
    let schedule = cfg.schedule.build()?;
    let root = std::env::temp_dir().join("diffseg_example_resume");
    let _ = std::fs::remove_dir_all(&root);

    let full = train(&ds, TrainStart::Fresh(SegmentationModel::new(cfg.model.clone())?), &cfg.train, &schedule, Some(&root.join("full")))?;
    for rec in full.log.iter().step_by(3) {
        println!("{}", rec.to_line());
    }

    let half = epochs / 2;
    let mut first = cfg.train.clone();
    first.epochs = half;
    let part = root.join("split");
    train(&ds, TrainStart::Fresh(SegmentationModel::new(cfg.model.clone())?), &first, &schedule, Some(&part))?;
    let ck = Checkpoint::load(&part.join("checkpoints").join(format!("epoch_{half:04}.ckpt")))?;
    println!("resuming at epoch {} (iteration {})", half, ck.state.as_ref().map_or(0, |s| s.iteration));
    let resumed = train(&ds, TrainStart::Resume(ck), &cfg.train, &schedule, Some(&part))?;

    let same = resumed.model.params().values() == full.model.params().values();
    println!("parameters identical to the uninterrupted run: {same}");
    let a = std::fs::read(root.join("full/model.ckpt")).map_err(|e| diffseg::Error::io(&root, e))?;
    let b = std::fs::read(part.join("model.ckpt")).map_err(|e| diffseg::Error::io(&part, e))?;
    println!("final checkpoints byte-identical: {} ({} bytes)", a == b, a.len());
    Ok(())
}
