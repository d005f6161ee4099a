//! Trains one model per set of training masks and evaluates each with every
//! inference mask, through the same sweep the command line uses.
//!
//! ```text
//! cargo run --release --example masking_ablation -- [epochs]
//! ```

use diffseg::config::ExperimentConfig;
use diffseg::experiment::{cmd_generate, cmd_sweep, summary_table, SweepPlan};

fn main() -> diffseg::Result<()> {
    let mut cfg = ExperimentConfig::reference();
    cfg.train.epochs = std::env::args().nth(1).map_or(40, |s| s.parse().expect("epochs"));
    cfg.train.log_wall_clock = false;
    let root = std::env::temp_dir().join("diffseg_example_masks");
    let _ = std::fs::remove_dir_all(&root);
    cmd_generate(&cfg, &root.join("data"))?;

    let plan = SweepPlan {
        train_masks: vec!["N".into(), "NP".into(), "NPB".into(), "NPBR".into()],
        steps: vec![25],
        infer_masks: vec!["N".into(), "P".into()],
    };
    let rows = cmd_sweep(&cfg, &plan, &root.join("data"), &root.join("sweep"))?;
    print!("{}", summary_table(&rows));
    println!("summary written to {}", root.join("sweep/summary.csv").display());
    Ok(())
}
