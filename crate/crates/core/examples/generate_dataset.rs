//! Generates the reference synthetic dataset, writes it to disk, reads it
//! back and prints per-split statistics.
//!
//! ```text
//! cargo run --example generate_dataset -- [out_dir]
//! ```

use std::path::PathBuf;

use diffseg::metrics::to_segments;
use diffseg::synthdata::{generate, read_dataset, write_dataset, DataConfig, Split};

fn main() -> diffseg::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("diffseg_example_dataset"));
    let cfg = DataConfig::default();
    let ds = generate(&cfg)?;
    write_dataset(&out, &ds)?;
    let back = read_dataset(&out)?;
    assert_eq!(back, ds);
    println!("wrote {} videos to {}", ds.videos.len(), out.display());

    for split in [Split::Train, Split::Test] {
        let videos = ds.split(split);
        let frames: usize = videos.iter().map(|v| v.len()).sum();
        let segments: usize = videos.iter().map(|v| to_segments(&v.labels).len()).sum();
        println!(
            "{:<5} {:>3} videos, {:>6} frames, {:.2} segments per video",
            split.name(),
            videos.len(),
            frames,
            segments as f64 / videos.len() as f64
        );
    }
    let v = &ds.videos[0];
    let order: Vec<&str> = to_segments(&v.labels)
        .iter()
        .map(|s| ds.class_names[s.label].as_str())
        .collect();
    println!("{}: {} frames, actions {}", v.id, v.len(), order.join(" -> "));
    Ok(())
}
