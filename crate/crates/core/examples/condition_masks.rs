//! Prints the four condition masks for one synthetic video: unmasked,
//! position-only, boundary and relation.
//!
//! ```text
//! cargo run --example condition_masks -- [boundary_std]
//! ```

use diffseg::masking::{hard_boundaries, make_mask, soften_boundaries, MaskKind};
use diffseg::seed;
use diffseg::synthdata::{generate, DataConfig};

fn main() -> diffseg::Result<()> {
    let std: f64 = std::env::args().nth(1).map_or(2.0, |s| s.parse().expect("boundary std"));
    let ds = generate(&DataConfig {
        train_videos: 1,
        test_videos: 0,
        ..Default::default()
    })?;
    let video = &ds.videos[0];
    // one character per 2 frames keeps the rows on screen
    let squeeze = |s: Vec<char>| s.into_iter().step_by(2).collect::<String>();

    println!("labels {}", squeeze(video.labels.iter().map(|&l| char::from(b'0' + l as u8)).collect()));
    let soft = soften_boundaries(&hard_boundaries(&video.labels), std)?;
    let strength = soft.frame_strength();
    println!("soft   {}", squeeze(strength.iter().map(|&b| char::from(b'0' + (b * 9.0).round() as u8)).collect()));

    let mut rng = seed::rng(1, &[]);
    for kind in [MaskKind::N, MaskKind::P, MaskKind::B, MaskKind::R] {
        let mask = make_mask(kind, &video.labels, &soft, &mut rng)?;
        let kept = mask.values.iter().filter(|&&v| v).count();
        let row: Vec<char> = mask.values.iter().map(|&v| if v { '#' } else { '.' }).collect();
        println!("{kind}      {}  {kept}/{} kept", squeeze(row), mask.len());
    }
    Ok(())
}
