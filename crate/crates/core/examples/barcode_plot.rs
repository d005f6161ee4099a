//! Draws ground truth, an oracle prediction and a nearest-prototype
//! prediction of one test video as stacked barcodes.
//!
//! ```text
//! cargo run --example barcode_plot -- [out.svg]
//! ```

use diffseg::numerics::Matrix;
use diffseg::plot::{barcode_svg, BarcodeStyle};
use diffseg::synthdata::{generate, DataConfig, Split};

fn nearest(features: &Matrix, prototypes: &Matrix) -> Vec<usize> {
    features
        .row_iter()
        .map(|f| {
            let dist = |c: usize| prototypes.row(c).iter().zip(f).map(|(p, x)| (p - x) * (p - x)).sum::<f64>();
            (0..prototypes.rows()).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).unwrap()
        })
        .collect()
}

fn main() -> diffseg::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "barcode.svg".into());
    let ds = generate(&DataConfig {
        noise_std: 2.0,
        ..Default::default()
    })?;
    let video = ds.split(Split::Test)[0];
    let protos = ds.prototypes.as_ref().expect("generated data has prototypes");
    let rows = vec![
        ("ground truth".to_string(), video.labels.clone()),
        ("oracle".to_string(), video.labels.clone()),
        ("nearest proto".to_string(), nearest(&video.features, protos)),
    ];
    let svg = barcode_svg(&rows, &BarcodeStyle::default())?;
    std::fs::write(&out, svg).map_err(|e| diffseg::Error::io(std::path::Path::new(&out), e))?;
    println!("wrote {out} ({} frames of {})", video.len(), video.id);
    Ok(())
}
