//! Scores a few hand-made predictions against one ground truth to show how
//! accuracy, edit score and F1 react to shifts and over-segmentation.
//!
//! ```text
//! cargo run --example segment_metrics
//! ```

use diffseg::metrics::{MetricAccumulator, MetricOptions};

fn runs(pairs: &[(usize, usize)]) -> Vec<usize> {
    pairs.iter().flat_map(|&(l, n)| std::iter::repeat(l).take(n)).collect()
}

fn main() -> diffseg::Result<()> {
    let gt = runs(&[(0, 30), (1, 40), (2, 30)]);
    let cases = [
        ("exact", gt.clone()),
        ("shifted boundaries", runs(&[(0, 38), (1, 40), (2, 22)])),
        ("over-segmented", runs(&[(0, 30), (1, 18), (2, 2), (1, 20), (2, 30)])),
        ("missing middle", runs(&[(0, 50), (2, 50)])),
        ("wrong order", runs(&[(0, 30), (2, 40), (1, 30)])),
    ];
    for (name, pred) in cases {
        let mut acc = MetricAccumulator::new(MetricOptions::default());
        acc.add(&pred, &gt)?;
        println!("{name:<20} {}", acc.report());
    }
    Ok(())
}
