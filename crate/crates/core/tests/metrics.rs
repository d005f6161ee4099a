//! Segment metrics against brute-force references, plus hand-checked cases.

mod common;

use diffseg::metrics::{
    edit_score, f1_at, frame_accuracy, match_counts, AccWeighting, MetricAccumulator, MetricOptions, F1_THRESHOLDS,
};
use diffseg::seed;
use proptest::prelude::*;
use rand::Rng;

fn random_pair(i: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seed::rng(i, &[0x5e9]);
    let len = rng.gen_range(1..60);
    let classes = rng.gen_range(1..5);
    (
        common::random_labels(&mut rng, len, classes),
        common::random_labels(&mut rng, len, classes),
    )
}

#[test]
fn edit_matches_recursive_reference() {
    for i in 0..1500 {
        let (p, g) = random_pair(i);
        let want = common::edit_oracle(&p, &g);
        assert!((edit_score(&p, &g) - want).abs() < 1e-9, "instance {i}: {p:?} vs {g:?}");
    }
}

#[test]
fn match_counts_follow_the_greedy_rule() {
    for i in 0..1500 {
        let (p, g) = random_pair(i);
        for tau in F1_THRESHOLDS {
            let c = match_counts(&p, &g, tau);
            assert_eq!((c.tp, c.fp, c.fn_), common::greedy_counts_oracle(&p, &g, tau), "instance {i} tau {tau}");
        }
    }
}

#[test]
fn greedy_never_beats_the_best_assignment() {
    let mut strictly_worse = 0;
    for i in 0..1500 {
        let (p, g) = random_pair(i);
        for tau in F1_THRESHOLDS {
            let best = common::max_matching_oracle(&p, &g, tau);
            let tp = match_counts(&p, &g, tau).tp;
            assert!(tp <= best, "instance {i}");
            strictly_worse += usize::from(tp < best);
        }
    }
    // at tau ≥ 0.5 a segment overlaps at most one partner above threshold,
    // so disagreements only come from the two lower thresholds
    println!("greedy below optimum in {strictly_worse} of 4500 cases");
}

#[test]
fn greedy_is_optimal_at_half_overlap() {
    for i in 0..1500 {
        let (p, g) = random_pair(i);
        assert_eq!(match_counts(&p, &g, 0.5).tp, common::max_matching_oracle(&p, &g, 0.5), "instance {i}");
    }
}

#[test]
fn hand_checked_example() {
    let gt = [0, 0, 0, 0, 1, 1, 1, 1, 2, 2];
    let pred = [0, 0, 0, 1, 1, 1, 1, 1, 1, 2];
    assert!((frame_accuracy(&pred, &gt).unwrap() - 80.0).abs() < 1e-12);
    assert_eq!(edit_score(&pred, &gt), 100.0);
    // IoUs: 3/4, 2/3, 1/2
    let (p, r, f) = f1_at(&pred, &gt, 0.5);
    assert_eq!((p, r, f), (100.0, 100.0, 100.0));
    let c = match_counts(&pred, &gt, 0.7);
    assert_eq!((c.tp, c.fp, c.fn_), (1, 2, 2));
}

#[test]
fn oversegmentation_is_punished_by_edit_not_accuracy() {
    let gt = vec![0; 20];
    let mut pred = vec![0; 20];
    pred[5] = 1;
    pred[12] = 1;
    assert!((frame_accuracy(&pred, &gt).unwrap() - 90.0).abs() < 1e-12);
    assert!((edit_score(&pred, &gt) - 20.0).abs() < 1e-12);
}

#[test]
fn accumulator_weighting() {
    let short = (vec![0, 1], vec![0, 0]);
    let long = (vec![0; 8], vec![0; 8]);
    let mut frames = MetricAccumulator::new(MetricOptions::default());
    let mut videos = MetricAccumulator::new(MetricOptions {
        acc_weighting: AccWeighting::Videos,
        ..Default::default()
    });
    for acc in [&mut frames, &mut videos] {
        acc.add(&short.0, &short.1).unwrap();
        acc.add(&long.0, &long.1).unwrap();
    }
    assert!((frames.report().acc - 90.0).abs() < 1e-12);
    assert!((videos.report().acc - 75.0).abs() < 1e-12);
}

fn labels_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..40, 1usize..5).prop_flat_map(|(len, c)| {
        (prop::collection::vec(0..c, len), prop::collection::vec(0..c, len))
    })
}

fn upsample(l: &[usize], k: usize) -> Vec<usize> {
    l.iter().flat_map(|&x| std::iter::repeat(x).take(k)).collect()
}

proptest! {
    #[test]
    fn scores_are_bounded((p, g) in labels_strategy()) {
        let acc = frame_accuracy(&p, &g).unwrap();
        let edit = edit_score(&p, &g);
        prop_assert!((0.0..=100.0).contains(&acc));
        prop_assert!((0.0..=100.0).contains(&edit));
        for tau in F1_THRESHOLDS {
            let (pr, rc, f) = f1_at(&p, &g, tau);
            for v in [pr, rc, f] {
                prop_assert!((0.0..=100.0).contains(&v));
            }
        }
    }

    #[test]
    fn identical_sequences_score_100((p, _) in labels_strategy()) {
        prop_assert_eq!(frame_accuracy(&p, &p).unwrap(), 100.0);
        prop_assert_eq!(edit_score(&p, &p), 100.0);
        for tau in F1_THRESHOLDS {
            prop_assert_eq!(f1_at(&p, &p, tau).2, 100.0);
        }
    }

    #[test]
    fn upsampling_preserves_segment_metrics((p, g) in labels_strategy(), k in 2usize..5) {
        let (pu, gu) = (upsample(&p, k), upsample(&g, k));
        prop_assert!((edit_score(&pu, &gu) - edit_score(&p, &g)).abs() < 1e-9);
        prop_assert!((frame_accuracy(&pu, &gu).unwrap() - frame_accuracy(&p, &g).unwrap()).abs() < 1e-9);
        for tau in F1_THRESHOLDS {
            prop_assert!((f1_at(&pu, &gu, tau).2 - f1_at(&p, &g, tau).2).abs() < 1e-9);
        }
    }

    #[test]
    fn f1_does_not_grow_with_threshold((p, g) in labels_strategy()) {
        let f: Vec<f64> = F1_THRESHOLDS.iter().map(|&t| f1_at(&p, &g, t).2).collect();
        prop_assert!(f[0] >= f[1] - 1e-9 && f[1] >= f[2] - 1e-9, "{:?}", f);
    }

    #[test]
    fn edit_is_symmetric((p, g) in labels_strategy()) {
        prop_assert!((edit_score(&p, &g) - edit_score(&g, &p)).abs() < 1e-9);
    }
}
