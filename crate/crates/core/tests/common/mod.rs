//! Independent reference implementations shared by the integration suites.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use rand::Rng;

/// Run-length segments as `(label, frame set)`.
pub fn frame_sets(labels: &[usize]) -> Vec<(usize, BTreeSet<usize>)> {
    let mut out: Vec<(usize, BTreeSet<usize>)> = Vec::new();
    for (t, &l) in labels.iter().enumerate() {
        if t > 0 && labels[t - 1] == l {
            out.last_mut().unwrap().1.insert(t);
        } else {
            out.push((l, BTreeSet::from([t])));
        }
    }
    out
}

/// Levenshtein distance by memoized recursion over suffixes.
pub fn edit_distance_recursive(a: &[usize], b: &[usize]) -> usize {
    fn go(a: &[usize], b: &[usize], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&d) = memo.get(&(i, j)) {
            return d;
        }
        let d = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j, memo)
                .min(go(a, b, i, j + 1, memo))
                .min(go(a, b, i + 1, j + 1, memo))
        };
        memo.insert((i, j), d);
        d
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

pub fn edit_oracle(pred: &[usize], gt: &[usize]) -> f64 {
    let p: Vec<usize> = frame_sets(pred).into_iter().map(|(l, _)| l).collect();
    let g: Vec<usize> = frame_sets(gt).into_iter().map(|(l, _)| l).collect();
    let denom = p.len().max(g.len());
    (100.0 * (1.0 - edit_distance_recursive(&p, &g) as f64 / denom as f64)).max(0.0)
}

fn iou(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    a.intersection(b).count() as f64 / a.union(b).count() as f64
}

/// `(tp, fp, fn)` under the greedy rule, computed on frame sets: each
/// prediction in temporal order claims its best same-label ground-truth
/// segment (earliest on ties) and scores a hit iff IoU ≥ tau and the segment
/// is still free.
pub fn greedy_counts_oracle(pred: &[usize], gt: &[usize], tau: f64) -> (usize, usize, usize) {
    let p = frame_sets(pred);
    let g = frame_sets(gt);
    let mut free: Vec<bool> = vec![true; g.len()];
    let (mut tp, mut fp) = (0, 0);
    for (pl, ps) in &p {
        let mut best: Option<(usize, f64)> = None;
        for (j, (gl, gs)) in g.iter().enumerate() {
            if gl == pl {
                let v = iou(ps, gs);
                if best.map_or(true, |(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
        }
        match best {
            Some((j, v)) if v >= tau && free[j] => {
                free[j] = false;
                tp += 1;
            }
            _ => fp += 1,
        }
    }
    (tp, fp, free.iter().filter(|f| **f).count())
}

/// Largest number of disjoint same-label pairs with IoU ≥ tau, by
/// exhaustive search over assignments.
pub fn max_matching_oracle(pred: &[usize], gt: &[usize], tau: f64) -> usize {
    let p = frame_sets(pred);
    let g = frame_sets(gt);
    let edges: Vec<Vec<usize>> = p
        .iter()
        .map(|(pl, ps)| {
            g.iter()
                .enumerate()
                .filter(|(_, (gl, gs))| gl == pl && iou(ps, gs) >= tau)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    fn go(i: usize, edges: &[Vec<usize>], used: &mut Vec<bool>) -> usize {
        if i == edges.len() {
            return 0;
        }
        let mut best = go(i + 1, edges, used);
        for &j in &edges[i] {
            if !used[j] {
                used[j] = true;
                best = best.max(1 + go(i + 1, edges, used));
                used[j] = false;
            }
        }
        best
    }
    go(0, &edges, &mut vec![false; g.len()])
}

pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    if p + r == 0.0 {
        0.0
    } else {
        100.0 * 2.0 * p * r / (p + r)
    }
}

/// Label sequence of length `1..=max_len` with runs of random length over
/// `1..=max_classes` classes.
pub fn random_labels<R: Rng>(rng: &mut R, len: usize, classes: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(len);
    let switch = rng.gen_range(0.05..0.6);
    let mut cur = rng.gen_range(0..classes);
    for _ in 0..len {
        if rng.gen_bool(switch) {
            cur = rng.gen_range(0..classes);
        }
        out.push(cur);
    }
    out
}
