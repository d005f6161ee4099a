//! Action boundaries, Gaussian-softened boundaries, and the four condition
//! masks that gate the encoded features during training.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Gap `i` is set iff frames `i` and `i+1` carry different labels.
pub fn hard_boundaries(labels: &[usize]) -> Vec<bool> {
    labels.windows(2).map(|w| w[0] != w[1]).collect()
}

/// Gaussian-smoothed boundary indicator over the `L−1` gaps.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySoft {
    pub values: Vec<f64>,
    pub kernel_std: f64,
}

impl BoundarySoft {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Frame-level strength `max(B̄_{i−1}, B̄_i)`; gaps outside the video
    /// count as 0. Has one more entry than there are gaps.
    pub fn frame_strength(&self) -> Vec<f64> {
        let gaps = &self.values;
        (0..=gaps.len())
            .map(|i| {
                let left = if i > 0 { gaps[i - 1] } else { 0.0 };
                let right = gaps.get(i).copied().unwrap_or(0.0);
                left.max(right)
            })
            .collect()
    }
}

/// Truncated Gaussian taps `exp(−k²/2σ²)` for `|k| ≤ ⌈4σ⌉`; center tap 1.
pub fn gaussian_taps(std: f64) -> Vec<f64> {
    let radius = (4.0 * std).ceil() as i64;
    (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * std * std)).exp())
        .collect()
}

/// Convolves the hard boundaries with a peak-normalized Gaussian
/// (zero-extended at the ends) and clips the result to `[0, 1]`.
pub fn soften_boundaries(hard: &[bool], std: f64) -> Result<BoundarySoft> {
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::Config(format!(
            "boundary kernel std must be > 0, got {std}"
        )));
    }
    let taps = gaussian_taps(std);
    let radius = (taps.len() / 2) as isize;
    let n = hard.len() as isize;
    let mut values = vec![0.0; hard.len()];
    for (j, _) in hard.iter().enumerate().filter(|(_, &b)| b) {
        let j = j as isize;
        for i in (j - radius).max(0)..(j + radius + 1).min(n) {
            values[i as usize] += taps[(i - j + radius) as usize];
        }
    }
    for v in &mut values {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(BoundarySoft {
        values,
        kernel_std: std,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MaskKind {
    /// All ones: features pass through.
    N,
    /// All zeros: the decoder sees no features.
    P,
    /// Zero near ground-truth boundaries.
    B,
    /// Zero on every frame of one action class.
    R,
}

impl MaskKind {
    pub const ALL: [MaskKind; 4] = [MaskKind::N, MaskKind::P, MaskKind::B, MaskKind::R];

    pub fn as_char(self) -> char {
        match self {
            MaskKind::N => 'N',
            MaskKind::P => 'P',
            MaskKind::B => 'B',
            MaskKind::R => 'R',
        }
    }

    /// Parses a compact set like `"NPBR"` or `"N,P"`.
    pub fn parse_set(text: &str) -> Result<Vec<MaskKind>> {
        let mut kinds = Vec::new();
        for c in text.chars().filter(|c| !matches!(c, ',' | ' ' | '+')) {
            let k: MaskKind = c.to_string().parse()?;
            if !kinds.contains(&k) {
                kinds.push(k);
            }
        }
        if kinds.is_empty() {
            return Err(Error::Config("mask set is empty".into()));
        }
        Ok(kinds)
    }

    pub fn set_label(kinds: &[MaskKind]) -> String {
        kinds.iter().map(|k| k.as_char()).collect()
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "N" | "n" => Ok(MaskKind::N),
            "P" | "p" => Ok(MaskKind::P),
            "B" | "b" => Ok(MaskKind::B),
            "R" | "r" => Ok(MaskKind::R),
            other => Err(Error::Config(format!(
                "unknown mask kind {other:?}; expected one of N, P, B, R"
            ))),
        }
    }
}

/// Per-frame binary gate for the conditioning features.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionMask {
    pub kind: MaskKind,
    pub values: Vec<bool>,
    /// Set when a relation mask had only one class to erase and therefore
    /// blocks every frame.
    pub degenerate: bool,
}

impl ConditionMask {
    pub fn all(kind: MaskKind, len: usize, keep: bool) -> Self {
        Self {
            kind,
            values: vec![keep; len],
            degenerate: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn factors(&self) -> Vec<f64> {
        self.values.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect()
    }

    /// `E ⊙ M` with the mask broadcast across features.
    pub fn apply(&self, features: &Matrix) -> Result<Matrix> {
        if features.rows() != self.values.len() {
            return Err(Error::Shape {
                op: "apply_mask",
                lhs: features.shape(),
                rhs: (self.values.len(), 1),
            });
        }
        let mut out = features.clone();
        for (i, &keep) in self.values.iter().enumerate() {
            if !keep {
                out.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Ok(out)
    }
}

/// Masks frame `i` iff its boundary strength reaches 0.5.
pub fn boundary_mask(soft: &BoundarySoft) -> ConditionMask {
    ConditionMask {
        kind: MaskKind::B,
        values: soft.frame_strength().into_iter().map(|b| b < 0.5).collect(),
        degenerate: false,
    }
}

/// Masks every frame labelled `class`.
pub fn relation_mask(labels: &[usize], class: usize) -> ConditionMask {
    ConditionMask {
        kind: MaskKind::R,
        values: labels.iter().map(|&c| c != class).collect(),
        degenerate: false,
    }
}

/// Builds a mask of the requested kind for one video.
///
/// The relation mask draws its class uniformly among the classes present in
/// `labels`; a single-class video yields an all-zero mask flagged as
/// degenerate.
pub fn make_mask<R: Rng + ?Sized>(
    kind: MaskKind,
    labels: &[usize],
    soft: &BoundarySoft,
    rng: &mut R,
) -> Result<ConditionMask> {
    let len = labels.len();
    match kind {
        MaskKind::N => Ok(ConditionMask::all(kind, len, true)),
        MaskKind::P => Ok(ConditionMask::all(kind, len, false)),
        MaskKind::B => {
            if soft.len() + 1 != len && len > 0 {
                return Err(Error::Validation(format!(
                    "soft boundaries have {} gaps for {len} frames",
                    soft.len()
                )));
            }
            Ok(boundary_mask(soft))
        }
        MaskKind::R => {
            let mut present: Vec<usize> = labels.to_vec();
            present.sort_unstable();
            present.dedup();
            if present.is_empty() {
                return Ok(ConditionMask::all(kind, 0, false));
            }
            let class = present[rng.gen_range(0..present.len())];
            let mut mask = relation_mask(labels, class);
            mask.degenerate = present.len() == 1;
            Ok(mask)
        }
    }
}

/// Uniform draw over the enabled kinds.
pub fn sample_mask_kind<R: Rng + ?Sized>(enabled: &[MaskKind], rng: &mut R) -> Result<MaskKind> {
    if enabled.is_empty() {
        return Err(Error::Config("no mask kinds enabled".into()));
    }
    Ok(enabled[rng.gen_range(0..enabled.len())])
}
