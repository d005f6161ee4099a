//! Cross-entropy, temporal smoothness and boundary alignment losses, and
//! their weighted combination.
//!
//! Each loss is built on a [`Graph`] so that gradients flow back into the
//! networks; the `*_value` helpers evaluate a loss on plain matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::BoundarySoft;
use crate::numerics::{Graph, Matrix, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub ce: f64,
    pub smooth: f64,
    pub boundary: f64,
    /// Weight of cross-entropy plus smoothness on the encoder's auxiliary head.
    pub aux: f64,
    /// Truncation of `|Δ log p|` in the smoothness loss.
    pub smooth_clip: f64,
    /// Added inside every logarithm.
    pub log_eps: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            ce: 1.0,
            smooth: 1.0,
            boundary: 1.0,
            aux: 1.0,
            smooth_clip: 4.0,
            log_eps: 1e-8,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("ce", self.ce),
            ("smooth", self.smooth),
            ("boundary", self.boundary),
            ("aux", self.aux),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("loss weight {name} must be >= 0, got {v}")));
            }
        }
        if !(self.smooth_clip > 0.0 && self.smooth_clip.is_finite()) {
            return Err(Error::Config(format!(
                "smooth_clip must be finite and > 0, got {}",
                self.smooth_clip
            )));
        }
        if !(self.log_eps > 0.0) {
            return Err(Error::Config("log_eps must be > 0".into()));
        }
        Ok(())
    }
}

/// `ln((1−eps)·x + eps)`: maps `[0, 1]` onto `[eps, 1]` before the log so
/// probabilities never produce a positive log.
fn safe_ln(g: &mut Graph, x: Var, eps: f64) -> Var {
    let shrunk = g.scale(x, 1.0 - eps);
    g.ln(shrunk, eps)
}

fn check_same(g: &Graph, p: Var, y0: &Matrix, op: &'static str) -> Result<()> {
    if g.shape(p) != y0.shape() {
        return Err(Error::Shape {
            op,
            lhs: g.shape(p),
            rhs: y0.shape(),
        });
    }
    Ok(())
}

/// `−(1/(L·C)) Σ Y₀ log P`, with `eps` guarding the log.
pub fn loss_ce(g: &mut Graph, p: Var, y0: &Matrix, log_eps: f64) -> Result<Var> {
    check_same(g, p, y0, "loss_ce")?;
    let logp = safe_ln(g, p, log_eps);
    let picked = g.mul_const(logp, y0)?;
    let total = g.sum(picked);
    Ok(g.scale(total, -1.0 / y0.len().max(1) as f64))
}

/// Mean squared difference of adjacent-frame log-probabilities, with each
/// difference truncated at `clip`. Zero for fewer than two frames.
pub fn loss_smooth(g: &mut Graph, p: Var, clip: f64, log_eps: f64) -> Result<Var> {
    let (len, classes) = g.shape(p);
    if len < 2 {
        return Ok(g.constant(Matrix::zeros(1, 1)));
    }
    let logp = safe_ln(g, p, log_eps);
    let next = g.slice_rows(logp, 1, len)?;
    let prev = g.slice_rows(logp, 0, len - 1)?;
    let diff = g.sub(next, prev)?;
    let clipped = g.clamp(diff, -clip, clip);
    let sq = g.square(clipped);
    let total = g.sum(sq);
    Ok(g.scale(total, 1.0 / ((len - 1) * classes) as f64))
}

/// Binary cross-entropy between the predicted boundary probability
/// `1 − P_i·P_{i+1}` and the soft ground truth, averaged over gaps.
pub fn loss_boundary(g: &mut Graph, p: Var, soft: &BoundarySoft, log_eps: f64) -> Result<Var> {
    let (len, classes) = g.shape(p);
    if len < 2 {
        return Ok(g.constant(Matrix::zeros(1, 1)));
    }
    if soft.len() != len - 1 {
        return Err(Error::Shape {
            op: "loss_boundary",
            lhs: (len, classes),
            rhs: (soft.len(), 1),
        });
    }
    let prev = g.slice_rows(p, 0, len - 1)?;
    let next = g.slice_rows(p, 1, len)?;
    let prod = g.mul(prev, next)?;
    let same = g.row_sum(prod);
    let changed = g.rsub(1.0, same);

    let target = Matrix::from_vec(len - 1, 1, soft.values.clone())?;
    let keep = target.map(|b| 1.0 - b);
    let log_changed = safe_ln(g, changed, log_eps);
    let log_same = safe_ln(g, same, log_eps);
    let a = g.mul_const(log_changed, &target)?;
    let b = g.mul_const(log_same, &keep)?;
    let both = g.add(a, b)?;
    let total = g.sum(both);
    Ok(g.scale(total, -1.0 / (len - 1) as f64))
}

/// Scalar loss values for logging.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub ce: f64,
    pub smooth: f64,
    pub boundary: f64,
    pub aux_ce: f64,
    pub aux_smooth: f64,
}

impl LossBreakdown {
    pub fn accumulate(&mut self, other: &LossBreakdown, k: f64) {
        self.total += k * other.total;
        self.ce += k * other.ce;
        self.smooth += k * other.smooth;
        self.boundary += k * other.boundary;
        self.aux_ce += k * other.aux_ce;
        self.aux_smooth += k * other.aux_smooth;
    }

    pub fn is_finite(&self) -> bool {
        [
            self.total,
            self.ce,
            self.smooth,
            self.boundary,
            self.aux_ce,
            self.aux_smooth,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Graph handle of the combined loss plus its logged components.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub breakdown: LossBreakdown,
}

/// `w_ce·L_ce + w_smo·L_smo + w_bd·L_bd` on the decoder output plus
/// `w_aux·(L_ce + L_smo)` on the auxiliary prediction when one is given.
pub fn loss_sum(
    g: &mut Graph,
    p: Var,
    aux: Option<Var>,
    y0: &Matrix,
    soft: &BoundarySoft,
    w: &LossWeights,
) -> Result<LossTerms> {
    let ce = loss_ce(g, p, y0, w.log_eps)?;
    let smo = loss_smooth(g, p, w.smooth_clip, w.log_eps)?;
    let bd = loss_boundary(g, p, soft, w.log_eps)?;
    let mut parts = vec![g.scale(ce, w.ce), g.scale(smo, w.smooth), g.scale(bd, w.boundary)];
    let mut breakdown = LossBreakdown {
        ce: g.scalar(ce),
        smooth: g.scalar(smo),
        boundary: g.scalar(bd),
        ..Default::default()
    };
    if let Some(aux) = aux {
        let aux_ce = loss_ce(g, aux, y0, w.log_eps)?;
        let aux_smo = loss_smooth(g, aux, w.smooth_clip, w.log_eps)?;
        breakdown.aux_ce = g.scalar(aux_ce);
        breakdown.aux_smooth = g.scalar(aux_smo);
        let both = g.add(aux_ce, aux_smo)?;
        parts.push(g.scale(both, w.aux));
    }
    let mut total = parts[0];
    for &p in &parts[1..] {
        total = g.add(total, p)?;
    }
    breakdown.total = g.scalar(total);
    Ok(LossTerms { total, breakdown })
}

pub fn loss_ce_value(p: &Matrix, y0: &Matrix, log_eps: f64) -> Result<f64> {
    let mut g = Graph::new();
    let pv = g.constant(p.clone());
    let l = loss_ce(&mut g, pv, y0, log_eps)?;
    Ok(g.scalar(l))
}

pub fn loss_smooth_value(p: &Matrix, clip: f64, log_eps: f64) -> Result<f64> {
    let mut g = Graph::new();
    let pv = g.constant(p.clone());
    let l = loss_smooth(&mut g, pv, clip, log_eps)?;
    Ok(g.scalar(l))
}

pub fn loss_boundary_value(p: &Matrix, soft: &BoundarySoft, log_eps: f64) -> Result<f64> {
    let mut g = Graph::new();
    let pv = g.constant(p.clone());
    let l = loss_boundary(&mut g, pv, soft, log_eps)?;
    Ok(g.scalar(l))
}

pub fn loss_sum_value(
    p: &Matrix,
    aux: Option<&Matrix>,
    y0: &Matrix,
    soft: &BoundarySoft,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    let mut g = Graph::new();
    let pv = g.constant(p.clone());
    let av = aux.map(|a| g.constant(a.clone()));
    Ok(loss_sum(&mut g, pv, av, y0, soft, w)?.breakdown)
}
