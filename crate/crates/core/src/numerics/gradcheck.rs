//! Central finite-difference gradient checker.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub h: f64,
    /// Maximum accepted relative error.
    pub tol: f64,
    /// Denominator floor for the relative error, so near-zero gradients are
    /// compared in absolute terms.
    pub abs_floor: f64,
    /// Check at most this many randomly chosen coordinates per block.
    pub max_coords_per_block: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-4,
            abs_floor: 1e-7,
            max_coords_per_block: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BlockReport {
    pub name: String,
    pub coords: usize,
    pub max_rel_error: f64,
    /// Coordinate (flat index) where the largest error occurred.
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub blocks: Vec<BlockReport>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().fold(0.0, |m, b| m.max(b.max_rel_error))
    }

    pub fn total_coords(&self) -> usize {
        self.blocks.iter().map(|b| b.coords).sum()
    }
}

/// Relative error with an absolute floor on the denominator.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn evaluate<F>(f: &F, params: &[(String, Matrix)]) -> Result<(Graph, Vec<Var>, Var)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|(_, m)| g.param(m.clone())).collect();
    let out = f(&mut g, &vars)?;
    let value = g.value(out);
    if value.shape() != (1, 1) {
        return Err(Error::Shape {
            op: "check_gradient",
            lhs: value.shape(),
            rhs: (1, 1),
        });
    }
    if !value.data()[0].is_finite() {
        return Err(Error::NonFinite(format!(
            "objective evaluated to {}",
            value.data()[0]
        )));
    }
    Ok((g, vars, out))
}

/// Compares the analytic gradient of the scalar `f` against central
/// differences `(f(p+h) − f(p−h)) / 2h`, block by block.
///
/// `f` receives one leaf per entry of `params`, in order.
pub fn check_gradient<F>(
    f: F,
    params: &[(String, Matrix)],
    cfg: &GradCheckConfig,
) -> Result<GradReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(cfg.h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be > 0, got {}", cfg.h)));
    }
    let (g, vars, out) = evaluate(&f, params)?;
    let grads = g.backward(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut work: Vec<(String, Matrix)> = params.to_vec();
    let mut report = GradReport::default();

    for (b, var) in vars.iter().enumerate() {
        let n = params[b].1.len();
        let analytic = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(params[b].1.rows(), params[b].1.cols()));
        let coords: Vec<usize> = match cfg.max_coords_per_block {
            Some(k) if k < n => {
                let mut v = sample(&mut rng, n, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };

        let mut block = BlockReport {
            name: params[b].0.clone(),
            coords: coords.len(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic_at_worst: 0.0,
            numeric_at_worst: 0.0,
            passed: true,
        };
        for &k in &coords {
            let orig = work[b].1.data()[k];
            work[b].1.data_mut()[k] = orig + cfg.h;
            let (gp, _, op) = evaluate(&f, &work)?;
            work[b].1.data_mut()[k] = orig - cfg.h;
            let (gm, _, om) = evaluate(&f, &work)?;
            work[b].1.data_mut()[k] = orig;

            let numeric = (gp.scalar(op) - gm.scalar(om)) / (2.0 * cfg.h);
            let a = analytic.data()[k];
            let err = relative_error(a, numeric, cfg.abs_floor);
            if err > block.max_rel_error || block.coords == 0 {
                block.max_rel_error = err;
                block.worst_index = k;
                block.analytic_at_worst = a;
                block.numeric_at_worst = numeric;
            }
        }
        block.passed = block.max_rel_error <= cfg.tol;
        report.blocks.push(block);
    }
    Ok(report)
}
