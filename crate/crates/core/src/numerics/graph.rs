//! Reverse-mode differentiation over a fixed operation vocabulary.
//!
//! A [`Graph`] is an append-only list of nodes. Every operation pushes one node
//! whose parents already exist, so index order is a topological order and the
//! backward pass is a single reverse sweep that visits each node once.

use super::matrix::{gemm_nt_acc, gemm_tn_acc, Matrix};
use super::ops::{dilated_conv1d, dilated_conv1d_backward, softmax_rows, ConvShape};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `x + b` with `b` a single row broadcast over rows.
    AddRow(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Relu(Var),
    /// `ln(x + eps)`.
    Ln(Var, f64),
    Square(Var),
    /// Clamp with zero gradient where saturated.
    Clamp(Var, f64, f64),
    SoftmaxRows(Var),
    Conv1d(Var, Var, ConvShape),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    /// Row `i` multiplied by a constant `m_i`.
    RowScale(Var, Vec<f64>),
    /// Elementwise product with a constant matrix.
    MulConst(Var, Matrix),
    RowSum(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Computation graph for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the differentiated scalar with respect to `v`.
    ///
    /// `None` when `v` does not influence the output or was a constant.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.data()[0]
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn binary_same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        self.value(a).same_shape(self.value(b), op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::MatMul(a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "mul")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Mul(a, b), ng))
    }

    /// Adds a `1×C` row to every row of an `L×C` node.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xr, xc) = self.shape(x);
        if self.shape(row) != (1, xc) {
            return Err(Error::Shape {
                op: "add_row",
                lhs: (xr, xc),
                rhs: self.shape(row),
            });
        }
        let mut value = self.value(x).clone();
        let r = self.value(row).row(0).to_vec();
        for i in 0..xr {
            for (v, b) in value.row_mut(i).iter_mut().zip(&r) {
                *v += b;
            }
        }
        let ng = self.ng(x) || self.ng(row);
        Ok(self.push(value, Op::AddRow(x, row), ng))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let value = self.value(x).map(|v| v * k);
        let ng = self.ng(x);
        self.push(value, Op::Scale(x, k), ng)
    }

    /// `x + c` elementwise.
    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v + c);
        let ng = self.ng(x);
        self.push(value, Op::Offset(x), ng)
    }

    /// `c − x` elementwise.
    pub fn rsub(&mut self, c: f64, x: Var) -> Var {
        let neg = self.scale(x, -1.0);
        self.offset(neg, c)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let ng = self.ng(x);
        self.push(value, Op::Relu(x), ng)
    }

    /// `ln(x + eps)` elementwise.
    pub fn ln(&mut self, x: Var, eps: f64) -> Var {
        let value = self.value(x).map(|v| (v + eps).ln());
        let ng = self.ng(x);
        self.push(value, Op::Ln(x, eps), ng)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        let ng = self.ng(x);
        self.push(value, Op::Square(x), ng)
    }

    /// Clamp into `[lo, hi]`; saturated entries pass no gradient.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(x).map(|v| v.clamp(lo, hi));
        let ng = self.ng(x);
        self.push(value, Op::Clamp(x, lo, hi), ng)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let value = softmax_rows(self.value(x));
        let ng = self.ng(x);
        self.push(value, Op::SoftmaxRows(x), ng)
    }

    pub fn conv1d(&mut self, x: Var, w: Var, shape: ConvShape) -> Result<Var> {
        let value = dilated_conv1d(self.value(x), self.value(w), shape)?;
        let ng = self.ng(x) || self.ng(w);
        Ok(self.push(value, Op::Conv1d(x, w, shape), ng))
    }

    /// Concatenation along the feature (column) axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |&p| self.shape(p).0);
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(Error::Shape {
                    op: "concat_cols",
                    lhs: self.shape(parts[0]),
                    rhs: self.shape(p),
                });
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut value = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut at = 0;
            let dst = value.row_mut(i);
            for &p in parts {
                let src = self.nodes[p.0].value.row(i);
                dst[at..at + src.len()].copy_from_slice(src);
                at += src.len();
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), ng))
    }

    /// Rows `[start, end)`.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if start > end || end > rows {
            return Err(Error::Shape {
                op: "slice_rows",
                lhs: (rows, cols),
                rhs: (start, end),
            });
        }
        let value = self.value(x).rows_range(start, end);
        let ng = self.ng(x);
        Ok(self.push(value, Op::SliceRows(x, start), ng))
    }

    /// Multiplies row `i` by `factors[i]` (e.g. a frame mask).
    pub fn row_scale(&mut self, x: Var, factors: &[f64]) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if factors.len() != rows {
            return Err(Error::Shape {
                op: "row_scale",
                lhs: (rows, cols),
                rhs: (factors.len(), 1),
            });
        }
        let mut value = self.value(x).clone();
        for (i, &f) in factors.iter().enumerate() {
            for v in value.row_mut(i) {
                *v *= f;
            }
        }
        let ng = self.ng(x);
        Ok(self.push(value, Op::RowScale(x, factors.to_vec()), ng))
    }

    pub fn mul_const(&mut self, x: Var, k: &Matrix) -> Result<Var> {
        let value = self.value(x).zip_map(k, |a, b| a * b)?;
        let ng = self.ng(x);
        Ok(self.push(value, Op::MulConst(x, k.clone()), ng))
    }

    /// `L×C → L×1` row sums.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let m = self.value(x);
        let data = m.row_iter().map(|r| r.iter().sum()).collect();
        let value = Matrix::from_vec(m.rows(), 1, data).expect("row_sum shape");
        let ng = self.ng(x);
        self.push(value, Op::RowSum(x), ng)
    }

    /// Sum of all entries as a `1×1` node.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Matrix::filled(1, 1, self.value(x).sum());
        let ng = self.ng(x);
        self.push(value, Op::Sum(x), ng)
    }

    /// Mean of all entries; an empty node has mean 0.
    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        let s = self.sum(x);
        self.scale(s, if n == 0 { 0.0 } else { 1.0 / n as f64 })
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.shape(output) != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                lhs: self.shape(output),
                rhs: (1, 1),
            });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Matrix::ones(1, 1));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, f: impl FnOnce(&mut Matrix)) {
        if !self.ng(v) {
            return;
        }
        let slot = &mut grads[v.0];
        let g = slot.get_or_insert_with(|| {
            let (r, c) = self.nodes[v.0].value.shape();
            Matrix::zeros(r, c)
        });
        f(g);
    }

    fn propagate(&self, op: &Op, out: &Matrix, g: &Matrix, grads: &mut [Option<Matrix>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |ga| gemm_nt_acc(g, bv, ga));
                self.accumulate(grads, *b, |gb| gemm_tn_acc(av, g, gb));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |ga| ga.add_assign(g));
                self.accumulate(grads, *b, |gb| gb.add_assign(g));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |ga| ga.add_assign(g));
                self.accumulate(grads, *b, |gb| {
                    for (d, s) in gb.data_mut().iter_mut().zip(g.data()) {
                        *d -= s;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |ga| fma_into(ga, g, bv));
                self.accumulate(grads, *b, |gb| fma_into(gb, g, av));
            }
            Op::AddRow(x, row) => {
                self.accumulate(grads, *x, |gx| gx.add_assign(g));
                self.accumulate(grads, *row, |gr| {
                    let dst = gr.row_mut(0);
                    for r in g.row_iter() {
                        for (d, s) in dst.iter_mut().zip(r) {
                            *d += s;
                        }
                    }
                });
            }
            Op::Scale(x, k) => self.accumulate(grads, *x, |gx| {
                for (d, s) in gx.data_mut().iter_mut().zip(g.data()) {
                    *d += k * s;
                }
            }),
            Op::Offset(x) => self.accumulate(grads, *x, |gx| gx.add_assign(g)),
            Op::Relu(x) => {
                let xv = self.value(*x);
                self.accumulate(grads, *x, |gx| {
                    for ((d, s), &v) in gx.data_mut().iter_mut().zip(g.data()).zip(xv.data()) {
                        if v > 0.0 {
                            *d += s;
                        }
                    }
                })
            }
            Op::Ln(x, eps) => {
                let xv = self.value(*x);
                self.accumulate(grads, *x, |gx| {
                    for ((d, s), &v) in gx.data_mut().iter_mut().zip(g.data()).zip(xv.data()) {
                        *d += s / (v + eps);
                    }
                })
            }
            Op::Square(x) => {
                let xv = self.value(*x);
                self.accumulate(grads, *x, |gx| {
                    for ((d, s), &v) in gx.data_mut().iter_mut().zip(g.data()).zip(xv.data()) {
                        *d += 2.0 * v * s;
                    }
                })
            }
            Op::Clamp(x, lo, hi) => {
                let xv = self.value(*x);
                self.accumulate(grads, *x, |gx| {
                    for ((d, s), &v) in gx.data_mut().iter_mut().zip(g.data()).zip(xv.data()) {
                        if v > *lo && v < *hi {
                            *d += s;
                        }
                    }
                })
            }
            Op::SoftmaxRows(x) => self.accumulate(grads, *x, |gx| {
                for i in 0..out.rows() {
                    let (y, gy) = (out.row(i), g.row(i));
                    let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                    for ((d, &yv), &gv) in gx.row_mut(i).iter_mut().zip(y).zip(gy) {
                        *d += yv * (gv - dot);
                    }
                }
            }),
            Op::Conv1d(x, w, shape) => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let mut gx_buf = self.ng(*x).then(|| Matrix::zeros(xv.rows(), xv.cols()));
                let mut gw_buf = self.ng(*w).then(|| Matrix::zeros(wv.rows(), wv.cols()));
                dilated_conv1d_backward(xv, wv, *shape, g, gx_buf.as_mut(), gw_buf.as_mut());
                if let Some(b) = gx_buf {
                    self.accumulate(grads, *x, |gx| gx.add_assign(&b));
                }
                if let Some(b) = gw_buf {
                    self.accumulate(grads, *w, |gw| gw.add_assign(&b));
                }
            }
            Op::ConcatCols(parts) => {
                let mut at = 0;
                for &p in parts {
                    let width = self.shape(p).1;
                    self.accumulate(grads, p, |gp| {
                        for i in 0..g.rows() {
                            for (d, s) in gp.row_mut(i).iter_mut().zip(&g.row(i)[at..at + width]) {
                                *d += s;
                            }
                        }
                    });
                    at += width;
                }
            }
            Op::SliceRows(x, start) => self.accumulate(grads, *x, |gx| {
                for i in 0..g.rows() {
                    for (d, s) in gx.row_mut(start + i).iter_mut().zip(g.row(i)) {
                        *d += s;
                    }
                }
            }),
            Op::RowScale(x, factors) => self.accumulate(grads, *x, |gx| {
                for (i, &f) in factors.iter().enumerate() {
                    for (d, s) in gx.row_mut(i).iter_mut().zip(g.row(i)) {
                        *d += f * s;
                    }
                }
            }),
            Op::MulConst(x, k) => self.accumulate(grads, *x, |gx| fma_into(gx, g, k)),
            Op::RowSum(x) => self.accumulate(grads, *x, |gx| {
                for i in 0..gx.rows() {
                    let s = g.data()[i];
                    for d in gx.row_mut(i) {
                        *d += s;
                    }
                }
            }),
            Op::Sum(x) => {
                let s = g.data()[0];
                self.accumulate(grads, *x, |gx| {
                    for d in gx.data_mut() {
                        *d += s;
                    }
                })
            }
        }
    }
}

/// `dst += a ⊙ b`.
fn fma_into(dst: &mut Matrix, a: &Matrix, b: &Matrix) {
    for ((d, x), y) in dst.data_mut().iter_mut().zip(a.data()).zip(b.data()) {
        *d += x * y;
    }
}

/// Linear map `x·W + b` on graph nodes.
pub fn linear(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = g.matmul(x, w)?;
    g.add_row(xw, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_requires_scalar_output() {
        let mut g = Graph::new();
        let x = g.param(Matrix::ones(2, 2));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn sum_of_squares_gradient_is_twice_input() {
        let mut g = Graph::new();
        let m = Matrix::from_rows(&[[1.0, -2.0], [0.5, 3.0]]);
        let x = g.param(m.clone());
        let sq = g.square(x);
        let s = g.sum(sq);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap(), &m.map(|v| 2.0 * v));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Matrix::ones(1, 3));
        let p = g.param(Matrix::ones(1, 3));
        let prod = g.mul(c, p).unwrap();
        let s = g.sum(prod);
        let grads = g.backward(s).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(p).unwrap(), &Matrix::ones(1, 3));
    }

    #[test]
    fn shared_node_accumulates_from_both_uses() {
        let mut g = Graph::new();
        let x = g.param(Matrix::filled(1, 1, 3.0));
        let y = g.mul(x, x).unwrap();
        let z = g.add(y, x).unwrap();
        let grads = g.backward(z).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[7.0]);
    }

    #[test]
    fn clamp_saturation_stops_gradient() {
        let mut g = Graph::new();
        let x = g.param(Matrix::from_rows(&[[-5.0, 0.5, 5.0]]));
        let c = g.clamp(x, -4.0, 4.0);
        let s = g.sum(c);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }
}
