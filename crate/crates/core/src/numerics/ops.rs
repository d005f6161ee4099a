//! Forward kernels shared by the autodiff graph and by gradient-free callers.

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Kernel weights for a dilated 1-D convolution.
///
/// Logically `Cout × Cin × k`; stored as a `(k·Cin) × Cout` matrix where rows
/// `j·Cin .. (j+1)·Cin` hold tap `j`. Tap `(k−1)/2` is the center tap.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub taps: usize,
    pub dilation: usize,
}

impl ConvShape {
    pub fn new(taps: usize, dilation: usize) -> Result<Self> {
        if taps % 2 == 0 {
            return Err(Error::Config(format!(
                "convolution kernel width must be odd, got {taps}"
            )));
        }
        if dilation == 0 {
            return Err(Error::Config("convolution dilation must be >= 1".into()));
        }
        Ok(Self { taps, dilation })
    }

    /// Frame offset read by tap `j`.
    pub(crate) fn offset(&self, j: usize) -> isize {
        (j as isize - (self.taps as isize - 1) / 2) * self.dilation as isize
    }

    /// One-sided receptive radius in frames.
    pub fn radius(&self) -> usize {
        self.dilation * (self.taps - 1) / 2
    }

    fn check(&self, x: &Matrix, w: &Matrix) -> Result<()> {
        if w.rows() != self.taps * x.cols() {
            return Err(Error::Shape {
                op: "dilated_conv1d",
                lhs: x.shape(),
                rhs: w.shape(),
            });
        }
        Ok(())
    }
}

/// Valid output rows `t` for which `t + off` lies inside `[0, len)`.
fn tap_range(len: usize, off: isize) -> std::ops::Range<usize> {
    let lo = (-off).max(0) as usize;
    let hi = (len as isize - off.max(0)).max(0) as usize;
    lo.min(hi)..hi
}

/// Length-preserving dilated convolution with symmetric zero padding.
/// No bias term.
pub fn dilated_conv1d(x: &Matrix, w: &Matrix, shape: ConvShape) -> Result<Matrix> {
    shape.check(x, w)?;
    let (len, cin) = x.shape();
    let cout = w.cols();
    let mut out = Matrix::zeros(len, cout);
    for j in 0..shape.taps {
        let off = shape.offset(j);
        let tap = &w.data()[j * cin * cout..(j + 1) * cin * cout];
        for t in tap_range(len, off) {
            let src = x.row((t as isize + off) as usize);
            let dst = out.row_mut(t);
            for (i, &xv) in src.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (d, &wv) in dst.iter_mut().zip(&tap[i * cout..(i + 1) * cout]) {
                    *d += xv * wv;
                }
            }
        }
    }
    Ok(out)
}

/// Accumulates the input and kernel gradients of [`dilated_conv1d`].
pub(crate) fn dilated_conv1d_backward(
    x: &Matrix,
    w: &Matrix,
    shape: ConvShape,
    grad_out: &Matrix,
    grad_x: Option<&mut Matrix>,
    grad_w: Option<&mut Matrix>,
) {
    let (len, cin) = x.shape();
    let cout = w.cols();
    if let Some(gx) = grad_x {
        for j in 0..shape.taps {
            let off = shape.offset(j);
            let tap = &w.data()[j * cin * cout..(j + 1) * cin * cout];
            for t in tap_range(len, off) {
                let g = grad_out.row(t);
                let dst = gx.row_mut((t as isize + off) as usize);
                for (i, d) in dst.iter_mut().enumerate() {
                    *d += g
                        .iter()
                        .zip(&tap[i * cout..(i + 1) * cout])
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                }
            }
        }
    }
    if let Some(gw) = grad_w {
        for j in 0..shape.taps {
            let off = shape.offset(j);
            let tap = &mut gw.data_mut()[j * cin * cout..(j + 1) * cin * cout];
            for t in tap_range(len, off) {
                let g = grad_out.row(t);
                let src = x.row((t as isize + off) as usize);
                for (i, &xv) in src.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    for (d, &gv) in tap[i * cout..(i + 1) * cout].iter_mut().zip(g) {
                        *d += xv * gv;
                    }
                }
            }
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}
