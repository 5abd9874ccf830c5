//! Convolution to GEMM via im2col.
//!
//! Activations are NHWC, weights RSCK (`[R, S, Cin, Kout]`). The im2col
//! matrix has one row per output pixel `(b, p, q)` and one column per
//! window element `(r, s, cin)`, so the RSCK weights flattened row-major are
//! already the `C'×K'` GEMM weight matrix.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Epilogue, GemmShape, GemmWorkload, TensorValue, WorkloadError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Conv2dAttrs {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    /// Symmetric zero padding `(rows, cols)`.
    pub padding: (usize, usize),
}

impl Conv2dAttrs {
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize), WorkloadError> {
        let (r, s) = self.kernel;
        let (sh, sw) = self.stride;
        let (ph, pw) = self.padding;
        if r == 0 || s == 0 || sh == 0 || sw == 0 {
            return Err(WorkloadError::InvalidConv(format!("kernel {:?} and stride {:?} must be positive", self.kernel, self.stride)));
        }
        let (hp, wp) = (h + 2 * ph, w + 2 * pw);
        if hp < r || wp < s {
            return Err(WorkloadError::InvalidConv(format!(
                "padded input {hp}x{wp} is smaller than the {r}x{s} kernel"
            )));
        }
        Ok(((hp - r) / sh + 1, (wp - s) / sw + 1))
    }
}

/// Gather map from an NHWC activation tensor to its im2col matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Im2colDescriptor {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub attrs: Conv2dAttrs,
    pub out_h: usize,
    pub out_w: usize,
}

impl Im2colDescriptor {
    pub fn new(input_shape: &[usize], attrs: Conv2dAttrs) -> Result<Self, WorkloadError> {
        let &[batch, in_h, in_w, in_c] = input_shape else {
            return Err(WorkloadError::InvalidConv(format!("expected NHWC input, got shape {input_shape:?}")));
        };
        let (out_h, out_w) = attrs.output_hw(in_h, in_w)?;
        Ok(Self { batch, in_h, in_w, in_c, attrs, out_h, out_w })
    }

    pub fn input_shape(&self) -> Vec<usize> {
        vec![self.batch, self.in_h, self.in_w, self.in_c]
    }

    pub fn rows(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }

    pub fn cols(&self) -> usize {
        self.attrs.kernel.0 * self.attrs.kernel.1 * self.in_c
    }

    pub fn output_shape(&self, kout: usize) -> Vec<usize> {
        vec![self.batch, self.out_h, self.out_w, kout]
    }

    /// Flat NHWC index feeding im2col element `(row, col)`, or `None` for padding.
    pub fn source(&self, row: usize, col: usize) -> Option<usize> {
        let (pq, b) = (row % (self.out_h * self.out_w), row / (self.out_h * self.out_w));
        let (p, q) = (pq / self.out_w, pq % self.out_w);
        let cin = col % self.in_c;
        let rs = col / self.in_c;
        let (r, s) = (rs / self.attrs.kernel.1, rs % self.attrs.kernel.1);
        let y = (p * self.attrs.stride.0 + r).checked_sub(self.attrs.padding.0)?;
        let x = (q * self.attrs.stride.1 + s).checked_sub(self.attrs.padding.1)?;
        if y >= self.in_h || x >= self.in_w {
            return None;
        }
        Some(((b * self.in_h + y) * self.in_w + x) * self.in_c + cin)
    }

    pub fn materialize(&self, input: &[i8]) -> Vec<i8> {
        let (rows, cols) = (self.rows(), self.cols());
        let mut out = vec![0i8; rows * cols];
        for row in 0..rows {
            for col in 0..cols {
                if let Some(src) = self.source(row, col) {
                    out[row * cols + col] = input[src];
                }
            }
        }
        out
    }

    pub fn apply(&self, input: &TensorValue) -> Result<TensorValue, WorkloadError> {
        if input.shape != self.input_shape() {
            return Err(WorkloadError::ShapeMismatch { expected: self.input_shape(), got: input.shape.clone() });
        }
        let x = input.as_i8().ok_or_else(|| WorkloadError::DType("im2col input".into(), "int8"))?;
        Ok(TensorValue::i8(vec![self.rows(), self.cols()], self.materialize(x)))
    }
}

/// Lower a quantized convolution to a GEMM plus the gather that builds its
/// input matrix: `N' = B·P·Q`, `C' = Cin·R·S`, `K' = Kout`.
pub fn lower_conv_to_gemm(
    attrs: Conv2dAttrs,
    input_shape: &[usize],
    weight: &TensorValue,
    epilogue: Epilogue,
) -> Result<(GemmWorkload, Im2colDescriptor), WorkloadError> {
    let desc = Im2colDescriptor::new(input_shape, attrs)?;
    let expected = vec![attrs.kernel.0, attrs.kernel.1, desc.in_c, *weight.shape.last().unwrap_or(&0)];
    if weight.shape.len() != 4 || weight.shape != expected || expected[3] == 0 {
        return Err(WorkloadError::ShapeMismatch { expected, got: weight.shape.clone() });
    }
    let w = weight.as_i8().ok_or_else(|| WorkloadError::DType("conv weight".into(), "int8"))?;
    let shape = GemmShape::new(desc.rows() as u64, desc.cols() as u64, expected[3] as u64);
    let gemm = GemmWorkload::new(shape, w.to_vec(), epilogue)?;
    Ok((gemm, desc))
}
