//! Quantized workloads.
//!
//! A workload is either a single GEMM or a small operator graph that is
//! legalized ([`legalize_fuse`]) into unified GEMM-like operators and has its
//! constant preprocessing folded ([`constant_fold_preprocessing`]).
//!
//! Requantization is defined once, here, and shared by the reference oracle
//! and the program interpreter: `round_half_even(scale · acc)` with an exact
//! rational scale, then saturation.

mod conv;
mod fold;
mod graph;
mod legalize;

pub use conv::{lower_conv_to_gemm, Conv2dAttrs, Im2colDescriptor};
pub use fold::{constant_fold_preprocessing, count_preprocessing_over_constants};
pub use graph::{execute_graph, Graph, GraphInput, GraphOp, OpKind};
pub(crate) use graph::eval_op;
pub use legalize::{legalize_fuse, FusedKind};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::Rational;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorkloadError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("dtype mismatch for `{0}`: expected {1}")]
    DType(String, &'static str),
    #[error("invalid convolution: {0}")]
    InvalidConv(String),
    #[error("unknown value `{0}`")]
    UnknownValue(String),
    #[error("operator `{0}`: {1}")]
    Op(String, String),
    #[error("graph is not in topological order at `{0}`")]
    NotTopological(String),
    #[error("duplicate value name `{0}`")]
    DuplicateName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    Int8,
    Int32,
}

impl DType {
    pub fn name(self) -> &'static str {
        match self {
            DType::Int8 => "int8",
            DType::Int32 => "int32",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TensorData {
    I8(Vec<i8>),
    I32(Vec<i32>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::I8(v) => v.len(),
            TensorData::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::I8(_) => DType::Int8,
            TensorData::I32(_) => DType::Int32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantParams {
    pub scale: Rational,
    pub zero_point: i32,
}

/// A dense row-major tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorValue {
    pub shape: Vec<usize>,
    pub data: TensorData,
    pub quant: Option<QuantParams>,
}

impl TensorValue {
    pub fn i8(shape: Vec<usize>, data: Vec<i8>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data: TensorData::I8(data), quant: None }
    }

    pub fn i32(shape: Vec<usize>, data: Vec<i32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data: TensorData::I32(data), quant: None }
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn as_i8(&self) -> Option<&[i8]> {
        match &self.data {
            TensorData::I8(v) => Some(v),
            TensorData::I32(_) => None,
        }
    }

    pub fn as_i32(&self) -> Option<&[i32]> {
        match &self.data {
            TensorData::I32(v) => Some(v),
            TensorData::I8(_) => None,
        }
    }

    /// Checks `data.len() == Π shape`. int8 range holds by construction.
    pub fn is_consistent(&self) -> bool {
        self.data.len() == self.numel() && self.shape.iter().all(|&d| d > 0)
    }

    pub fn reshaped(&self, shape: Vec<usize>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), self.numel());
        Self { shape, data: self.data.clone(), quant: self.quant }
    }
}

/// GEMM problem extents: `In[N×C] · W[C×K]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GemmShape {
    pub n: u64,
    pub c: u64,
    pub k: u64,
}

impl GemmShape {
    pub const fn new(n: u64, c: u64, k: u64) -> Self {
        Self { n, c, k }
    }

    pub fn bounds(&self) -> [u64; 3] {
        [self.n, self.c, self.k]
    }

    pub fn macs(&self) -> u64 {
        self.n * self.c * self.k
    }

    pub fn scaled(&self, f: u64) -> Self {
        Self::new(self.n * f, self.c * f, self.k * f)
    }
}

impl fmt::Display for GemmShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.n, self.c, self.k)
    }
}

/// The fused quantized epilogue `clip(rhe(scale · (acc + bias)))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Epilogue {
    pub bias: Vec<i32>,
    pub scale: Rational,
    pub clip_min: i8,
    pub clip_max: i8,
}

impl Epilogue {
    pub fn identity(k: usize) -> Self {
        Self { bias: vec![0; k], scale: Rational::from_integer(1), clip_min: i8::MIN, clip_max: i8::MAX }
    }

    /// Applies bias, requantization and clipping to one accumulator.
    #[inline]
    pub fn apply(&self, acc: i32, k: usize) -> i8 {
        let v = requantize_wide(acc.wrapping_add(self.bias[k]), self.scale);
        v.clamp(self.clip_min as i64, self.clip_max as i64) as i8
    }
}

/// `round_half_even(scale · x)`, exact, widened so it cannot overflow.
pub fn requantize_wide(x: i32, scale: Rational) -> i64 {
    let num = x as i128 * *scale.numer() as i128;
    let den = *scale.denom() as i128;
    let (den, num) = if den < 0 { (-den, -num) } else { (den, num) };
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    let twice = 2 * r;
    let rounded = if twice > den || (twice == den && q % 2 != 0) { q + 1 } else { q };
    rounded.clamp(i64::MIN as i128, i64::MAX as i128) as i64
}

/// Requantize to int8: round half to even, then saturate.
pub fn requantize_i8(x: i32, scale: Rational) -> i8 {
    requantize_wide(x, scale).clamp(i8::MIN as i64, i8::MAX as i64) as i8
}

/// A unified quantized GEMM: shape, constant weights `W[C×K]` and epilogue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GemmWorkload {
    pub shape: GemmShape,
    /// Row-major `C×K`.
    pub weight: Vec<i8>,
    pub epilogue: Epilogue,
}

impl GemmWorkload {
    pub fn new(shape: GemmShape, weight: Vec<i8>, epilogue: Epilogue) -> Result<Self, WorkloadError> {
        let w = Self { shape, weight, epilogue };
        w.check()?;
        Ok(w)
    }

    fn check(&self) -> Result<(), WorkloadError> {
        let (c, k) = (self.shape.c as usize, self.shape.k as usize);
        if self.weight.len() != c * k {
            return Err(WorkloadError::ShapeMismatch { expected: vec![c, k], got: vec![self.weight.len()] });
        }
        if self.epilogue.bias.len() != k {
            return Err(WorkloadError::ShapeMismatch { expected: vec![k], got: vec![self.epilogue.bias.len()] });
        }
        Ok(())
    }

    pub fn input_shape(&self) -> Vec<usize> {
        vec![self.shape.n as usize, self.shape.c as usize]
    }
}

/// Bit-exact quantized GEMM oracle. Accumulation is 32-bit with no
/// intermediate saturation; the epilogue runs once per output element.
pub fn reference_execute(w: &GemmWorkload, input: &TensorValue) -> Result<TensorValue, WorkloadError> {
    let (n, c, k) = (w.shape.n as usize, w.shape.c as usize, w.shape.k as usize);
    if input.shape != [n, c] {
        return Err(WorkloadError::ShapeMismatch { expected: vec![n, c], got: input.shape.clone() });
    }
    let x = input.as_i8().ok_or_else(|| WorkloadError::DType("input".into(), "int8"))?;
    let mut out = vec![0i8; n * k];
    for row in 0..n {
        for col in 0..k {
            let mut acc: i32 = 0;
            for r in 0..c {
                acc = acc.wrapping_add(x[row * c + r] as i32 * w.weight[r * k + col] as i32);
            }
            out[row * k + col] = w.epilogue.apply(acc, col);
        }
    }
    Ok(TensorValue::i8(vec![n, k], out))
}
