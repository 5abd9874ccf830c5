//! GEMM loop dimensions and operands.
//!
//! The problem is `O[N×K] = In[N×C] · W[C×K]`; `C` is the reduction.

use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dim {
    N,
    C,
    K,
}

impl Dim {
    pub const ALL: [Dim; 3] = [Dim::N, Dim::C, Dim::K];

    #[inline]
    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn from_index(i: usize) -> Option<Dim> {
        match i {
            0 => Some(Dim::N),
            1 => Some(Dim::C),
            2 => Some(Dim::K),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dim::N => "N",
            Dim::C => "C",
            Dim::K => "K",
        }
    }

    pub fn parse(s: &str) -> Option<Dim> {
        match s {
            "N" | "n" => Some(Dim::N),
            "C" | "c" => Some(Dim::C),
            "K" | "k" => Some(Dim::K),
            _ => None,
        }
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operand {
    Input,
    Weight,
    Output,
}

impl Operand {
    pub const ALL: [Operand; 3] = [Operand::Input, Operand::Weight, Operand::Output];

    #[inline]
    pub const fn index(self) -> usize {
        self as usize
    }

    /// Tile axes as `(rows, cols)`; tiles are stored row-major.
    pub const fn axes(self) -> (Dim, Dim) {
        match self {
            Operand::Input => (Dim::N, Dim::C),
            Operand::Weight => (Dim::C, Dim::K),
            Operand::Output => (Dim::N, Dim::K),
        }
    }

    /// The one loop dimension that does not index this operand.
    pub const fn irrelevant(self) -> Dim {
        match self {
            Operand::Input => Dim::K,
            Operand::Weight => Dim::N,
            Operand::Output => Dim::C,
        }
    }

    #[inline]
    pub fn is_relevant(self, d: Dim) -> bool {
        d != self.irrelevant()
    }

    /// Element width in bytes: int8 activations and weights, int32 partial sums.
    pub const fn elem_bytes(self) -> u64 {
        match self {
            Operand::Input | Operand::Weight => 1,
            Operand::Output => 4,
        }
    }

    /// Bytes of a tile with the given per-dimension extents.
    #[inline]
    pub fn tile_bytes(self, tile: [u64; 3]) -> u64 {
        let (r, c) = self.axes();
        tile[r.index()] * tile[c.index()] * self.elem_bytes()
    }

    pub fn name(self) -> &'static str {
        match self {
            Operand::Input => "input",
            Operand::Weight => "weight",
            Operand::Output => "output",
        }
    }

    pub fn parse(s: &str) -> Option<Operand> {
        match s {
            "input" => Some(Operand::Input),
            "weight" => Some(Operand::Weight),
            "output" => Some(Operand::Output),
            _ => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Set of operands, e.g. the operands a memory level holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct OperandSet([bool; 3]);

impl OperandSet {
    pub const ALL: OperandSet = OperandSet([true; 3]);
    pub const NONE: OperandSet = OperandSet([false; 3]);

    pub fn from_slice(ops: &[Operand]) -> Self {
        let mut s = Self::NONE;
        for &o in ops {
            s.0[o.index()] = true;
        }
        s
    }

    #[inline]
    pub fn contains(self, op: Operand) -> bool {
        self.0[op.index()]
    }

    pub fn insert(&mut self, op: Operand) {
        self.0[op.index()] = true;
    }

    pub fn is_empty(self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn len(self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn iter(self) -> impl Iterator<Item = Operand> {
        Operand::ALL.into_iter().filter(move |o| self.contains(*o))
    }
}
