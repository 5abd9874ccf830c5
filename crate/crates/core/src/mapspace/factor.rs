use alloc::vec::Vec;

use crate::dim::Dim;
use crate::workload::GemmShape;

/// Sorted prime factors of `bound`; `factorize(1)` is empty.
pub fn factorize(bound: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut n = bound;
    let mut p = 2;
    while p * p <= n {
        while n.is_multiple_of(p) {
            out.push(p);
            n /= p;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Prime factors of each GEMM loop bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeFactorization {
    pub factors: [Vec<u64>; 3],
}

impl PrimeFactorization {
    pub fn of(shape: GemmShape) -> Self {
        Self { factors: [factorize(shape.n), factorize(shape.c), factorize(shape.k)] }
    }

    pub fn dim(&self, d: Dim) -> &[u64] {
        &self.factors[d.index()]
    }

    pub fn total(&self) -> usize {
        self.factors.iter().map(Vec::len).sum()
    }
}

/// All divisors of `n`, ascending.
pub fn divisors(n: u64) -> Vec<u64> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1;
    while d * d <= n {
        if n.is_multiple_of(d) {
            small.push(d);
            if d * d != n {
                large.push(n / d);
            }
        }
        d += 1;
    }
    small.extend(large.into_iter().rev());
    small
}
