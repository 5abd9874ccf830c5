//! The mapping space: prime factorizations, the binary assignment matrix,
//! decoded mappings and the feasibility predicates every scheduler result
//! must satisfy.

mod factor;
mod mapping;
mod matrix;
mod predicates;

pub use factor::{divisors, factorize, PrimeFactorization};
pub use mapping::{canonical_order, LevelMapping, Mapping, MemoryShares};
pub(crate) use mapping::{order_word, push_level_key};
pub use matrix::{decode, DecodeError, MappingMatrix, Slot, SlotKind};
pub use predicates::{check_all, check_capacity, check_dataflow, check_pe_bound, fits_budget, footprint, ConstraintFamily};
