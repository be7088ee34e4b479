// Negated float comparisons throughout are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod grad;
pub mod linalg;
pub mod mi;
pub mod optim;
pub mod rng;
#[cfg(test)]
pub(crate) mod testutil;
