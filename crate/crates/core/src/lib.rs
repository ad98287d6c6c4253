// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capability;
pub mod error;
pub mod grid;
pub mod ied;
pub mod lattice;
pub mod opf;
pub mod powerflow;
pub mod profile;
pub mod regression;
pub mod sim;
