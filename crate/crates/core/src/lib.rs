#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod egomotion;
pub mod error;
pub mod evaluation;
pub mod filter;
pub mod grid;
pub mod inference;
pub mod learning;
pub mod pgm;
pub mod pipeline;
pub mod potentials;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
