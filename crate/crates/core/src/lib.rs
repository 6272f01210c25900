#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod constraints;
pub mod digest;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod flows;
pub mod nids;
pub mod nn;
pub mod threatmodels;

pub use error::{Error, Result};
