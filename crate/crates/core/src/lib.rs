// `!(x > 0.0)` is used on purpose throughout so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod perception;
pub mod sim;
pub mod verification;
pub mod visibility;

pub use error::{Error, Result};
