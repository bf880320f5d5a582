#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Exact front tracking for scalar traffic flow with a non-local
//! exit constraint.

pub mod cases;
pub mod constraint;
pub mod error;
pub mod exact;
pub mod flux;
pub mod monitor;
pub mod output;
pub mod profile;
pub mod riemann;
pub mod scenario;
pub mod split;
pub mod tracker;
pub mod trajectory;

pub use error::{Error, Result};
