#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classical;
pub mod error;
pub mod friedrichs;
pub mod linalg;
pub mod modes;
pub mod mpb;
pub mod poles;
pub mod quadrature;
pub mod runner;
pub mod scenario;
pub mod state;
pub mod wwm;

pub use error::{Error, Result};
