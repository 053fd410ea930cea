//! Exact lower confidence bounds for the number of true discoveries among a
//! fixed set of hypotheses, built on the exact law of the number of
//! rejections of a step-up test under an independent two-group model.

pub mod bound;
pub mod calibration;
pub mod effect_size;
pub mod error;
pub mod gs_baseline;
pub mod numeric;
pub mod order_stats;
pub mod pvalue_model;
pub mod sim;
pub mod stepup;

pub use error::{Error, Result};
