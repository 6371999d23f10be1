//! Knowledge distillation for tabular data: a multilayer-perceptron teacher
//! transfers what it learned to depth-limited CART students through soft
//! targets, sample weights or teacher-labeled extra rows.

pub mod dataio;
pub mod distill;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod rng;
pub mod teacher;
pub mod tree;

pub use error::{Error, Result};
