//! Oracles shared by the integration tests.
#![allow(dead_code)]

pub mod grad;
pub mod oracle;
