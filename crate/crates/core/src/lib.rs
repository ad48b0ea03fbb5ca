#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataio;
pub mod error;
pub mod kv;
pub mod layers;
pub mod meanteacher;
pub mod metrics;
pub mod model;
pub mod tensor;
