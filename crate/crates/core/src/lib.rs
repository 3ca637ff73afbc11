#![no_std]
extern crate alloc;

pub mod disentangle;
pub mod encoders;
pub mod error;
pub mod gcn;
pub mod gradcheck;
pub mod graph;
pub mod heads;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
