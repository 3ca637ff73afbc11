//! File formats, IO and end-to-end runs for `dimgcn-core`.

pub mod checkpoint;
pub mod config;
pub mod crop;
pub mod ddsm;
pub mod error;
pub mod logs;
pub mod manifest;
pub mod recon;
pub mod run;
pub mod synth_io;

pub use error::{Error, Result};
