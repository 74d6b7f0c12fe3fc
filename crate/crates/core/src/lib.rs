//! Deterministic closed-loop reality-gap evaluation harness.

pub mod ads;
pub mod control;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod metrics;
pub mod mixing;
pub mod plant;
pub mod rng;
pub mod runtime;
pub mod sensing;
pub mod world;

pub use error::{Error, Result};
