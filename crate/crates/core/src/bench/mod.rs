//! Benchmark systems, experiment configuration and the reproduction
//! pipeline behind the `necc` binary.

pub mod config;
pub mod experiment;
pub mod systems;
