//! Occlusion-conditional dataset tooling and evaluation for wireframe
//! detection: hole placement, pseudo-label filtering, GAN loss kernels,
//! lighting simulation and the structural AP metric suite.

pub mod cli;
pub mod conditioning;
pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod maskgen;
pub mod metrics;
pub mod pseudo;
pub mod rng;

pub use error::{Error, Result};
