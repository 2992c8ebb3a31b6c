//! Face morph generation and morphing-attack vulnerability evaluation.
//!
//! Two phases share one manifest format: landmark-based or latent morph
//! generation from a pair protocol, then scoring of reference/probe
//! comparisons and the FMR, FNMR and MMPMR metrics at a threshold fixed on
//! zero-effort impostor scores.

pub mod adapter;
pub mod geometry;
pub mod landmarks;
pub mod latent;
pub mod morph;
pub mod pool;
pub mod protocols;
pub mod raster;
pub mod scoring;
pub mod triangulation;
pub mod vulnerability;
pub mod cli;
