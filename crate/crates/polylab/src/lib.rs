//! Experiment presets, configuration and persistence for the polymer
//! laboratory: a verification battery, phase-diagram scans, localization
//! sweeps, exponent probes, the crossover ladder and the compensator
//! decomposition, all emitting CSV results, a JSON manifest and static SVG
//! plots.

pub mod analytic;
pub mod config;
pub mod presets;
pub mod runner;
pub mod svg;

pub use config::Config;
pub use runner::{run_preset, Outcome, RunError};
