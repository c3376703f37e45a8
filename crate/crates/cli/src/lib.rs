//! Config-driven experiment runner for the sbnn toolkit: parses run configs,
//! executes the inference pipelines and persists their artifacts.

pub mod config;
pub mod io;
pub mod manifest;
pub mod run;
pub mod surface;
