//! Simulator and benchmark harness for audio-goal navigation toward moving,
//! sound-emitting targets on occupancy grids.

pub mod acoustics;
pub mod config;
pub mod dynamics;
pub mod engine;
pub mod gridmap;
pub mod metrics;
pub mod plot;
pub mod protocol;
pub mod scenario;
pub mod soundbank;
pub mod suite;
