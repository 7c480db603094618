//! Experiment orchestration: configs, calibration, verification suites,
//! regret experiments and their output files.

pub mod baseline;
pub mod config;
pub mod kappa;
pub mod regret;
pub mod run;
pub mod summary;
pub mod verify;
