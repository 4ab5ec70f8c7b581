//! File formats, configuration, checkpoints, parallel execution and the
//! `crysflow` command line.

pub mod checkpoint;
pub mod cif;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod db;
pub mod manifest;
pub mod parallel;
