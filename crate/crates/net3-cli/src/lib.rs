//! File formats and batch commands around the core library: dataset
//! directories, binary model checkpoints, and the `train`/`predict`/
//! `recover`/`eval`/`params`/`rho-bound`/`synth` workflows the binary
//! dispatches to.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod io;
