//! Core algorithms for modeling networked tensor time series.
//!
//! A tensor time series is an (M+1)-mode array whose last mode indexes time;
//! each of the first M modes may carry an adjacency matrix relating its
//! indices. This crate provides the dense tensor algebra (mode products,
//! unfolding, Tucker/HOSVD), graph convolution layers that mix the per-mode
//! adjacencies, a Tucker-compressed LSTM cell, the end-to-end forecasting
//! model built from those pieces, and a tape-based trainer with an Adam
//! optimizer.
//!
//! The crate is `no_std` (with `alloc`); all file formats and the CLI live in
//! the companion `net3-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod graph;
pub mod matrix;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod tgcn;
pub mod train;
pub mod trnn;

pub use error::{CoreError, Result};
pub use matrix::Matrix;
pub use tensor::DenseTensor;
