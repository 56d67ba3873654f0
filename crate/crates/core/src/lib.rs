//! Ultrasonic human segmentation: echo simulation, delay-and-sum imaging and a
//! collaborative-learning VAE mapping sound images to segmentation masks.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod beamform;
pub mod clvae;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod formats;
pub mod frontend;
pub mod image;
pub mod nn;
pub mod par;
pub mod rng;
pub mod sigproc;
pub mod simulator;

pub use error::{Error, Result};
pub use par::Parallelism;
