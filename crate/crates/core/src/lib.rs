//! Two-stream self-supervised pretraining for action recognition.
//!
//! A clip's center RGB frame feeds a spatial tower; six equi-distant frames,
//! encoded as a five-channel stack of grayscale differences, feed a motion
//! tower. The towers' `fc6` embeddings are fused by subtraction and a head
//! classifies the pair into four pretext classes: {valid, invalid} temporal
//! order × {matched, mismatched} source clip. The motion tower learned this
//! way initializes downstream action recognition.

pub mod clip;
pub mod config;
pub mod dataset;
pub mod error;
pub mod frame;
pub mod motion;
pub mod nn;
pub mod pretext;
pub mod report;
pub mod rng;
pub mod synthetic;
pub mod train;
pub mod eval;
pub mod experiment;

pub use error::{Error, Result};
pub use frame::Frame;
