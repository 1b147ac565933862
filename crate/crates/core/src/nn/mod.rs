//! A small convolutional network library sized for the two-stream model.

pub mod checkpoint;
pub mod layers;
pub mod model;
pub mod optim;
pub mod params;
pub mod real;

pub use checkpoint::CheckpointBundle;
pub use model::{Batch, HeadKind, TowerSpec, TwoStreamConfig, TwoStreamNet, WeightProvenance};
pub use optim::{Optimizer, OptimizerKind};
pub use params::{Grads, ParamId, ParamSet};
pub use real::Real;
