//! Gesture recognition and user identification from mmWave radar point
//! clouds: motion segmentation, clustering-based denoising, a multi-level
//! point-cloud network with attention fusion, training, evaluation and a
//! synthetic radar generator.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which the CLI and pipeline use throughout.

pub mod cli;
pub mod cloud;
pub mod error;
pub mod evaluator;
pub mod gesidnet;
pub mod io;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod scalar;
pub mod segmenter;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Point = cloud::Point<f64>;
pub type Point32 = cloud::Point<f32>;
pub type Frame = cloud::Frame<f64>;
pub type Stream = cloud::FrameStream<f64>;
pub type Cloud = cloud::GestureCloud<f64>;
pub type Cloud32 = cloud::GestureCloud<f32>;
pub type Collection = cloud::CloudCollection<f64>;
pub type Params = gesidnet::ModelParams<f64>;
pub type Params32 = gesidnet::ModelParams<f32>;
