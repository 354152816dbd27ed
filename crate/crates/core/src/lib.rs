//! Boundary-masked supervision for unsupervised motion segmentation.
//!
//! Low-quality optical flow is still reliable near motion boundaries, where the
//! flow direction changes abruptly. This crate extracts those regions, uses them
//! to mask a flow-reconstruction loss, drops the hardest samples of each batch,
//! and samples frame pairs at random intervals so slow objects still show motion.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the bottom of this file fix the precision for callers that do not care.

pub mod ablation;
pub mod boundary;
pub mod curation;
pub mod dataset;
pub mod error;
pub mod flow_io;
pub mod grid;
pub mod kv;
pub mod metrics;
pub mod sampler;
pub mod scalar;
pub mod seed;
pub mod segmenter;
pub mod supervision;
pub mod synth;

pub use boundary::{
    boundary_stages, directional_difference, extract_boundary_mask, flow_to_angles, AngleMetric,
    BoundaryConfig,
};
pub use curation::{drop_hard_cases, BatchReport};
pub use error::{Error, Result};
pub use grid::{BoundaryMask, Flow, FlowField, Grid, LabelGrid, PixelCoord, ScalarField, Shape};
pub use metrics::{iou, match_labels, miou, EmptyFramePolicy, IoUReport};
pub use sampler::{sample_pairs, FramePair, PairFlowSource, PairSampler, RateMode, SamplerConfig};
pub use scalar::Scalar;
pub use segmenter::{fit_segmentation, reconstruct_flow, train_sequence, MotionModel, TrainConfig};
pub use supervision::{frame_loss, masked_loss_map, FrameLoss, Reduction};

pub type Flow32 = Flow<f32>;
pub type Flow64 = Flow<f64>;
pub type FlowField32 = FlowField<f32>;
pub type FlowField64 = FlowField<f64>;
pub type ScalarField32 = ScalarField<f32>;
pub type ScalarField64 = ScalarField<f64>;
pub type BoundaryConfig32 = BoundaryConfig<f32>;
pub type BoundaryConfig64 = BoundaryConfig<f64>;
pub type FrameLoss32 = FrameLoss<f32>;
pub type FrameLoss64 = FrameLoss<f64>;
pub type TrainConfig32 = TrainConfig<f32>;
pub type TrainConfig64 = TrainConfig<f64>;
