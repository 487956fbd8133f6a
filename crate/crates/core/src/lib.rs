//! Motion-trace featurization and congestion classification.
//!
//! The signal path is: grayscale frames → dense Farneback optical flow →
//! per-frame magnitude/direction moments → Empirical Mode Decomposition of
//! each descriptor series → fixed-length IMF statistics → MLP classifier.
//! A standalone flow-guided attention block with hand-written gradients
//! lives in [`attention`].

pub mod attention;
pub mod emd;
pub mod error;
pub mod flow;
pub mod frame;
pub mod nn;
pub mod pipeline;
pub mod spline;
pub mod trace;

pub use emd::{decompose, featurize, Boundary, EmdFeatureVector, ImfDecomposition, SiftConfig};
pub use error::{Error, Result};
pub use flow::{direction, estimate_flow, magnitude, FarnebackParams, FlowField};
pub use frame::GrayFrame;
pub use nn::{Activation, AdamState, DenseLayer, MlpModel, Mode};
pub use pipeline::{
    Classifier, CongestionClass, DescriptorMask, MetricsReport, PipelineConfig, Split,
};
pub use trace::{build_trace, frame_descriptors, Descriptor, FrameDescriptors, MotionTrace};
