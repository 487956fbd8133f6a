//! Dataset handling, synthetic clips, training, evaluation and sweeps.

mod classifier;
mod config;
mod dataset;
mod features;
mod metrics;
mod sweep;
mod synth;
mod train;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use classifier::{Classifier, ClassifierCache, ClassifierConfig};
pub use config::PipelineConfig;
pub use dataset::{ingest_clip, list_frames, load_frames, ClipRecord, Manifest};
pub use features::{extract_features, extract_traces, trace_for_frames, ClipTrace, DescriptorMask, FeatureSet};
pub use metrics::{evaluate, ClassMetrics, MetricsReport};
pub use sweep::{
    descriptor_rows_to_csv, imf_rows_to_csv, sweep_descriptors, sweep_imfs, DescriptorSweepRow, ImfSweepRow,
};
pub use synth::{
    generate_dataset, generate_synthetic_clip, SyntheticClip, SyntheticDataset, SyntheticSceneConfig,
};
pub use train::{train, EpochLog, TrainConfig, TrainingLog};

/// Congestion state; the discriminant is the class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CongestionClass {
    Light = 0,
    Medium = 1,
    Heavy = 2,
}

impl CongestionClass {
    pub const ALL: [CongestionClass; 3] = [Self::Light, Self::Medium, Self::Heavy];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("class index {i} out of range 0..3")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Light => "light",
            Self::Medium => "medium",
            Self::Heavy => "heavy",
        }
    }
}

impl fmt::Display for CongestionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CongestionClass {
    type Err = Error;

    /// Accepts a class name or its index.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(i) = s.parse::<usize>() {
            return Self::from_index(i);
        }
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown class {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Self::Train, Self::Val, Self::Test];

    pub fn name(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse(format!("unknown split {s:?}")))
    }
}

/// Scene identifier of a clip: the id prefix before the first `_`.
pub fn scene_id(clip_id: &str) -> &str {
    clip_id.split('_').next().unwrap_or(clip_id)
}
