//! Frames → flow → motion trace → masked EMD feature vectors.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;

use super::dataset::{ingest_clip, Manifest};
use super::{CongestionClass, Split};
use crate::emd::{featurize, EmdFeatureVector, SiftConfig};
use crate::error::{Error, Result};
use crate::flow::{estimate_flow_sequence, FarnebackParams};
use crate::frame::GrayFrame;
use crate::trace::{build_trace, Descriptor, MotionTrace};

/// Which descriptor series contribute features; excluded blocks are zeroed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DescriptorMask(pub [bool; 4]);

impl DescriptorMask {
    pub const ALL: DescriptorMask = DescriptorMask([true; 4]);
    pub const MAGNITUDE: DescriptorMask = DescriptorMask([true, true, false, false]);
    pub const DIRECTION: DescriptorMask = DescriptorMask([false, false, true, true]);

    pub fn includes(self, d: Descriptor) -> bool {
        self.0[d.index()]
    }

    pub fn without(self, d: Descriptor) -> Self {
        let mut m = self;
        m.0[d.index()] = false;
        m
    }

    /// The full set, each leave-one-out set, magnitude-only and direction-only.
    pub fn ablation_set() -> Vec<(String, DescriptorMask)> {
        let mut out = vec![("all".to_string(), Self::ALL)];
        for d in Descriptor::ALL {
            out.push((format!("without_{}", d.name()), Self::ALL.without(d)));
        }
        out.push(("magnitude_only".into(), Self::MAGNITUDE));
        out.push(("direction_only".into(), Self::DIRECTION));
        out
    }

    pub fn apply(self, features: &mut EmdFeatureVector) {
        for d in Descriptor::ALL {
            if !self.includes(d) {
                features.values[EmdFeatureVector::block(features.n_modes, d)].fill(0.0);
            }
        }
    }
}

impl fmt::Display for DescriptorMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::ALL {
            return f.write_str("all");
        }
        let names: Vec<&str> = Descriptor::ALL
            .into_iter()
            .filter(|&d| self.includes(d))
            .map(Descriptor::name)
            .collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for DescriptorMask {
    type Err = Error;

    /// `all`, `magnitude`, `direction`, or a comma list of descriptor names.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => return Ok(Self::ALL),
            "magnitude" => return Ok(Self::MAGNITUDE),
            "direction" => return Ok(Self::DIRECTION),
            _ => {}
        }
        let mut mask = [false; 4];
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            let d = Descriptor::from_name(name)
                .ok_or_else(|| Error::Parse(format!("unknown descriptor {name:?}")))?;
            mask[d.index()] = true;
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::Parse(format!("descriptor mask {s:?} selects nothing")));
        }
        Ok(Self(mask))
    }
}

pub fn trace_for_frames(frames: &[GrayFrame], flow: &FarnebackParams) -> Result<MotionTrace> {
    build_trace(&estimate_flow_sequence(frames, flow)?)
}

/// Full feature path for one clip.
pub fn extract_features(
    frames: &[GrayFrame],
    flow: &FarnebackParams,
    sift: &SiftConfig,
    mask: DescriptorMask,
) -> Result<EmdFeatureVector> {
    let trace = trace_for_frames(frames, flow)?;
    let mut features = featurize(&trace, sift)?;
    mask.apply(&mut features);
    Ok(features)
}

/// A labelled motion trace; features for any IMF count derive from it.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipTrace {
    pub clip_id: String,
    pub label: CongestionClass,
    pub split: Split,
    pub trace: MotionTrace,
}

/// Ingests every manifest clip and computes its trace, in parallel.
pub fn extract_traces(
    manifest: &Manifest,
    frames_per_clip: usize,
    frame_size: usize,
    flow: &FarnebackParams,
) -> Result<Vec<ClipTrace>> {
    manifest
        .records
        .par_iter()
        .map(|rec| {
            let frames = ingest_clip(rec, frames_per_clip, frame_size)?;
            Ok(ClipTrace {
                clip_id: rec.clip_id.clone(),
                label: rec.label,
                split: rec.split,
                trace: trace_for_frames(&frames, flow)?,
            })
        })
        .collect()
}

/// Feature matrix for a list of clips, row order preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub n_modes: usize,
    pub mask: DescriptorMask,
    pub clip_ids: Vec<String>,
    pub labels: Vec<CongestionClass>,
    pub splits: Vec<Split>,
    pub features: Vec<Vec<f64>>,
}

impl FeatureSet {
    pub fn from_traces(traces: &[ClipTrace], sift: &SiftConfig, mask: DescriptorMask) -> Result<Self> {
        let features = traces
            .par_iter()
            .map(|t| {
                let mut f = featurize(&t.trace, sift)?;
                mask.apply(&mut f);
                Ok(f.values)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n_modes: sift.n_modes,
            mask,
            clip_ids: traces.iter().map(|t| t.clip_id.clone()).collect(),
            labels: traces.iter().map(|t| t.label).collect(),
            splits: traces.iter().map(|t| t.split).collect(),
            features,
        })
    }

    /// Same rows with a different descriptor mask (only zeroes more blocks).
    pub fn masked(&self, mask: DescriptorMask) -> Self {
        let mut out = self.clone();
        out.mask = DescriptorMask(std::array::from_fn(|i| self.mask.0[i] && mask.0[i]));
        for row in &mut out.features {
            for d in Descriptor::ALL {
                if !mask.includes(d) {
                    row[EmdFeatureVector::block(self.n_modes, d)].fill(0.0);
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        EmdFeatureVector::len_for(self.n_modes)
    }

    /// CSV with header `clip_id,label,f0..f{dim-1}`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("clip_id,label");
        for j in 0..self.dim() {
            let _ = write!(s, ",f{j}");
        }
        s.push('\n');
        for ((id, label), row) in self.clip_ids.iter().zip(&self.labels).zip(&self.features) {
            let _ = write!(s, "{id},{label}");
            for v in row {
                let _ = write!(s, ",{v:.16e}");
            }
            s.push('\n');
        }
        s
    }

    /// Row indices belonging to `split`.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }
}
