//! Flat `key = value` configuration covering every pipeline parameter.

use std::fmt::Write as _;
use std::path::Path;

use super::classifier::ClassifierConfig;
use super::features::DescriptorMask;
use super::train::TrainConfig;
use crate::emd::{Boundary, SiftConfig};
use crate::error::{Error, Result};
use crate::flow::FarnebackParams;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Frames sampled per clip (T).
    pub frames_per_clip: usize,
    /// Side length frames are resized to on ingestion.
    pub frame_size: usize,
    pub flow: FarnebackParams,
    pub sift: SiftConfig,
    pub model: ClassifierConfig,
    pub train: TrainConfig,
    pub descriptors: DescriptorMask,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            frames_per_clip: 16,
            frame_size: 224,
            flow: FarnebackParams::default(),
            sift: SiftConfig::default(),
            model: ClassifierConfig::default(),
            train: TrainConfig::default(),
            descriptors: DescriptorMask::ALL,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    pub const KEYS: [&'static str; 24] = [
        "seed",
        "frames_per_clip",
        "frame_size",
        "flow.levels",
        "flow.scale",
        "flow.window",
        "flow.iterations",
        "flow.poly_n",
        "flow.poly_sigma",
        "emd.n_imfs",
        "emd.sd_threshold",
        "emd.max_sift_iters",
        "emd.boundary",
        "model.embed_hidden",
        "model.embed_dim",
        "model.head_hidden",
        "model.dropout",
        "train.epochs",
        "train.batch_size",
        "train.lr",
        "train.lr_milestones",
        "train.lr_decay",
        "train.clip_norm",
        "train.label_smoothing",
    ];

    /// Sets one key; `descriptors` is accepted in addition to [`Self::KEYS`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "frames_per_clip" => self.frames_per_clip = parse(key, v)?,
            "frame_size" => self.frame_size = parse(key, v)?,
            "flow.levels" => self.flow.pyramid_levels = parse(key, v)?,
            "flow.scale" => self.flow.pyramid_scale = parse(key, v)?,
            "flow.window" => self.flow.window_size = parse(key, v)?,
            "flow.iterations" => self.flow.iterations = parse(key, v)?,
            "flow.poly_n" => self.flow.poly_n = parse(key, v)?,
            "flow.poly_sigma" => self.flow.poly_sigma = parse(key, v)?,
            "emd.n_imfs" => self.sift.n_modes = parse(key, v)?,
            "emd.sd_threshold" => self.sift.sd_threshold = parse(key, v)?,
            "emd.max_sift_iters" => self.sift.max_sift_iters = parse(key, v)?,
            "emd.boundary" => {
                self.sift.boundary = Boundary::from_name(v)
                    .ok_or_else(|| Error::Parse(format!("{key}: unknown boundary {v:?}")))?
            }
            "model.embed_hidden" => self.model.embed_hidden = parse(key, v)?,
            "model.embed_dim" => self.model.embed_dim = parse(key, v)?,
            "model.head_hidden" => self.model.head_hidden = parse_list(key, v)?,
            "model.dropout" => self.model.head_dropout = parse_list(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.lr" => self.train.lr = parse(key, v)?,
            "train.lr_milestones" => self.train.lr_milestones = parse_list(key, v)?,
            "train.lr_decay" => self.train.lr_decay = parse(key, v)?,
            "train.clip_norm" => self.train.clip_norm = parse(key, v)?,
            "train.label_smoothing" => self.train.label_smoothing = parse(key, v)?,
            "descriptors" => self.descriptors = v.parse()?,
            _ => return Err(Error::Parse(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("frames_per_clip", self.frames_per_clip.to_string());
        kv("frame_size", self.frame_size.to_string());
        kv("flow.levels", self.flow.pyramid_levels.to_string());
        kv("flow.scale", self.flow.pyramid_scale.to_string());
        kv("flow.window", self.flow.window_size.to_string());
        kv("flow.iterations", self.flow.iterations.to_string());
        kv("flow.poly_n", self.flow.poly_n.to_string());
        kv("flow.poly_sigma", self.flow.poly_sigma.to_string());
        kv("emd.n_imfs", self.sift.n_modes.to_string());
        kv("emd.sd_threshold", self.sift.sd_threshold.to_string());
        kv("emd.max_sift_iters", self.sift.max_sift_iters.to_string());
        kv("emd.boundary", self.sift.boundary.name().to_string());
        kv("model.embed_hidden", self.model.embed_hidden.to_string());
        kv("model.embed_dim", self.model.embed_dim.to_string());
        kv("model.head_hidden", join(&self.model.head_hidden));
        kv("model.dropout", join(&self.model.head_dropout));
        kv("train.epochs", self.train.epochs.to_string());
        kv("train.batch_size", self.train.batch_size.to_string());
        kv("train.lr", self.train.lr.to_string());
        kv("train.lr_milestones", join(&self.train.lr_milestones));
        kv("train.lr_decay", self.train.lr_decay.to_string());
        kv("train.clip_norm", self.train.clip_norm.to_string());
        kv("train.label_smoothing", self.train.label_smoothing.to_string());
        kv("descriptors", self.descriptors.to_string());
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames_per_clip < 3 {
            return Err(Error::InvalidArgument(format!(
                "frames_per_clip {} must be >= 3",
                self.frames_per_clip
            )));
        }
        if self.frame_size < crate::frame::MIN_FRAME_SIDE {
            return Err(Error::InvalidArgument(format!(
                "frame_size {} is below the minimum of {}",
                self.frame_size,
                crate::frame::MIN_FRAME_SIDE
            )));
        }
        self.flow.validate()?;
        self.sift.validate()?;
        self.model.validate()?;
        self.train.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.seed = 42;
        cfg.sift.n_modes = 6;
        cfg.model.head_hidden = vec![64, 32];
        cfg.train.lr = 2.5e-4;
        cfg.descriptors = "mu_m,sigma_m".parse().unwrap();
        let back = PipelineConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn every_key_is_settable_and_written() {
        let text = PipelineConfig::default().to_text();
        for key in PipelineConfig::KEYS {
            assert!(text.contains(&format!("{key} = ")), "{key}");
        }
    }

    #[test]
    fn comments_and_errors() {
        let cfg = PipelineConfig::from_text("# comment\nseed = 9 # trailing\n\ntrain.epochs=3\n").unwrap();
        assert_eq!((cfg.seed, cfg.train.epochs), (9, 3));
        assert!(PipelineConfig::from_text("nonsense = 1").is_err());
        assert!(PipelineConfig::from_text("seed 1").is_err());
        assert!(PipelineConfig::from_text("flow.window = 4").is_err());
    }
}
