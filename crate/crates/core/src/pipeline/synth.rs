//! Synthetic traffic clips: textured vehicles moving right along lanes over
//! a static textured road, with regime-dependent density and speed.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::dataset::{ClipRecord, Manifest};
use super::features::{trace_for_frames, ClipTrace};
use super::{CongestionClass, Split};
use crate::error::{Error, Result};
use crate::flow::FarnebackParams;
use crate::frame::{GrayFrame, Plane};

/// Lane pitch and vehicle geometry at the reference 64-pixel frame size.
const REFERENCE_SIZE: f64 = 64.0;
const LANE_PITCH: f64 = 12.0;
const VEHICLE_HEIGHT: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSceneConfig {
    pub regime: CongestionClass,
    /// Inclusive vehicle-count range.
    pub n_vehicles: (usize, usize),
    /// Speed range in pixels/frame at the reference size; for stop-and-go
    /// traffic this is the peak speed.
    pub base_speed: (f64, f64),
    /// Per-frame speed noise standard deviation, shared by all vehicles;
    /// each vehicle adds independent noise of half this size.
    pub speed_jitter: f64,
    /// Stop-and-go period range in frames; `None` for free flow.
    pub stop_go_period: Option<(f64, f64)>,
    pub vehicle_length: (f64, f64),
    pub frame_size: usize,
    pub n_frames: usize,
    /// Seed of the clip's vehicles.
    pub seed: u64,
    /// Seed of the background and lane layout, shared by clips of a scene.
    pub scene_seed: u64,
}

impl SyntheticSceneConfig {
    pub fn preset(regime: CongestionClass, frame_size: usize, n_frames: usize, seed: u64, scene_seed: u64) -> Self {
        let (n_vehicles, base_speed, speed_jitter, stop_go_period, vehicle_length) = match regime {
            CongestionClass::Light => ((3, 3), (3.0, 3.5), 0.0, None, (14.0, 16.0)),
            CongestionClass::Medium => ((5, 7), (0.9, 1.3), 0.4, None, (10.0, 14.0)),
            CongestionClass::Heavy => ((10, 14), (0.4, 0.8), 0.0, Some((6.0, 10.0)), (10.0, 14.0)),
        };
        Self {
            regime,
            n_vehicles,
            base_speed,
            speed_jitter,
            stop_go_period,
            vehicle_length,
            frame_size,
            n_frames,
            seed,
            scene_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_size < crate::frame::MIN_FRAME_SIDE {
            return Err(Error::InvalidArgument(format!("frame_size {} too small", self.frame_size)));
        }
        if self.n_frames < 2 {
            return Err(Error::InvalidArgument("need at least 2 frames".into()));
        }
        if self.n_vehicles.0 > self.n_vehicles.1
            || self.base_speed.0 > self.base_speed.1
            || self.vehicle_length.0 > self.vehicle_length.1
            || self.base_speed.0 < 0.0
            || self.speed_jitter < 0.0
        {
            return Err(Error::InvalidArgument("inverted or negative synthetic ranges".into()));
        }
        Ok(())
    }
}

struct Vehicle {
    lane: usize,
    length: f64,
    /// Positions of the rear edge, one per frame.
    positions: Vec<f64>,
    texture: Plane,
}

fn range<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Smooth random texture in `[lo, hi]`: coarse bilinear noise plus a fine layer.
fn texture<R: Rng>(width: usize, height: usize, cell: usize, lo: f64, hi: f64, rng: &mut R) -> Plane {
    let cw = width.div_ceil(cell) + 1;
    let ch = height.div_ceil(cell) + 1;
    let coarse = Plane::from_vec(cw, ch, (0..cw * ch).map(|_| rng.random::<f64>()).collect())
        .expect("sized")
        .resize(width, height);
    let fine = Plane::from_vec(width, height, (0..width * height).map(|_| rng.random::<f64>()).collect())
        .expect("sized")
        .gaussian_blur(0.8);
    let data = coarse
        .data
        .iter()
        .zip(&fine.data)
        .map(|(c, f)| lo + (hi - lo) * (0.7 * c + 0.3 * f))
        .collect();
    Plane::from_vec(width, height, data).expect("sized")
}

/// Renders one clip; identical configs give bit-identical frames.
pub fn generate_synthetic_clip(cfg: &SyntheticSceneConfig) -> Result<(Vec<GrayFrame>, CongestionClass)> {
    cfg.validate()?;
    let size = cfg.frame_size;
    let scale = size as f64 / REFERENCE_SIZE;

    let mut scene_rng = ChaCha8Rng::seed_from_u64(cfg.scene_seed);
    let background = texture(size, size, (8.0 * scale).round().max(2.0) as usize, 0.25, 0.55, &mut scene_rng);
    let pitch = LANE_PITCH * scale;
    let n_lanes = ((size as f64 - VEHICLE_HEIGHT * scale) / pitch).floor() as usize + 1;
    let offset = scene_rng.random_range(0.0..(size as f64 - (n_lanes - 1) as f64 * pitch - VEHICLE_HEIGHT * scale).max(1e-9));
    let lane_top: Vec<usize> = (0..n_lanes).map(|k| (offset + k as f64 * pitch).floor() as usize).collect();
    let vh = (VEHICLE_HEIGHT * scale).round().max(2.0) as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let count = rng.random_range(cfg.n_vehicles.0..=cfg.n_vehicles.1);
    let jitter = Normal::new(0.0, cfg.speed_jitter.max(1e-300)).expect("valid std");
    // Stop-and-go waves are shared by the whole scene with small per-vehicle lags.
    let wave = cfg
        .stop_go_period
        .map(|p| (range(&mut rng, p), rng.random_range(0.0..std::f64::consts::TAU)));
    let common: Vec<f64> = (0..cfg.n_frames).map(|_| jitter.sample(&mut rng)).collect();
    let mut vehicles = Vec::with_capacity(count);
    for _ in 0..count {
        let lane = rng.random_range(0..n_lanes);
        let length = range(&mut rng, cfg.vehicle_length) * scale;
        let peak = range(&mut rng, cfg.base_speed) * scale;
        let lag = rng.random_range(-0.4..0.4);
        let mut x = rng.random_range(0.0..size as f64);
        let mut positions = Vec::with_capacity(cfg.n_frames);
        for t in 0..cfg.n_frames {
            positions.push(x);
            let mut v = match wave {
                Some((period, phase)) => {
                    peak * 0.5 * (1.0 + (std::f64::consts::TAU * t as f64 / period + phase + lag).sin())
                }
                None => peak,
            };
            if cfg.speed_jitter > 0.0 {
                v += (common[t] + 0.5 * jitter.sample(&mut rng)) * scale;
            }
            x += v.max(0.0);
        }
        let bright = rng.random_bool(0.5);
        let (lo, hi) = if bright { (0.7, 0.95) } else { (0.03, 0.2) };
        let tex = texture(length.ceil() as usize + 2, vh, 3, lo, hi, &mut rng);
        vehicles.push(Vehicle {
            lane,
            length,
            positions,
            texture: tex,
        });
    }

    let mut frames = Vec::with_capacity(cfg.n_frames);
    for t in 0..cfg.n_frames {
        let mut img = background.data.clone();
        for v in &vehicles {
            let pos = v.positions[t].rem_euclid(size as f64);
            let top = lane_top[v.lane];
            for x in 0..size {
                // Exact horizontal pixel coverage, including the wrapped copy.
                let (mut cover, mut sx) = (0.0, 0.0);
                for shift in [-(size as f64), 0.0] {
                    let start = pos + shift;
                    let c = ((x as f64 + 1.0).min(start + v.length) - (x as f64).max(start)).max(0.0);
                    if c > 0.0 {
                        cover = c;
                        sx = x as f64 + 0.5 - start;
                    }
                }
                if cover == 0.0 {
                    continue;
                }
                for y in top..(top + vh).min(size) {
                    let i = y * size + x;
                    let tex = v.texture.sample(sx, (y - top) as f64);
                    img[i] = img[i] * (1.0 - cover) + tex * cover;
                }
            }
        }
        img.iter_mut().for_each(|p| *p = p.clamp(0.0, 1.0));
        frames.push(GrayFrame::new(size, size, img)?);
    }
    Ok((frames, cfg.regime))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticClip {
    pub clip_id: String,
    pub split: Split,
    pub scene: SyntheticSceneConfig,
}

/// A planned synthetic dataset; frames are rendered on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub clips: Vec<SyntheticClip>,
}

/// Plans `n_clips` clips (balanced over regimes) across `n_scenes` scenes,
/// splitting scenes 70/10/20 into train/val/test.
pub fn generate_dataset(n_clips: usize, n_scenes: usize, frame_size: usize, n_frames: usize, seed: u64) -> Result<SyntheticDataset> {
    if n_clips < 3 {
        return Err(Error::InvalidArgument("need at least 3 clips (one per class)".into()));
    }
    let n_scenes = n_scenes.clamp(1, n_clips);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene_seeds: Vec<u64> = (0..n_scenes).map(|_| rng.random()).collect();
    let mut order: Vec<usize> = (0..n_scenes).collect();
    order.shuffle(&mut rng);
    let n_train = ((0.7 * n_scenes as f64).round() as usize).max(1);
    let n_val = ((0.1 * n_scenes as f64).round() as usize).min(n_scenes - n_train);
    let mut scene_split = vec![Split::Test; n_scenes];
    for (rank, &s) in order.iter().enumerate() {
        scene_split[s] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }

    let mut clips = Vec::with_capacity(n_clips);
    for (c, class) in CongestionClass::ALL.into_iter().enumerate() {
        let n = n_clips / 3 + usize::from(c < n_clips % 3);
        for j in 0..n {
            let scene = j % n_scenes;
            clips.push(SyntheticClip {
                clip_id: format!("scene{scene:02}_{}_{j:03}", class.name()),
                split: scene_split[scene],
                scene: SyntheticSceneConfig::preset(class, frame_size, n_frames, rng.random(), scene_seeds[scene]),
            });
        }
    }
    Ok(SyntheticDataset { clips })
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn render(&self, i: usize) -> Result<Vec<GrayFrame>> {
        Ok(generate_synthetic_clip(&self.clips[i].scene)?.0)
    }

    /// Writes `clips/<clip_id>/frame_NNN.pgm` and `manifest.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<Manifest> {
        let clip_root = dir.join("clips");
        let records = self
            .clips
            .par_iter()
            .map(|clip| {
                let frame_dir = clip_root.join(&clip.clip_id);
                std::fs::create_dir_all(&frame_dir).map_err(|e| Error::io(&frame_dir, e))?;
                let (frames, label) = generate_synthetic_clip(&clip.scene)?;
                for (t, f) in frames.iter().enumerate() {
                    f.save_pgm(&frame_dir.join(format!("frame_{t:03}.pgm")))?;
                }
                Ok(ClipRecord {
                    clip_id: clip.clip_id.clone(),
                    frame_dir,
                    label,
                    split: clip.split,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest { records };
        manifest.validate()?;
        manifest.save(&dir.join("manifest.csv"), dir)?;
        Ok(manifest)
    }

    /// Motion traces straight from rendered frames, skipping the disk.
    pub fn traces(&self, flow: &FarnebackParams) -> Result<Vec<ClipTrace>> {
        self.clips
            .par_iter()
            .map(|clip| {
                let (frames, label) = generate_synthetic_clip(&clip.scene)?;
                Ok(ClipTrace {
                    clip_id: clip.clip_id.clone(),
                    label,
                    split: clip.split,
                    trace: trace_for_frames(&frames, flow)?,
                })
            })
            .collect()
    }
}
