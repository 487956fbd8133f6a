//! Manifest CSV (`clip_id,frame_dir,label,split`) and frame ingestion.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use super::{scene_id, CongestionClass, Split};
use crate::error::{Error, Result};
use crate::frame::GrayFrame;

const FRAME_EXTENSIONS: [&str; 5] = ["pgm", "png", "ppm", "pnm", "pbm"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipRecord {
    pub clip_id: String,
    pub frame_dir: PathBuf,
    pub label: CongestionClass,
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<ClipRecord>,
}

impl Manifest {
    /// Parses a manifest; relative frame directories resolve against `base`.
    pub fn from_reader<R: std::io::Read>(reader: R, base: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let column = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Dataset(format!("manifest lacks a {name:?} column")))
        };
        let (ci, di, li, si) = (column("clip_id")?, column("frame_dir")?, column("label")?, column("split")?);
        let mut records = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let dir = PathBuf::from(field(di));
            let context = |e: Error| Error::Dataset(format!("manifest row {}: {e}", row + 1));
            records.push(ClipRecord {
                clip_id: field(ci).to_string(),
                frame_dir: if dir.is_absolute() { dir } else { base.join(dir) },
                label: field(li).parse().map_err(context)?,
                split: field(si).parse().map_err(context)?,
            });
        }
        let manifest = Self { records };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_reader(file, base).map_err(|e| match e {
            Error::Dataset(m) => Error::Dataset(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Writes the manifest with frame directories made relative to `base`
    /// where possible.
    pub fn save(&self, path: &Path, base: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["clip_id", "frame_dir", "label", "split"])?;
        for r in &self.records {
            let dir = r.frame_dir.strip_prefix(base).unwrap_or(&r.frame_dir);
            w.write_record([
                r.clip_id.as_str(),
                &dir.to_string_lossy(),
                r.label.name(),
                r.split.name(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Unique, non-empty clip ids and no scene shared between splits.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        let mut scenes: BTreeMap<&str, Split> = BTreeMap::new();
        for r in &self.records {
            if r.clip_id.is_empty() {
                return Err(Error::Dataset("empty clip_id".into()));
            }
            if !ids.insert(r.clip_id.as_str()) {
                return Err(Error::Dataset(format!("duplicate clip_id {:?}", r.clip_id)));
            }
            let scene = scene_id(&r.clip_id);
            match scenes.get(scene) {
                Some(&s) if s != r.split => {
                    return Err(Error::Dataset(format!(
                        "scene {scene:?} appears in both {s} and {} splits",
                        r.split
                    )))
                }
                _ => {
                    scenes.insert(scene, r.split);
                }
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ClipRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }
}

/// Image files in `dir`, lexicographically ordered.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_frame = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| FRAME_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_frame && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads `t` uniformly spaced frames (index `⌊i·n/t⌋`), resized to
/// `size × size` luminance.
pub fn ingest_clip(record: &ClipRecord, t: usize, size: usize) -> Result<Vec<GrayFrame>> {
    load_frames(&record.frame_dir, t, size)
}

/// [`ingest_clip`] for a bare frame directory.
pub fn load_frames(dir: &Path, t: usize, size: usize) -> Result<Vec<GrayFrame>> {
    let files = list_frames(dir)?;
    let n = files.len();
    if n < t {
        return Err(Error::InsufficientFrames {
            dir: dir.to_path_buf(),
            found: n,
            needed: t,
        });
    }
    (0..t)
        .map(|i| {
            let path = &files[i * n / t];
            let frame = GrayFrame::load(path)?;
            if frame.width() == size && frame.height() == size {
                Ok(frame)
            } else {
                frame.resize(size, size).map_err(|e| Error::Decode {
                    path: path.clone(),
                    message: e.to_string(),
                })
            }
        })
        .collect()
}
