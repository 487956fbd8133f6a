//! Frame-level motion descriptors and clip-level motion traces.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::{angle, FlowField};

/// The four per-frame motion descriptors, in trace order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Descriptor {
    MuM,
    SigmaM,
    MuD,
    SigmaD,
}

impl Descriptor {
    pub const ALL: [Descriptor; 4] = [
        Descriptor::MuM,
        Descriptor::SigmaM,
        Descriptor::MuD,
        Descriptor::SigmaD,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Descriptor::MuM => "mu_m",
            Descriptor::SigmaM => "sigma_m",
            Descriptor::MuD => "mu_d",
            Descriptor::SigmaD => "sigma_d",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == name)
    }

    pub fn is_magnitude(self) -> bool {
        matches!(self, Descriptor::MuM | Descriptor::SigmaM)
    }
}

/// Spatial moments of one flow field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameDescriptors {
    pub mu_m: f64,
    pub sigma_m: f64,
    pub mu_d: f64,
    pub sigma_d: f64,
}

impl FrameDescriptors {
    pub fn get(&self, d: Descriptor) -> f64 {
        match d {
            Descriptor::MuM => self.mu_m,
            Descriptor::SigmaM => self.sigma_m,
            Descriptor::MuD => self.mu_d,
            Descriptor::SigmaD => self.sigma_d,
        }
    }
}

/// Population mean and standard deviation, two passes.
pub(crate) fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (sum, n) = values.clone().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / n as f64;
    let var = values.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Population mean/std of flow magnitude and of raw `atan2` direction.
///
/// Direction statistics are arithmetic, not circular.
pub fn frame_descriptors(flow: &FlowField) -> Result<FrameDescriptors> {
    if flow.is_empty() {
        return Err(Error::InvalidArgument("empty flow field".into()));
    }
    let pairs = flow.u.iter().zip(&flow.v);
    let (mu_m, sigma_m) = mean_std(pairs.clone().map(|(u, v)| u.hypot(*v)));
    let (mu_d, sigma_d) = mean_std(pairs.map(|(u, v)| angle(*u, *v)));
    Ok(FrameDescriptors {
        mu_m,
        sigma_m,
        mu_d,
        sigma_d,
    })
}

/// Four equal-length descriptor series over a clip's flow steps.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionTrace {
    series: [Vec<f64>; 4],
}

impl MotionTrace {
    pub fn from_series(series: [Vec<f64>; 4]) -> Result<Self> {
        let len = series[0].len();
        if series.iter().any(|s| s.len() != len) {
            return Err(Error::Dimension("trace series lengths differ".into()));
        }
        if len < 2 {
            return Err(Error::InvalidArgument(format!(
                "trace needs at least 2 steps, got {len}"
            )));
        }
        if series.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trace value".into()));
        }
        Ok(Self { series })
    }

    pub fn len(&self) -> usize {
        self.series[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn series(&self, d: Descriptor) -> &[f64] {
        &self.series[d.index()]
    }

    pub fn all_series(&self) -> &[Vec<f64>; 4] {
        &self.series
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,mu_m,sigma_m,mu_d,sigma_d\n");
        for t in 0..self.len() {
            let _ = write!(out, "{t}");
            for s in &self.series {
                let _ = write!(out, ",{:.16e}", s[t]);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        let columns: Vec<usize> = Descriptor::ALL
            .iter()
            .map(|d| {
                headers
                    .iter()
                    .position(|h| h.trim() == d.name())
                    .ok_or_else(|| Error::Parse(format!("trace CSV missing column {}", d.name())))
            })
            .collect::<Result<_>>()?;
        let mut series: [Vec<f64>; 4] = Default::default();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            for (s, &col) in series.iter_mut().zip(&columns) {
                let field = record.get(col).unwrap_or("").trim();
                let v = field.parse::<f64>().map_err(|_| {
                    Error::Parse(format!("trace CSV row {}: bad value {field:?}", row + 1))
                })?;
                s.push(v);
            }
        }
        Self::from_series(series)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Descriptor series for a sequence of flow fields, in temporal order.
pub fn build_trace(flows: &[FlowField]) -> Result<MotionTrace> {
    if flows.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 flow fields, got {}",
            flows.len()
        )));
    }
    let (w, h) = (flows[0].width, flows[0].height);
    let mut series: [Vec<f64>; 4] = Default::default();
    for flow in flows {
        if flow.width != w || flow.height != h {
            return Err(Error::Dimension(format!(
                "flow {}x{} does not match {w}x{h}",
                flow.width, flow.height
            )));
        }
        let fd = frame_descriptors(flow)?;
        for d in Descriptor::ALL {
            series[d.index()].push(fd.get(d));
        }
    }
    MotionTrace::from_series(series)
}
