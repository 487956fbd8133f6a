//! Grayscale frames and generic scalar planes.

use std::io::Write;
use std::path::Path;

use image::{ColorType, DynamicImage};

use crate::error::{Error, Result};

/// Minimum accepted frame side, in pixels.
pub const MIN_FRAME_SIDE: usize = 16;

/// ITU-R BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// A row-major 2-D field of `f64` values with no range constraints.
///
/// Used for flow components, magnitude/direction maps and pyramid levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "plane {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Value at integer coordinates with edge replication.
    #[inline]
    pub fn at_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Bilinear sample at fractional coordinates with edge replication.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.at(x0, y0) * (1.0 - fx) + self.at(x1, y0) * fx;
        let bottom = self.at(x0, y1) * (1.0 - fx) + self.at(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Bilinear resize with pixel-center alignment.
    pub fn resize(&self, width: usize, height: usize) -> Plane {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut out = Vec::with_capacity(width * height);
        for y in 0..height {
            let src_y = (y as f64 + 0.5) * sy - 0.5;
            for x in 0..width {
                let src_x = (x as f64 + 0.5) * sx - 0.5;
                out.push(self.sample(src_x, src_y));
            }
        }
        Plane {
            width,
            height,
            data: out,
        }
    }

    /// Separable Gaussian blur, kernel radius `ceil(3σ)`, replicated edges.
    pub fn gaussian_blur(&self, sigma: f64) -> Plane {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let mut kernel: Vec<f64> = (-radius..=radius)
            .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= total);
        self.separable(&kernel)
    }

    /// Mean filter over a `size × size` window (odd size), replicated edges.
    pub fn box_blur(&self, size: usize) -> Plane {
        let kernel = vec![1.0 / size as f64; size];
        self.separable(&kernel)
    }

    fn separable(&self, kernel: &[f64]) -> Plane {
        let r = (kernel.len() / 2) as isize;
        let (w, h) = (self.width, self.height);
        let mut tmp = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, coef) in kernel.iter().enumerate() {
                    acc += coef * self.at_clamped(x as isize + k as isize - r, y as isize);
                }
                tmp[y * w + x] = acc;
            }
        }
        let tmp = Plane {
            width: w,
            height: h,
            data: tmp,
        };
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, coef) in kernel.iter().enumerate() {
                    acc += coef * tmp.at_clamped(x as isize, y as isize + k as isize - r);
                }
                out[y * w + x] = acc;
            }
        }
        Plane {
            width: w,
            height: h,
            data: out,
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// A validated luminance frame with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    plane: Plane,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width < MIN_FRAME_SIDE || height < MIN_FRAME_SIDE {
            return Err(Error::InvalidArgument(format!(
                "frame {width}x{height} is smaller than {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}"
            )));
        }
        let plane = Plane::from_vec(width, height, data)?;
        if let Some(i) = plane.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("frame pixel {i}")));
        }
        if let Some(i) = plane.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(format!(
                "frame pixel {i} = {} outside [0, 1]",
                plane.data[i]
            )));
        }
        Ok(Self { plane })
    }

    /// Builds a frame from interleaved RGB values in `[0, 1]`.
    pub fn from_rgb(width: usize, height: usize, rgb: &[f64]) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::Dimension(format!(
                "rgb frame {width}x{height} needs {} values, got {}",
                width * height * 3,
                rgb.len()
            )));
        }
        let data = rgb
            .chunks_exact(3)
            .map(|p| {
                (LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2])
                    .clamp(0.0, 1.0)
            })
            .collect();
        Self::new(width, height, data)
    }

    /// Decodes a PGM/PPM/PNG file, converting color to BT.601 luminance.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_image(&img).map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn from_image(img: &DynamicImage) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img.color() {
            ColorType::L8 | ColorType::L16 | ColorType::La8 | ColorType::La16 => {
                let luma = img.to_luma32f();
                Self::new(w, h, luma.pixels().map(|p| p.0[0] as f64).collect())
            }
            _ => {
                let rgb = img.to_rgb32f();
                let values: Vec<f64> = rgb.as_raw().iter().map(|&v| v as f64).collect();
                Self::from_rgb(w, h, &values)
            }
        }
    }

    pub fn width(&self) -> usize {
        self.plane.width
    }

    pub fn height(&self) -> usize {
        self.plane.height
    }

    pub fn data(&self) -> &[f64] {
        &self.plane.data
    }

    pub fn plane(&self) -> &Plane {
        &self.plane
    }

    pub fn resize(&self, width: usize, height: usize) -> Result<GrayFrame> {
        let mut plane = self.plane.resize(width, height);
        // Bilinear weights are convex, so clamping only removes rounding noise.
        plane.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        GrayFrame::new(width, height, plane.data)
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        write_pgm(path, &self.plane, 1.0)
    }
}

/// Encodes a plane as binary 8-bit PGM (`P5`), mapping `value * scale * 255`.
pub fn pgm_bytes(plane: &Plane, scale: f64) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", plane.width, plane.height).into_bytes();
    out.extend(
        plane
            .data
            .iter()
            .map(|v| (v * scale * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    out
}

pub fn write_pgm(path: &Path, plane: &Plane, scale: f64) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&pgm_bytes(plane, scale))
        .map_err(|e| Error::io(path, e))
}
