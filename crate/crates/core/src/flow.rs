//! Dense optical flow by Farneback polynomial expansion.
//!
//! Each frame is locally approximated by a quadratic polynomial
//! `f(p) ≈ pᵀA p + bᵀp + c` fitted by Gaussian-weighted least squares. A
//! pure translation `d` turns the coefficients of the first frame into those
//! of the second via `b₂ = b₁ − 2A d`, so the displacement is recovered by
//! solving `A d = ½(b₁ − b₂)` in a windowed least-squares sense. A coarse to
//! fine pyramid handles displacements larger than the expansion support.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::{GrayFrame, Plane};

/// Smallest pyramid level side that is still processed.
const MIN_LEVEL_SIDE: usize = 8;

/// Intensities are expanded on a 0..255 scale so that the solver's
/// regularizer stays negligible against textured regions.
const INTENSITY_SCALE: f64 = 255.0;
const SOLVER_REGULARIZER: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarnebackParams {
    pub pyramid_levels: usize,
    pub pyramid_scale: f64,
    pub window_size: usize,
    pub iterations: usize,
    pub poly_n: usize,
    pub poly_sigma: f64,
}

impl Default for FarnebackParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            pyramid_scale: 0.5,
            window_size: 15,
            iterations: 3,
            poly_n: 5,
            poly_sigma: 1.1,
        }
    }
}

impl FarnebackParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.pyramid_levels < 1 {
            return bad("pyramid_levels must be >= 1".into());
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return bad(format!("pyramid_scale {} not in (0, 1)", self.pyramid_scale));
        }
        if self.window_size < 5 || self.window_size % 2 == 0 {
            return bad(format!("window_size {} must be odd and >= 5", self.window_size));
        }
        if self.iterations < 1 {
            return bad("iterations must be >= 1".into());
        }
        if self.poly_n != 5 && self.poly_n != 7 {
            return bad(format!("poly_n {} must be 5 or 7", self.poly_n));
        }
        if !(self.poly_sigma > 0.0 && self.poly_sigma.is_finite()) {
            return bad(format!("poly_sigma {} must be > 0", self.poly_sigma));
        }
        Ok(())
    }

    /// Width of the outer band whose estimates rely on replicated padding.
    pub fn border_margin(&self) -> usize {
        self.poly_n / 2
    }
}

/// Per-pixel displacement `(u, v)` in pixels/frame, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let n = width * height;
        if u.len() != n || v.len() != n {
            return Err(Error::Dimension(format!(
                "flow {width}x{height} needs {n} components, got u={} v={}",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("flow component".into()));
        }
        Ok(Self {
            width,
            height,
            u,
            v,
        })
    }

    pub fn constant(width: usize, height: usize, u: f64, v: f64) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            u: vec![u; n],
            v: vec![v; n],
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Mean `(u, v)` over pixels at least `margin` away from every edge.
    pub fn interior_mean(&self, margin: usize) -> Option<(f64, f64)> {
        if self.width <= 2 * margin || self.height <= 2 * margin {
            return None;
        }
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
        for y in margin..self.height - margin {
            for x in margin..self.width - margin {
                let i = y * self.width + x;
                su += self.u[i];
                sv += self.v[i];
                n += 1;
            }
        }
        Some((su / n as f64, sv / n as f64))
    }

    /// Binary dump: `FLO1`, u32 width, u32 height, then `(f32 u, f32 v)` pairs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.len());
        out.extend_from_slice(b"FLO1");
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for (u, v) in self.u.iter().zip(&self.v) {
            out.extend_from_slice(&(*u as f32).to_le_bytes());
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != b"FLO1" {
            return Err(Error::Parse("missing FLO1 header".into()));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let (width, height) = (word(4) as usize, word(8) as usize);
        let n = width * height;
        if bytes.len() != 12 + 8 * n {
            return Err(Error::Parse(format!(
                "FLO1 body has {} bytes, expected {}",
                bytes.len() - 12,
                8 * n
            )));
        }
        let value = |at: usize| f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as f64;
        let (mut u, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            u.push(value(12 + 8 * i));
            v.push(value(16 + 8 * i));
        }
        FlowField::new(width, height, u, v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Per-pixel `sqrt(u² + v²)`.
pub fn magnitude(flow: &FlowField) -> Plane {
    let data = flow
        .u
        .iter()
        .zip(&flow.v)
        .map(|(u, v)| u.hypot(*v))
        .collect();
    Plane {
        width: flow.width,
        height: flow.height,
        data,
    }
}

/// Angle of `(u, v)` in `(−π, π]`, with the zero vector mapped to 0.
#[inline]
pub fn angle(u: f64, v: f64) -> f64 {
    if u == 0.0 && v == 0.0 {
        return 0.0;
    }
    let a = v.atan2(u);
    // atan2(-0.0, negative) yields -π.
    if a == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        a
    }
}

/// Per-pixel `atan2(v, u)` in `(−π, π]`; `(0, 0)` maps to 0.
pub fn direction(flow: &FlowField) -> Plane {
    let data = flow
        .u
        .iter()
        .zip(&flow.v)
        .map(|(u, v)| angle(*u, *v))
        .collect();
    Plane {
        width: flow.width,
        height: flow.height,
        data,
    }
}

/// Quadratic coefficients per pixel: `[b_x, b_y, a_xx, a_yy, a_xy]`.
#[derive(Debug, Clone)]
struct PolyExpansion {
    width: usize,
    height: usize,
    coeffs: [Vec<f64>; 5],
}

impl PolyExpansion {
    fn sample(&self, x: f64, y: f64) -> [f64; 5] {
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let (i00, i01) = (y0 * self.width + x0, y0 * self.width + x1);
        let (i10, i11) = (y1 * self.width + x0, y1 * self.width + x1);
        std::array::from_fn(|k| {
            let c = &self.coeffs[k];
            (c[i00] * (1.0 - fx) + c[i01] * fx) * (1.0 - fy) + (c[i10] * (1.0 - fx) + c[i11] * fx) * fy
        })
    }
}

/// Least-squares projection kernels mapping a neighborhood to the five
/// non-constant polynomial coefficients.
struct ExpansionKernels {
    radius: isize,
    taps: [Vec<f64>; 5],
}

impl ExpansionKernels {
    fn new(poly_n: usize, sigma: f64) -> Self {
        let radius = (poly_n / 2) as isize;
        let offsets: Vec<(f64, f64)> = (-radius..=radius)
            .flat_map(|dy| (-radius..=radius).map(move |dx| (dx as f64, dy as f64)))
            .collect();
        let basis = |x: f64, y: f64| [1.0, x, y, x * x, y * y, x * y];
        let weight = |x: f64, y: f64| (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();

        let mut gram = [[0.0; 6]; 6];
        for &(x, y) in &offsets {
            let phi = basis(x, y);
            let w = weight(x, y);
            for i in 0..6 {
                for j in 0..6 {
                    gram[i][j] += w * phi[i] * phi[j];
                }
            }
        }
        let inv = invert6(gram);
        let taps = std::array::from_fn(|k| {
            offsets
                .iter()
                .map(|&(x, y)| {
                    let phi = basis(x, y);
                    let w = weight(x, y);
                    (0..6).map(|l| inv[k + 1][l] * w * phi[l]).sum()
                })
                .collect()
        });
        Self { radius, taps }
    }

    fn expand(&self, image: &Plane) -> PolyExpansion {
        let (w, h) = (image.width, image.height);
        let mut coeffs: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; w * h]);
        let side = (2 * self.radius + 1) as usize;
        let mut patch = vec![0.0; side * side];
        for y in 0..h {
            for x in 0..w {
                for (i, p) in patch.iter_mut().enumerate() {
                    let dx = (i % side) as isize - self.radius;
                    let dy = (i / side) as isize - self.radius;
                    *p = INTENSITY_SCALE * image.at_clamped(x as isize + dx, y as isize + dy);
                }
                for (k, tap) in self.taps.iter().enumerate() {
                    coeffs[k][y * w + x] = tap.iter().zip(&patch).map(|(a, b)| a * b).sum();
                }
            }
        }
        PolyExpansion {
            width: w,
            height: h,
            coeffs,
        }
    }
}

fn invert6(mut a: [[f64; 6]; 6]) -> [[f64; 6]; 6] {
    let mut inv = [[0.0; 6]; 6];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..6 {
        let pivot = (col..6)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for j in 0..6 {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for i in 0..6 {
            if i != col {
                let f = a[i][col];
                if f != 0.0 {
                    for j in 0..6 {
                        a[i][j] -= f * a[col][j];
                        inv[i][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    inv
}

/// Pyramid level sizes, finest first.
fn level_sizes(width: usize, height: usize, params: &FarnebackParams) -> Vec<(usize, usize)> {
    let mut sizes = vec![(width, height)];
    for k in 1..params.pyramid_levels {
        let s = params.pyramid_scale.powi(k as i32);
        let w = (width as f64 * s).round() as usize;
        let h = (height as f64 * s).round() as usize;
        if w < MIN_LEVEL_SIDE || h < MIN_LEVEL_SIDE {
            break;
        }
        sizes.push((w, h));
    }
    sizes
}

fn expand_pyramid(
    frame: &GrayFrame,
    sizes: &[(usize, usize)],
    params: &FarnebackParams,
    kernels: &ExpansionKernels,
) -> Vec<PolyExpansion> {
    sizes
        .iter()
        .enumerate()
        .map(|(k, &(w, h))| {
            let level = if k == 0 {
                frame.plane().clone()
            } else {
                let scale = params.pyramid_scale.powi(k as i32);
                let sigma = (1.0 / scale - 1.0) * 0.5;
                frame.plane().gaussian_blur(sigma).resize(w, h)
            };
            kernels.expand(&level)
        })
        .collect()
}

fn check_frame(frame: &GrayFrame) -> Result<()> {
    if frame.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("frame pixel".into()));
    }
    Ok(())
}

/// Dense flow from `prev` to `next`.
pub fn estimate_flow(prev: &GrayFrame, next: &GrayFrame, params: &FarnebackParams) -> Result<FlowField> {
    let mut flows = estimate_flow_sequence(&[prev.clone(), next.clone()], params)?;
    Ok(flows.remove(0))
}

/// Flow between every consecutive pair of `frames`; each frame's polynomial
/// expansion is computed once. Identical to calling [`estimate_flow`] on
/// each pair.
pub fn estimate_flow_sequence(frames: &[GrayFrame], params: &FarnebackParams) -> Result<Vec<FlowField>> {
    params.validate()?;
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let (width, height) = (first.width(), first.height());
    for f in frames {
        if f.width() != width || f.height() != height {
            return Err(Error::Dimension(format!(
                "frame {}x{} does not match {width}x{height}",
                f.width(),
                f.height()
            )));
        }
        check_frame(f)?;
    }
    let sizes = level_sizes(width, height, params);
    let kernels = ExpansionKernels::new(params.poly_n, params.poly_sigma);
    let pyramids: Vec<Vec<PolyExpansion>> = frames
        .iter()
        .map(|f| expand_pyramid(f, &sizes, params, &kernels))
        .collect();
    Ok(pyramids
        .windows(2)
        .map(|pair| flow_from_pyramids(&pair[0], &pair[1], &sizes, params))
        .collect())
}

fn flow_from_pyramids(
    prev: &[PolyExpansion],
    next: &[PolyExpansion],
    sizes: &[(usize, usize)],
    params: &FarnebackParams,
) -> FlowField {
    let coarsest = sizes.len() - 1;
    let (cw, ch) = sizes[coarsest];
    let mut u = Plane::zeros(cw, ch);
    let mut v = Plane::zeros(cw, ch);
    for level in (0..=coarsest).rev() {
        let (w, h) = sizes[level];
        if level != coarsest {
            let sx = w as f64 / u.width as f64;
            let sy = h as f64 / u.height as f64;
            u = u.resize(w, h);
            v = v.resize(w, h);
            u.data.iter_mut().for_each(|x| *x *= sx);
            v.data.iter_mut().for_each(|x| *x *= sy);
        }
        for _ in 0..params.iterations {
            let system = normal_equations(&prev[level], &next[level], &u, &v);
            let blurred: Vec<Plane> = system.iter().map(|p| p.box_blur(params.window_size)).collect();
            solve_displacement(&blurred, &mut u, &mut v);
        }
    }
    FlowField {
        width: u.width,
        height: u.height,
        u: u.data,
        v: v.data,
    }
}

/// Per-pixel `AᵀA` (3 entries) and `AᵀΔb` (2 entries) under the current flow.
fn normal_equations(prev: &PolyExpansion, next: &PolyExpansion, u: &Plane, v: &Plane) -> [Plane; 5] {
    let (w, h) = (prev.width, prev.height);
    let mut out: [Plane; 5] = std::array::from_fn(|_| Plane::zeros(w, h));
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (dx, dy) = (u.data[i], v.data[i]);
            let (tx, ty) = (x as f64 + dx, y as f64 + dy);
            if !(0.0..=max_x).contains(&tx) || !(0.0..=max_y).contains(&ty) {
                // Displaced outside the frame: no evidence at this pixel.
                continue;
            }
            let r0: [f64; 5] = std::array::from_fn(|k| prev.coeffs[k][i]);
            let r1 = next.sample(tx, ty);
            let a00 = 0.5 * (r0[2] + r1[2]);
            let a11 = 0.5 * (r0[3] + r1[3]);
            let a01 = 0.25 * (r0[4] + r1[4]);
            let b0 = 0.5 * (r0[0] - r1[0]) + a00 * dx + a01 * dy;
            let b1 = 0.5 * (r0[1] - r1[1]) + a01 * dx + a11 * dy;
            out[0].data[i] = a00 * a00 + a01 * a01;
            out[1].data[i] = a01 * (a00 + a11);
            out[2].data[i] = a01 * a01 + a11 * a11;
            out[3].data[i] = a00 * b0 + a01 * b1;
            out[4].data[i] = a01 * b0 + a11 * b1;
        }
    }
    out
}

fn solve_displacement(system: &[Plane], u: &mut Plane, v: &mut Plane) {
    for i in 0..u.data.len() {
        let (g11, g12, g22) = (system[0].data[i], system[1].data[i], system[2].data[i]);
        let (h1, h2) = (system[3].data[i], system[4].data[i]);
        let inv_det = 1.0 / (g11 * g22 - g12 * g12 + SOLVER_REGULARIZER);
        u.data[i] = (g22 * h1 - g12 * h2) * inv_det;
        v.data[i] = (g11 * h2 - g12 * h1) * inv_det;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    /// Smooth random texture: white noise blurred and stretched to [0, 1].
    fn texture(size: usize, seed: u64) -> Plane {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Plane::from_vec(size, size, (0..size * size).map(|_| rng.random::<f64>()).collect()).unwrap();
        let mut p = noise.gaussian_blur(1.5);
        let (lo, hi) = p.min_max();
        p.data.iter_mut().for_each(|x| *x = (*x - lo) / (hi - lo));
        p
    }

    fn shifted(p: &Plane, sx: isize, sy: isize) -> Plane {
        let (w, h) = (p.width as isize, p.height as isize);
        let mut out = Plane::zeros(p.width, p.height);
        for y in 0..h {
            for x in 0..w {
                let src_x = (x - sx).rem_euclid(w);
                let src_y = (y - sy).rem_euclid(h);
                out.data[(y * w + x) as usize] = p.at(src_x as usize, src_y as usize);
            }
        }
        out
    }

    fn frame(p: Plane) -> GrayFrame {
        GrayFrame::new(p.width, p.height, p.data).unwrap()
    }

    #[test]
    fn identical_frames_have_zero_flow() {
        let f = frame(texture(48, 3));
        let flow = estimate_flow(&f, &f, &FarnebackParams::default()).unwrap();
        let max = flow.u.iter().chain(&flow.v).fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(max < 0.05, "max |flow| = {max}");
    }

    #[test]
    fn recovers_horizontal_shift() {
        let base = texture(64, 11);
        let next = shifted(&base, 2, 0);
        let params = FarnebackParams::default();
        let flow = estimate_flow(&frame(base), &frame(next), &params).unwrap();
        let (mu, mv) = flow.interior_mean(params.window_size).unwrap();
        assert!((1.75..=2.25).contains(&mu), "mean u = {mu}");
        assert!((-0.25..=0.25).contains(&mv), "mean v = {mv}");
    }

    #[test]
    fn recovers_vertical_shift() {
        let base = texture(64, 12);
        let next = shifted(&base, 0, 1);
        let params = FarnebackParams::default();
        let flow = estimate_flow(&frame(base), &frame(next), &params).unwrap();
        let (mu, mv) = flow.interior_mean(params.window_size).unwrap();
        assert!((0.75..=1.25).contains(&mv), "mean v = {mv}");
        assert!((-0.25..=0.25).contains(&mu), "mean u = {mu}");
    }

    #[test]
    fn sequence_matches_pairwise() {
        let a = frame(texture(32, 1));
        let b = frame(shifted(&texture(32, 1), 1, 0));
        let c = frame(shifted(&texture(32, 1), 2, 1));
        let params = FarnebackParams::default();
        let seq = estimate_flow_sequence(&[a.clone(), b.clone(), c.clone()], &params).unwrap();
        assert_eq!(seq[0], estimate_flow(&a, &b, &params).unwrap());
        assert_eq!(seq[1], estimate_flow(&b, &c, &params).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = frame(texture(32, 1));
        let b = frame(texture(16, 1));
        assert!(matches!(
            estimate_flow(&a, &b, &FarnebackParams::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn invalid_params_are_rejected() {
        let a = frame(texture(32, 1));
        for p in [
            FarnebackParams { window_size: 14, ..Default::default() },
            FarnebackParams { poly_n: 9, ..Default::default() },
            FarnebackParams { pyramid_levels: 0, ..Default::default() },
            FarnebackParams { pyramid_scale: 1.0, ..Default::default() },
            FarnebackParams { poly_sigma: 0.0, ..Default::default() },
        ] {
            assert!(estimate_flow(&a, &a, &p).is_err(), "{p:?}");
        }
    }

    #[test]
    fn magnitude_and_direction_examples() {
        let flow = FlowField::new(
            5,
            1,
            vec![3.0, 0.0, -1.0, 1.0, 0.0],
            vec![4.0, 0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let m = magnitude(&flow);
        assert_eq!(&m.data[..3], &[5.0, 0.0, 1.0]);
        let d = direction(&flow);
        assert_eq!(d.data[1], 0.0);
        assert_eq!(d.data[3], 0.0);
        assert!((d.data[4] - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(d.data[2], PI);
    }

    #[test]
    fn negative_zero_direction_stays_in_range() {
        assert_eq!(angle(-1.0, -0.0), PI);
        assert_eq!(angle(-0.0, -0.0), 0.0);
        assert_eq!(angle(-0.0, 0.0), 0.0);
    }

    #[test]
    fn flo1_round_trip() {
        let flow = FlowField::new(2, 2, vec![0.5, -1.25, 2.0, 0.0], vec![0.0, 3.5, -0.75, 1.0]).unwrap();
        let bytes = flow.to_bytes();
        assert_eq!(&bytes[..4], b"FLO1");
        assert_eq!(&bytes[4..12], &[2, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(bytes.len(), 12 + 4 * 8);
        assert_eq!(FlowField::from_bytes(&bytes).unwrap(), flow);
        assert!(FlowField::from_bytes(&bytes[..20]).is_err());
    }

    #[test]
    fn expansion_recovers_exact_quadratic() {
        // f = 2x² − y² + 0.5xy + 3x − y on a 0..255 scale
        let kernels = ExpansionKernels::new(5, 1.1);
        let (w, h) = (15, 15);
        let data = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64 - 7.0, (i / w) as f64 - 7.0);
                (2.0 * x * x - y * y + 0.5 * x * y + 3.0 * x - y) / INTENSITY_SCALE
            })
            .collect();
        let e = kernels.expand(&Plane::from_vec(w, h, data).unwrap());
        let c = 7 * w + 7;
        let got: Vec<f64> = e.coeffs.iter().map(|k| k[c]).collect();
        let want = [3.0, -1.0, 2.0, -1.0, 0.5];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-9, "{got:?}");
        }
    }

    #[test]
    fn random_shift_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = rng.random_range(1..=3i64) as isize;
        let base = texture(40, 2);
        let next = shifted(&base, s, 0);
        let p = FarnebackParams::default();
        let a = estimate_flow(&frame(base.clone()), &frame(next.clone()), &p).unwrap();
        let b = estimate_flow(&frame(base), &frame(next), &p).unwrap();
        assert_eq!(a, b);
    }
}
