//! Flow-guided channel and spatial attention on small feature maps, with
//! hand-derived gradients for every parameter and both inputs.
//!
//! Channel branch: the flow map is aligned to the RGB channel count with a
//! 1×1 convolution, average- and max-pooled together with the RGB map, and
//! the four pooled vectors `[rgb-avg, rgb-max, flow-avg, flow-max]` go
//! through a `4C → max(1, C/r) → C` MLP (ReLU hidden) and a sigmoid.
//! Spatial branch: `[channel-mean, channel-max]` of the channel-refined map
//! plus the min-max normalised flow magnitude, a zero-padded 7×7 convolution
//! and a sigmoid.

use rand::Rng;

use crate::error::{Error, Result};
use crate::frame::Plane;
use crate::nn::{relative_error, sigmoid};

pub const KERNEL: usize = 7;
const PAD: isize = (KERNEL / 2) as isize;
const SPATIAL_PLANES: usize = 3;

/// A `C × H × W` feature tensor, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument("feature map dimensions must be positive".into()));
        }
        if data.len() != channels * height * width {
            return Err(Error::Dimension(format!(
                "feature map {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map".into()));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn random<R: Rng + ?Sized>(channels: usize, height: usize, width: usize, rng: &mut R) -> Self {
        let data = (0..channels * height * width)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.area();
        &self.data[c * n..(c + 1) * n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAttentionParams {
    pub channels: usize,
    pub flow_channels: usize,
    pub hidden: usize,
    /// `C × C_flow` 1×1 mixing matrix and its bias.
    pub align_w: Vec<f64>,
    pub align_b: Vec<f64>,
    /// `hidden × 4C`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `C × hidden`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl ChannelAttentionParams {
    pub fn zeros(channels: usize, flow_channels: usize, reduction: usize) -> Self {
        let hidden = (channels / reduction.max(1)).max(1);
        Self {
            channels,
            flow_channels,
            hidden,
            align_w: vec![0.0; channels * flow_channels],
            align_b: vec![0.0; channels],
            w1: vec![0.0; hidden * 4 * channels],
            b1: vec![0.0; hidden],
            w2: vec![0.0; channels * hidden],
            b2: vec![0.0; channels],
        }
    }

    pub fn random<R: Rng + ?Sized>(channels: usize, flow_channels: usize, reduction: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(channels, flow_channels, reduction);
        let fill = |v: &mut [f64], fan_in: usize, rng: &mut R| {
            let limit = (3.0 / fan_in as f64).sqrt();
            v.iter_mut().for_each(|x| *x = rng.random_range(-limit..limit));
        };
        fill(&mut p.align_w, flow_channels, rng);
        fill(&mut p.align_b, flow_channels, rng);
        fill(&mut p.w1, 4 * channels, rng);
        fill(&mut p.b1, 4 * channels, rng);
        fill(&mut p.w2, p.hidden, rng);
        fill(&mut p.b2, p.hidden, rng);
        p
    }

    fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.align_w,
            &mut self.align_b,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialAttentionParams {
    /// `3 × 7 × 7`, planes ordered mean, max, flow magnitude.
    pub kernel: Vec<f64>,
    pub bias: f64,
}

impl SpatialAttentionParams {
    pub fn zeros() -> Self {
        Self {
            kernel: vec![0.0; SPATIAL_PLANES * KERNEL * KERNEL],
            bias: 0.0,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let limit = (3.0 / (SPATIAL_PLANES * KERNEL * KERNEL) as f64).sqrt();
        Self {
            kernel: (0..SPATIAL_PLANES * KERNEL * KERNEL)
                .map(|_| rng.random_range(-limit..limit))
                .collect(),
            bias: rng.random_range(-0.1..0.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub channel: ChannelAttentionParams,
    pub spatial: SpatialAttentionParams,
}

impl AttentionParams {
    pub fn random<R: Rng + ?Sized>(channels: usize, flow_channels: usize, reduction: usize, rng: &mut R) -> Self {
        Self {
            channel: ChannelAttentionParams::random(channels, flow_channels, reduction, rng),
            spatial: SpatialAttentionParams::random(rng),
        }
    }
}

/// Intermediates of the channel branch needed for backpropagation.
#[derive(Debug, Clone)]
struct ChannelCache {
    pooled: Vec<f64>,
    /// Flat spatial index of the max for rgb then aligned flow, per channel.
    argmax: Vec<usize>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
}

/// Channel weights `A_c ∈ (0,1)^C`.
pub fn channel_attention(x_rgb: &FeatureMap, x_flow: &FeatureMap, params: &ChannelAttentionParams) -> Result<Vec<f64>> {
    Ok(channel_forward(x_rgb, x_flow, params)?.0)
}

fn channel_forward(
    x_rgb: &FeatureMap,
    x_flow: &FeatureMap,
    p: &ChannelAttentionParams,
) -> Result<(Vec<f64>, ChannelCache)> {
    if x_rgb.height != x_flow.height || x_rgb.width != x_flow.width {
        return Err(Error::Dimension(format!(
            "rgb map is {}x{} but flow map is {}x{}",
            x_rgb.height, x_rgb.width, x_flow.height, x_flow.width
        )));
    }
    if x_rgb.channels != p.channels || x_flow.channels != p.flow_channels {
        return Err(Error::Dimension(format!(
            "params expect {} rgb and {} flow channels, got {} and {}",
            p.channels, p.flow_channels, x_rgb.channels, x_flow.channels
        )));
    }
    let c = p.channels;
    let n = x_rgb.area();
    let mut aligned = vec![0.0; c * n];
    for o in 0..c {
        let out = &mut aligned[o * n..(o + 1) * n];
        out.fill(p.align_b[o]);
        for i in 0..p.flow_channels {
            let w = p.align_w[o * p.flow_channels + i];
            out.iter_mut()
                .zip(x_flow.channel(i))
                .for_each(|(y, x)| *y += w * x);
        }
    }
    let aligned = FeatureMap {
        channels: c,
        height: x_rgb.height,
        width: x_rgb.width,
        data: aligned,
    };

    let mut pooled = vec![0.0; 4 * c];
    let mut argmax = vec![0; 2 * c];
    for (m, map) in [x_rgb, &aligned].into_iter().enumerate() {
        for ch in 0..c {
            let plane = map.channel(ch);
            let (idx, max) = first_max(plane);
            pooled[2 * m * c + ch] = plane.iter().sum::<f64>() / n as f64;
            pooled[(2 * m + 1) * c + ch] = max;
            argmax[m * c + ch] = idx;
        }
    }

    let hidden_pre: Vec<f64> = p
        .w1
        .chunks_exact(4 * c)
        .zip(&p.b1)
        .map(|(row, b)| dot(row, &pooled) + b)
        .collect();
    let hidden: Vec<f64> = hidden_pre.iter().map(|z| z.max(0.0)).collect();
    let a_c = p
        .w2
        .chunks_exact(p.hidden)
        .zip(&p.b2)
        .map(|(row, b)| sigmoid(dot(row, &hidden) + b))
        .collect();
    Ok((
        a_c,
        ChannelCache {
            pooled,
            argmax,
            hidden_pre,
            hidden,
        },
    ))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Index and value of the first maximum; ties resolve to the lowest index.
fn first_max(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
}

/// Bilinearly resizes a magnitude field to `height × width` and min-max
/// normalises it to `[0, 1]`; a constant field maps to zeros.
pub fn normalize_flow_magnitude(flow_mag: &Plane, height: usize, width: usize) -> Plane {
    let mut p = flow_mag.resize(width, height);
    let (lo, hi) = p.min_max();
    let range = hi - lo;
    if range > 0.0 && range.is_finite() {
        p.data.iter_mut().for_each(|v| *v = (*v - lo) / range);
    } else {
        p.data.fill(0.0);
    }
    p
}

#[derive(Debug, Clone)]
struct SpatialCache {
    /// Mean, max and normalised flow planes, each `H × W`.
    planes: Vec<f64>,
    max_channel: Vec<usize>,
}

/// Spatial weights `A_s ∈ (0,1)^{H×W}` from the channel-refined map.
pub fn spatial_attention(x_refined: &FeatureMap, flow_mag: &Plane, params: &SpatialAttentionParams) -> Result<Plane> {
    Ok(spatial_forward(x_refined, flow_mag, params)?.0)
}

fn spatial_forward(x: &FeatureMap, flow_mag: &Plane, p: &SpatialAttentionParams) -> Result<(Plane, SpatialCache)> {
    if p.kernel.len() != SPATIAL_PLANES * KERNEL * KERNEL {
        return Err(Error::Dimension(format!(
            "spatial kernel needs {} weights, got {}",
            SPATIAL_PLANES * KERNEL * KERNEL,
            p.kernel.len()
        )));
    }
    if flow_mag.width == 0 || flow_mag.height == 0 || flow_mag.data.len() != flow_mag.width * flow_mag.height {
        return Err(Error::Dimension("flow magnitude field is empty or malformed".into()));
    }
    let (h, w, n) = (x.height, x.width, x.area());
    let mut planes = vec![0.0; SPATIAL_PLANES * n];
    let mut max_channel = vec![0; n];
    for q in 0..n {
        let mut sum = 0.0;
        let mut best = (0, f64::NEG_INFINITY);
        for c in 0..x.channels {
            let v = x.data[c * n + q];
            sum += v;
            if v > best.1 {
                best = (c, v);
            }
        }
        planes[q] = sum / x.channels as f64;
        planes[n + q] = best.1;
        max_channel[q] = best.0;
    }
    planes[2 * n..].copy_from_slice(&normalize_flow_magnitude(flow_mag, h, w).data);

    let mut a_s = vec![p.bias; n];
    for (ch, plane) in planes.chunks_exact(n).enumerate() {
        for y in 0..h {
            for xx in 0..w {
                let mut acc = 0.0;
                for ky in 0..KERNEL {
                    let sy = y as isize + ky as isize - PAD;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..KERNEL {
                        let sx = xx as isize + kx as isize - PAD;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        acc += p.kernel[(ch * KERNEL + ky) * KERNEL + kx] * plane[sy as usize * w + sx as usize];
                    }
                }
                a_s[y * w + xx] += acc;
            }
        }
    }
    a_s.iter_mut().for_each(|z| *z = sigmoid(*z));
    Ok((Plane::from_vec(w, h, a_s)?, SpatialCache { planes, max_channel }))
}

/// `X̃ = A_s ⊙ (A_c ⊙ X)`, broadcasting `A_c` over space and `A_s` over channels.
pub fn apply_attention(x: &FeatureMap, a_c: &[f64], a_s: &Plane) -> Result<FeatureMap> {
    if a_c.len() != x.channels || a_s.width != x.width || a_s.height != x.height {
        return Err(Error::Dimension(format!(
            "map {}x{}x{} with {} channel weights and a {}x{} spatial map",
            x.channels,
            x.height,
            x.width,
            a_c.len(),
            a_s.height,
            a_s.width
        )));
    }
    let n = x.area();
    let data = x
        .data
        .iter()
        .enumerate()
        .map(|(i, v)| a_s.data[i % n] * a_c[i / n] * v)
        .collect();
    Ok(FeatureMap { data, ..x.clone() })
}

fn scale_channels(x: &FeatureMap, a_c: &[f64]) -> FeatureMap {
    let n = x.area();
    let data = x.data.iter().enumerate().map(|(i, v)| a_c[i / n] * v).collect();
    FeatureMap { data, ..x.clone() }
}

/// Result of the full attention block plus what backward needs.
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub a_c: Vec<f64>,
    pub a_s: Plane,
    pub output: FeatureMap,
    refined: FeatureMap,
    channel: ChannelCache,
    spatial: SpatialCache,
}

pub fn forward(x_rgb: &FeatureMap, x_flow: &FeatureMap, flow_mag: &Plane, params: &AttentionParams) -> Result<AttentionOutput> {
    let (a_c, channel) = channel_forward(x_rgb, x_flow, &params.channel)?;
    let refined = scale_channels(x_rgb, &a_c);
    let (a_s, spatial) = spatial_forward(&refined, flow_mag, &params.spatial)?;
    let output = apply_attention(x_rgb, &a_c, &a_s)?;
    Ok(AttentionOutput {
        a_c,
        a_s,
        output,
        refined,
        channel,
        spatial,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads {
    pub channel: ChannelAttentionParams,
    pub spatial: SpatialAttentionParams,
    pub x_rgb: Vec<f64>,
    pub x_flow: Vec<f64>,
}

/// Gradients of a scalar loss given `dL/dX̃`.
pub fn backward(
    x_rgb: &FeatureMap,
    x_flow: &FeatureMap,
    params: &AttentionParams,
    out: &AttentionOutput,
    grad_out: &[f64],
) -> Result<AttentionGrads> {
    if grad_out.len() != x_rgb.data.len() {
        return Err(Error::Dimension(format!(
            "output gradient has {} values, map has {}",
            grad_out.len(),
            x_rgb.data.len()
        )));
    }
    let cp = &params.channel;
    let (c, n, h, w) = (x_rgb.channels, x_rgb.area(), x_rgb.height, x_rgb.width);
    let a_s = &out.a_s.data;

    // X̃ = A_s ⊙ X′
    let mut d_refined: Vec<f64> = grad_out.iter().enumerate().map(|(i, g)| g * a_s[i % n]).collect();
    let mut dz = vec![0.0; n];
    for (i, g) in grad_out.iter().enumerate() {
        dz[i % n] += g * out.refined.data[i];
    }
    dz.iter_mut().zip(a_s).for_each(|(d, a)| *d *= a * (1.0 - a));

    // 7×7 convolution.
    let mut spatial = SpatialAttentionParams::zeros();
    spatial.bias = dz.iter().sum();
    let mut d_planes = vec![0.0; SPATIAL_PLANES * n];
    for ch in 0..SPATIAL_PLANES {
        let plane = &out.spatial.planes[ch * n..(ch + 1) * n];
        for y in 0..h {
            for xx in 0..w {
                let g = dz[y * w + xx];
                for ky in 0..KERNEL {
                    let sy = y as isize + ky as isize - PAD;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..KERNEL {
                        let sx = xx as isize + kx as isize - PAD;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let k = (ch * KERNEL + ky) * KERNEL + kx;
                        let q = sy as usize * w + sx as usize;
                        spatial.kernel[k] += g * plane[q];
                        d_planes[ch * n + q] += g * params.spatial.kernel[k];
                    }
                }
            }
        }
    }
    for q in 0..n {
        for ch in 0..c {
            d_refined[ch * n + q] += d_planes[q] / c as f64;
        }
        d_refined[out.spatial.max_channel[q] * n + q] += d_planes[n + q];
    }

    // X′ = A_c ⊙ X
    let mut d_rgb = vec![0.0; c * n];
    let mut d_ac = vec![0.0; c];
    for i in 0..c * n {
        d_ac[i / n] += d_refined[i] * x_rgb.data[i];
        d_rgb[i] = d_refined[i] * out.a_c[i / n];
    }

    // Channel MLP.
    let mut channel = cp.clone();
    channel.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
    let d_o: Vec<f64> = d_ac.iter().zip(&out.a_c).map(|(d, a)| d * a * (1.0 - a)).collect();
    let mut d_hidden = vec![0.0; cp.hidden];
    for (o, &g) in d_o.iter().enumerate() {
        channel.b2[o] = g;
        for j in 0..cp.hidden {
            channel.w2[o * cp.hidden + j] = g * out.channel.hidden[j];
            d_hidden[j] += g * cp.w2[o * cp.hidden + j];
        }
    }
    let mut d_pooled = vec![0.0; 4 * c];
    for j in 0..cp.hidden {
        let g = if out.channel.hidden_pre[j] > 0.0 { d_hidden[j] } else { 0.0 };
        channel.b1[j] = g;
        for k in 0..4 * c {
            channel.w1[j * 4 * c + k] = g * out.channel.pooled[k];
            d_pooled[k] += g * cp.w1[j * 4 * c + k];
        }
    }

    // Pooling back to the RGB map and the aligned flow map.
    let mut d_aligned = vec![0.0; c * n];
    for (m, target) in [&mut d_rgb, &mut d_aligned].into_iter().enumerate() {
        for ch in 0..c {
            let avg = d_pooled[2 * m * c + ch] / n as f64;
            target[ch * n..(ch + 1) * n].iter_mut().for_each(|g| *g += avg);
            target[ch * n + out.channel.argmax[m * c + ch]] += d_pooled[(2 * m + 1) * c + ch];
        }
    }

    // 1×1 alignment.
    let cf = cp.flow_channels;
    let mut d_flow = vec![0.0; cf * n];
    for o in 0..c {
        let g = &d_aligned[o * n..(o + 1) * n];
        channel.align_b[o] = g.iter().sum();
        for i in 0..cf {
            channel.align_w[o * cf + i] = dot(g, x_flow.channel(i));
            let wi = cp.align_w[o * cf + i];
            d_flow[i * n..(i + 1) * n]
                .iter_mut()
                .zip(g)
                .for_each(|(d, g)| *d += wi * g);
        }
    }

    Ok(AttentionGrads {
        channel,
        spatial,
        x_rgb: d_rgb,
        x_flow: d_flow,
    })
}

/// Worst relative error per parameter group for loss `sum(X̃)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionGradCheck {
    pub align: f64,
    pub channel_mlp: f64,
    pub spatial: f64,
    pub x_rgb: f64,
    pub x_flow: f64,
}

impl AttentionGradCheck {
    pub fn max(&self) -> f64 {
        [self.align, self.channel_mlp, self.spatial, self.x_rgb, self.x_flow]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Compares [`backward`] against central differences with step `h`.
///
/// The difference quotient sums per-element output differences rather than
/// differencing two large sums, which keeps cancellation error well below
/// the gradient scale.
pub fn gradient_check(
    x_rgb: &FeatureMap,
    x_flow: &FeatureMap,
    flow_mag: &Plane,
    params: &AttentionParams,
    h: f64,
) -> Result<AttentionGradCheck> {
    let out = forward(x_rgb, x_flow, flow_mag, params)?;
    let ones = vec![1.0; x_rgb.data.len()];
    let g = backward(x_rgb, x_flow, params, &out, &ones)?;

    let central = |rgb: &FeatureMap, flow: &FeatureMap, p: &AttentionParams, apply: &dyn Fn(&mut FeatureMap, &mut FeatureMap, &mut AttentionParams, f64)| -> Result<f64> {
        let (mut r1, mut f1, mut p1) = (rgb.clone(), flow.clone(), p.clone());
        apply(&mut r1, &mut f1, &mut p1, h);
        let up = forward(&r1, &f1, flow_mag, &p1)?.output.data;
        let (mut r2, mut f2, mut p2) = (rgb.clone(), flow.clone(), p.clone());
        apply(&mut r2, &mut f2, &mut p2, -h);
        let down = forward(&r2, &f2, flow_mag, &p2)?.output.data;
        Ok(up.iter().zip(&down).map(|(u, d)| u - d).sum::<f64>() / (2.0 * h))
    };

    let mut report = AttentionGradCheck {
        align: 0.0,
        channel_mlp: 0.0,
        spatial: 0.0,
        x_rgb: 0.0,
        x_flow: 0.0,
    };
    let mut channel_grads = g.channel.clone();
    let analytic_channel = channel_grads.tensors_mut().map(|t| t.clone());
    for (t, analytic) in analytic_channel.iter().enumerate() {
        for (i, &a) in analytic.iter().enumerate() {
            let num = central(x_rgb, x_flow, params, &|_, _, p, d| p.channel.tensors_mut()[t][i] += d)?;
            let slot = if t < 2 { &mut report.align } else { &mut report.channel_mlp };
            *slot = slot.max(relative_error(a, num));
        }
    }
    for (k, &a) in g.spatial.kernel.iter().enumerate() {
        let num = central(x_rgb, x_flow, params, &|_, _, p, d| p.spatial.kernel[k] += d)?;
        report.spatial = report.spatial.max(relative_error(a, num));
    }
    let num = central(x_rgb, x_flow, params, &|_, _, p, d| p.spatial.bias += d)?;
    report.spatial = report.spatial.max(relative_error(g.spatial.bias, num));
    for (i, &a) in g.x_rgb.iter().enumerate() {
        let num = central(x_rgb, x_flow, params, &|r, _, _, d| r.data[i] += d)?;
        report.x_rgb = report.x_rgb.max(relative_error(a, num));
    }
    for (i, &a) in g.x_flow.iter().enumerate() {
        let num = central(x_rgb, x_flow, params, &|_, f, _, d| f.data[i] += d)?;
        report.x_flow = report.x_flow.max(relative_error(a, num));
    }
    Ok(report)
}

/// A smooth random magnitude field for demos and tests.
pub fn random_flow_magnitude<R: Rng + ?Sized>(height: usize, width: usize, rng: &mut R) -> Plane {
    let (cx, cy) = (rng.random_range(0.0..width as f64), rng.random_range(0.0..height as f64));
    let spread = rng.random_range(1.0..(width.max(height) as f64));
    let data = (0..height * width)
        .map(|i| {
            let (x, y) = ((i % width) as f64, (i / width) as f64);
            (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * spread * spread)).exp() + 0.1 * rng.random::<f64>()
        })
        .collect();
    Plane {
        width,
        height,
        data,
    }
}
