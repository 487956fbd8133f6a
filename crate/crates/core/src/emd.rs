//! Empirical Mode Decomposition of motion-trace series.
//!
//! Sifting repeatedly subtracts the mean of the upper and lower cubic
//! envelopes until the candidate satisfies the Cauchy stopping ratio and the
//! extrema/zero-crossing balance of an intrinsic mode function. IMFs are
//! peeled off the running residual, so `Σ IMF + residual` telescopes back to
//! the input.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::spline::NaturalSpline;
use crate::trace::{mean_std, Descriptor, MotionTrace};

const CAUCHY_EPS: f64 = 1e-20;

/// IMFs whose peak is below this fraction of the signal's peak are rounding
/// residue of a numerically monotone residual, not oscillations.
const NEGLIGIBLE_IMF: f64 = 1e-9;

/// How extrema are extended past the signal ends before spline fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Reflect the two extrema nearest each end about the end sample.
    #[default]
    Mirror,
    /// Fit the spline through the interior extrema only.
    None,
}

impl Boundary {
    pub fn name(self) -> &'static str {
        match self {
            Boundary::Mirror => "mirror",
            Boundary::None => "none",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "mirror" => Some(Boundary::Mirror),
            "none" => Some(Boundary::None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiftConfig {
    pub n_modes: usize,
    pub sd_threshold: f64,
    pub max_sift_iters: usize,
    pub boundary: Boundary,
}

impl Default for SiftConfig {
    fn default() -> Self {
        Self {
            n_modes: 4,
            sd_threshold: 0.2,
            max_sift_iters: 50,
            boundary: Boundary::Mirror,
        }
    }
}

impl SiftConfig {
    pub fn with_modes(n_modes: usize) -> Self {
        Self {
            n_modes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_modes < 1 {
            return Err(Error::InvalidArgument("n_modes must be >= 1".into()));
        }
        if !(self.sd_threshold > 0.0) {
            return Err(Error::InvalidArgument("sd_threshold must be > 0".into()));
        }
        if self.max_sift_iters < 1 {
            return Err(Error::InvalidArgument("max_sift_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Local extrema as `(index, value)`, in increasing index order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extrema {
    pub maxima: Vec<(usize, f64)>,
    pub minima: Vec<(usize, f64)>,
}

impl Extrema {
    pub fn count(&self) -> usize {
        self.maxima.len() + self.minima.len()
    }
}

/// Strict local maxima and minima. A flat run bounded on both sides by
/// lower (higher) samples yields one maximum (minimum) at the floor of its
/// midpoint; runs touching either end are ignored.
pub fn find_extrema(signal: &[f64]) -> Result<Extrema> {
    let n = signal.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "extrema need at least 3 samples, got {n}"
        )));
    }
    let mut out = Extrema::default();
    let mut i = 1;
    while i < n - 1 {
        if signal[i] == signal[i - 1] {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < n && signal[j + 1] == signal[i] {
            j += 1;
        }
        if j == n - 1 {
            break;
        }
        let rising = signal[i] > signal[i - 1];
        let falling = signal[j + 1] < signal[i];
        let mid = (i + j) / 2;
        if rising && falling {
            out.maxima.push((mid, signal[i]));
        } else if !rising && !falling {
            out.minima.push((mid, signal[i]));
        }
        i = j + 1;
    }
    Ok(out)
}

fn zero_crossings(signal: &[f64]) -> usize {
    signal
        .windows(2)
        .filter(|w| (w[0] < 0.0) != (w[1] < 0.0))
        .count()
}

/// Whether extrema and zero-crossing counts differ by at most one.
pub fn is_imf_balanced(signal: &[f64]) -> bool {
    let extrema = match find_extrema(signal) {
        Ok(e) => e.count(),
        Err(_) => return false,
    };
    extrema.abs_diff(zero_crossings(signal)) <= 1
}

/// Natural cubic spline through `points` (after boundary extension),
/// evaluated at `0..length`.
pub fn cubic_envelope(points: &[(usize, f64)], length: usize, boundary: Boundary) -> Result<Vec<f64>> {
    let mut knots: Vec<(f64, f64)> = Vec::with_capacity(points.len() + 4);
    if boundary == Boundary::Mirror && length > 0 {
        let last = (length - 1) as f64;
        knots.extend(
            points
                .iter()
                .filter(|(i, _)| *i > 0)
                .take(2)
                .map(|&(i, v)| (-(i as f64), v))
                .collect::<Vec<_>>()
                .into_iter()
                .rev(),
        );
        knots.extend(points.iter().map(|&(i, v)| (i as f64, v)));
        let right: Vec<(f64, f64)> = points
            .iter()
            .rev()
            .filter(|(i, _)| (*i as f64) < last)
            .take(2)
            .map(|&(i, v)| (2.0 * last - i as f64, v))
            .collect();
        knots.extend(right);
    } else {
        knots.extend(points.iter().map(|&(i, v)| (i as f64, v)));
    }
    spline_through(knots, length)
}

fn spline_through(mut knots: Vec<(f64, f64)>, length: usize) -> Result<Vec<f64>> {
    knots.sort_by(|a, b| a.0.total_cmp(&b.0));
    knots.dedup_by(|a, b| a.0 == b.0);
    if knots.len() < 2 {
        return Err(Error::InsufficientExtrema {
            found: knots.len(),
            needed: 2,
        });
    }
    let (xs, ys) = knots.into_iter().unzip();
    let spline = NaturalSpline::new(xs, ys)?;
    Ok((0..length).map(|t| spline.eval(t as f64)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiftOutcome {
    pub imf: Vec<f64>,
    pub converged: bool,
    /// Sifting passes performed; 0 when the input had too few extrema.
    pub iterations: usize,
}

impl SiftOutcome {
    pub fn is_empty(&self) -> bool {
        self.iterations == 0
    }
}

fn mean_envelope(h: &[f64], boundary: Boundary) -> Option<Vec<f64>> {
    let ext = find_extrema(h).ok()?;
    if ext.maxima.is_empty() || ext.minima.is_empty() {
        return None;
    }
    let upper = cubic_envelope(&ext.maxima, h.len(), boundary).ok()?;
    let lower = cubic_envelope(&ext.minima, h.len(), boundary).ok()?;
    Some(upper.iter().zip(&lower).map(|(u, l)| 0.5 * (u + l)).collect())
}

/// Extracts one IMF candidate from `signal`.
pub fn sift_one_imf(signal: &[f64], cfg: &SiftConfig) -> Result<SiftOutcome> {
    if signal.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "sifting needs at least 4 samples, got {}",
            signal.len()
        )));
    }
    let mut h = signal.to_vec();
    for iter in 1..=cfg.max_sift_iters {
        let Some(mean) = mean_envelope(&h, cfg.boundary) else {
            if iter == 1 {
                return Ok(SiftOutcome {
                    imf: vec![0.0; signal.len()],
                    converged: false,
                    iterations: 0,
                });
            }
            return Ok(SiftOutcome {
                imf: h,
                converged: false,
                iterations: iter - 1,
            });
        };
        let next: Vec<f64> = h.iter().zip(&mean).map(|(a, m)| a - m).collect();
        let num: f64 = h.iter().zip(&next).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = h.iter().map(|a| a * a + CAUCHY_EPS).sum();
        h = next;
        if num / den < cfg.sd_threshold && is_imf_balanced(&h) {
            return Ok(SiftOutcome {
                imf: h,
                converged: true,
                iterations: iter,
            });
        }
    }
    Ok(SiftOutcome {
        imf: h,
        converged: false,
        iterations: cfg.max_sift_iters,
    })
}

/// Fixed-width decomposition: `n_modes` IMF slots plus the residual.
#[derive(Debug, Clone, PartialEq)]
pub struct ImfDecomposition {
    pub imfs: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
    /// IMFs genuinely extracted; slots at or past this index are zero.
    pub extracted_count: usize,
}

impl ImfDecomposition {
    pub fn n_modes(&self) -> usize {
        self.imfs.len()
    }

    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = self.residual.clone();
        for imf in &self.imfs {
            out.iter_mut().zip(imf).for_each(|(o, x)| *o += x);
        }
        out
    }

    /// Debug dump with columns `t,imf1..imfN,residual`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for j in 1..=self.imfs.len() {
            let _ = write!(out, ",imf{j}");
        }
        out.push_str(",residual\n");
        for t in 0..self.residual.len() {
            let _ = write!(out, "{t}");
            for imf in &self.imfs {
                let _ = write!(out, ",{:.16e}", imf[t]);
            }
            let _ = writeln!(out, ",{:.16e}", self.residual[t]);
        }
        out
    }
}

pub fn decompose(signal: &[f64], cfg: &SiftConfig) -> Result<ImfDecomposition> {
    cfg.validate()?;
    if signal.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "decomposition needs at least 4 samples, got {}",
            signal.len()
        )));
    }
    if let Some(i) = signal.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("signal sample {i}")));
    }
    let peak = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut residual = signal.to_vec();
    let mut imfs = Vec::with_capacity(cfg.n_modes);
    while imfs.len() < cfg.n_modes {
        let outcome = sift_one_imf(&residual, cfg)?;
        let imf_peak = outcome.imf.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if outcome.is_empty() || imf_peak <= NEGLIGIBLE_IMF * peak {
            break;
        }
        residual
            .iter_mut()
            .zip(&outcome.imf)
            .for_each(|(r, x)| *r -= x);
        imfs.push(outcome.imf);
    }
    let extracted_count = imfs.len();
    imfs.resize(cfg.n_modes, vec![0.0; signal.len()]);
    Ok(ImfDecomposition {
        imfs,
        residual,
        extracted_count,
    })
}

/// Which IMF statistic a feature slot holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImfStat {
    Mean,
    Std,
}

/// Flattened IMF statistics, ordered descriptor-major, IMF-middle,
/// statistic-minor (`[mean, std]`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmdFeatureVector {
    pub n_modes: usize,
    pub values: Vec<f64>,
}

impl EmdFeatureVector {
    pub fn len_for(n_modes: usize) -> usize {
        Descriptor::ALL.len() * n_modes * 2
    }

    pub fn index(n_modes: usize, d: Descriptor, imf: usize, stat: ImfStat) -> usize {
        d.index() * n_modes * 2 + imf * 2 + stat as usize
    }

    /// Slots belonging to descriptor `d`.
    pub fn block(n_modes: usize, d: Descriptor) -> std::ops::Range<usize> {
        let start = d.index() * n_modes * 2;
        start..start + n_modes * 2
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Temporal mean and population std of every IMF of every trace series.
pub fn featurize(trace: &MotionTrace, cfg: &SiftConfig) -> Result<EmdFeatureVector> {
    let mut values = Vec::with_capacity(EmdFeatureVector::len_for(cfg.n_modes));
    for d in Descriptor::ALL {
        let decomposition = decompose(trace.series(d), cfg)?;
        for imf in &decomposition.imfs {
            let (mean, std) = mean_std(imf.iter().copied());
            values.push(mean);
            values.push(std);
        }
    }
    Ok(EmdFeatureVector {
        n_modes: cfg.n_modes,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn tone(n: usize, cycles: f64, phase: f64) -> Vec<f64> {
        (0..n)
            .map(|t| (2.0 * PI * cycles * t as f64 / n as f64 + phase).sin())
            .collect()
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let (ma, sa) = mean_std(a.iter().copied());
        let (mb, sb) = mean_std(b.iter().copied());
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64;
        cov / (sa * sb)
    }

    #[test]
    fn extrema_examples() {
        let e = find_extrema(&[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(e.maxima, vec![(1, 1.0)]);
        assert!(e.minima.is_empty());

        let e = find_extrema(&[0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(e.maxima, vec![(1, 1.0)]);

        let e = find_extrema(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(e.count(), 0);

        let e = find_extrema(&[3.0, 1.0, 1.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(e.minima, vec![(2, 1.0)]);
        assert!(e.maxima.is_empty());

        assert!(find_extrema(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn envelope_examples() {
        let env = cubic_envelope(&[(0, 1.0), (9, 1.0)], 10, Boundary::Mirror).unwrap();
        assert!(env.iter().all(|v| (v - 1.0).abs() < 1e-12), "{env:?}");

        let env = cubic_envelope(&[(0, 0.0), (5, 5.0), (10, 0.0)], 11, Boundary::Mirror).unwrap();
        assert_eq!(env[5], 5.0);

        assert!(matches!(
            cubic_envelope(&[(3, 1.0)], 10, Boundary::None),
            Err(Error::InsufficientExtrema { .. })
        ));
        assert!(cubic_envelope(&[], 10, Boundary::Mirror).is_err());
    }

    #[test]
    fn maxima_envelope_bounds_sinusoid() {
        let s = tone(64, 3.0, 0.3);
        let ext = find_extrema(&s).unwrap();
        let env = cubic_envelope(&ext.maxima, s.len(), Boundary::Mirror).unwrap();
        let (first, last) = (ext.maxima[0].0, ext.maxima.last().unwrap().0);
        for t in first..=last {
            assert!(env[t] >= s[t] - 1e-9, "t={t}: {} < {}", env[t], s[t]);
        }
    }

    #[test]
    fn ramp_has_nothing_to_sift() {
        let ramp: Vec<f64> = (0..20).map(|t| t as f64 * 0.5).collect();
        let out = sift_one_imf(&ramp, &SiftConfig::default()).unwrap();
        assert!(!out.converged);
        assert!(out.is_empty());
        assert!(out.imf.iter().all(|&x| x == 0.0));

        let hump: Vec<f64> = (0..20).map(|t| -((t as f64 - 9.5) / 5.0).powi(2)).collect();
        let out = sift_one_imf(&hump, &SiftConfig::default()).unwrap();
        assert!(out.is_empty() && !out.converged);
    }

    #[test]
    fn sifts_pure_sinusoid() {
        let s = tone(64, 3.0, 0.0);
        let out = sift_one_imf(&s, &SiftConfig::default()).unwrap();
        assert!(corr(&out.imf, &s) > 0.99);
        let residual_max = s.iter().zip(&out.imf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(residual_max < 0.05, "residual {residual_max}");
    }

    #[test]
    fn first_imf_is_fast_tone() {
        let fast = tone(64, 8.0, 0.0);
        let slow = tone(64, 1.0, 0.0);
        let s: Vec<f64> = fast.iter().zip(&slow).map(|(a, b)| a + b).collect();
        let out = sift_one_imf(&s, &SiftConfig::default()).unwrap();
        assert!(corr(&out.imf, &fast) > 0.95);
    }

    #[test]
    fn decomposes_two_tones() {
        let fast = tone(64, 8.0, 0.0);
        let slow = tone(64, 1.0, 0.0);
        let s: Vec<f64> = fast.iter().zip(&slow).map(|(a, b)| a + b).collect();
        let d = decompose(&s, &SiftConfig::default()).unwrap();
        assert!(d.extracted_count >= 2, "extracted {}", d.extracted_count);
        assert!(corr(&d.imfs[0], &fast) > 0.95);
        assert!(corr(&d.imfs[1], &slow) > 0.9);
    }

    #[test]
    fn constant_signal_has_no_modes() {
        let s = vec![2.5; 15];
        let d = decompose(&s, &SiftConfig::default()).unwrap();
        assert_eq!(d.extracted_count, 0);
        assert_eq!(d.residual, s);
        assert!(d.imfs.iter().flatten().all(|&x| x == 0.0));
        assert_eq!(d.imfs.len(), 4);
    }

    #[test]
    fn decompose_rejects_bad_input() {
        let cfg = SiftConfig::default();
        assert!(decompose(&[1.0, 2.0, 3.0], &cfg).is_err());
        assert!(matches!(
            decompose(&[1.0, f64::NAN, 3.0, 4.0], &cfg),
            Err(Error::NonFinite(_))
        ));
        assert!(decompose(&[1.0; 8], &SiftConfig { n_modes: 0, ..cfg }).is_err());
    }

    #[test]
    fn feature_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let series: [Vec<f64>; 4] =
            std::array::from_fn(|_| (0..15).map(|_| rng.random::<f64>()).collect());
        let trace = MotionTrace::from_series(series).unwrap();
        for (n, len) in [(2, 16), (3, 24), (4, 32), (5, 40), (6, 48)] {
            let f = featurize(&trace, &SiftConfig::with_modes(n)).unwrap();
            assert_eq!(f.len(), len);
            assert_eq!(EmdFeatureVector::len_for(n), len);
            assert!(f.values.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn constant_traces_featurize_to_zero() {
        let trace = MotionTrace::from_series(std::array::from_fn(|q| vec![q as f64; 15])).unwrap();
        let f = featurize(&trace, &SiftConfig::default()).unwrap();
        assert_eq!(f.values, vec![0.0; 32]);
    }

    #[test]
    fn feature_layout() {
        assert_eq!(EmdFeatureVector::index(4, Descriptor::MuM, 0, ImfStat::Mean), 0);
        assert_eq!(EmdFeatureVector::index(4, Descriptor::MuM, 0, ImfStat::Std), 1);
        assert_eq!(EmdFeatureVector::index(4, Descriptor::SigmaM, 1, ImfStat::Std), 11);
        assert_eq!(EmdFeatureVector::index(4, Descriptor::SigmaD, 3, ImfStat::Std), 31);
        assert_eq!(EmdFeatureVector::block(4, Descriptor::MuD), 16..24);
    }

    #[test]
    fn imf_csv_columns() {
        let d = decompose(&tone(16, 3.0, 0.1), &SiftConfig::default()).unwrap();
        let csv = d.to_csv();
        assert!(csv.starts_with("t,imf1,imf2,imf3,imf4,residual\n"));
        assert_eq!(csv.lines().count(), 17);
    }

    fn zcr(x: &[f64]) -> f64 {
        zero_crossings(x) as f64 / (x.len() - 1) as f64
    }

    #[test]
    fn modes_are_ordered_fast_to_slow() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let n = rng.random_range(32..200);
            let s: Vec<f64> = (0..n)
                .map(|t| {
                    let t = t as f64;
                    (0.9 * t).sin() + 0.8 * (0.21 * t + 1.0).sin() + 0.5 * (0.05 * t).cos()
                        + 0.1 * rng.random::<f64>()
                })
                .collect();
            let d = decompose(&s, &SiftConfig::default()).unwrap();
            for j in 1..d.extracted_count {
                assert!(
                    zcr(&d.imfs[j - 1]) >= zcr(&d.imfs[j]),
                    "mode {j} faster than mode {}",
                    j - 1
                );
            }
        }
    }

    proptest! {
        #[test]
        fn reconstruction_is_exact(values in prop::collection::vec(-100.0f64..100.0, 4..128)) {
            let d = decompose(&values, &SiftConfig::default()).unwrap();
            for (a, b) in d.reconstruct().iter().zip(&values) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            for imf in &d.imfs[d.extracted_count..] {
                prop_assert!(imf.iter().all(|&x| x == 0.0));
            }
        }

        #[test]
        fn converged_imfs_are_balanced(values in prop::collection::vec(-1.0f64..1.0, 8..64)) {
            let s = values;
            let out = sift_one_imf(&s, &SiftConfig::default()).unwrap();
            if out.converged {
                prop_assert!(is_imf_balanced(&out.imf));
            }
        }

        #[test]
        fn decomposition_is_amplitude_linear(
            values in prop::collection::vec(-5.0f64..5.0, 8..64),
            k in 0.01f64..100.0,
        ) {
            let cfg = SiftConfig::default();
            let a = decompose(&values, &cfg).unwrap();
            let scaled: Vec<f64> = values.iter().map(|v| v * k).collect();
            let b = decompose(&scaled, &cfg).unwrap();
            prop_assert_eq!(a.extracted_count, b.extracted_count);
            let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())) * k;
            for (ia, ib) in a.imfs.iter().zip(&b.imfs) {
                for (x, y) in ia.iter().zip(ib) {
                    prop_assert!((x * k - y).abs() <= 1e-6 * scale.max(1e-300));
                }
            }
        }
    }
}
