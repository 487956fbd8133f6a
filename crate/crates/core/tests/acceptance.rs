//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each, and exits non-zero if any fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use floemd_core::attention::{self, AttentionParams, FeatureMap};
use floemd_core::flow::{estimate_flow, FarnebackParams, FlowField};
use floemd_core::frame::{GrayFrame, Plane};
use floemd_core::nn::{self, ce_loss, relative_error, smoothed_targets, Activation, MlpModel};
use floemd_core::pipeline::{
    descriptor_rows_to_csv, evaluate, extract_traces, generate_dataset, imf_rows_to_csv, sweep_descriptors, sweep_imfs,
    train, DescriptorMask, FeatureSet, Manifest, PipelineConfig, Split,
};
use floemd_core::trace::{frame_descriptors, MotionTrace};
use floemd_core::{decompose, featurize, SiftConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EMD_RECON_TOL: f64 = 1e-9;
const EMD_RECON_BUDGET: Duration = Duration::from_secs(10);
const MODE_FAST_CORR: f64 = 0.95;
const MODE_SLOW_CORR: f64 = 0.9;
const MODE_PASS_RATE: f64 = 0.95;
const FLOW_TOL_PX: f64 = 0.25;
const FLOW_BUDGET: Duration = Duration::from_secs(5);
const DESCRIPTOR_REL_TOL: f64 = 1e-12;
const PARAM_GRAD_TOL: f64 = 1e-4;
const LOSS_GRAD_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;
const E2E_MIN_TEST_ACC: f64 = 0.90;
const E2E_BUDGET: Duration = Duration::from_secs(600);
const SMOOTHING_SUM_TOL: f64 = 1e-15;

const SEED: u64 = 7;
const SYNTH_CLIPS: usize = 300;
const SYNTH_SCENES: usize = 20;
const SYNTH_FRAME: usize = 64;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// Criterion 1 --------------------------------------------------------------

fn emd_reconstruction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = SiftConfig::default();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(8..=256);
        let kind = rng.random_range(0..3);
        let signal: Vec<f64> = (0..n)
            .map(|t| match kind {
                0 => rng.random_range(-1.0..1.0),
                1 => (t as f64 * 0.7).sin() + 0.3 * (t as f64 * 0.05).cos() + 0.1 * rng.random::<f64>(),
                _ => 1e3 * rng.random::<f64>() + t as f64,
            })
            .collect();
        let d = decompose(&signal, &cfg).map_err(|e| e.to_string())?;
        // Independent sum: IMFs and residual added in a fresh loop.
        for t in 0..n {
            let mut total = d.residual[t];
            for imf in &d.imfs {
                total += imf[t];
            }
            worst = worst.max((total - signal[t]).abs());
        }
    }
    let elapsed = start.elapsed();
    check(
        worst < EMD_RECON_TOL && elapsed < EMD_RECON_BUDGET,
        format!("max |error| {worst:.3e} (< {EMD_RECON_TOL:e}), {elapsed:.2?} (< {EMD_RECON_BUDGET:?})"),
    )
}

// Criterion 2 --------------------------------------------------------------

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn emd_mode_recovery() -> Outcome {
    const N: usize = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = SiftConfig::default();
    let trials = 100;
    let mut passed = 0;
    for _ in 0..trials {
        let slow_cycles = rng.random_range(2.5..3.5);
        let ratio = rng.random_range(4.0..6.0);
        let (p1, p2) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
        let tone = |cycles: f64, phase: f64| -> Vec<f64> {
            (0..N).map(|t| (2.0 * PI * cycles * t as f64 / N as f64 + phase).sin()).collect()
        };
        let slow = tone(slow_cycles, p1);
        let fast = tone(slow_cycles * ratio, p2);
        let signal: Vec<f64> = slow.iter().zip(&fast).map(|(a, b)| a + b).collect();
        let d = decompose(&signal, &cfg).map_err(|e| e.to_string())?;
        if d.extracted_count >= 2 && pearson(&d.imfs[0], &fast) > MODE_FAST_CORR && pearson(&d.imfs[1], &slow) > MODE_SLOW_CORR {
            passed += 1;
        }
    }
    let rate = passed as f64 / trials as f64;
    check(
        rate >= MODE_PASS_RATE,
        format!("{passed}/{trials} pairs recovered (slow 2.5-3.5 cycles, ratio 4-6), need >= {MODE_PASS_RATE}"),
    )
}

// Criterion 3 --------------------------------------------------------------

fn textured(size: usize, rng: &mut ChaCha8Rng) -> Plane {
    let noise = Plane::from_vec(size, size, (0..size * size).map(|_| rng.random::<f64>()).collect()).unwrap();
    let mut p = noise.gaussian_blur(1.5);
    let (lo, hi) = (p.data.iter().cloned().fold(f64::INFINITY, f64::min), p.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    p.data.iter_mut().for_each(|x| *x = (*x - lo) / (hi - lo));
    p
}

fn crop(p: &Plane, x0: usize, y0: usize, size: usize) -> GrayFrame {
    let data = (0..size * size).map(|i| p.at(x0 + i % size, y0 + i / size)).collect();
    GrayFrame::new(size, size, data).unwrap()
}

fn flow_known_shift() -> Outcome {
    const SIZE: usize = 64;
    const PAD: usize = 3;
    let params = FarnebackParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let start = Instant::now();
    for _ in 0..20 {
        let canvas = textured(SIZE + 2 * PAD, &mut rng);
        let (mut dx, mut dy) = (0i64, 0i64);
        while dx == 0 && dy == 0 {
            dx = rng.random_range(-3..=3);
            dy = rng.random_range(-3..=3);
        }
        // Content moves by (dx, dy): the second window starts (dx, dy) earlier.
        let prev = crop(&canvas, PAD, PAD, SIZE);
        let next = crop(&canvas, (PAD as i64 - dx) as usize, (PAD as i64 - dy) as usize, SIZE);
        let flow = estimate_flow(&prev, &next, &params).map_err(|e| e.to_string())?;
        let (mu, mv) = flow.interior_mean(params.window_size).ok_or("empty interior")?;
        worst = worst.max((mu - dx as f64).abs()).max((mv - dy as f64).abs());
    }
    let elapsed = start.elapsed();
    check(
        worst <= FLOW_TOL_PX && elapsed < FLOW_BUDGET,
        format!("20 shifts, worst axis error {worst:.4} px (<= {FLOW_TOL_PX}), {elapsed:.2?} (< {FLOW_BUDGET:?})"),
    )
}

// Criterion 4 --------------------------------------------------------------

fn naive_descriptors(u: &[f64], v: &[f64]) -> [f64; 4] {
    let n = u.len() as f64;
    let mags: Vec<f64> = u.iter().zip(v).map(|(a, b)| (a * a + b * b).sqrt()).collect();
    let dirs: Vec<f64> = u
        .iter()
        .zip(v)
        .map(|(&a, &b)| {
            if a == 0.0 && b == 0.0 {
                0.0
            } else {
                let t = b.atan2(a);
                if t == -PI {
                    PI
                } else {
                    t
                }
            }
        })
        .collect();
    let stats = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / n;
        (m, var.sqrt())
    };
    let (mm, sm) = stats(&mags);
    let (md, sd) = stats(&dirs);
    [mm, sm, md, sd]
}

fn descriptor_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
        let scale = 10f64.powi(rng.random_range(-3..3));
        let u: Vec<f64> = (0..w * h).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..w * h).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let field = FlowField::new(w, h, u.clone(), v.clone()).map_err(|e| e.to_string())?;
        let got = frame_descriptors(&field).map_err(|e| e.to_string())?;
        let want = naive_descriptors(&u, &v);
        for (g, e) in [got.mu_m, got.sigma_m, got.mu_d, got.sigma_d].iter().zip(want) {
            worst = worst.max((g - e).abs() / e.abs().max(f64::MIN_POSITIVE));
        }
    }
    check(worst < DESCRIPTOR_REL_TOL, format!("100 fields, worst relative error {worst:.3e} (< {DESCRIPTOR_REL_TOL:e})"))
}

// Criterion 5 --------------------------------------------------------------

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let relu3 = [Activation::Relu, Activation::Relu, Activation::Identity];
    let head = MlpModel::build(&[24, 20, 12, 3], &relu3, &[0.0; 3], &mut rng).map_err(|e| e.to_string())?;
    let x: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
    let head_err = nn::gradient_check(&head, &x, &smoothed_targets(2, 3, 0.1).unwrap(), FD_STEP).map_err(|e| e.to_string())?;

    let embed = MlpModel::build(&[32, 64, 128], &[Activation::Relu, Activation::Relu], &[0.0; 2], &mut rng).map_err(|e| e.to_string())?;
    let z: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
    let embed_err = nn::gradient_check(&embed, &z, &smoothed_targets(17, 128, 0.1).unwrap(), FD_STEP).map_err(|e| e.to_string())?;

    let params = AttentionParams::random(8, 8, 4, &mut rng);
    let x_rgb = FeatureMap::random(8, 8, 8, &mut rng);
    let x_flow = FeatureMap::random(8, 8, 8, &mut rng);
    let mag = attention::random_flow_magnitude(16, 16, &mut rng);
    let attn = attention::gradient_check(&x_rgb, &x_flow, &mag, &params, FD_STEP).map_err(|e| e.to_string())?;

    let mut loss_err = 0.0f64;
    for _ in 0..100 {
        let logits: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y = smoothed_targets(rng.random_range(0..3), 3, 0.1).unwrap();
        let (_, grad) = ce_loss(&logits, &y).map_err(|e| e.to_string())?;
        for i in 0..3 {
            let mut up = logits.clone();
            let mut down = logits.clone();
            up[i] += FD_STEP;
            down[i] -= FD_STEP;
            let num = (ce_loss(&up, &y).unwrap().0 - ce_loss(&down, &y).unwrap().0) / (2.0 * FD_STEP);
            loss_err = loss_err.max(relative_error(grad[i], num));
        }
    }
    let params_ok = head_err < PARAM_GRAD_TOL && embed_err < PARAM_GRAD_TOL && attn.max() < PARAM_GRAD_TOL;
    check(
        params_ok && loss_err < LOSS_GRAD_TOL,
        format!(
            "head {head_err:.2e}, embedding {embed_err:.2e}, attention {:.2e} (< {PARAM_GRAD_TOL:e}); loss {loss_err:.2e} (< {LOSS_GRAD_TOL:e})",
            attn.max()
        ),
    )
}

// Criterion 6 --------------------------------------------------------------

fn feature_shape() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let series: [Vec<f64>; 4] = std::array::from_fn(|_| (0..15).map(|_| rng.random::<f64>()).collect());
    let trace = MotionTrace::from_series(series).map_err(|e| e.to_string())?;
    let mut lengths = Vec::new();
    for n in 2..=6 {
        lengths.push(featurize(&trace, &SiftConfig::with_modes(n)).map_err(|e| e.to_string())?.len());
    }
    check(lengths == [16, 24, 32, 40, 48], format!("lengths for N=2..6: {lengths:?}"))
}

// Criteria 7-9 ---------------------------------------------------------------

fn synthetic_config() -> PipelineConfig {
    PipelineConfig {
        seed: SEED,
        frame_size: SYNTH_FRAME,
        ..PipelineConfig::default()
    }
}

/// Generates, writes, re-ingests and featurises the synthetic dataset.
fn synthetic_features(dir: &std::path::Path) -> Result<(Vec<floemd_core::pipeline::ClipTrace>, FeatureSet), String> {
    let cfg = synthetic_config();
    let plan = generate_dataset(SYNTH_CLIPS, SYNTH_SCENES, SYNTH_FRAME, cfg.frames_per_clip, SEED).map_err(|e| e.to_string())?;
    plan.write(dir).map_err(|e| e.to_string())?;
    let manifest = Manifest::load(&dir.join("manifest.csv")).map_err(|e| e.to_string())?;
    let traces = extract_traces(&manifest, cfg.frames_per_clip, cfg.frame_size, &cfg.flow).map_err(|e| e.to_string())?;
    let features = FeatureSet::from_traces(&traces, &cfg.sift, cfg.descriptors).map_err(|e| e.to_string())?;
    Ok((traces, features))
}

fn end_to_end_report(dir: &std::path::Path) -> Result<(floemd_core::MetricsReport, Vec<floemd_core::pipeline::ClipTrace>, Duration), String> {
    let start = Instant::now();
    let cfg = synthetic_config();
    let (traces, data) = synthetic_features(dir)?;
    let (model, _) = train(&data, &cfg.model, &cfg.train, cfg.seed).map_err(|e| e.to_string())?;
    let report = evaluate(&model, &data, Split::Test, cfg.train.label_smoothing).map_err(|e| e.to_string())?;
    Ok((report, traces, start.elapsed()))
}

fn main() {
    let mut failures = 0;
    let mut report = |id: &str, name: &str, outcome: Outcome| {
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id:>2} [{status}] {name}: {detail}");
    };

    report("1", "EMD reconstruction", emd_reconstruction());
    report("2", "EMD mode recovery", emd_mode_recovery());
    report("3", "optical-flow known shift", flow_known_shift());
    report("4", "descriptor oracle", descriptor_oracle());
    report("5", "gradient checks", gradient_checks());
    report("6", "feature-vector shape", feature_shape());

    let first_dir = tempfile::tempdir().expect("tempdir");
    let first = end_to_end_report(first_dir.path());
    let c7 = match &first {
        Ok((r, _, elapsed)) => {
            let c = &r.confusion;
            let extreme = c[0][2] + c[2][0];
            check(
                r.accuracy >= E2E_MIN_TEST_ACC && extreme == 0 && *elapsed < E2E_BUDGET,
                format!(
                    "test accuracy {:.4} (>= {E2E_MIN_TEST_ACC}), light<->heavy errors {extreme}, confusion {c:?}, {elapsed:.1?} (< {E2E_BUDGET:?})",
                    r.accuracy
                ),
            )
        }
        Err(e) => Err(e.clone()),
    };
    report("7", "synthetic end-to-end", c7);

    let c8 = match &first {
        Ok((_, traces, _)) => (|| {
            let cfg = synthetic_config();
            let imf_rows = sweep_imfs(traces, &[2, 3, 4, 5, 6], &cfg).map_err(|e| e.to_string())?;
            let desc_rows = sweep_descriptors(traces, &DescriptorMask::ablation_set(), &cfg).map_err(|e| e.to_string())?;
            let imf_csv = imf_rows_to_csv(&imf_rows);
            let desc_csv = descriptor_rows_to_csv(&desc_rows);
            let imf_ok = well_formed(&imf_csv, &["n_imfs", "feature_dim", "train_acc", "test_acc", "gap"], 5, &[1, 2, 3, 4])?;
            let desc_ok = well_formed(&desc_csv, &["config", "descriptors", "test_acc", "delta"], 7, &[2, 3])?;
            println!("{imf_csv}{desc_csv}");
            check(imf_ok && desc_ok, "imf sweep 5 rows, descriptor sweep 7 rows, all numeric fields finite".into())
        })(),
        Err(e) => Err(format!("skipped: {e}")),
    };
    report("8", "sweep runners", c8);

    let c9 = match &first {
        Ok((a, _, _)) => {
            let second_dir = tempfile::tempdir().expect("tempdir");
            match end_to_end_report(second_dir.path()) {
                Ok((b, _, _)) => check(a.to_json() == b.to_json(), format!("report of {} bytes identical on repeat", a.to_json().len())),
                Err(e) => Err(e),
            }
        }
        Err(e) => Err(format!("skipped: {e}")),
    };
    report("9", "determinism", c9);

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(1..=10);
        let label = rng.random_range(0..k);
        let eps = rng.random_range(0.0..1.0);
        let sum: f64 = smoothed_targets(label, k, eps).unwrap().iter().sum();
        worst = worst.max((sum - 1.0).abs());
    }
    report(
        "10",
        "label-smoothing identity",
        check(worst <= SMOOTHING_SUM_TOL, format!("1000 triples, max |sum - 1| {worst:.2e} (<= {SMOOTHING_SUM_TOL:e})")),
    );

    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn well_formed(csv_text: &str, header: &[&str], rows: usize, numeric: &[usize]) -> Result<bool, String> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let got: Vec<String> = rdr.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
    if got != header {
        return Ok(false);
    }
    let mut count = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        for &i in numeric {
            let v: f64 = rec.get(i).unwrap_or("").parse().map_err(|_| format!("non-numeric field in {rec:?}"))?;
            if !v.is_finite() {
                return Ok(false);
            }
        }
        count += 1;
    }
    Ok(count == rows)
}
