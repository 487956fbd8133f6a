use floemd_core::pipeline::*;
use floemd_core::trace::Descriptor;
use floemd_core::{EmdFeatureVector, FarnebackParams, SiftConfig};

fn mu_m_stats(regime: CongestionClass, seed: u64) -> (f64, f64) {
    let cfg = SyntheticSceneConfig::preset(regime, 64, 16, seed, seed + 1000);
    let (frames, label) = generate_synthetic_clip(&cfg).unwrap();
    assert_eq!(label, regime);
    let trace = trace_for_frames(&frames, &FarnebackParams::default()).unwrap();
    let s = trace.series(Descriptor::MuM);
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    let std = (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / s.len() as f64).sqrt();
    (mean, std)
}

#[test]
fn heavy_traffic_oscillates() {
    for seed in 0..3 {
        let (mean, std) = mu_m_stats(CongestionClass::Heavy, seed);
        assert!(std > 0.3 * mean, "seed {seed}: std {std} mean {mean}");
    }
}

#[test]
fn light_traffic_moves_faster_than_heavy() {
    let light: f64 = (0..3).map(|s| mu_m_stats(CongestionClass::Light, s).0).sum::<f64>() / 3.0;
    let heavy: f64 = (0..3).map(|s| mu_m_stats(CongestionClass::Heavy, s).0).sum::<f64>() / 3.0;
    assert!(light >= 3.0 * heavy, "light {light} heavy {heavy}");
}

#[test]
fn magnitude_mask_zeroes_direction_blocks() {
    let cfg = SyntheticSceneConfig::preset(CongestionClass::Medium, 48, 8, 3, 4);
    let (frames, _) = generate_synthetic_clip(&cfg).unwrap();
    let flow = FarnebackParams::default();
    let sift = SiftConfig::default();
    let full = extract_features(&frames, &flow, &sift, DescriptorMask::ALL).unwrap();
    assert_eq!(full.len(), 32);
    let mag = extract_features(&frames, &flow, &sift, DescriptorMask::MAGNITUDE).unwrap();
    for d in Descriptor::ALL {
        let block = EmdFeatureVector::block(4, d);
        if d.is_magnitude() {
            assert_eq!(mag.values[block.clone()], full.values[block]);
        } else {
            assert!(mag.values[block].iter().all(|&v| v == 0.0));
        }
    }
}

fn tiny_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.model.embed_hidden = 8;
    cfg.model.embed_dim = 8;
    cfg.model.head_hidden = vec![8, 8];
    cfg
}

fn tiny_traces(n: usize, seed: u64) -> Vec<ClipTrace> {
    generate_dataset(n, n, 32, 6, seed)
        .unwrap()
        .traces(&FarnebackParams::default())
        .unwrap()
}

#[test]
fn one_epoch_smoke() {
    let mut traces = tiny_traces(3, 1);
    traces.iter_mut().for_each(|t| t.split = Split::Train);
    traces.truncate(2);
    let mut cfg = tiny_config();
    cfg.train.epochs = 1;
    let data = FeatureSet::from_traces(&traces, &cfg.sift, DescriptorMask::ALL).unwrap();
    let untrained = Classifier::new(&cfg.model, 4, DescriptorMask::ALL, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5)).unwrap();
    let (model, log) = train(&data, &cfg.model, &cfg.train, 5).unwrap();
    assert!(log.final_loss().unwrap().is_finite());
    assert_ne!(model.embed, untrained.embed);
}

#[test]
fn training_is_deterministic() {
    let traces = tiny_traces(12, 2);
    let mut cfg = tiny_config();
    cfg.train.epochs = 5;
    let data = FeatureSet::from_traces(&traces, &cfg.sift, DescriptorMask::ALL).unwrap();
    let (a, log_a) = train(&data, &cfg.model, &cfg.train, 9).unwrap();
    let (b, log_b) = train(&data, &cfg.model, &cfg.train, 9).unwrap();
    assert_eq!(log_a, log_b);
    assert_eq!(a.to_text(), b.to_text());
    let report_a = evaluate(&a, &data, Split::Train, 0.1).unwrap();
    let report_b = evaluate(&b, &data, Split::Train, 0.1).unwrap();
    assert_eq!(report_a.to_json(), report_b.to_json());
}

#[test]
fn training_needs_two_classes() {
    let mut traces = tiny_traces(3, 3);
    traces.iter_mut().for_each(|t| t.split = Split::Train);
    traces.retain(|t| t.label == CongestionClass::Light);
    let cfg = tiny_config();
    let data = FeatureSet::from_traces(&traces, &cfg.sift, DescriptorMask::ALL).unwrap();
    assert!(train(&data, &cfg.model, &cfg.train, 0).is_err());
}

#[test]
fn dataset_round_trips_through_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = generate_dataset(6, 6, 32, 5, 4).unwrap();
    let written = ds.write(tmp.path()).unwrap();
    let loaded = Manifest::load(&tmp.path().join("manifest.csv")).unwrap();
    assert_eq!(loaded, written);
    let flow = FarnebackParams::default();
    let from_disk = extract_traces(&loaded, 5, 32, &flow).unwrap();
    let in_memory = ds.traces(&flow).unwrap();
    for (a, b) in from_disk.iter().zip(&in_memory) {
        assert_eq!(a.clip_id, b.clip_id);
        // PGM stores 8-bit pixels, so traces agree only approximately.
        for d in Descriptor::ALL {
            for (x, y) in a.trace.series(d).iter().zip(b.trace.series(d)) {
                assert!((x - y).abs() < 0.05 * (1.0 + y.abs()), "{d:?}: {x} vs {y}");
            }
        }
    }
}
