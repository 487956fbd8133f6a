//! Verb handlers.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use floemd_core::attention::{self, AttentionParams, FeatureMap};
use floemd_core::frame::write_pgm;
use floemd_core::flow::estimate_flow_sequence;
use floemd_core::pipeline::{
    descriptor_rows_to_csv, evaluate, extract_traces, generate_dataset, imf_rows_to_csv, load_frames, sweep_descriptors,
    sweep_imfs, train, Classifier, ClipTrace, DescriptorMask, FeatureSet, Manifest, PipelineConfig, Split,
};
use floemd_core::trace::Descriptor;
use floemd_core::{build_trace, decompose, MotionTrace, SiftConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::{Cli, Command, DatasetArgs, FrameSource};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] floemd_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Defaults, then the config file, then `--seed` and `--set`.
fn base_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    for item in &cli.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {item:?}")))?;
        cfg.set(key.trim(), value.trim())
            .map_err(|e| CliError::Usage(format!("--set {item}: {e}")))?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn finish(cfg: PipelineConfig) -> Result<PipelineConfig> {
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn apply_dataset_flags(cfg: &mut PipelineConfig, args: &DatasetArgs) -> Result<()> {
    if let Some(n) = args.n_imfs {
        cfg.sift.n_modes = n;
    }
    if let Some(d) = &args.descriptors {
        cfg.descriptors = d.parse().map_err(|e: floemd_core::Error| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn apply_source_flags(cfg: &mut PipelineConfig, src: &FrameSource) {
    if let Some(t) = src.frames_per_clip {
        cfg.frames_per_clip = t;
    }
    if let Some(s) = src.frame_size {
        cfg.frame_size = s;
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| CliError::Io { path: parent.into(), source })?;
    }
    std::fs::write(path, bytes).map_err(|source| CliError::Io { path: path.into(), source })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_file(path, text.as_bytes()),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io { path: "<stdout>".into(), source }),
    }
}

fn load_traces(cfg: &PipelineConfig, manifest: &Path) -> Result<Vec<ClipTrace>> {
    let manifest = Manifest::load(manifest)?;
    log::info!("extracting traces for {} clips", manifest.records.len());
    Ok(extract_traces(&manifest, cfg.frames_per_clip, cfg.frame_size, &cfg.flow)?)
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = base_config(cli)?;
    match &cli.command {
        Command::Synth(a) => {
            if let Some(t) = a.frames {
                cfg.frames_per_clip = t;
            }
            cfg.frame_size = a.frame_size;
            let cfg = finish(cfg)?;
            let data = generate_dataset(a.clips, a.scenes, a.frame_size, cfg.frames_per_clip, cfg.seed)?;
            let manifest = data.write(&a.out)?;
            write_file(&a.out.join("pipeline.conf"), cfg.to_text().as_bytes())?;
            eprintln!("wrote {} clips to {}", manifest.records.len(), a.out.display());
        }
        Command::Flow(a) => {
            apply_source_flags(&mut cfg, &a.source);
            let cfg = finish(cfg)?;
            let frames = load_frames(&a.source.frames, cfg.frames_per_clip, cfg.frame_size)?;
            let flows = estimate_flow_sequence(&frames, &cfg.flow)?;
            std::fs::create_dir_all(&a.out).map_err(|source| CliError::Io { path: a.out.clone(), source })?;
            for (t, f) in flows.iter().enumerate() {
                write_file(&a.out.join(format!("flow_{t:03}.flo")), &f.to_bytes())?;
            }
            eprintln!("wrote {} flow fields to {}", flows.len(), a.out.display());
        }
        Command::Trace(a) => {
            apply_source_flags(&mut cfg, &a.source);
            let cfg = finish(cfg)?;
            let frames = load_frames(&a.source.frames, cfg.frames_per_clip, cfg.frame_size)?;
            let trace = build_trace(&estimate_flow_sequence(&frames, &cfg.flow)?)?;
            emit(a.out.as_deref(), &trace.to_csv())?;
        }
        Command::Emd(a) => {
            if let Some(n) = a.n_imfs {
                cfg.sift.n_modes = n;
            }
            let cfg = finish(cfg)?;
            let series = Descriptor::from_name(&a.series)
                .ok_or_else(|| CliError::Usage(format!("unknown series {:?}", a.series)))?;
            let trace = MotionTrace::load_csv(&a.trace)?;
            let d = decompose(trace.series(series), &cfg.sift)?;
            log::info!("{} of {} IMFs extracted", d.extracted_count, d.n_modes());
            emit(a.out.as_deref(), &d.to_csv())?;
        }
        Command::Featurize(a) => {
            apply_dataset_flags(&mut cfg, &a.data)?;
            let cfg = finish(cfg)?;
            let traces = load_traces(&cfg, &a.data.manifest)?;
            let set = FeatureSet::from_traces(&traces, &cfg.sift, cfg.descriptors)?;
            emit(a.out.as_deref(), &set.to_csv())?;
        }
        Command::Train(a) => {
            apply_dataset_flags(&mut cfg, &a.data)?;
            if let Some(e) = a.epochs {
                cfg.train.epochs = e;
            }
            let cfg = finish(cfg)?;
            let traces = load_traces(&cfg, &a.data.manifest)?;
            let set = FeatureSet::from_traces(&traces, &cfg.sift, cfg.descriptors)?;
            let (model, log) = train(&set, &cfg.model, &cfg.train, cfg.seed)?;
            write_file(&a.out, model.to_text().as_bytes())?;
            if let Some(path) = &a.log {
                write_file(path, log.to_csv().as_bytes())?;
            }
            if let Some(last) = log.epochs.last() {
                eprintln!(
                    "trained {} epochs: loss {:.4}, train acc {:.4}, val acc {}",
                    log.epochs.len(),
                    last.loss,
                    last.train_acc,
                    last.val_acc.map_or("n/a".to_string(), |v| format!("{v:.4}"))
                );
            }
        }
        Command::Eval(a) => {
            apply_dataset_flags(&mut cfg, &a.data)?;
            let cfg = finish(cfg)?;
            let split: Split = a.split.parse().map_err(|e: floemd_core::Error| CliError::Usage(e.to_string()))?;
            let model = Classifier::load(&a.model, &cfg.model)?;
            let traces = load_traces(&cfg, &a.data.manifest)?;
            let set = FeatureSet::from_traces(&traces, &SiftConfig { n_modes: model.n_modes, ..cfg.sift }, model.mask)?;
            let report = evaluate(&model, &set, split, cfg.train.label_smoothing)?;
            emit(a.out.as_deref(), &report.to_json())?;
        }
        Command::SweepImfs(a) => {
            apply_dataset_flags(&mut cfg, &a.data)?;
            let cfg = finish(cfg)?;
            let traces = load_traces(&cfg, &a.data.manifest)?;
            let rows = sweep_imfs(&traces, &a.n_list, &cfg)?;
            emit(a.out.as_deref(), &imf_rows_to_csv(&rows))?;
        }
        Command::SweepDesc(a) => {
            apply_dataset_flags(&mut cfg, &a.data)?;
            let cfg = finish(cfg)?;
            let traces = load_traces(&cfg, &a.data.manifest)?;
            let rows = sweep_descriptors(&traces, &DescriptorMask::ablation_set(), &cfg)?;
            emit(a.out.as_deref(), &descriptor_rows_to_csv(&rows))?;
        }
        Command::AttnDemo(a) => {
            let cfg = finish(cfg)?;
            if a.channels == 0 || a.flow_channels == 0 || a.size == 0 || a.reduction == 0 {
                return Err(CliError::Usage("attention dimensions must be positive".into()));
            }
            if !(a.fd_step > 0.0 && a.fd_step.is_finite()) {
                return Err(CliError::Usage(format!("--fd-step must be positive, got {}", a.fd_step)));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let params = AttentionParams::random(a.channels, a.flow_channels, a.reduction, &mut rng);
            let x_rgb = FeatureMap::random(a.channels, a.size, a.size, &mut rng);
            let x_flow = FeatureMap::random(a.flow_channels, a.size, a.size, &mut rng);
            let mag = attention::random_flow_magnitude(2 * a.size, 2 * a.size, &mut rng);
            let out = attention::forward(&x_rgb, &x_flow, &mag, &params)?;
            write_pgm(&a.out, &out.a_s, 1.0)?;
            let g = attention::gradient_check(&x_rgb, &x_flow, &mag, &params, a.fd_step)?;
            println!("gradient check (max relative error, step {:e})", a.fd_step);
            println!("  align        {:.3e}", g.align);
            println!("  channel_mlp  {:.3e}", g.channel_mlp);
            println!("  spatial      {:.3e}", g.spatial);
            println!("  x_rgb        {:.3e}", g.x_rgb);
            println!("  x_flow       {:.3e}", g.x_flow);
            println!("  max          {:.3e}", g.max());
            let ac = out.a_c.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" ");
            println!("channel attention: {ac}");
        }
    }
    Ok(())
}
