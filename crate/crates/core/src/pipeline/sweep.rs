//! IMF-count and descriptor-ablation sweeps.

use std::fmt::Write as _;

use super::config::PipelineConfig;
use super::features::{ClipTrace, DescriptorMask, FeatureSet};
use super::train::{accuracy, train};
use super::Split;
use crate::emd::{EmdFeatureVector, SiftConfig};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ImfSweepRow {
    pub n_imfs: usize,
    pub feature_dim: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSweepRow {
    pub name: String,
    pub mask: DescriptorMask,
    pub test_acc: f64,
    /// `test_acc` minus the all-descriptor accuracy.
    pub delta: f64,
}

fn train_and_score(data: &FeatureSet, cfg: &PipelineConfig) -> Result<(f64, f64)> {
    let (model, _) = train(data, &cfg.model, &cfg.train, cfg.seed)?;
    let train_acc = accuracy(&model, data, &data.indices(Split::Train))?;
    let test = data.indices(Split::Test);
    let test_acc = if test.is_empty() { f64::NAN } else { accuracy(&model, data, &test)? };
    Ok((train_acc, test_acc))
}

/// One model per IMF count, all sharing `cfg.seed`.
pub fn sweep_imfs(traces: &[ClipTrace], n_list: &[usize], cfg: &PipelineConfig) -> Result<Vec<ImfSweepRow>> {
    n_list
        .iter()
        .map(|&n| {
            let sift = SiftConfig { n_modes: n, ..cfg.sift };
            sift.validate()?;
            let data = FeatureSet::from_traces(traces, &sift, cfg.descriptors)?;
            let (train_acc, test_acc) = train_and_score(&data, cfg)?;
            log::info!("sweep n_imfs={n}: train {train_acc:.4} test {test_acc:.4}");
            Ok(ImfSweepRow {
                n_imfs: n,
                feature_dim: EmdFeatureVector::len_for(n),
                train_acc,
                test_acc,
                gap: train_acc - test_acc,
            })
        })
        .collect()
}

/// One model per descriptor mask at `cfg.sift.n_modes` IMFs.
pub fn sweep_descriptors(
    traces: &[ClipTrace],
    masks: &[(String, DescriptorMask)],
    cfg: &PipelineConfig,
) -> Result<Vec<DescriptorSweepRow>> {
    let full = FeatureSet::from_traces(traces, &cfg.sift, DescriptorMask::ALL)?;
    let mut scored = Vec::with_capacity(masks.len());
    for (name, mask) in masks {
        let (_, test_acc) = train_and_score(&full.masked(*mask), cfg)?;
        log::info!("sweep descriptors={name}: test {test_acc:.4}");
        scored.push((name.clone(), *mask, test_acc));
    }
    let reference = match scored.iter().find(|(_, m, _)| *m == DescriptorMask::ALL) {
        Some(&(_, _, acc)) => acc,
        None => train_and_score(&full, cfg)?.1,
    };
    Ok(scored
        .into_iter()
        .map(|(name, mask, test_acc)| DescriptorSweepRow {
            name,
            mask,
            test_acc,
            delta: test_acc - reference,
        })
        .collect())
}

pub fn imf_rows_to_csv(rows: &[ImfSweepRow]) -> String {
    let mut s = String::from("n_imfs,feature_dim,train_acc,test_acc,gap\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.4},{:.4},{:.4}",
            r.n_imfs, r.feature_dim, r.train_acc, r.test_acc, r.gap
        );
    }
    s
}

pub fn descriptor_rows_to_csv(rows: &[DescriptorSweepRow]) -> String {
    let mut s = String::from("config,descriptors,test_acc,delta\n");
    for r in rows {
        let _ = writeln!(s, "{},\"{}\",{:.4},{:.4}", r.name, r.mask, r.test_acc, r.delta);
    }
    s
}
