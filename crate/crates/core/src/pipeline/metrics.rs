//! Classification metrics and the evaluation report.

use serde::Serialize;

use super::classifier::Classifier;
use super::features::FeatureSet;
use super::{CongestionClass, Split};
use crate::error::{Error, Result};
use crate::nn::{argmax, ce_loss, smoothed_targets};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub predicted: usize,
    /// Precision or recall had a zero denominator and was reported as 0.
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub split: String,
    pub n: usize,
    pub accuracy: f64,
    pub mean_loss: f64,
    pub classes: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    pub undefined_classes: Vec<String>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl MetricsReport {
    /// Builds the report from parallel label/prediction lists. Macro
    /// averages run over all `class_names`; classes with an undefined
    /// precision or recall contribute 0 there and are listed in
    /// `undefined_classes`.
    pub fn from_predictions(
        split: &str,
        class_names: &[&str],
        labels: &[usize],
        predictions: &[usize],
        mean_loss: f64,
    ) -> Result<Self> {
        let k = class_names.len();
        if labels.len() != predictions.len() {
            return Err(Error::Dimension(format!(
                "{} labels, {} predictions",
                labels.len(),
                predictions.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::Dataset(format!("{split} split is empty")));
        }
        if let Some(bad) = labels.iter().chain(predictions).find(|&&c| c >= k) {
            return Err(Error::InvalidArgument(format!("class index {bad} out of range")));
        }
        let mut confusion = vec![vec![0usize; k]; k];
        for (&t, &p) in labels.iter().zip(predictions) {
            confusion[t][p] += 1;
        }
        let n = labels.len();
        let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
        let mut classes = Vec::with_capacity(k);
        let mut undefined_classes = Vec::new();
        for c in 0..k {
            let tp = confusion[c][c];
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let (p, r) = (ratio(tp, predicted), ratio(tp, support));
            let undefined = p.is_none() || r.is_none();
            let (p, r) = (p.unwrap_or(0.0), r.unwrap_or(0.0));
            let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            if undefined {
                log::warn!("{split}: class {} has undefined precision or recall; counted as 0", class_names[c]);
                undefined_classes.push(class_names[c].to_string());
            }
            classes.push(ClassMetrics {
                class: class_names[c].to_string(),
                precision: p,
                recall: r,
                f1,
                support,
                predicted,
                undefined,
            });
        }
        let macro_avg = |f: fn(&ClassMetrics) -> f64| classes.iter().map(f).sum::<f64>() / k as f64;
        let weighted = |f: fn(&ClassMetrics) -> f64| {
            classes.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / n as f64
        };
        Ok(Self {
            split: split.to_string(),
            n,
            accuracy: correct as f64 / n as f64,
            mean_loss,
            macro_precision: macro_avg(|c| c.precision),
            macro_recall: macro_avg(|c| c.recall),
            macro_f1: macro_avg(|c| c.f1),
            weighted_precision: weighted(|c| c.precision),
            weighted_recall: weighted(|c| c.recall),
            weighted_f1: weighted(|c| c.f1),
            classes,
            confusion,
            undefined_classes,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialise");
        s.push('\n');
        s
    }
}

/// Evaluation-mode metrics on one split; `mean_loss` uses the same label
/// smoothing as training.
pub fn evaluate(model: &Classifier, data: &FeatureSet, split: Split, label_smoothing: f64) -> Result<MetricsReport> {
    let idx = data.indices(split);
    if idx.is_empty() {
        return Err(Error::Dataset(format!("{split} split is empty")));
    }
    let mut labels = Vec::with_capacity(idx.len());
    let mut predictions = Vec::with_capacity(idx.len());
    let mut loss = 0.0;
    for &i in &idx {
        let label = data.labels[i].index();
        let logits = model.logits(&data.features[i])?;
        loss += ce_loss(&logits, &smoothed_targets(label, model.n_classes(), label_smoothing)?)?.0;
        labels.push(label);
        predictions.push(argmax(&logits));
    }
    let names: Vec<&str> = CongestionClass::ALL.iter().map(|c| c.name()).collect();
    MetricsReport::from_predictions(split.name(), &names, &labels, &predictions, loss / idx.len() as f64)
}
