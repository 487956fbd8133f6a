//! Minibatch training with label-smoothed cross-entropy and clipped Adam.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::classifier::{Classifier, ClassifierConfig};
use super::features::FeatureSet;
use super::Split;
use crate::error::{Error, Result};
use crate::nn::{argmax, ce_loss, smoothed_targets, AdamState, Gradients, Mode};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Zero-based epochs at which the learning rate is multiplied by `lr_decay`.
    pub lr_milestones: Vec<usize>,
    pub lr_decay: f64,
    pub clip_norm: f64,
    pub label_smoothing: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 4,
            lr: 1e-3,
            lr_milestones: vec![30, 60],
            lr_decay: 0.1,
            clip_norm: 1.0,
            label_smoothing: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay {} not in (0, 1]", self.lr_decay));
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip_norm {} must be positive", self.clip_norm));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad(format!("label_smoothing {} not in [0, 1)", self.label_smoothing));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training loss over the epoch's minibatches (dropout active).
    pub loss: f64,
    /// Training-mode accuracy accumulated during the epoch.
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,lr,loss,train_acc,val_acc\n");
        for e in &self.epochs {
            let val = e.val_acc.map(|v| format!("{v:.6}")).unwrap_or_default();
            let _ = writeln!(s, "{},{:e},{:.10},{:.6},{val}", e.epoch, e.lr, e.loss, e.train_acc);
        }
        s
    }
}

/// Fraction of rows in `idx` the model classifies correctly (eval mode).
pub(crate) fn accuracy(model: &Classifier, data: &FeatureSet, idx: &[usize]) -> Result<f64> {
    let mut correct = 0;
    for &i in idx {
        if model.predict(&data.features[i])? == data.labels[i].index() {
            correct += 1;
        }
    }
    Ok(correct as f64 / idx.len().max(1) as f64)
}

/// Trains embedding and head jointly on the train split of `data`.
pub fn train(
    data: &FeatureSet,
    model_cfg: &ClassifierConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Classifier, TrainingLog)> {
    cfg.validate()?;
    let mut order = data.indices(Split::Train);
    if order.is_empty() {
        return Err(Error::Dataset("train split is empty".into()));
    }
    let mut present = [false; 3];
    order.iter().for_each(|&i| present[data.labels[i].index()] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Dataset("train split needs at least two classes".into()));
    }
    let val = data.indices(Split::Val);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Classifier::new(model_cfg, data.n_modes, data.mask, &mut rng)?;
    let rows: Vec<&[f64]> = order.iter().map(|&i| data.features[i].as_slice()).collect();
    model.fit_normalization(&rows)?;
    let k = model.n_classes();

    let mut adam = AdamState::new(&model.tensor_lengths(), cfg.lr)?;
    adam.milestones = cfg.lr_milestones.clone();
    adam.decay = cfg.lr_decay;
    adam.clip_norm = cfg.clip_norm;

    let mut log = TrainingLog::default();
    for epoch in 0..cfg.epochs {
        model.set_mode(Mode::Train);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut batches, mut correct) = (0.0, 0, 0);
        for batch in order.chunks(cfg.batch_size) {
            let mut g_embed = Gradients::zeros_like(&model.embed);
            let mut g_head = Gradients::zeros_like(&model.head);
            let mut batch_loss = 0.0;
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let label = data.labels[i].index();
                let (logits, cache) = model.forward(&data.features[i], &mut rng)?;
                let targets = smoothed_targets(label, k, cfg.label_smoothing)?;
                let (loss, grad) = ce_loss(&logits, &targets)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged(format!(
                        "non-finite loss at epoch {epoch} on clip {}",
                        data.clip_ids[i]
                    )));
                }
                batch_loss += loss * scale;
                if argmax(&logits) == label {
                    correct += 1;
                }
                let (ge, gh) = model.backward(&cache, &grad)?;
                g_embed.accumulate(&ge, scale);
                g_head.accumulate(&gh, scale);
            }
            let grads: Vec<&[f64]> = g_embed.tensors().into_iter().chain(g_head.tensors()).collect();
            adam.step(&mut model.tensors_mut(), &grads, epoch)
                .map_err(|e| Error::Diverged(format!("epoch {epoch}: {e}")))?;
            loss_sum += batch_loss;
            batches += 1;
        }
        let val_acc = if val.is_empty() {
            None
        } else {
            Some(accuracy(&model, data, &val)?)
        };
        let entry = EpochLog {
            epoch,
            lr: adam.lr_at(epoch),
            loss: loss_sum / batches as f64,
            train_acc: correct as f64 / order.len() as f64,
            val_acc,
        };
        log::debug!("epoch {epoch}: loss {:.4} train_acc {:.3}", entry.loss, entry.train_acc);
        log.epochs.push(entry);
    }
    model.set_mode(Mode::Eval);
    Ok((model, log))
}
