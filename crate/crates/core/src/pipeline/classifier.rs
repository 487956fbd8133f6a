//! EMD-feature classifier: z-score normalisation, an embedding MLP and a
//! dropout-regularised classification head, trained jointly.

use rand::Rng;

use super::features::DescriptorMask;
use crate::emd::EmdFeatureVector;
use crate::error::{Error, Result};
use crate::nn::{find_tensor, parse_tensors, write_tensor, Activation, ForwardCache, Gradients, MlpModel, Mode, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub embed_hidden: usize,
    pub embed_dim: usize,
    pub head_hidden: Vec<usize>,
    /// Dropout on the input of each head layer; one more entry than `head_hidden`.
    pub head_dropout: Vec<f64>,
    pub n_classes: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            embed_hidden: 64,
            embed_dim: 128,
            head_hidden: vec![512, 256],
            head_dropout: vec![0.5, 0.3, 0.3],
            n_classes: 3,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_hidden == 0 || self.embed_dim == 0 || self.head_hidden.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        if self.head_dropout.len() != self.head_hidden.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} head layers need {} dropout rates, got {}",
                self.head_hidden.len() + 1,
                self.head_hidden.len() + 1,
                self.head_dropout.len()
            )));
        }
        if let Some(p) = self.head_dropout.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!("dropout rate {p} outside [0, 1)")));
        }
        if self.n_classes < 2 {
            return Err(Error::InvalidArgument("need at least 2 classes".into()));
        }
        Ok(())
    }

    fn head_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.embed_dim];
        dims.extend(&self.head_hidden);
        dims.push(self.n_classes);
        dims
    }

    fn head_activations(&self) -> Vec<Activation> {
        let mut acts = vec![Activation::Relu; self.head_hidden.len()];
        acts.push(Activation::Identity);
        acts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub n_modes: usize,
    pub mask: DescriptorMask,
    pub embed: MlpModel,
    pub head: MlpModel,
    /// Per-feature z-score statistics from the training split.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Forward intermediates for both sub-networks.
#[derive(Debug, Clone)]
pub struct ClassifierCache {
    embed: ForwardCache,
    head: ForwardCache,
}

impl Classifier {
    pub fn new<R: Rng + ?Sized>(cfg: &ClassifierConfig, n_modes: usize, mask: DescriptorMask, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let input = EmdFeatureVector::len_for(n_modes);
        let embed = MlpModel::build(
            &[input, cfg.embed_hidden, cfg.embed_dim],
            &[Activation::Relu, Activation::Relu],
            &[0.0, 0.0],
            rng,
        )?;
        let head = MlpModel::build(&cfg.head_dims(), &cfg.head_activations(), &cfg.head_dropout, rng)?;
        Ok(Self {
            n_modes,
            mask,
            embed,
            head,
            mean: vec![0.0; input],
            std: vec![1.0; input],
        })
    }

    pub fn input_dim(&self) -> usize {
        self.embed.input_dim()
    }

    pub fn n_classes(&self) -> usize {
        self.head.output_dim()
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.embed.mode = mode;
        self.head.mode = mode;
    }

    /// Fits z-score statistics; constant features get unit scale.
    pub fn fit_normalization(&mut self, rows: &[&[f64]]) -> Result<()> {
        let d = self.input_dim();
        if rows.is_empty() {
            return Err(Error::Dataset("cannot fit normalisation on an empty split".into()));
        }
        for j in 0..d {
            let (mean, std) = crate::trace::mean_std(rows.iter().map(|r| r[j]));
            self.mean[j] = mean;
            self.std[j] = if std > 1e-12 { std } else { 1.0 };
        }
        Ok(())
    }

    pub fn normalize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "classifier expects {} features, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect())
    }

    pub fn forward<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<(Vec<f64>, ClassifierCache)> {
        let z = self.normalize(x)?;
        let (h, embed) = self.embed.forward(&z, rng)?;
        let (logits, head) = self.head.forward(&h, rng)?;
        Ok((logits, ClassifierCache { embed, head }))
    }

    pub fn backward(&self, cache: &ClassifierCache, grad_logits: &[f64]) -> Result<(Gradients, Gradients)> {
        let head = self.head.backward(&cache.head, grad_logits)?;
        let embed = self.embed.backward(&cache.embed, &head.input)?;
        Ok((embed, head))
    }

    /// Evaluation-mode logits.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.head.infer(&self.embed.infer(&self.normalize(x)?)?)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(crate::nn::argmax(&self.logits(x)?))
    }

    /// All trainable tensors, embedding first.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.embed.tensors_mut();
        t.extend(self.head.tensors_mut());
        t
    }

    pub fn tensor_lengths(&self) -> Vec<usize> {
        self.embed
            .tensors()
            .into_iter()
            .chain(self.head.tensors())
            .map(<[f64]>::len)
            .collect()
    }

    /// Portable text form: one `name rows cols values...` line per tensor.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mask: Vec<f64> = self.mask.0.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        write_tensor(&mut s, "meta.mask", 1, 4, &mask);
        write_tensor(&mut s, "norm.mean", 1, self.mean.len(), &self.mean);
        write_tensor(&mut s, "norm.std", 1, self.std.len(), &self.std);
        self.embed.write_tensors("embed.", &mut s);
        self.head.write_tensors("head.", &mut s);
        s
    }

    /// Rebuilds a classifier from [`to_text`](Self::to_text) output; layer
    /// widths come from the tensor shapes, dropout rates from `cfg`.
    pub fn from_text(text: &str, cfg: &ClassifierConfig) -> Result<Self> {
        let tensors = parse_tensors(text)?;
        let mask_t = find_tensor(&tensors, "meta.mask", 1, 4)?;
        let mask = DescriptorMask(std::array::from_fn(|i| mask_t.values[i] != 0.0));
        let mean = tensors
            .iter()
            .find(|t| t.name == "norm.mean")
            .ok_or_else(|| Error::Parse("missing tensor norm.mean".into()))?;
        let d = mean.cols;
        if d == 0 || d % EmdFeatureVector::len_for(1) != 0 {
            return Err(Error::Dimension(format!("feature width {d} is not a multiple of 8")));
        }
        let std = find_tensor(&tensors, "norm.std", 1, d)?;
        let embed = model_from(&tensors, "embed.", |_, _| (Activation::Relu, 0.0))?;
        let head_layers = tensors.iter().filter(|t| t.name.starts_with("head.") && t.name.ends_with(".weight")).count();
        let head = model_from(&tensors, "head.", |k, _| {
            let act = if k + 1 == head_layers { Activation::Identity } else { Activation::Relu };
            (act, cfg.head_dropout.get(k).copied().unwrap_or(0.0))
        })?;
        if embed.input_dim() != d || embed.output_dim() != head.input_dim() {
            return Err(Error::Dimension("classifier tensors do not chain".into()));
        }
        Ok(Self {
            n_modes: d / EmdFeatureVector::len_for(1),
            mask,
            embed,
            head,
            mean: mean.values.clone(),
            std: std.values.clone(),
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path, cfg: &ClassifierConfig) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, cfg).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

fn model_from(tensors: &[Tensor], prefix: &str, layer_kind: impl Fn(usize, usize) -> (Activation, f64)) -> Result<MlpModel> {
    let mut layers = Vec::new();
    loop {
        let k = layers.len();
        let Some(w) = tensors.iter().find(|t| t.name == format!("{prefix}{k}.weight")) else {
            break;
        };
        let b = find_tensor(tensors, &format!("{prefix}{k}.bias"), w.rows, 1)?;
        let (activation, dropout) = layer_kind(k, w.rows);
        layers.push(crate::nn::DenseLayer {
            in_dim: w.cols,
            out_dim: w.rows,
            weights: w.values.clone(),
            bias: b.values.clone(),
            activation,
            dropout_rate: dropout,
        });
    }
    if layers.is_empty() {
        return Err(Error::Parse(format!("no {prefix}* tensors")));
    }
    MlpModel::new(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_shapes() {
        let c = Classifier::new(&ClassifierConfig::default(), 4, DescriptorMask::ALL, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(c.input_dim(), 32);
        let dims: Vec<(usize, usize)> = c.embed.layers().iter().chain(c.head.layers()).map(|l| (l.in_dim, l.out_dim)).collect();
        assert_eq!(dims, vec![(32, 64), (64, 128), (128, 512), (512, 256), (256, 3)]);
        let rates: Vec<f64> = c.head.layers().iter().map(|l| l.dropout_rate).collect();
        assert_eq!(rates, vec![0.5, 0.3, 0.3]);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let cfg = ClassifierConfig {
            head_hidden: vec![16, 8],
            ..ClassifierConfig::default()
        };
        let mut c = Classifier::new(&cfg, 3, DescriptorMask::MAGNITUDE, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        c.mean = (0..24).map(|i| i as f64 / 7.0).collect();
        c.std = (0..24).map(|i| 1.0 + i as f64 / 3.0).collect();
        let back = Classifier::from_text(&c.to_text(), &cfg).unwrap();
        assert_eq!(back.to_text(), c.to_text());
        assert_eq!(back.n_modes, 3);
        assert_eq!(back.mask, DescriptorMask::MAGNITUDE);
        let x: Vec<f64> = (0..24).map(|i| (i as f64).sin()).collect();
        assert_eq!(back.logits(&x).unwrap(), c.logits(&x).unwrap());
    }
}
