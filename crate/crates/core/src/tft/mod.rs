//! Temporal Fusion Transformer window classifier.
//!
//! Per-timestep variable selection, an LSTM encoder, interpretable
//! multi-head attention with a shared value projection, then mean pooling
//! and a softmax head.

mod layers;
mod params;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_check, AutodiffError, GradCheckReport, Graph, NodeId, Tensor};
use crate::dataio::ScalingParams;

pub use layers::{attention, forward, grn, lstm, vsn, ForwardNodes, ModeRng};
pub use params::{AttentionParams, GrnParams, LstmParams, TftParams};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Inputs this large are split into chunks for inference.
const PREDICT_CHUNK: usize = 256;

#[derive(Debug, thiserror::Error)]
pub enum TftError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("{0}")]
    Shape(String),
    #[error("non-finite activation in layer `{layer}`")]
    NonFinite { layer: &'static str },
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint format version {0}")]
    FormatVersion(u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub dropout: f64,
    pub n_classes: usize,
    pub window: usize,
    pub n_features: usize,
}

impl ModelConfig {
    /// Desk-scale defaults: `d_model = 32`, four heads, dropout 0.1.
    pub fn new(window: usize, n_features: usize, n_classes: usize) -> Self {
        ModelConfig {
            d_model: 32,
            n_heads: 4,
            dropout: 0.1,
            n_classes,
            window,
            n_features,
        }
    }

    /// The small configuration used for gradient checks.
    pub fn tiny() -> Self {
        ModelConfig {
            d_model: 8,
            n_heads: 2,
            dropout: 0.0,
            n_classes: 3,
            window: 4,
            n_features: 3,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads.max(1)
    }

    pub fn validate(&self) -> Result<(), TftError> {
        let err = |m: String| Err(TftError::Config(m));
        if self.d_model == 0 || self.n_heads == 0 {
            return err("d_model and n_heads must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return err(format!("d_model {} is not divisible by {} heads", self.d_model, self.n_heads));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.n_classes < 2 {
            return err(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.window == 0 || self.n_features == 0 {
            return err("window and feature count must be positive".into());
        }
        Ok(())
    }
}

/// Outputs for one window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutput {
    pub probs: Vec<f64>,
    /// `w×F`, row-major.
    pub vsn_weights: Vec<f64>,
    /// `H×w×w`, row-major.
    pub attn_weights: Vec<f64>,
}

impl PredictionOutput {
    /// Predicted class; ties go to the lowest id.
    pub fn class(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Loss, gradients and probabilities of one batch.
#[derive(Clone, Debug)]
pub struct BatchGradient {
    /// `Σᵢ weightᵢ · (−log p̂ᵢ[yᵢ])`
    pub loss: f64,
    pub grads: TftParams<Tensor>,
    /// `B×K`, row-major.
    pub probs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TftModel {
    config: ModelConfig,
    params: TftParams<Tensor>,
}

impl TftModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, TftError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = TftParams::init(&config, &mut rng);
        Ok(TftModel { config, params })
    }

    pub fn from_params(config: ModelConfig, params: TftParams<Tensor>) -> Result<Self, TftError> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(TftModel { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &TftParams<Tensor> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut TftParams<Tensor> {
        &mut self.params
    }

    pub fn into_params(self) -> TftParams<Tensor> {
        self.params
    }

    fn sample_len(&self) -> usize {
        self.config.window * self.config.n_features
    }

    fn batch_size(&self, samples: &[f64]) -> Result<usize, TftError> {
        let s = self.sample_len();
        if samples.is_empty() || samples.len() % s != 0 {
            return Err(TftError::Shape(format!(
                "{} values is not a whole number of {}×{} windows",
                samples.len(),
                self.config.window,
                self.config.n_features
            )));
        }
        Ok(samples.len() / s)
    }

    fn input(&self, g: &mut Graph, samples: &[f64]) -> Result<NodeId, TftError> {
        let b = self.batch_size(samples)?;
        let t = Tensor::new(vec![b, self.config.window, self.config.n_features], samples.to_vec())?;
        Ok(g.constant(t))
    }

    /// Forward pass over `B` flat `w×F` windows. `rng = None` is evaluation mode.
    pub fn forward_batch(&self, samples: &[f64], mut rng: ModeRng) -> Result<Vec<PredictionOutput>, TftError> {
        let mut g = Graph::new();
        let p = self.params.map(|t| g.constant(t.clone()));
        let x = self.input(&mut g, samples)?;
        let out = forward(&mut g, &self.config, &p, x, &mut rng)?;
        let (b, w, f, k) = (
            g.shape(x)[0],
            self.config.window,
            self.config.n_features,
            self.config.n_classes,
        );
        let probs = g.value(out.probs).data();
        let vsn = g.value(out.vsn_weights).data();
        let maps: Vec<&[f64]> = out.attention.iter().map(|&a| g.value(a).data()).collect();
        Ok((0..b)
            .map(|i| PredictionOutput {
                probs: probs[i * k..(i + 1) * k].to_vec(),
                vsn_weights: vsn[i * w * f..(i + 1) * w * f].to_vec(),
                attn_weights: maps.iter().flat_map(|m| m[i * w * w..(i + 1) * w * w].iter().copied()).collect(),
            })
            .collect())
    }

    /// Evaluation-mode forward pass of a single window.
    pub fn forward(&self, sample: &[f64]) -> Result<PredictionOutput, TftError> {
        if sample.len() != self.sample_len() {
            return Err(TftError::Shape(format!(
                "sample has {} values, expected {}",
                sample.len(),
                self.sample_len()
            )));
        }
        Ok(self.forward_batch(sample, None)?.remove(0))
    }

    /// Evaluation-mode outputs for any number of windows, chunked.
    pub fn predict(&self, samples: &[f64]) -> Result<Vec<PredictionOutput>, TftError> {
        self.batch_size(samples)?;
        let mut out = Vec::new();
        for chunk in samples.chunks(PREDICT_CHUNK * self.sample_len()) {
            out.extend(self.forward_batch(chunk, None)?);
        }
        Ok(out)
    }

    /// Class probabilities only, `B×K` row-major.
    pub fn predict_proba(&self, samples: &[f64]) -> Result<Vec<f64>, TftError> {
        self.batch_size(samples)?;
        let mut out = Vec::with_capacity(samples.len() / self.sample_len() * self.config.n_classes);
        for chunk in samples.chunks(PREDICT_CHUNK * self.sample_len()) {
            let mut g = Graph::new();
            let p = self.params.map(|t| g.constant(t.clone()));
            let x = self.input(&mut g, chunk)?;
            let nodes = forward(&mut g, &self.config, &p, x, &mut None)?;
            out.extend_from_slice(g.value(nodes.probs).data());
        }
        Ok(out)
    }

    /// Weighted cross-entropy of a batch and its gradient with respect to
    /// every parameter block.
    pub fn loss_and_grad(
        &self,
        samples: &[f64],
        targets: &[usize],
        weights: &[f64],
        mut rng: ModeRng,
    ) -> Result<BatchGradient, TftError> {
        let mut g = Graph::new();
        let p = self.params.map(|t| g.param(t.clone()));
        let x = self.input(&mut g, samples)?;
        let out = forward(&mut g, &self.config, &p, x, &mut rng)?;
        let loss = g.cross_entropy(out.logits, targets, weights)?;
        let mut grads = g.backward(loss)?;
        let grads = p.map(|&id| grads.take(id).expect("every parameter receives a gradient"));
        Ok(BatchGradient {
            loss: g.value(loss).item(),
            grads,
            probs: g.value(out.probs).data().to_vec(),
        })
    }

    /// Same model on reordered inputs: new feature `i` is old feature `perm[i]`.
    pub fn permute_features(&self, perm: &[usize]) -> Result<TftModel, TftError> {
        let f = self.config.n_features;
        let mut seen = vec![false; f];
        if perm.len() != f || !perm.iter().all(|&p| p < f && !std::mem::replace(&mut seen[p], true)) {
            return Err(TftError::Shape(format!("{perm:?} is not a permutation of {f} features")));
        }
        Ok(TftModel {
            config: self.config.clone(),
            params: self.params.permute_features(perm, self.config.d_model),
        })
    }

    /// Compares backprop through the full model against central
    /// differences of the summed cross-entropy on `(samples, targets)`.
    pub fn grad_check(&self, samples: &[f64], targets: &[usize], eps: f64) -> Result<GradCheckReport, TftError> {
        let b = self.batch_size(samples)?;
        let blocks: Vec<Tensor> = self.params.blocks().into_iter().cloned().collect();
        let template = &self.params;
        let cfg = &self.config;
        let x_t = Tensor::new(vec![b, cfg.window, cfg.n_features], samples.to_vec())?;
        let weights = vec![1.0; b];
        let report = grad_check(&blocks, eps, |g, ids| {
            let mut next = ids.iter().copied();
            let p = template.map(|_| next.next().expect("one id per block"));
            let x = g.constant(x_t.clone());
            let out = forward(g, cfg, &p, x, &mut None).map_err(|e| match e {
                TftError::Autodiff(e) => e,
                other => AutodiffError::InvalidArgument {
                    op: "tft forward",
                    msg: other.to_string(),
                },
            })?;
            g.cross_entropy(out.logits, targets, &weights)
        })?;
        Ok(report)
    }

    pub fn save(&self, path: impl AsRef<Path>, feature_names: &[String], scaling: Option<&ScalingParams>) -> Result<(), TftError> {
        let ckpt = Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: self.config.clone(),
            feature_names: feature_names.to_vec(),
            scaling: scaling.cloned(),
            params: self.params.clone(),
        };
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(w, &ckpt)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(TftModel, Checkpoint), TftError> {
        let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(TftError::FormatVersion(ckpt.format_version));
        }
        if !ckpt.feature_names.is_empty() && ckpt.feature_names.len() != ckpt.config.n_features {
            return Err(TftError::Params(format!(
                "{} feature names for {} features",
                ckpt.feature_names.len(),
                ckpt.config.n_features
            )));
        }
        let model = TftModel::from_params(ckpt.config.clone(), ckpt.params.clone())?;
        Ok((model, ckpt))
    }
}

/// On-disk model: configuration, the feature columns it expects, the
/// scaling fitted on its training data and every weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub feature_names: Vec<String>,
    pub scaling: Option<ScalingParams>,
    pub params: TftParams<Tensor>,
}

#[cfg(test)]
mod tests;
