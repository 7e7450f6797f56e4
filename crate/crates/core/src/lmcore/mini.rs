//! The desk-scale backend: a [`Transformer`] trained from scratch on a
//! word-level [`Vocab`] built from the training pairs.
//!
//! A sample is laid out as `input <bos> target <eos>`. Only the positions
//! from `<bos>` onward carry labels, so the loss covers the target tokens and
//! the end marker while the prompted input is context.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::transformer::{ModelShape, Transformer, Weights};
use super::vocab::Vocab;
use super::{GeneratorBackend, StepLoss};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::linearize::LinearizedSample;

pub const CHECKPOINT_FORMAT: &str = "compex-mini";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiniConfig {
    pub layers: usize,
    pub width: usize,
    pub heads: usize,
    pub ffn_width: usize,
    pub context_len: usize,
    pub init_std: f64,
    /// Gradients are rescaled to this global norm when larger; 0 disables.
    pub clip_norm: f64,
    /// Share the token embedding with the output layer.
    #[serde(default)]
    pub tied_head: bool,
    /// Mix a pointer distribution over the context into the output.
    #[serde(default)]
    pub copy_head: bool,
    /// Training-time dropout on the residual stream inputs.
    #[serde(default)]
    pub dropout: f64,
    /// Decoupled weight decay applied to weight matrices.
    #[serde(default)]
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for MiniConfig {
    fn default() -> Self {
        MiniConfig {
            layers: 2,
            width: 64,
            heads: 4,
            ffn_width: 256,
            context_len: 128,
            init_std: 0.02,
            clip_norm: 1.0,
            tied_head: true,
            copy_head: true,
            dropout: 0.0,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl MiniConfig {
    fn shape(&self, vocab_size: usize) -> ModelShape {
        ModelShape {
            vocab_size,
            context_len: self.context_len,
            width: self.width,
            layers: self.layers,
            heads: self.heads,
            ffn_width: self.ffn_width,
            tied_head: self.tied_head,
            copy_head: self.copy_head,
        }
    }
}

/// SplitMix64 finalizer over the pair, for per-sample dropout streams.
fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Adam {
    first: Weights,
    second: Weights,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(shape: &ModelShape) -> Self {
        Adam {
            first: Weights::zeros(shape),
            second: Weights::zeros(shape),
            step: 0,
        }
    }

    fn update(&mut self, weights: &mut Weights, grads: &Weights, lr: f64, weight_decay: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        let decayed = weights.matrix_mask();
        let params = weights.tensors_mut();
        let firsts = self.first.tensors_mut();
        let seconds = self.second.tensors_mut();
        for ((((p, m), v), g), decay) in params
            .into_iter()
            .zip(firsts)
            .zip(seconds)
            .zip(grads.tensors())
            .zip(decayed)
        {
            let shrink = if decay { 1.0 - lr * weight_decay } else { 1.0 };
            for i in 0..p.len() {
                m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * g[i];
                v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
                p[i] = p[i] * shrink - lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

pub struct MiniBackend {
    vocab: Vocab,
    config: MiniConfig,
    model: Transformer,
    optimizer: Adam,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: MiniConfig,
    vocab: Vec<String>,
    weights: Vec<f64>,
}

impl MiniBackend {
    pub fn new(vocab: Vocab, config: MiniConfig) -> Result<Self> {
        let shape = config.shape(vocab.len());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = Transformer::init(shape, config.init_std, &mut rng)?;
        let optimizer = Adam::new(model.shape());
        Ok(MiniBackend {
            vocab,
            config,
            model,
            optimizer,
        })
    }

    /// Builds the vocabulary from the inputs and targets of `samples`.
    pub fn for_samples(samples: &[LinearizedSample], config: MiniConfig) -> Result<Self> {
        let vocab = Vocab::build(
            samples
                .iter()
                .flat_map(|s| [s.input_text.as_str(), s.target_text.as_str()]),
        );
        Self::new(vocab, config)
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn config(&self) -> &MiniConfig {
        &self.config
    }

    pub fn model(&self) -> &Transformer {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut Transformer {
        &mut self.model
    }

    /// Model input ids and per-position labels for a training sample.
    pub fn encode_sample(&self, sample: &LinearizedSample) -> (Vec<usize>, Vec<Option<usize>>) {
        let input = self.vocab.encode(&sample.input_text);
        let target = self.vocab.encode(&sample.target_text);
        let mut seq = input.clone();
        seq.push(Vocab::BOS_ID);
        seq.extend(&target);
        seq.push(Vocab::EOS_ID);
        let ids = seq[..seq.len() - 1].to_vec();
        let labels = (0..ids.len())
            .map(|t| (t >= input.len()).then(|| seq[t + 1]))
            .collect();
        (ids, labels)
    }

    /// Summed loss and labelled-token count of one sample.
    pub fn sample_loss(&self, sample: &LinearizedSample) -> StepLoss {
        let (ids, labels) = self.encode_sample(sample);
        let sum = self.model.loss(&ids, &labels);
        StepLoss {
            loss_sum: sum,
            tokens: labels.iter().flatten().count(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let checkpoint = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            vocab: self.vocab.pieces().to_vec(),
            weights: self.model.weights().to_flat(),
        };
        write_atomic(path, &serde_json::to_vec(&checkpoint)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes)
    }

    pub(crate) fn from_json(bytes: &[u8]) -> Result<Self> {
        let checkpoint: Checkpoint = serde_json::from_slice(bytes)
            .map_err(|e| Error::Checkpoint(format!("unreadable mini checkpoint: {e}")))?;
        if checkpoint.format != CHECKPOINT_FORMAT || checkpoint.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                checkpoint.format, checkpoint.version
            )));
        }
        let vocab = Vocab::from_pieces(checkpoint.vocab)?;
        let shape = checkpoint.config.shape(vocab.len());
        let mut weights = Weights::zeros(&shape);
        weights.assign_flat(&checkpoint.weights)?;
        let model = Transformer::new(shape, weights)?;
        let optimizer = Adam::new(model.shape());
        Ok(MiniBackend {
            vocab,
            config: checkpoint.config,
            model,
            optimizer,
        })
    }
}

impl GeneratorBackend for MiniBackend {
    fn context_len(&self) -> usize {
        self.config.context_len
    }

    fn sample_tokens(&self, sample: &LinearizedSample) -> Result<usize> {
        Ok(self.vocab.encode(&sample.input_text).len()
            + self.vocab.encode(&sample.target_text).len()
            + 2)
    }

    fn train_step(&mut self, batch: &[&LinearizedSample], learning_rate: f64) -> Result<StepLoss> {
        let encoded: Vec<_> = batch.iter().map(|s| self.encode_sample(s)).collect();
        if let Some((ids, _)) = encoded
            .iter()
            .find(|(ids, _)| ids.len() > self.config.context_len)
        {
            return Err(Error::InputTooLong {
                tokens: ids.len(),
                context: self.config.context_len,
            });
        }
        let model = &self.model;
        let rate = self.config.dropout;
        let step_seed = mix_seed(self.config.seed, self.optimizer.step as u64);
        let results: Vec<_> = encoded
            .into_par_iter()
            .enumerate()
            .map(|(i, (ids, labels))| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(step_seed, i as u64));
                model.gradients_of(model.forward_dropout(&ids, rate, &mut rng), &labels)
            })
            .collect();
        let mut grads = Weights::zeros(model.shape());
        let mut step = StepLoss::default();
        for (ce, g) in &results {
            grads.add_assign(g);
            step.loss_sum += ce.sum;
            step.tokens += ce.count;
        }
        if step.tokens == 0 {
            return Ok(step);
        }
        grads.scale(1.0 / step.tokens as f64);
        let norm = grads.norm();
        if self.config.clip_norm > 0.0 && norm > self.config.clip_norm {
            grads.scale(self.config.clip_norm / norm);
        }
        self.optimizer.update(
            self.model.weights_mut(),
            &grads,
            learning_rate,
            self.config.weight_decay,
        );
        Ok(step)
    }

    fn generate(&self, prompted_input: &str, max_len: usize) -> Result<String> {
        let ids = self.generate_ids(prompted_input, max_len)?;
        Ok(self.vocab.decode(&ids))
    }
}

impl MiniBackend {
    /// Greedy decoding after `input <bos>`; stops at `<eos>` (not returned),
    /// at `max_len` tokens, or when the context is full.
    pub fn generate_ids(&self, prompted_input: &str, max_len: usize) -> Result<Vec<usize>> {
        let mut ids = self.vocab.encode(prompted_input);
        ids.push(Vocab::BOS_ID);
        if ids.len() > self.config.context_len {
            return Err(Error::InputTooLong {
                tokens: ids.len(),
                context: self.config.context_len,
            });
        }
        let mut out = Vec::new();
        while out.len() < max_len && ids.len() <= self.config.context_len {
            let next = self.model.next_token(&ids);
            if next == Vocab::EOS_ID {
                break;
            }
            out.push(next);
            ids.push(next);
        }
        Ok(out)
    }
}
