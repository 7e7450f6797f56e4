//! Prompted generation: prompt injection, training pairs, the generator
//! contract, the training loop, greedy decoding, and end-to-end extraction.

pub mod adapter;
pub mod mini;
pub mod transformer;
pub mod vocab;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{dedupe_relations, Relation, Sentence};
use crate::error::{Error, Result};
use crate::filter::{ground_filter, is_grounded, Discarded};
use crate::linearize::{canonical_order, parse_relations, serialize_relations, LinearizedSample};

pub use adapter::ProcessBackend;
pub use mini::{MiniBackend, MiniConfig};

/// The prompt variants compared in the ablation, in reporting order.
pub const DEFAULT_PROMPTS: [&str; 7] = [
    "Let me see:",
    "[SEP]",
    "generate relations:",
    "My name:",
    "relations:",
    "comparative relations:",
    "comparative relations tuple:",
];

pub const BEST_PROMPT: &str = "comparative relations tuple:";

/// Prompt words appended after the sentence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    prompt_text: String,
    separator: String,
}

impl PromptSpec {
    pub fn new(prompt_text: impl Into<String>) -> Result<Self> {
        Self::with_separator(prompt_text, " ")
    }

    pub fn with_separator(
        prompt_text: impl Into<String>,
        separator: impl Into<String>,
    ) -> Result<Self> {
        let prompt_text = prompt_text.into();
        if prompt_text.trim().is_empty() {
            return Err(Error::Config("prompt text is empty".into()));
        }
        Ok(PromptSpec {
            prompt_text,
            separator: separator.into(),
        })
    }

    pub fn prompt_text(&self) -> &str {
        &self.prompt_text
    }

    pub fn separator(&self) -> &str {
        &self.separator
    }
}

impl Default for PromptSpec {
    fn default() -> Self {
        PromptSpec::new(BEST_PROMPT).unwrap()
    }
}

pub fn inject_prompt(sentence_text: &str, prompt: &PromptSpec) -> String {
    format!("{sentence_text}{}{}", prompt.separator, prompt.prompt_text)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PairReport {
    pub samples: usize,
    pub skipped_no_relations: usize,
    pub skipped_ungrounded: usize,
    pub skipped_unserializable: usize,
}

impl PairReport {
    pub fn skipped(&self) -> usize {
        self.skipped_no_relations + self.skipped_ungrounded + self.skipped_unserializable
    }
}

/// One sample per sentence whose gold relations are all grounded: the
/// prompted text paired with its deduplicated, canonically ordered relations.
pub fn build_training_pairs(
    split: &[Sentence],
    prompt: &PromptSpec,
) -> (Vec<LinearizedSample>, PairReport) {
    let mut report = PairReport::default();
    let mut samples = Vec::new();
    for sentence in split {
        if sentence.relations.is_empty() {
            report.skipped_no_relations += 1;
            continue;
        }
        let Ok(ordered) = canonical_order(
            &dedupe_relations(sentence.relations.iter().cloned()),
            &sentence.text,
        ) else {
            report.skipped_ungrounded += 1;
            continue;
        };
        match serialize_relations(&ordered) {
            Ok(target_text) => samples.push(LinearizedSample {
                input_text: inject_prompt(&sentence.text, prompt),
                target_text,
                sentence_id: sentence.id.clone(),
            }),
            Err(e) => {
                log::warn!("sentence {}: {e}", sentence.id);
                report.skipped_unserializable += 1;
            }
        }
    }
    report.samples = samples.len();
    (samples, report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Cosine decay from `learning_rate` to zero over all steps.
    #[serde(default)]
    pub lr_decay: bool,
    /// Decoding cap in tokens.
    pub max_target_length: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 16,
            learning_rate: 2e-3,
            lr_decay: true,
            max_target_length: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(
                "learning_rate must be a positive number".into(),
            ));
        }
        if self.max_target_length < 8 {
            return Err(Error::Config("max_target_length must be at least 8".into()));
        }
        Ok(())
    }
}

/// Summed loss over `tokens` labelled positions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLoss {
    pub loss_sum: f64,
    pub tokens: usize,
}

impl StepLoss {
    pub fn mean(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.loss_sum / self.tokens as f64
        }
    }
}

/// A trainable autoregressive text generator.
///
/// `generate` must be deterministic for fixed parameters.
pub trait GeneratorBackend: Send + Sync {
    fn context_len(&self) -> usize;

    /// Tokens a sample occupies: input, begin marker, target, end marker.
    fn sample_tokens(&self, sample: &LinearizedSample) -> Result<usize>;

    /// One optimizer step on the batch, minimizing the summed target-token
    /// cross-entropy.
    fn train_step(&mut self, batch: &[&LinearizedSample], learning_rate: f64) -> Result<StepLoss>;

    /// Greedy continuation of `prompted_input` after the begin marker, up to
    /// the end marker or `max_len` tokens.
    fn generate(&self, prompted_input: &str, max_len: usize) -> Result<String>;
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainReport {
    /// Mean per-token loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub dropped_for_length: usize,
    pub samples: usize,
    pub steps: usize,
}

/// Minibatch training with a seeded shuffle each epoch.
pub fn train<B: GeneratorBackend + ?Sized>(
    backend: &mut B,
    pairs: &[LinearizedSample],
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    let context = backend.context_len();
    let mut usable = Vec::with_capacity(pairs.len());
    for pair in pairs {
        if backend.sample_tokens(pair)? <= context {
            usable.push(pair);
        }
    }
    let dropped = pairs.len() - usable.len();
    if dropped > 0 {
        log::warn!(
            "{dropped} training pairs exceed the context length of {context} and were dropped"
        );
    }
    if usable.is_empty() {
        return Err(Error::NoTrainablePairs { dropped });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut report = TrainReport {
        dropped_for_length: dropped,
        samples: usable.len(),
        ..TrainReport::default()
    };
    let total_steps = config.epochs * usable.len().div_ceil(config.batch_size);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = StepLoss::default();
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&LinearizedSample> = chunk.iter().map(|&i| usable[i]).collect();
            let lr = learning_rate_at(config, report.steps, total_steps);
            let step = backend.train_step(&batch, lr)?;
            total.loss_sum += step.loss_sum;
            total.tokens += step.tokens;
            report.steps += 1;
        }
        log::info!("epoch {}: mean loss {:.4}", epoch + 1, total.mean());
        report.epoch_losses.push(total.mean());
    }
    if let (Some(first), Some(last)) = (report.epoch_losses.first(), report.epoch_losses.last()) {
        if last > first {
            log::warn!("final epoch loss {last:.4} is above the first epoch loss {first:.4}");
        }
    }
    Ok(report)
}

/// Step size for zero-based `step` of `total_steps`.
pub fn learning_rate_at(config: &TrainConfig, step: usize, total_steps: usize) -> f64 {
    if !config.lr_decay || total_steps == 0 {
        return config.learning_rate;
    }
    let progress = step as f64 / total_steps as f64;
    config.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// `epoch,mean_loss` with a header row.
pub fn loss_history_csv(epoch_losses: &[f64]) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for (i, loss) in epoch_losses.iter().enumerate() {
        out.push_str(&format!("{},{loss}\n", i + 1));
    }
    out
}

pub fn generate<B: GeneratorBackend + ?Sized>(
    backend: &B,
    prompted_input: &str,
    max_len: usize,
) -> Result<String> {
    if max_len == 0 {
        return Ok(String::new());
    }
    backend.generate(prompted_input, max_len)
}

/// Everything one extraction produced, for auditing.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Extraction {
    pub generated: String,
    pub relations: Vec<Relation>,
    pub malformed_segments: usize,
    pub discarded: Vec<Discarded>,
}

/// Generate, parse, drop ungrounded relations, dedupe.
pub fn extract_detailed<B: GeneratorBackend + ?Sized>(
    backend: &B,
    sentence: &Sentence,
    prompt: &PromptSpec,
    config: &TrainConfig,
) -> Result<Extraction> {
    let generated = generate(
        backend,
        &inject_prompt(&sentence.text, prompt),
        config.max_target_length,
    )?;
    let parsed = parse_relations(&generated);
    let filtered = ground_filter(&parsed.relations, &sentence.text);
    let relations = dedupe_relations(filtered.kept);
    debug_assert!(relations
        .iter()
        .all(|r| r.elements().iter().all(|e| is_grounded(e, &sentence.text))));
    Ok(Extraction {
        generated,
        relations,
        malformed_segments: parsed.dropped,
        discarded: filtered.discarded,
    })
}

pub fn extract<B: GeneratorBackend + ?Sized>(
    backend: &B,
    sentence: &Sentence,
    prompt: &PromptSpec,
    config: &TrainConfig,
) -> Result<Vec<Relation>> {
    Ok(extract_detailed(backend, sentence, prompt, config)?.relations)
}

/// Loads a checkpoint written by [`MiniBackend::save`] or
/// [`ProcessBackend::save`].
pub fn load_backend(path: impl AsRef<Path>) -> Result<Box<dyn GeneratorBackend>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    #[derive(Deserialize)]
    struct Header {
        format: String,
    }
    let header: Header = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    match header.format.as_str() {
        mini::CHECKPOINT_FORMAT => Ok(Box::new(MiniBackend::from_json(&bytes)?)),
        adapter::CHECKPOINT_FORMAT => Ok(Box::new(ProcessBackend::from_checkpoint_json(&bytes)?)),
        other => Err(Error::Checkpoint(format!(
            "unknown checkpoint format {other:?}"
        ))),
    }
}
