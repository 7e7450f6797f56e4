//! Train-and-predict compositions shared by the command line and the
//! experiment drivers.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::baseline::{crf_train, CrfBaseline, CrfConfig, CrfTrainReport, PairMode};
use crate::corpus::{Relation, Sentence};
use crate::error::Result;
use crate::io::record_line;
use crate::lmcore::{
    build_training_pairs, extract_detailed, train, Extraction, GeneratorBackend, MiniBackend,
    MiniConfig, PairReport, PromptSpec, TrainConfig, TrainReport,
};

/// Relations keyed by sentence id.
pub type RelationMap = BTreeMap<String, Vec<Relation>>;

pub fn gold_map(sentences: &[Sentence]) -> RelationMap {
    sentences
        .iter()
        .map(|s| (s.id.clone(), s.relations.clone()))
        .collect()
}

pub fn relation_map(sentences: &[Sentence], predictions: &[Vec<Relation>]) -> RelationMap {
    assert_eq!(sentences.len(), predictions.len());
    sentences
        .iter()
        .zip(predictions)
        .map(|(s, p)| (s.id.clone(), p.clone()))
        .collect()
}

/// One JSONL record per sentence, in input order.
pub fn predictions_jsonl(sentences: &[Sentence], predictions: &[Vec<Relation>]) -> String {
    assert_eq!(sentences.len(), predictions.len());
    sentences
        .iter()
        .zip(predictions)
        .map(|(s, p)| record_line(&s.id, &s.text, p) + "\n")
        .collect()
}

pub struct GeneratorRun {
    pub backend: MiniBackend,
    pub pairs: PairReport,
    pub training: TrainReport,
}

/// Builds pairs from `train_split`, sizes the vocabulary from them, and
/// trains a fresh mini backend.
pub fn train_mini(
    train_split: &[Sentence],
    prompt: &PromptSpec,
    train_config: &TrainConfig,
    mini_config: &MiniConfig,
) -> Result<GeneratorRun> {
    let (samples, pairs) = build_training_pairs(train_split, prompt);
    let mut backend = MiniBackend::for_samples(&samples, mini_config.clone())?;
    let training = train(&mut backend, &samples, train_config)?;
    Ok(GeneratorRun {
        backend,
        pairs,
        training,
    })
}

/// Extraction for every sentence, in input order.
pub fn predict_generator<B: GeneratorBackend + ?Sized>(
    backend: &B,
    sentences: &[Sentence],
    prompt: &PromptSpec,
    config: &TrainConfig,
) -> Result<Vec<Extraction>> {
    sentences
        .par_iter()
        .map(|s| extract_detailed(backend, s, prompt, config))
        .collect()
}

pub fn train_baseline(
    train_split: &[Sentence],
    config: &CrfConfig,
    mode: PairMode,
) -> Result<(CrfBaseline, CrfTrainReport)> {
    let (model, report) = crf_train(train_split, config)?;
    Ok((CrfBaseline { model, mode }, report))
}

pub fn predict_baseline(baseline: &CrfBaseline, sentences: &[Sentence]) -> Vec<Vec<Relation>> {
    sentences.par_iter().map(|s| baseline.extract(s)).collect()
}
