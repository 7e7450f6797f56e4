//! Linear-chain CRF over the five BIO tags.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gold_to_tags, Tag, TagSequence, NUM_TAGS};
use crate::corpus::{token_spans, Sentence};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const CHECKPOINT_FORMAT: &str = "compex-crf";
const CHECKPOINT_VERSION: u32 = 1;

/// Per-token label scores.
pub type Emissions = Vec<[f64; NUM_TAGS]>;
/// `transitions[prev][next]`.
pub type Transitions = [[f64; NUM_TAGS]; NUM_TAGS];

fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Total score of one label path.
pub fn path_score(
    emissions: &[[f64; NUM_TAGS]],
    start: &[f64; NUM_TAGS],
    transitions: &Transitions,
    path: &[usize],
) -> f64 {
    assert_eq!(emissions.len(), path.len());
    let mut score = 0.0;
    for (t, &y) in path.iter().enumerate() {
        score += emissions[t][y];
        score += if t == 0 {
            start[y]
        } else {
            transitions[path[t - 1]][y]
        };
    }
    score
}

fn forward(
    emissions: &[[f64; NUM_TAGS]],
    start: &[f64; NUM_TAGS],
    transitions: &Transitions,
) -> Emissions {
    let mut alpha: Emissions = Vec::with_capacity(emissions.len());
    for (t, e) in emissions.iter().enumerate() {
        let row = std::array::from_fn(|y| {
            let incoming = if t == 0 {
                start[y]
            } else {
                log_sum_exp((0..NUM_TAGS).map(|k| alpha[t - 1][k] + transitions[k][y]))
            };
            incoming + e[y]
        });
        alpha.push(row);
    }
    alpha
}

fn backward(emissions: &[[f64; NUM_TAGS]], transitions: &Transitions) -> Emissions {
    let n = emissions.len();
    let mut beta = vec![[0.0; NUM_TAGS]; n];
    for t in (0..n.saturating_sub(1)).rev() {
        beta[t] = std::array::from_fn(|k| {
            log_sum_exp(
                (0..NUM_TAGS).map(|y| transitions[k][y] + emissions[t + 1][y] + beta[t + 1][y]),
            )
        });
    }
    beta
}

/// Log of the summed exponentiated scores of all paths. An empty sequence
/// has one empty path, so the result is 0.
pub fn log_partition(
    emissions: &[[f64; NUM_TAGS]],
    start: &[f64; NUM_TAGS],
    transitions: &Transitions,
) -> f64 {
    match forward(emissions, start, transitions).last() {
        Some(last) => log_sum_exp(last.iter().copied()),
        None => 0.0,
    }
}

/// Highest-scoring path. Ties go to the lowest label index.
pub fn viterbi(
    emissions: &[[f64; NUM_TAGS]],
    start: &[f64; NUM_TAGS],
    transitions: &Transitions,
) -> Vec<usize> {
    let n = emissions.len();
    if n == 0 {
        return Vec::new();
    }
    let mut best: [f64; NUM_TAGS] = std::array::from_fn(|y| start[y] + emissions[0][y]);
    let mut back = vec![[0usize; NUM_TAGS]; n];
    for t in 1..n {
        let mut next = [f64::NEG_INFINITY; NUM_TAGS];
        for y in 0..NUM_TAGS {
            let mut arg = 0;
            let mut top = f64::NEG_INFINITY;
            for k in 0..NUM_TAGS {
                let s = best[k] + transitions[k][y];
                if s > top {
                    top = s;
                    arg = k;
                }
            }
            next[y] = top + emissions[t][y];
            back[t][y] = arg;
        }
        best = next;
    }
    let mut y = argmax(&best);
    let mut path = vec![y; n];
    for t in (1..n).rev() {
        y = back[t][y];
        path[t - 1] = y;
    }
    path
}

fn argmax(row: &[f64; NUM_TAGS]) -> usize {
    let mut arg = 0;
    for y in 1..NUM_TAGS {
        if row[y] > row[arg] {
            arg = y;
        }
    }
    arg
}

fn token_features(tokens: &[&str], i: usize) -> Vec<String> {
    let word = tokens[i];
    let lower = word.to_lowercase();
    let prev = if i == 0 {
        "<s>".to_string()
    } else {
        tokens[i - 1].to_lowercase()
    };
    let next = tokens
        .get(i + 1)
        .map_or("</s>".to_string(), |w| w.to_lowercase());
    let prefix: String = lower.chars().take(3).collect();
    let suffix: String = {
        let chars: Vec<char> = lower.chars().collect();
        chars[chars.len().saturating_sub(3)..].iter().collect()
    };
    let mut features = vec![
        "bias".to_string(),
        format!("w={word}"),
        format!("lw={lower}"),
        format!("pw={prev}"),
        format!("nw={next}"),
        format!("p3={prefix}"),
        format!("s3={suffix}"),
    ];
    if word.chars().all(|c| c.is_ascii_digit()) {
        features.push("digit".to_string());
    }
    if word.chars().any(|c| c.is_ascii_digit()) {
        features.push("has_digit".to_string());
    }
    if word.chars().next().is_some_and(char::is_uppercase) {
        features.push("cap".to_string());
    }
    features
}

fn sentence_features(text: &str) -> Vec<Vec<String>> {
    let tokens: Vec<&str> = token_spans(text)
        .into_iter()
        .map(|(a, b)| &text[a..b])
        .collect();
    (0..tokens.len())
        .map(|i| token_features(&tokens, i))
        .collect()
}

fn mask() -> ([f64; NUM_TAGS], Transitions) {
    let start = std::array::from_fn(|y| {
        if Tag::ALL[y].may_follow(None) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    });
    let transitions = std::array::from_fn(|k| {
        std::array::from_fn(|y| {
            if Tag::ALL[y].may_follow(Some(Tag::ALL[k])) {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        })
    });
    (start, transitions)
}

/// Weights of a trained CRF. Invalid BIO moves score negative infinity.
#[derive(Clone, Debug, PartialEq)]
pub struct CrfModel {
    features: HashMap<String, usize>,
    weights: Vec<[f64; NUM_TAGS]>,
    start: [f64; NUM_TAGS],
    transitions: Transitions,
}

impl Default for CrfModel {
    fn default() -> Self {
        let (start, transitions) = mask();
        CrfModel {
            features: HashMap::new(),
            weights: Vec::new(),
            start,
            transitions,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CrfFile {
    format: String,
    version: u32,
    labels: Vec<Tag>,
    start: Vec<Option<f64>>,
    transitions: Vec<Vec<Option<f64>>>,
    features: BTreeMap<String, Vec<f64>>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl CrfModel {
    pub fn start(&self) -> &[f64; NUM_TAGS] {
        &self.start
    }

    pub fn transitions(&self) -> &Transitions {
        &self.transitions
    }

    pub fn num_features(&self) -> usize {
        self.weights.len()
    }

    /// Label scores per token. Features unseen in training contribute nothing.
    pub fn emissions(&self, text: &str) -> Emissions {
        sentence_features(text)
            .iter()
            .map(|features| self.score_features(&self.lookup(features)))
            .collect()
    }

    fn lookup(&self, features: &[String]) -> Vec<usize> {
        features
            .iter()
            .filter_map(|f| self.features.get(f).copied())
            .collect()
    }

    fn intern(&mut self, features: &[String]) -> Vec<usize> {
        features
            .iter()
            .map(|f| {
                let next = self.weights.len();
                *self.features.entry(f.clone()).or_insert_with(|| {
                    self.weights.push([0.0; NUM_TAGS]);
                    next
                })
            })
            .collect()
    }

    fn score_features(&self, ids: &[usize]) -> [f64; NUM_TAGS] {
        let mut row = [0.0; NUM_TAGS];
        for &f in ids {
            for (r, w) in row.iter_mut().zip(&self.weights[f]) {
                *r += w;
            }
        }
        row
    }

    fn to_file(&self) -> CrfFile {
        CrfFile {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            labels: Tag::ALL.to_vec(),
            start: self.start.iter().copied().map(finite).collect(),
            transitions: self
                .transitions
                .iter()
                .map(|row| row.iter().copied().map(finite).collect())
                .collect(),
            features: self
                .features
                .iter()
                .map(|(name, &i)| (name.clone(), self.weights[i].to_vec()))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("model serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let file: CrfFile =
            serde_json::from_slice(bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "expected {CHECKPOINT_FORMAT} version {CHECKPOINT_VERSION}, found {} version {}",
                file.format, file.version
            )));
        }
        if file.labels != Tag::ALL {
            return Err(Error::Checkpoint("label set differs".into()));
        }
        let row = |values: &[Option<f64>]| -> Result<[f64; NUM_TAGS]> {
            let values: Vec<f64> = values
                .iter()
                .map(|v| v.unwrap_or(f64::NEG_INFINITY))
                .collect();
            values
                .try_into()
                .map_err(|_| Error::Checkpoint(format!("expected {NUM_TAGS} values per row")))
        };
        let start = row(&file.start)?;
        let rows: Vec<[f64; NUM_TAGS]> = file
            .transitions
            .iter()
            .map(|r| row(r))
            .collect::<Result<_>>()?;
        let transitions: Transitions = rows
            .try_into()
            .map_err(|_| Error::Checkpoint(format!("expected {NUM_TAGS} transition rows")))?;
        let (valid_start, valid_transitions) = mask();
        let masked_ok = (0..NUM_TAGS).all(|y| {
            (start[y].is_finite() == valid_start[y].is_finite())
                && (0..NUM_TAGS)
                    .all(|k| transitions[k][y].is_finite() == valid_transitions[k][y].is_finite())
        });
        if !masked_ok {
            return Err(Error::Checkpoint(
                "transition mask does not match BIO constraints".into(),
            ));
        }
        let mut model = CrfModel {
            start,
            transitions,
            ..CrfModel::default()
        };
        for (name, weights) in file.features {
            model.features.insert(name, model.weights.len());
            model
                .weights
                .push(row(&weights.into_iter().map(Some).collect::<Vec<_>>())?);
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        CrfModel::from_json(&bytes)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrfConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for CrfConfig {
    fn default() -> Self {
        CrfConfig {
            epochs: 20,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CrfTrainReport {
    /// Training-set log-likelihood accumulated during each epoch.
    pub epoch_log_likelihood: Vec<f64>,
    pub sentences: usize,
    pub skipped_ungrounded: usize,
}

/// Stochastic gradient ascent on the conditional log-likelihood, one
/// sentence at a time in a seeded order.
pub fn crf_train(sentences: &[Sentence], config: &CrfConfig) -> Result<(CrfModel, CrfTrainReport)> {
    if config.epochs == 0 || config.learning_rate.is_nan() || config.learning_rate <= 0.0 {
        return Err(Error::Config(
            "crf epochs and learning rate must be positive".into(),
        ));
    }
    let mut model = CrfModel::default();
    let mut report = CrfTrainReport::default();
    let mut data: Vec<(Vec<Vec<usize>>, Vec<usize>)> = Vec::new();
    for sentence in sentences {
        let Ok(tags) = gold_to_tags(sentence) else {
            report.skipped_ungrounded += 1;
            continue;
        };
        let ids = sentence_features(&sentence.text)
            .iter()
            .map(|f| model.intern(f))
            .collect();
        data.push((ids, tags.tags().iter().map(|t| t.index()).collect()));
    }
    if data.is_empty() {
        return Err(Error::NoTaggableSentences {
            skipped: report.skipped_ungrounded,
        });
    }
    report.sentences = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let lr = config.learning_rate;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let (ids, gold) = &data[i];
            if gold.is_empty() {
                continue;
            }
            let emissions: Emissions = ids.iter().map(|f| model.score_features(f)).collect();
            let alpha = forward(&emissions, &model.start, &model.transitions);
            let beta = backward(&emissions, &model.transitions);
            let log_z = log_sum_exp(alpha[alpha.len() - 1].iter().copied());
            total += path_score(&emissions, &model.start, &model.transitions, gold) - log_z;

            for (t, features) in ids.iter().enumerate() {
                let delta: [f64; NUM_TAGS] = std::array::from_fn(|y| {
                    let observed = if gold[t] == y { 1.0 } else { 0.0 };
                    observed - (alpha[t][y] + beta[t][y] - log_z).exp()
                });
                for &f in features {
                    for (w, d) in model.weights[f].iter_mut().zip(&delta) {
                        *w += lr * d;
                    }
                }
                if t == 0 {
                    for (s, d) in model.start.iter_mut().zip(&delta) {
                        if s.is_finite() {
                            *s += lr * d;
                        }
                    }
                    continue;
                }
                let mut grad = [[0.0; NUM_TAGS]; NUM_TAGS];
                grad[gold[t - 1]][gold[t]] += 1.0;
                for k in 0..NUM_TAGS {
                    for y in 0..NUM_TAGS {
                        let s = alpha[t - 1][k]
                            + model.transitions[k][y]
                            + emissions[t][y]
                            + beta[t][y]
                            - log_z;
                        grad[k][y] -= s.exp();
                    }
                }
                for (row, grad_row) in model.transitions.iter_mut().zip(&grad) {
                    for (w, g) in row.iter_mut().zip(grad_row) {
                        if w.is_finite() {
                            *w += lr * g;
                        }
                    }
                }
            }
        }
        if let Some(&last) = report.epoch_log_likelihood.last() {
            if total < last {
                warn!(
                    "crf epoch {}: log-likelihood fell from {last:.4} to {total:.4}",
                    epoch + 1
                );
            }
        }
        report.epoch_log_likelihood.push(total);
    }
    Ok((model, report))
}

pub fn crf_decode(model: &CrfModel, sentence: &Sentence) -> TagSequence {
    let path = viterbi(
        &model.emissions(&sentence.text),
        &model.start,
        &model.transitions,
    );
    TagSequence::new(path.into_iter().map(|y| Tag::ALL[y]).collect())
        .expect("masked transitions give valid BIO")
}
