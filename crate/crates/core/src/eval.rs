//! Exact-match scoring with unordered targets, breakdown by gold relation
//! count, and the prompt ablation.
//!
//! Predictions are deduplicated before scoring, so repeating a tuple is
//! neither rewarded nor penalized twice.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::corpus::{dedupe_relations, Relation, Sentence};
use crate::error::{Error, Result};
use crate::linearize::LinearizedSample;
use crate::lmcore::{build_training_pairs, train, GeneratorBackend, PromptSpec, TrainConfig};
use crate::pipeline::{gold_map, predict_generator, RelationMap};

/// Result of [`match_relations`]: `(predicted index, gold index)` pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Matching {
    pub matched: usize,
    pub pairs: Vec<(usize, usize)>,
}

/// Greedy one-to-one matching in prediction order. Each prediction takes the
/// first unmatched gold relation equal to it.
///
/// Relation equality is an equivalence, so the greedy count is the maximum
/// matching.
pub fn match_relations(predicted: &[Relation], gold: &[Relation]) -> Matching {
    let mut used = vec![false; gold.len()];
    let mut pairs = Vec::new();
    for (i, p) in predicted.iter().enumerate() {
        if let Some(j) = (0..gold.len()).find(|&j| !used[j] && gold[j] == *p) {
            used[j] = true;
            pairs.push((i, j));
        }
    }
    Matching {
        matched: pairs.len(),
        pairs,
    }
}

/// Matched relations of one sentence, after deduplication.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SentenceAudit {
    pub sentence_id: String,
    pub predicted: usize,
    pub gold: usize,
    pub matched: Vec<(Relation, Relation)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_sentence: Vec<SentenceAudit>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_counts(matched: usize, predicted: usize, gold: usize) -> Self {
        let precision = ratio(matched, predicted);
        let recall = ratio(matched, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        MetricsReport {
            precision,
            recall,
            f1,
            matched,
            predicted,
            gold,
            per_sentence: Vec::new(),
        }
    }

    fn from_audits(per_sentence: Vec<SentenceAudit>) -> Self {
        let matched = per_sentence.iter().map(|a| a.matched.len()).sum();
        let predicted = per_sentence.iter().map(|a| a.predicted).sum();
        let gold = per_sentence.iter().map(|a| a.gold).sum();
        MetricsReport {
            per_sentence,
            ..MetricsReport::from_counts(matched, predicted, gold)
        }
    }

    pub fn without_audit(&self) -> Self {
        MetricsReport {
            per_sentence: Vec::new(),
            ..self.clone()
        }
    }
}

fn check_ids(predictions: &RelationMap, gold: &RelationMap) -> Result<()> {
    let missing_predictions: Vec<String> = gold
        .keys()
        .filter(|k| !predictions.contains_key(*k))
        .cloned()
        .collect();
    let missing_gold: Vec<String> = predictions
        .keys()
        .filter(|k| !gold.contains_key(*k))
        .cloned()
        .collect();
    if missing_predictions.is_empty() && missing_gold.is_empty() {
        Ok(())
    } else {
        Err(Error::IdMismatch {
            missing_predictions,
            missing_gold,
        })
    }
}

fn audit(id: &str, predicted: &[Relation], gold: &[Relation]) -> SentenceAudit {
    let predicted = dedupe_relations(predicted.iter().cloned());
    let gold = dedupe_relations(gold.iter().cloned());
    let matching = match_relations(&predicted, &gold);
    SentenceAudit {
        sentence_id: id.to_string(),
        predicted: predicted.len(),
        gold: gold.len(),
        matched: matching
            .pairs
            .into_iter()
            .map(|(i, j)| (predicted[i].clone(), gold[j].clone()))
            .collect(),
    }
}

fn audits(predictions: &RelationMap, gold: &RelationMap) -> Result<Vec<SentenceAudit>> {
    check_ids(predictions, gold)?;
    let entries: Vec<(&String, &Vec<Relation>)> = gold.iter().collect();
    Ok(entries
        .par_iter()
        .map(|(id, g)| audit(id, &predictions[*id], g))
        .collect())
}

/// Micro-averaged metrics over the corpus. Both maps must hold the same ids.
pub fn corpus_metrics(predictions: &RelationMap, gold: &RelationMap) -> Result<MetricsReport> {
    Ok(MetricsReport::from_audits(audits(predictions, gold)?))
}

/// Sentences grouped by their number of distinct gold relations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Bucket {
    One,
    Two,
    MoreThanTwo,
}

impl Bucket {
    pub fn of(gold_relations: usize) -> Option<Bucket> {
        match gold_relations {
            0 => None,
            1 => Some(Bucket::One),
            2 => Some(Bucket::Two),
            _ => Some(Bucket::MoreThanTwo),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Bucket::One => "1",
            Bucket::Two => "2",
            Bucket::MoreThanTwo => ">2",
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for Bucket {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

/// Metrics per [`Bucket`]. Buckets without sentences are absent. Sentences
/// without gold relations fall in no bucket.
pub fn breakdown_by_count(
    predictions: &RelationMap,
    gold: &RelationMap,
) -> Result<BTreeMap<Bucket, MetricsReport>> {
    let mut grouped: BTreeMap<Bucket, Vec<SentenceAudit>> = BTreeMap::new();
    for a in audits(predictions, gold)? {
        if let Some(bucket) = Bucket::of(a.gold) {
            grouped.entry(bucket).or_default().push(a);
        }
    }
    Ok(grouped
        .into_iter()
        .map(|(b, list)| (b, MetricsReport::from_audits(list)))
        .collect())
}

/// Overall and per-bucket metrics as written by the eval command.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalSummary {
    pub overall: MetricsReport,
    pub by_count: BTreeMap<Bucket, MetricsReport>,
    pub predictions_deduplicated: bool,
}

impl EvalSummary {
    pub fn compute(predictions: &RelationMap, gold: &RelationMap) -> Result<Self> {
        Ok(EvalSummary {
            overall: corpus_metrics(predictions, gold)?,
            by_count: breakdown_by_count(predictions, gold)?
                .into_iter()
                .map(|(b, r)| (b, r.without_audit()))
                .collect(),
            predictions_deduplicated: true,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes") + "\n"
    }

    /// Aligned plain-text table, one row per bucket after the overall row.
    pub fn table(&self) -> String {
        let mut rows = vec![("all".to_string(), &self.overall)];
        rows.extend(self.by_count.iter().map(|(b, r)| {
            let name = match b {
                Bucket::MoreThanTwo => "N>2".to_string(),
                _ => format!("N={b}"),
            };
            (name, r)
        }));
        let mut out = format!(
            "{:<6} {:>9} {:>9} {:>9} {:>8} {:>10} {:>6}\n",
            "subset", "precision", "recall", "f1", "matched", "predicted", "gold"
        );
        for (name, r) in rows {
            out.push_str(&format!(
                "{:<6} {:>9.4} {:>9.4} {:>9.4} {:>8} {:>10} {:>6}\n",
                name, r.precision, r.recall, r.f1, r.matched, r.predicted, r.gold
            ));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub prompt: String,
    pub report: MetricsReport,
}

/// Trains one backend per prompt on the same split with the same
/// configuration and scores each on `eval_split`. Rows are ranked by F1,
/// best first; equal F1 keeps the input order.
///
/// `factory` receives the training pairs built for one prompt and returns an
/// untrained backend.
pub fn prompt_ablation<B, F>(
    factory: F,
    train_split: &[Sentence],
    eval_split: &[Sentence],
    prompts: &[PromptSpec],
    config: &TrainConfig,
) -> Result<Vec<AblationRow>>
where
    B: GeneratorBackend,
    F: Fn(&[LinearizedSample]) -> Result<B>,
{
    if prompts.len() < 2 {
        return Err(Error::Config(
            "an ablation needs at least two prompts".into(),
        ));
    }
    let gold = gold_map(eval_split);
    let mut rows = Vec::with_capacity(prompts.len());
    for prompt in prompts {
        let (pairs, _) = build_training_pairs(train_split, prompt);
        let mut backend = factory(&pairs)?;
        train(&mut backend, &pairs, config)?;
        let predictions: RelationMap = predict_generator(&backend, eval_split, prompt, config)?
            .into_iter()
            .zip(eval_split)
            .map(|(e, s)| (s.id.clone(), e.relations))
            .collect();
        log::info!("prompt {:?} done", prompt.prompt_text());
        rows.push(AblationRow {
            prompt: prompt.prompt_text().to_string(),
            report: corpus_metrics(&predictions, &gold)?.without_audit(),
        });
    }
    rows.sort_by(|a, b| b.report.f1.total_cmp(&a.report.f1));
    Ok(rows)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `prompt,precision,recall,f1` with a header row.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("prompt,precision,recall,f1\n");
    for row in rows {
        let r = &row.report;
        out.push_str(&format!(
            "{},{},{},{}\n",
            csv_field(&row.prompt),
            r.precision,
            r.recall,
            r.f1
        ));
    }
    out
}
