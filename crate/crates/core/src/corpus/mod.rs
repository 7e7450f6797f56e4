//! Relations, sentences, and dataset handling.

mod augment;
mod split;
mod tokenize;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::GroundingIndex;

pub use augment::augment_concat;
pub use split::{split_dataset, split_sizes, DatasetSplit, MIN_SPLIT_SENTENCES};
pub use tokenize::{detokenizes_to, normalized_tokens, token_spans, tokenize};

/// Lowercases, trims, and collapses internal whitespace runs to one space.
pub fn normalize_element(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Deserialize)]
struct RawRelation {
    t1: String,
    t2: String,
    aspect: String,
}

/// A comparative relation: two targets compared on an aspect.
///
/// Equality and hashing treat the targets as an unordered pair and compare
/// every element after [`normalize_element`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawRelation")]
pub struct Relation {
    t1: String,
    t2: String,
    aspect: String,
}

impl TryFrom<RawRelation> for Relation {
    type Error = Error;

    fn try_from(raw: RawRelation) -> Result<Self> {
        Relation::new(raw.t1, raw.t2, raw.aspect)
    }
}

/// Normalized, order-free identity of a [`Relation`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationKey {
    pub targets: (String, String),
    pub aspect: String,
}

impl Relation {
    /// Elements are trimmed; each must be non-empty afterwards.
    pub fn new(t1: impl AsRef<str>, t2: impl AsRef<str>, aspect: impl AsRef<str>) -> Result<Self> {
        let (t1, t2, aspect) = (
            t1.as_ref().trim(),
            t2.as_ref().trim(),
            aspect.as_ref().trim(),
        );
        for (name, value) in [("t1", t1), ("t2", t2), ("aspect", aspect)] {
            if value.is_empty() {
                return Err(Error::InvalidRelation(format!("{name} is empty")));
            }
        }
        Ok(Relation {
            t1: t1.to_string(),
            t2: t2.to_string(),
            aspect: aspect.to_string(),
        })
    }

    pub fn t1(&self) -> &str {
        &self.t1
    }

    pub fn t2(&self) -> &str {
        &self.t2
    }

    pub fn aspect(&self) -> &str {
        &self.aspect
    }

    pub fn elements(&self) -> [&str; 3] {
        [&self.t1, &self.t2, &self.aspect]
    }

    pub fn swapped(&self) -> Relation {
        Relation {
            t1: self.t2.clone(),
            t2: self.t1.clone(),
            aspect: self.aspect.clone(),
        }
    }

    pub fn key(&self) -> RelationKey {
        let a = normalize_element(&self.t1);
        let b = normalize_element(&self.t2);
        let targets = if a <= b { (a, b) } else { (b, a) };
        RelationKey {
            targets,
            aspect: normalize_element(&self.aspect),
        }
    }

    /// Field-for-field equality, targets ordered, no normalization.
    pub fn same_fields(&self, other: &Relation) -> bool {
        self.t1 == other.t1 && self.t2 == other.t2 && self.aspect == other.aspect
    }
}

impl PartialEq for Relation {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Relation {}

impl Hash for Relation {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.t1, self.t2, self.aspect)
    }
}

/// Drops later duplicates under relation equality, keeping first-seen order.
pub fn dedupe_relations(relations: impl IntoIterator<Item = Relation>) -> Vec<Relation> {
    let mut seen = HashSet::new();
    relations
        .into_iter()
        .filter(|r| seen.insert(r.key()))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sentence {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub relations: Vec<Relation>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, text: impl Into<String>, relations: Vec<Relation>) -> Self {
        let text = text.into();
        Sentence {
            id: id.into(),
            tokens: tokenize(&text),
            text,
            relations,
        }
    }

    /// Elements of gold relations that do not occur in the text, as
    /// `(relation index, element)`.
    pub fn ungrounded_elements(&self) -> Vec<(usize, String)> {
        let index = GroundingIndex::new(&self.text);
        let mut out = Vec::new();
        for (i, rel) in self.relations.iter().enumerate() {
            for element in rel.elements() {
                if !index.contains(element) {
                    out.push((i, element.to_string()));
                }
            }
        }
        out
    }
}

/// A gold element that could not be found in its sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundingWarning {
    pub line: usize,
    pub sentence_id: String,
    pub relation: usize,
    pub element: String,
}

impl fmt::Display for GroundingWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}: sentence {}: element {:?} of relation {} is not grounded in the text",
            self.line, self.sentence_id, self.element, self.relation
        )
    }
}

#[derive(Clone, Debug, Default)]
pub struct LoadedDataset {
    pub sentences: Vec<Sentence>,
    pub warnings: Vec<GroundingWarning>,
}

#[derive(Deserialize)]
struct Record {
    id: Option<String>,
    text: String,
    relations: Option<Vec<Relation>>,
}

/// Reads a JSONL dataset: one `{"id"?, "text", "relations"}` object per line.
///
/// Blank lines are skipped. Records without an id get their 1-based line
/// number. Ungrounded gold elements become warnings.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<LoadedDataset> {
    load_records(path.as_ref(), true)
}

/// Like [`load_dataset`] but the `relations` field may be omitted, for
/// inputs that only need text.
pub fn load_inputs(path: impl AsRef<Path>) -> Result<LoadedDataset> {
    load_records(path.as_ref(), false)
}

fn load_records(path: &Path, require_relations: bool) -> Result<LoadedDataset> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&content, require_relations).map_err(|e| match e {
        Error::EmptyDataset(_) => Error::EmptyDataset(path.to_path_buf()),
        other => other,
    })
}

pub(crate) fn parse_records(content: &str, require_relations: bool) -> Result<LoadedDataset> {
    let mut out = LoadedDataset::default();
    let mut ids = HashSet::new();
    for (lineno, line) in content.lines().enumerate() {
        let line_no = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let relations = match record.relations {
            Some(r) => r,
            None if require_relations => {
                return Err(Error::Malformed {
                    line: line_no,
                    message: "missing field `relations`".into(),
                })
            }
            None => Vec::new(),
        };
        if record.text.trim().is_empty() {
            return Err(Error::Malformed {
                line: line_no,
                message: "text is empty".into(),
            });
        }
        let id = record.id.unwrap_or_else(|| line_no.to_string());
        if !ids.insert(id.clone()) {
            return Err(Error::Malformed {
                line: line_no,
                message: format!("duplicate id {id:?}"),
            });
        }
        let sentence = Sentence::new(id, record.text, relations);
        for (relation, element) in sentence.ungrounded_elements() {
            out.warnings.push(GroundingWarning {
                line: line_no,
                sentence_id: sentence.id.clone(),
                relation,
                element,
            });
        }
        out.sentences.push(sentence);
    }
    if out.sentences.is_empty() {
        return Err(Error::EmptyDataset(Default::default()));
    }
    Ok(out)
}

/// Corpus counts and the distribution of relations per sentence.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetStats {
    pub sentences: usize,
    pub relations: usize,
    /// Sentences per relation count, including the zero bucket.
    pub counts: BTreeMap<usize, usize>,
    /// `counts` as fractions of all sentences.
    pub fractions: BTreeMap<usize, f64>,
    /// Fractions over sentences with at least one relation.
    pub comparative_fractions: BTreeMap<usize, f64>,
}

impl DatasetStats {
    pub fn fraction(&self, relations: usize) -> f64 {
        self.fractions.get(&relations).copied().unwrap_or(0.0)
    }

    pub fn comparative_fraction(&self, relations: usize) -> f64 {
        self.comparative_fractions
            .get(&relations)
            .copied()
            .unwrap_or(0.0)
    }

    /// Fraction of sentences with more than `n` relations.
    pub fn fraction_above(&self, n: usize) -> f64 {
        self.fractions.range(n + 1..).map(|(_, f)| f).sum()
    }
}

pub fn dataset_stats(sentences: &[Sentence]) -> DatasetStats {
    let mut counts = BTreeMap::new();
    for s in sentences {
        *counts.entry(s.relations.len()).or_insert(0) += 1;
    }
    let total = sentences.len();
    let comparative = total - counts.get(&0).copied().unwrap_or(0);
    let fractions = counts
        .iter()
        .map(|(&k, &v)| (k, v as f64 / total as f64))
        .collect();
    let comparative_fractions = counts
        .iter()
        .filter(|(&k, _)| k > 0)
        .map(|(&k, &v)| (k, v as f64 / comparative as f64))
        .collect();
    DatasetStats {
        sentences: total,
        relations: sentences.iter().map(|s| s.relations.len()).sum(),
        counts,
        fractions,
        comparative_fractions,
    }
}
