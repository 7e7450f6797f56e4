//! Pipeline baseline: tag targets and aspects with a linear-chain CRF, then
//! pair every two tagged targets with every tagged aspect.

mod crf;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_element, normalized_tokens, token_spans, Relation, Sentence};
use crate::error::{Error, Result};

pub use crf::{
    crf_decode, crf_train, log_partition, path_score, viterbi, CrfConfig, CrfModel, CrfTrainReport,
    Emissions, Transitions, CHECKPOINT_FORMAT,
};

pub const NUM_TAGS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    #[serde(rename = "O")]
    O,
    #[serde(rename = "B-T")]
    BeginTarget,
    #[serde(rename = "I-T")]
    InsideTarget,
    #[serde(rename = "B-A")]
    BeginAspect,
    #[serde(rename = "I-A")]
    InsideAspect,
}

impl Tag {
    pub const ALL: [Tag; NUM_TAGS] = [
        Tag::O,
        Tag::BeginTarget,
        Tag::InsideTarget,
        Tag::BeginAspect,
        Tag::InsideAspect,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Tag> {
        Tag::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::O => "O",
            Tag::BeginTarget => "B-T",
            Tag::InsideTarget => "I-T",
            Tag::BeginAspect => "B-A",
            Tag::InsideAspect => "I-A",
        }
    }

    /// Whether `self` may follow `prev`, with `None` for the sentence start.
    pub fn may_follow(self, prev: Option<Tag>) -> bool {
        match self {
            Tag::InsideTarget => matches!(prev, Some(Tag::BeginTarget | Tag::InsideTarget)),
            Tag::InsideAspect => matches!(prev, Some(Tag::BeginAspect | Tag::InsideAspect)),
            _ => true,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Tag> {
        Tag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidTags(format!("unknown tag {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpanKind {
    Target,
    Aspect,
}

/// A valid BIO sequence over targets and aspects.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TagSequence(Vec<Tag>);

impl TagSequence {
    pub fn new(tags: Vec<Tag>) -> Result<Self> {
        let mut prev = None;
        for (i, &tag) in tags.iter().enumerate() {
            if !tag.may_follow(prev) {
                let after = prev.map_or("the start".to_string(), |p: Tag| p.to_string());
                return Err(Error::InvalidTags(format!(
                    "{tag} at position {i} follows {after}"
                )));
            }
            prev = Some(tag);
        }
        Ok(TagSequence(tags))
    }

    pub fn tags(&self) -> &[Tag] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Token ranges `[start, end)` of tagged spans, in order.
    pub fn spans(&self) -> Vec<(SpanKind, usize, usize)> {
        let mut spans: Vec<(SpanKind, usize, usize)> = Vec::new();
        for (i, tag) in self.0.iter().enumerate() {
            match tag {
                Tag::BeginTarget => spans.push((SpanKind::Target, i, i + 1)),
                Tag::BeginAspect => spans.push((SpanKind::Aspect, i, i + 1)),
                Tag::InsideTarget | Tag::InsideAspect => {
                    spans.last_mut().expect("valid BIO").2 = i + 1
                }
                Tag::O => {}
            }
        }
        spans
    }
}

impl fmt::Display for TagSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tags: Vec<&str> = self.0.iter().map(|t| t.as_str()).collect();
        f.write_str(&tags.join(" "))
    }
}

/// Projects gold relations onto token tags. Every occurrence of each element
/// is tagged; a span overlapping one tagged earlier is left alone.
pub fn gold_to_tags(sentence: &Sentence) -> Result<TagSequence> {
    let tokens = normalized_tokens(&sentence.text);
    let mut tags = vec![Tag::O; tokens.len()];
    for relation in &sentence.relations {
        let elements = [
            (relation.t1(), SpanKind::Target),
            (relation.t2(), SpanKind::Target),
            (relation.aspect(), SpanKind::Aspect),
        ];
        for (element, kind) in elements {
            let needle = normalized_tokens(&normalize_element(element));
            let starts: Vec<usize> = if needle.is_empty() || needle.len() > tokens.len() {
                Vec::new()
            } else {
                tokens
                    .windows(needle.len())
                    .enumerate()
                    .filter(|(_, w)| *w == needle.as_slice())
                    .map(|(i, _)| i)
                    .collect()
            };
            if starts.is_empty() {
                return Err(Error::Ungrounded(element.to_string()));
            }
            let (begin, inside) = match kind {
                SpanKind::Target => (Tag::BeginTarget, Tag::InsideTarget),
                SpanKind::Aspect => (Tag::BeginAspect, Tag::InsideAspect),
            };
            for start in starts {
                let span = start..start + needle.len();
                if tags[span.clone()].iter().all(|&t| t == Tag::O) {
                    tags[start] = begin;
                    tags[start + 1..span.end].fill(inside);
                }
            }
        }
    }
    Ok(TagSequence(tags))
}

/// How tagged targets are paired.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    /// Each unordered pair once, earlier target first.
    #[default]
    Unordered,
    /// Both orders of every pair.
    Ordered,
}

impl FromStr for PairMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<PairMode> {
        match s {
            "unordered" => Ok(PairMode::Unordered),
            "ordered" => Ok(PairMode::Ordered),
            _ => Err(Error::Config(format!(
                "pair mode must be unordered or ordered, got {s:?}"
            ))),
        }
    }
}

/// Cartesian product of tagged target pairs and tagged aspects. Spans with
/// the same normalized text count once.
///
/// # Panics
///
/// If `tags` does not have one tag per token of `sentence`.
pub fn tags_to_relations(sentence: &Sentence, tags: &TagSequence, mode: PairMode) -> Vec<Relation> {
    let offsets = token_spans(&sentence.text);
    assert_eq!(offsets.len(), tags.len(), "one tag per token");
    let mut targets = Vec::new();
    let mut aspects = Vec::new();
    let mut seen = HashSet::new();
    for (kind, start, end) in tags.spans() {
        let text = &sentence.text[offsets[start].0..offsets[end - 1].1];
        let list = match kind {
            SpanKind::Target => &mut targets,
            SpanKind::Aspect => &mut aspects,
        };
        let is_target = kind == SpanKind::Target;
        if seen.insert((is_target, normalize_element(text))) {
            list.push(text);
        }
    }
    let mut pairs = Vec::new();
    for i in 0..targets.len() {
        for j in 0..targets.len() {
            let keep = match mode {
                PairMode::Unordered => i < j,
                PairMode::Ordered => i != j,
            };
            if keep {
                pairs.push((targets[i], targets[j]));
            }
        }
    }
    let mut out = Vec::with_capacity(pairs.len() * aspects.len());
    for (a, b) in pairs {
        for aspect in &aspects {
            out.push(Relation::new(a, b, aspect).expect("spans are non-empty"));
        }
    }
    out
}

/// A trained CRF plus the pairing rule.
#[derive(Clone, Debug)]
pub struct CrfBaseline {
    pub model: CrfModel,
    pub mode: PairMode,
}

impl CrfBaseline {
    pub fn extract(&self, sentence: &Sentence) -> Vec<Relation> {
        tags_to_relations(sentence, &crf_decode(&self.model, sentence), self.mode)
    }
}
