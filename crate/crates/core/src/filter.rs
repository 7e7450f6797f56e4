//! Grounding filter: a generated relation survives only if every element
//! occurs in the source text.
//!
//! An element occurs when its normalized tokens appear as a contiguous run of
//! the lowercased tokens of the text, so `her` does not match inside
//! `weather` and `image quality` does not match `image and quality`.

use serde::Serialize;

use crate::corpus::{normalize_element, normalized_tokens, Relation};

/// Tokenized text prepared for repeated element lookups.
#[derive(Clone, Debug)]
pub struct GroundingIndex {
    tokens: Vec<String>,
}

impl GroundingIndex {
    pub fn new(text: &str) -> Self {
        GroundingIndex {
            tokens: normalized_tokens(text),
        }
    }

    /// Token index of the first occurrence of `element`.
    pub fn position(&self, element: &str) -> Option<usize> {
        let needle = normalized_tokens(&normalize_element(element));
        if needle.is_empty() || needle.len() > self.tokens.len() {
            return None;
        }
        self.tokens
            .windows(needle.len())
            .position(|w| w == needle.as_slice())
    }

    pub fn contains(&self, element: &str) -> bool {
        self.position(element).is_some()
    }

    pub fn ungrounded<'r>(&self, relation: &'r Relation) -> Vec<&'r str> {
        relation
            .elements()
            .into_iter()
            .filter(|e| !self.contains(e))
            .collect()
    }
}

pub fn is_grounded(element: &str, text: &str) -> bool {
    GroundingIndex::new(text).contains(element)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Discarded {
    pub relation: Relation,
    pub offending: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FilterResult {
    pub kept: Vec<Relation>,
    pub discarded: Vec<Discarded>,
}

/// Keeps relations whose three elements are all grounded in `text`, in input
/// order.
pub fn ground_filter(relations: &[Relation], text: &str) -> FilterResult {
    let index = GroundingIndex::new(text);
    let mut result = FilterResult::default();
    for relation in relations {
        let offending = index.ungrounded(relation);
        if offending.is_empty() {
            result.kept.push(relation.clone());
        } else {
            result.discarded.push(Discarded {
                offending: offending.into_iter().map(String::from).collect(),
                relation: relation.clone(),
            });
        }
    }
    result
}
