//! Relations as generated text.
//!
//! A relation is written `"<t1> vs. <t2> in <aspect>"` and several relations
//! are joined with `"; "`. Parsing splits on `"; "`, then each segment at its
//! single `" vs. "`, then the remainder at its first `" in "`, so an aspect
//! may itself contain `" in "` but a target may not.

use serde::{Deserialize, Serialize};

use crate::corpus::Relation;
use crate::error::{Error, Result};
use crate::filter::GroundingIndex;

pub const TARGET_DELIMITER: &str = " vs. ";
pub const ASPECT_DELIMITER: &str = " in ";
pub const RELATION_SEPARATOR: &str = "; ";

/// One training example for the generator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearizedSample {
    pub input_text: String,
    pub target_text: String,
    pub sentence_id: String,
}

/// Orders targets within each relation by first occurrence in `text`, then
/// sorts relations by the first-occurrence positions of `(t1, t2, aspect)`.
///
/// The sort is stable, and targets with the same first occurrence keep their
/// order.
pub fn canonical_order(relations: &[Relation], text: &str) -> Result<Vec<Relation>> {
    let index = GroundingIndex::new(text);
    let position = |element: &str| {
        index
            .position(element)
            .ok_or_else(|| Error::Ungrounded(element.to_string()))
    };
    let mut keyed = Vec::with_capacity(relations.len());
    for relation in relations {
        let (p1, p2, pa) = (
            position(relation.t1())?,
            position(relation.t2())?,
            position(relation.aspect())?,
        );
        let (relation, p1, p2) = if p2 < p1 {
            (relation.swapped(), p2, p1)
        } else {
            (relation.clone(), p1, p2)
        };
        keyed.push(((p1, p2, pa), relation));
    }
    keyed.sort_by_key(|k| k.0);
    Ok(keyed.into_iter().map(|(_, r)| r).collect())
}

fn render(relation: &Relation) -> String {
    format!(
        "{}{TARGET_DELIMITER}{}{ASPECT_DELIMITER}{}",
        relation.t1(),
        relation.t2(),
        relation.aspect()
    )
}

fn check_elements(relation: &Relation) -> Result<()> {
    for element in relation.elements() {
        for reserved in [RELATION_SEPARATOR, TARGET_DELIMITER] {
            if element.contains(reserved) {
                return Err(Error::Serialize(format!(
                    "element {element:?} contains reserved delimiter {reserved:?}"
                )));
            }
        }
        if element.contains('\n') {
            return Err(Error::Serialize(format!(
                "element {element:?} contains a newline"
            )));
        }
    }
    for target in [relation.t1(), relation.t2()] {
        if target.contains(ASPECT_DELIMITER) {
            return Err(Error::Serialize(format!(
                "target {target:?} contains reserved delimiter {ASPECT_DELIMITER:?}"
            )));
        }
    }
    Ok(())
}

/// Renders relations in the given order.
///
/// Fails on an empty list and on any relation whose text would not parse
/// back to the same fields.
pub fn serialize_relations(relations: &[Relation]) -> Result<String> {
    if relations.is_empty() {
        return Err(Error::Serialize("no relations".into()));
    }
    for relation in relations {
        check_elements(relation)?;
    }
    let text = relations
        .iter()
        .map(render)
        .collect::<Vec<_>>()
        .join(RELATION_SEPARATOR);
    let parsed = parse_relations(&text);
    let same = parsed.dropped == 0
        && parsed.relations.len() == relations.len()
        && parsed
            .relations
            .iter()
            .zip(relations)
            .all(|(a, b)| a.same_fields(b));
    if !same {
        return Err(Error::Serialize(format!("ambiguous rendering {text:?}")));
    }
    Ok(text)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParseOutcome {
    pub relations: Vec<Relation>,
    /// Non-blank segments that did not match the relation pattern.
    pub dropped: usize,
}

fn parse_segment(segment: &str) -> Option<Relation> {
    let mut parts = segment.split(TARGET_DELIMITER);
    let (t1, rest) = (parts.next()?, parts.next()?);
    if parts.next().is_some() {
        return None;
    }
    let (t2, aspect) = rest.split_once(ASPECT_DELIMITER)?;
    Relation::new(t1, t2, aspect).ok()
}

/// Parses arbitrary decoder output. Never fails; unparseable segments are
/// counted in [`ParseOutcome::dropped`].
pub fn parse_relations(generated: &str) -> ParseOutcome {
    let mut outcome = ParseOutcome::default();
    for segment in generated.split(RELATION_SEPARATOR) {
        let segment = segment.trim();
        if segment.is_empty() {
            continue;
        }
        match parse_segment(segment) {
            Some(r) => outcome.relations.push(r),
            None => outcome.dropped += 1,
        }
    }
    outcome
}

/// Whether `relations` already are in [`canonical_order`] for `text`.
pub fn is_canonical(relations: &[Relation], text: &str) -> bool {
    match canonical_order(relations, text) {
        Ok(ordered) => ordered.iter().zip(relations).all(|(a, b)| a.same_fields(b)),
        Err(_) => false,
    }
}
