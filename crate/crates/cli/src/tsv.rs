//! Tab-separated corpus exports: `id<TAB>text[<TAB>t1<TAB>t2<TAB>aspect]`.
//!
//! Consecutive rows sharing an id form one sentence, one relation per row.
//! A row with only id and text is a sentence without relations.

use compex_core::{Relation, Sentence};

use crate::UsageError;

pub fn parse_tsv(content: &str) -> Result<Vec<Sentence>, UsageError> {
    let mut out: Vec<(String, String, Vec<Relation>)> = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let (id, text) = match fields.as_slice() {
            [id, text] | [id, text, _, _, _] => (id.trim(), text.trim()),
            _ => {
                return Err(UsageError(format!(
                    "line {lineno}: expected 2 or 5 tab-separated fields, found {}",
                    fields.len()
                )))
            }
        };
        if id.is_empty() || text.is_empty() {
            return Err(UsageError(format!("line {lineno}: empty id or text")));
        }
        let relation = match fields.as_slice() {
            [_, _, t1, t2, aspect] => Some(
                Relation::new(t1, t2, aspect)
                    .map_err(|e| UsageError(format!("line {lineno}: {e}")))?,
            ),
            _ => None,
        };
        match out.last_mut() {
            Some((last_id, last_text, relations)) if last_id == id => {
                if last_text != text {
                    return Err(UsageError(format!(
                        "line {lineno}: sentence {id} repeats with different text"
                    )));
                }
                relations.extend(relation);
            }
            _ => {
                if out.iter().any(|(seen, _, _)| seen == id) {
                    return Err(UsageError(format!(
                        "line {lineno}: rows of sentence {id} are not consecutive"
                    )));
                }
                out.push((
                    id.to_string(),
                    text.to_string(),
                    relation.into_iter().collect(),
                ));
            }
        }
    }
    if out.is_empty() {
        return Err(UsageError("no records".into()));
    }
    Ok(out
        .into_iter()
        .map(|(id, text, relations)| Sentence::new(id, text, relations))
        .collect())
}
