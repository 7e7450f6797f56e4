//! File output. Every file is written to a temporary sibling and renamed
//! into place.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::corpus::{Relation, Sentence};
use crate::error::{Error, Result};

pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    text: &'a str,
    relations: RelationsOut<'a>,
}

#[derive(Serialize)]
#[serde(transparent)]
struct RelationsOut<'a>(Vec<RelationOut<'a>>);

#[derive(Serialize)]
pub(crate) struct RelationOut<'a> {
    t1: &'a str,
    t2: &'a str,
    aspect: &'a str,
}

impl<'a> From<&'a Relation> for RelationOut<'a> {
    fn from(r: &'a Relation) -> Self {
        RelationOut {
            t1: r.t1(),
            t2: r.t2(),
            aspect: r.aspect(),
        }
    }
}

/// One dataset record as a JSON line (no trailing newline).
pub fn record_line(id: &str, text: &str, relations: &[Relation]) -> String {
    let record = RecordOut {
        id,
        text,
        relations: RelationsOut(relations.iter().map(RelationOut::from).collect()),
    };
    serde_json::to_string(&record).expect("records always serialize")
}

pub fn sentences_to_jsonl(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&record_line(&s.id, &s.text, &s.relations));
        out.push('\n');
    }
    out
}

pub fn write_sentences(path: impl AsRef<Path>, sentences: &[Sentence]) -> Result<()> {
    write_atomic(path, sentences_to_jsonl(sentences).as_bytes())
}
