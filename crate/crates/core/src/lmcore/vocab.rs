//! Word-level vocabulary for the mini backend.
//!
//! Text is lowercased and split on whitespace into words; each word is cut
//! with the corpus tokenizer and every piece after the first is marked with
//! a `##` prefix, meaning "no space before". Decoding is lossless up to
//! case and whitespace runs: `"D80 vs. D70; x"` encodes as
//! `d80 vs ##. d70 ##; x` and decodes to `"d80 vs. d70; x"`.

use std::collections::{BTreeSet, HashMap};

use crate::corpus::tokenize;
use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
const GLUE: &str = "##";

pub fn lm_pieces(text: &str) -> Vec<String> {
    let mut pieces = Vec::new();
    for word in text.to_lowercase().split_whitespace() {
        for (i, piece) in tokenize(word).into_iter().enumerate() {
            if i == 0 {
                pieces.push(piece);
            } else {
                pieces.push(format!("{GLUE}{piece}"));
            }
        }
    }
    pieces
}

pub fn join_pieces<'a>(pieces: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for piece in pieces {
        match piece.strip_prefix(GLUE) {
            Some(rest) if !out.is_empty() => out.push_str(rest),
            _ => {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(piece);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    pieces: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub const UNK_ID: usize = 0;
    pub const BOS_ID: usize = 1;
    pub const EOS_ID: usize = 2;

    /// Special markers first, then every distinct piece of `texts` in sorted
    /// order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let distinct: BTreeSet<String> = texts.into_iter().flat_map(lm_pieces).collect();
        let pieces = [UNK, BOS, EOS]
            .into_iter()
            .map(String::from)
            .chain(
                distinct
                    .into_iter()
                    .filter(|p| ![UNK, BOS, EOS].contains(&p.as_str())),
            )
            .collect();
        Self::from_pieces(pieces).expect("built vocabularies are well formed")
    }

    pub fn from_pieces(pieces: Vec<String>) -> Result<Self> {
        if pieces.len() < 3 || pieces[0] != UNK || pieces[1] != BOS || pieces[2] != EOS {
            return Err(Error::Checkpoint(
                "vocabulary must start with <unk> <bos> <eos>".into(),
            ));
        }
        let index: HashMap<String, usize> = pieces
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        if index.len() != pieces.len() {
            return Err(Error::Checkpoint("vocabulary has duplicate entries".into()));
        }
        Ok(Vocab { pieces, index })
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn id(&self, piece: &str) -> usize {
        self.index.get(piece).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        lm_pieces(text).iter().map(|p| self.id(p)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        join_pieces(
            ids.iter()
                .map(|&i| self.pieces.get(i).map_or(UNK, String::as_str)),
        )
    }
}
