//! Comparative relation extraction.
//!
//! A comparative relation is a triple `(target, target, aspect)`, e.g. the
//! `D80` and the `D70` compared on `weight`. This crate extracts them in two
//! ways:
//!
//! * by generation: relations are written out as text (`"D80 vs. D70 in
//!   weight"`), a decoder-only language model is trained to produce that text
//!   from the prompted sentence, and every generated relation whose elements do
//!   not occur in the sentence is discarded ([`lmcore`], [`linearize`],
//!   [`filter`]);
//! * by a pipeline baseline: a linear-chain CRF tags targets and aspects and the
//!   Cartesian product of the tagged spans forms the relations ([`baseline`]).
//!
//! Both are scored by unordered exact match ([`eval`]).

pub mod baseline;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod filter;
pub mod io;
pub mod linearize;
pub mod lmcore;
pub mod pipeline;
pub mod synth;

pub use corpus::{normalize_element, Relation, Sentence};
pub use error::{Error, Result};
