//! Templated comparative sentences with known gold relations.
//!
//! Targets are camera models and aspects are camera properties, drawn from
//! fixed lexicons. Some single-relation templates also mention a camera that
//! takes part in no relation.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Relation, Sentence};
use crate::error::{Error, Result};

pub const TARGETS: [&str; 24] = [
    "d80",
    "d70",
    "d90",
    "d300",
    "a700",
    "a350",
    "x100",
    "g12",
    "g11",
    "s95",
    "s90",
    "k10d",
    "k20d",
    "e520",
    "gf1",
    "nex5",
    "lx3",
    "tz5",
    "sx200",
    "p6000",
    "eos 50d",
    "eos 40d",
    "coolpix p90",
    "finepix s100",
];

pub const ASPECTS: [&str; 16] = [
    "weight",
    "price",
    "battery life",
    "image quality",
    "zoom",
    "autofocus",
    "low light performance",
    "build quality",
    "screen",
    "video",
    "grip",
    "noise",
    "menu",
    "viewfinder",
    "startup time",
    "lens",
];

const ADJECTIVES: [&str; 4] = ["better", "much better", "worse", "slightly better"];

struct Template {
    text: &'static str,
    relations: &'static [(&'static str, &'static str, &'static str)],
}

macro_rules! t {
    ($text:expr, [$(($a:literal, $b:literal, $c:literal)),* $(,)?]) => {
        Template { text: $text, relations: &[$(($a, $b, $c)),*] }
    };
}

const ONE: &[Template] = &[
    t!("the {a} is {adj} than the {b} in {x} .", [("a", "b", "x")]),
    t!("{a} beats {b} on {x} .", [("a", "b", "x")]),
    t!(
        "compared to the {b} , the {a} has {adj} {x} .",
        [("a", "b", "x")]
    ),
    t!(
        "i think the {a} has {adj} {x} than the {b} .",
        [("a", "b", "x")]
    ),
    t!(
        "{x} on the {a} is {adj} than on the {b} .",
        [("a", "b", "x")]
    ),
    t!("the {a} and the {b} differ in {x} .", [("a", "b", "x")]),
    t!(
        "for {x} , i prefer the {a} over the {b} .",
        [("a", "b", "x")]
    ),
    t!(
        "the {a} wins over the {b} when it comes to {x} .",
        [("a", "b", "x")]
    ),
    t!(
        "my old {c} broke , and now the {a} has {adj} {x} than the {b} .",
        [("a", "b", "x")]
    ),
    t!(
        "i sold the {c} because the {a} beats the {b} on {x} .",
        [("a", "b", "x")]
    ),
];

const TWO: &[Template] = &[
    t!(
        "{a} beats {b} and {c} on {x} .",
        [("a", "b", "x"), ("a", "c", "x")]
    ),
    t!(
        "the {a} has {adj} {x} and {y} than the {b} .",
        [("a", "b", "x"), ("a", "b", "y")]
    ),
    t!(
        "{a} beats {b} on {x} , but {c} beats {d} on {y} .",
        [("a", "b", "x"), ("c", "d", "y")]
    ),
    t!(
        "the {a} is {adj} than the {b} in {x} , while the {c} has {adj} {y} than the {d} .",
        [("a", "b", "x"), ("c", "d", "y")]
    ),
    t!(
        "the {a} beats the {b} on {x} and the {c} on {y} .",
        [("a", "b", "x"), ("a", "c", "y")]
    ),
];

const THREE: &[Template] = &[
    t!(
        "{a} beats {b} , {c} and {d} on {x} .",
        [("a", "b", "x"), ("a", "c", "x"), ("a", "d", "x")]
    ),
    t!(
        "the {a} is {adj} than the {b} in {x} , {y} and {z} .",
        [("a", "b", "x"), ("a", "b", "y"), ("a", "b", "z")]
    ),
    t!(
        "{a} beats {b} on {x} , {c} beats {d} on {y} and {e} beats {f} on {z} .",
        [("a", "b", "x"), ("c", "d", "y"), ("e", "f", "z")]
    ),
];

const FOUR: &[Template] = &[
    t!(
        "{a} beats {b} and {c} on {x} and {y} .",
        [("a", "b", "x"), ("a", "b", "y"), ("a", "c", "x"), ("a", "c", "y")]
    ),
    t!(
        "the {a} is {adj} than the {b} in {x} and {y} , and the {c} is {adj} than the {d} in {z} and {w} .",
        [("a", "b", "x"), ("a", "b", "y"), ("c", "d", "z"), ("c", "d", "w")]
    ),
];

fn templates_for(relations: usize) -> Option<&'static [Template]> {
    match relations {
        1 => Some(ONE),
        2 => Some(TWO),
        3 => Some(THREE),
        4 => Some(FOUR),
        _ => None,
    }
}

const TARGET_SLOTS: [&str; 6] = ["a", "b", "c", "d", "e", "f"];
const ASPECT_SLOTS: [&str; 4] = ["x", "y", "z", "w"];

fn instantiate(template: &Template, id: String, rng: &mut impl Rng) -> Sentence {
    let targets: Vec<&str> = TARGETS
        .choose_multiple(rng, TARGET_SLOTS.len())
        .copied()
        .collect();
    let aspects: Vec<&str> = ASPECTS
        .choose_multiple(rng, ASPECT_SLOTS.len())
        .copied()
        .collect();
    let mut fill: BTreeMap<&str, &str> = BTreeMap::new();
    fill.extend(TARGET_SLOTS.iter().copied().zip(targets));
    fill.extend(ASPECT_SLOTS.iter().copied().zip(aspects));
    let mut text = template.text.to_string();
    for (slot, value) in &fill {
        text = text.replace(&format!("{{{slot}}}"), value);
    }
    while text.contains("{adj}") {
        let adj = ADJECTIVES.choose(rng).expect("non-empty");
        text = text.replacen("{adj}", adj, 1);
    }
    let relations = template
        .relations
        .iter()
        .map(|(a, b, x)| {
            Relation::new(fill[a], fill[b], fill[x]).expect("lexicon entries are non-empty")
        })
        .collect();
    Sentence::new(id, text, relations)
}

/// Sentences with exactly the requested relation counts, `(relations,
/// sentences)` per entry, shuffled together.
pub fn synth_with_counts(counts: &[(usize, usize)], seed: u64) -> Result<Vec<Sentence>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = Vec::new();
    for &(relations, n) in counts {
        let templates = templates_for(relations)
            .ok_or_else(|| Error::Config(format!("no template with {relations} relations")))?;
        plan.extend(std::iter::repeat_n(templates, n));
    }
    plan.shuffle(&mut rng);
    Ok(plan
        .into_iter()
        .enumerate()
        .map(|(i, templates)| {
            let template = templates.choose(&mut rng).expect("non-empty");
            instantiate(template, format!("syn-{:05}", i + 1), &mut rng)
        })
        .collect())
}

/// Relation-count mix resembling a camera review corpus: about 74.4% one
/// relation, 17.4% two, the rest three or four.
pub const DEFAULT_MIX: [(usize, f64); 4] = [(1, 0.744), (2, 0.174), (3, 0.05), (4, 0.032)];

/// Splits `n` sentences over `mix` by largest remainder.
pub fn counts_for_mix(n: usize, mix: &[(usize, f64)]) -> Vec<(usize, usize)> {
    let total: f64 = mix.iter().map(|(_, f)| f).sum();
    let quotas: Vec<f64> = mix.iter().map(|(_, f)| n as f64 * f / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..mix.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let leftover = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(leftover) {
        counts[i] += 1;
    }
    mix.iter().map(|(r, _)| *r).zip(counts).collect()
}

pub fn synth_corpus(sentences: usize, seed: u64) -> Vec<Sentence> {
    synth_with_counts(&counts_for_mix(sentences, &DEFAULT_MIX), seed)
        .expect("default mix has templates")
}

/// 1279 sentences and 1780 relations, with 952 single-relation (74.4%) and
/// 223 two-relation (17.4%) sentences.
pub const CAMERA_REVIEW_SHAPE: [(usize, usize); 4] = [(1, 952), (2, 223), (3, 34), (4, 70)];

/// 628 sentences and 751 relations, with 538 single-relation (85.7%) and 73
/// two-relation (11.6%) sentences.
pub const COMPSENT_SHAPE: [(usize, usize); 4] = [(1, 538), (2, 73), (3, 1), (4, 16)];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearize::{canonical_order, serialize_relations};

    #[test]
    fn every_template_is_grounded_and_serializable() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for templates in [ONE, TWO, THREE, FOUR] {
            for (k, template) in templates.iter().enumerate() {
                for _ in 0..20 {
                    let s = instantiate(template, format!("t{k}"), &mut rng);
                    assert!(!s.text.contains('{'), "{}", s.text);
                    assert!(s.ungrounded_elements().is_empty(), "{}", s.text);
                    assert_eq!(s.relations.len(), template.relations.len());
                    let ordered = canonical_order(&s.relations, &s.text).unwrap();
                    serialize_relations(&ordered).unwrap();
                }
            }
        }
    }

    #[test]
    fn counts_are_exact_and_seeded() {
        let sentences = synth_with_counts(&[(1, 5), (3, 2)], 9).unwrap();
        assert_eq!(sentences.len(), 7);
        assert_eq!(
            sentences.iter().filter(|s| s.relations.len() == 3).count(),
            2
        );
        assert_eq!(sentences, synth_with_counts(&[(1, 5), (3, 2)], 9).unwrap());
        assert!(synth_with_counts(&[(5, 1)], 0).is_err());
    }

    #[test]
    fn mix_allocation() {
        assert_eq!(
            counts_for_mix(500, &DEFAULT_MIX),
            vec![(1, 372), (2, 87), (3, 25), (4, 16)]
        );
        let total: usize = counts_for_mix(123, &DEFAULT_MIX).iter().map(|c| c.1).sum();
        assert_eq!(total, 123);
    }

    #[test]
    fn reference_shapes_add_up() {
        let tally = |shape: &[(usize, usize)]| {
            (
                shape.iter().map(|s| s.1).sum::<usize>(),
                shape.iter().map(|s| s.0 * s.1).sum::<usize>(),
            )
        };
        assert_eq!(tally(&CAMERA_REVIEW_SHAPE), (1279, 1780));
        assert_eq!(tally(&COMPSENT_SHAPE), (628, 751));
    }
}
