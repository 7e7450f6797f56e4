use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Sentence;
use crate::error::{Error, Result};

/// Builds `num_pairs` synthetic sentences from distinct ordered pairs
/// `(first, second)` of `train`, sampled without replacement.
///
/// The text is `first.text + " " + second.text` and the relations are those
/// of `first` followed by those of `second`. Ids are `aug-<i>-<j>` with the
/// positions of the pair in `train`.
pub fn augment_concat(train: &[Sentence], num_pairs: usize, seed: u64) -> Result<Vec<Sentence>> {
    let n = train.len();
    if n < 2 {
        return Err(Error::TooFewSentences {
            required: 2,
            actual: n,
        });
    }
    if num_pairs == 0 {
        return Err(Error::Config("num_pairs must be at least 1".into()));
    }
    let available = n * (n - 1);
    if num_pairs > available {
        return Err(Error::TooManyPairs {
            requested: num_pairs,
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, available, num_pairs);
    Ok(picks
        .into_iter()
        .map(|code| {
            let (i, j) = decode_pair(code, n);
            concat_pair(&train[i], &train[j], i, j)
        })
        .collect())
}

/// Maps `0..n*(n-1)` onto ordered pairs with `i != j`.
fn decode_pair(code: usize, n: usize) -> (usize, usize) {
    let i = code / (n - 1);
    let j = code % (n - 1);
    (i, if j >= i { j + 1 } else { j })
}

fn concat_pair(first: &Sentence, second: &Sentence, i: usize, j: usize) -> Sentence {
    let relations = first
        .relations
        .iter()
        .chain(&second.relations)
        .cloned()
        .collect();
    Sentence::new(
        format!("aug-{i}-{j}"),
        format!("{} {}", first.text, second.text),
        relations,
    )
}
