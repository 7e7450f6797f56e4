use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Sentence;
use crate::error::{Error, Result};

pub const MIN_SPLIT_SENTENCES: usize = 10;

const RATIO: [usize; 3] = [7, 1, 2];

#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
    pub seed: u64,
}

/// Train/dev/test sizes for `n` items under 7:1:2, largest remainder first,
/// ties going to the earlier part.
pub fn split_sizes(n: usize) -> [usize; 3] {
    let denom: usize = RATIO.iter().sum();
    let mut sizes = RATIO.map(|r| n * r / denom);
    let remainders = RATIO.map(|r| n * r % denom);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(a.cmp(&b)));
    let leftover = n - sizes.iter().sum::<usize>();
    for &i in order.iter().take(leftover) {
        sizes[i] += 1;
    }
    sizes
}

/// Shuffles with a seeded ChaCha8 stream and cuts 7:1:2.
pub fn split_dataset(sentences: &[Sentence], seed: u64) -> Result<DatasetSplit> {
    if sentences.len() < MIN_SPLIT_SENTENCES {
        return Err(Error::TooFewSentences {
            required: MIN_SPLIT_SENTENCES,
            actual: sentences.len(),
        });
    }
    let mut shuffled = sentences.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let [n_train, n_dev, _] = split_sizes(shuffled.len());
    let test = shuffled.split_off(n_train + n_dev);
    let dev = shuffled.split_off(n_train);
    Ok(DatasetSplit {
        train: shuffled,
        dev,
        test,
        seed,
    })
}
