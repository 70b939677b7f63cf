use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GefError, Result};
use crate::text::schema::Record;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit<T> {
    pub train: Vec<T>,
    pub dev: Vec<T>,
    pub test: Vec<T>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl std::str::FromStr for SplitName {
    type Err = GefError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "dev" => Ok(Self::Dev),
            "test" => Ok(Self::Test),
            other => Err(GefError::validation(format!("unknown split {other:?}"))),
        }
    }
}

impl<T> CorpusSplit<T> {
    pub fn get(&self, which: SplitName) -> &[T] {
        match which {
            SplitName::Train => &self.train,
            SplitName::Dev => &self.dev,
            SplitName::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Apply the schema's length filter, then shuffle with `seed` and cut
/// 8:1:1. Dev and test each get `⌊n/10⌋` examples, train the rest.
pub fn filter_and_split<T: Record>(examples: Vec<T>, seed: u64) -> Result<CorpusSplit<T>> {
    let mut kept: Vec<T> = examples.into_iter().filter(T::passes_filter).collect();
    if kept.is_empty() {
        return Err(GefError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kept.shuffle(&mut rng);
    let n = kept.len();
    let n_held = n / 10;
    let test = kept.split_off(n - n_held);
    let dev = kept.split_off(n - 2 * n_held);
    Ok(CorpusSplit {
        train: kept,
        dev,
        test,
        seed,
    })
}
