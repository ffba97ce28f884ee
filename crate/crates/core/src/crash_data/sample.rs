use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Dataset, SeverityClass};

/// Per-class generator: one ChaCha stream per class so classes shuffle
/// independently of each other's population sizes.
pub(crate) fn class_rng(seed: u64, class: SeverityClass) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(class.index() as u64 + 1);
    rng
}

/// Draws exactly `n_per_class` records of every class.
///
/// Output is grouped by class in [`SeverityClass::ALL`] order; within a
/// class the order is the shuffled order.
pub fn stratified_sample(ds: &Dataset, n_per_class: usize, seed: u64) -> Result<Dataset, DataError> {
    for class in SeverityClass::ALL {
        let available = ds.class_count(class);
        if available < n_per_class {
            return Err(DataError::InsufficientClassPopulation {
                class,
                available,
                required: n_per_class,
            });
        }
    }
    let mut picked = Vec::with_capacity(n_per_class * SeverityClass::ALL.len());
    for class in SeverityClass::ALL {
        let mut pool: Vec<_> = ds.records_of(class).collect();
        pool.shuffle(&mut class_rng(seed, class));
        picked.extend(pool.into_iter().take(n_per_class).cloned());
    }
    Dataset::new(picked, ds.mapping())
}
