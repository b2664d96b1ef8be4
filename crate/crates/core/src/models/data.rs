use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ModelError;
use crate::maskops::BitMask;

/// Anything carrying a label mask.
pub trait Labeled {
    fn label(&self) -> &BitMask;
}

/// Keep only records whose label has at least one contrail pixel.
pub fn filter_positive<R: Labeled>(records: impl IntoIterator<Item = R>) -> Vec<R> {
    records.into_iter().filter(|r| r.label().any()).collect()
}

/// Shuffle `ids` with `seed` and deal them into `k` contiguous folds whose
/// sizes differ by at most one (the first `len % k` folds get the extra id).
pub fn split_kfold<I: Clone>(ids: &[I], k: usize, seed: u64) -> Result<Vec<Vec<I>>, ModelError> {
    if k < 2 {
        return Err(ModelError::BadConfig(format!("k = {k}; need at least 2 folds")));
    }
    if ids.len() < k {
        return Err(ModelError::TooFewRecords {
            needed: k,
            have: ids.len(),
        });
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (ids.len() / k, ids.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(order[at..at + size].iter().map(|&i| ids[i].clone()).collect());
        at += size;
    }
    Ok(folds)
}
