//! Train/validation splits.

use rand::seq::SliceRandom;

use flownet_core::rng::substream;

use crate::{Result, TrainError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub seed: u64,
}

impl SplitSpec {
    /// Seeded random split of `0..n` with `val_count` validation indices.
    /// Both halves are sorted.
    pub fn shuffled(n: usize, val_count: usize, seed: u64) -> Result<Self> {
        if val_count > n {
            return Err(TrainError::Config(format!("{val_count} validation samples out of {n}")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut substream(seed, &[0x5911]));
        let mut val = idx[..val_count].to_vec();
        let mut train = idx[val_count..].to_vec();
        val.sort_unstable();
        train.sort_unstable();
        Ok(Self { train, val, seed })
    }

    /// Split holding out `round(n · fraction)` samples.
    pub fn with_fraction(n: usize, fraction: f64, seed: u64) -> Result<Self> {
        Self::shuffled(n, (n as f64 * fraction).round() as usize, seed)
    }

    /// Whether the halves are disjoint and together cover `0..n`.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val) {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }

    /// All indices, for training on the full set.
    pub fn all(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.train.iter().chain(&self.val).copied().collect();
        all.sort_unstable();
        all
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn splits_partition(n in 0usize..300, frac in 0.0f64..0.99, seed in any::<u64>()) {
            let s = SplitSpec::with_fraction(n, frac, seed).unwrap();
            prop_assert!(s.is_partition_of(n));
            prop_assert_eq!(s.val.len(), (n as f64 * frac).round() as usize);
            prop_assert_eq!(SplitSpec::with_fraction(n, frac, seed).unwrap(), s);
        }
    }

    #[test]
    fn oversized_validation_is_rejected() {
        assert!(SplitSpec::shuffled(3, 4, 0).is_err());
    }
}
