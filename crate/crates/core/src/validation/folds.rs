use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TwinError};
use crate::validation::MeasurementSet;

pub const MIN_FOLD_SAMPLES: usize = 10;

/// One block hold-out fold: a contiguous test segment in trajectory order,
/// with every other sample used for training.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub fold: usize,
    /// First test index.
    pub test_start: usize,
    /// One past the last test index.
    pub test_end: usize,
    pub total: usize,
}

impl FoldSpec {
    pub fn test_range(&self) -> Range<usize> {
        self.test_start..self.test_end
    }

    pub fn test_len(&self) -> usize {
        self.test_end - self.test_start
    }

    pub fn train_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.test_start).chain(self.test_end..self.total)
    }
}

/// Test segment `k` starts at `k * floor(n * (1 - train_fraction))` and has
/// that same length, clipped to the end of the set.
pub fn fold_intervals(n: usize, train_fraction: f64, n_folds: usize) -> Result<Vec<FoldSpec>> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(TwinError::InvalidArgument(format!(
            "train fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    if n_folds == 0 {
        return Err(TwinError::InvalidArgument("at least one fold is required".into()));
    }
    if n < MIN_FOLD_SAMPLES {
        return Err(TwinError::TooFewSamples {
            needed: MIN_FOLD_SAMPLES,
            got: n,
        });
    }
    // The epsilon keeps e.g. 100 * 0.3 from flooring to 29.
    let len = (n as f64 * (1.0 - train_fraction) + 1e-9).floor() as usize;
    if len == 0 {
        return Err(TwinError::InvalidArgument(format!(
            "train fraction {train_fraction} leaves no test samples out of {n}"
        )));
    }
    (0..n_folds)
        .map(|k| {
            let start = k * len;
            if start >= n {
                return Err(TwinError::InvalidArgument(format!(
                    "{n_folds} folds of {len} samples do not fit in {n} samples"
                )));
            }
            Ok(FoldSpec {
                fold: k,
                test_start: start,
                test_end: (start + len).min(n),
                total: n,
            })
        })
        .collect()
}

pub fn block_holdout_folds(
    set: &MeasurementSet,
    train_fraction: f64,
    n_folds: usize,
) -> Result<Vec<FoldSpec>> {
    fold_intervals(set.len(), train_fraction, n_folds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_samples() {
        let f = fold_intervals(100, 0.7, 3).unwrap();
        let ranges: Vec<_> = f.iter().map(|s| s.test_range()).collect();
        assert_eq!(ranges, vec![0..30, 30..60, 60..90]);
    }

    #[test]
    fn ten_samples() {
        let f = fold_intervals(10, 0.7, 3).unwrap();
        assert!(f.iter().all(|s| s.test_len() == 3));
    }

    #[test]
    fn complement_covers_everything() {
        for n in [10, 11, 57, 100, 1000] {
            for s in fold_intervals(n, 0.7, 3).unwrap() {
                let mut all: Vec<usize> = s.train_indices().chain(s.test_range()).collect();
                all.sort();
                assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            fold_intervals(9, 0.7, 3),
            Err(TwinError::TooFewSamples { needed: 10, got: 9 })
        ));
        assert!(fold_intervals(100, 1.0, 3).is_err());
        assert!(fold_intervals(100, 0.5, 3).is_err());
        assert!(fold_intervals(100, 0.7, 0).is_err());
    }
}
