use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DataError;

/// Contiguous train/validation/test blocks over window indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    /// Minimum index distance kept between training windows and held-out
    /// windows by [`DatasetSplit::guarded_train`]; 0 disables the guard.
    pub guard: usize,
}

impl DatasetSplit {
    /// Training windows that share no aligned frame with any validation or
    /// test window: those within `guard` indices of a held-out window are
    /// left out.
    pub fn guarded_train(&self) -> Vec<usize> {
        if self.guard == 0 {
            return self.train.clone();
        }
        let mut held: Vec<usize> = self.val.iter().chain(&self.test).copied().collect();
        held.sort_unstable();
        self.train
            .iter()
            .copied()
            .filter(|&i| {
                let k = held.partition_point(|&h| h < i);
                let near = |h: usize| h.abs_diff(i) <= self.guard;
                !(k < held.len() && near(held[k]) || k > 0 && near(held[k - 1]))
            })
            .collect()
    }
}

/// Splits `n` windows into three blocks of sizes `round(n * val)`,
/// `round(n * test)` and the remainder for training. Blocks follow each
/// other as train, validation, test on a circle of window indices whose
/// starting point is drawn from `seed`. `guard` is the index distance kept
/// by [`DatasetSplit::guarded_train`], normally the window width minus one.
pub fn split(
    n: usize,
    ratios: (f64, f64, f64),
    seed: u64,
    guard: usize,
) -> Result<DatasetSplit, DataError> {
    let (tr, va, te) = ratios;
    if [tr, va, te].iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(DataError::BadRatios(format!(
            "{ratios:?} must all be positive"
        )));
    }
    if (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(DataError::BadRatios(format!(
            "{ratios:?} sum to {}",
            tr + va + te
        )));
    }
    let n_val = (n as f64 * va).round() as usize;
    let n_test = ((n as f64 * te).round() as usize).min(n - n_val);
    let n_train = n - n_val - n_test;
    let offset = if n == 0 {
        0
    } else {
        ChaCha8Rng::seed_from_u64(seed).random_range(0..n)
    };
    let at = |k: usize| (offset + k) % n;
    Ok(DatasetSplit {
        train: (0..n_train).map(at).collect(),
        val: (n_train..n_train + n_val).map(at).collect(),
        test: (n_train + n_val..n).map(at).collect(),
        seed,
        guard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let s = split(90, (0.8, 0.1, 0.1), 4, 9).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (72, 9, 9));
        assert_eq!(s, split(90, (0.8, 0.1, 0.1), 4, 9).unwrap());
        assert!(matches!(
            split(90, (0.5, 0.5, 0.1), 1, 9),
            Err(DataError::BadRatios(_))
        ));
        assert!(matches!(
            split(90, (1.0, 0.0, 0.0), 1, 9),
            Err(DataError::BadRatios(_))
        ));
    }

    proptest! {
        #[test]
        fn partition_and_guard(
            n in 0usize..400,
            a in 0.05f64..1.0,
            b in 0.05f64..1.0,
            c in 0.05f64..1.0,
            seed in any::<u64>(),
            guard in 0usize..12,
        ) {
            let s = a + b + c;
            let ratios = (a / s, b / s, 1.0 - a / s - b / s);
            let sp = split(n, ratios, seed, guard).unwrap();
            let mut all: Vec<usize> = sp.train.iter().chain(&sp.val).chain(&sp.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            for blk in [&sp.train, &sp.val, &sp.test] {
                for w in blk.windows(2) {
                    prop_assert!(w[1] == w[0] + 1 || (w[0] == n - 1 && w[1] == 0));
                }
            }
            let held: Vec<usize> = sp.val.iter().chain(&sp.test).copied().collect();
            for i in sp.guarded_train() {
                prop_assert!(sp.train.contains(&i));
                prop_assert!(held.iter().all(|&h| h.abs_diff(i) > guard));
            }
        }
    }
}
