use crate::error::{CteError, Result};
use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const SPLIT_FRACTIONS: (f64, f64, f64) = (0.8, 0.1, 0.1);

/// Disjoint train/validation/test partition of level ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit<I> {
    pub train: Vec<I>,
    pub validation: Vec<I>,
    pub test: Vec<I>,
    pub seed: u64,
}

/// Shuffles `levels` with `seed` and cuts 80/10/10.
///
/// Validation and test sizes round to nearest; train takes the remainder.
/// Below ten levels the small parts use floor counts, with at least one test level.
pub fn split_levels<I: Clone>(levels: &[I], seed: u64) -> Result<CorpusSplit<I>> {
    let n = levels.len();
    if n == 0 {
        return Err(CteError::Empty("cannot split an empty level list".into()));
    }
    let (n_val, n_test) = if n >= 10 {
        let v = (n as f64 * SPLIT_FRACTIONS.1).round() as usize;
        let t = (n as f64 * SPLIT_FRACTIONS.2).round() as usize;
        (v, t)
    } else {
        warn!("only {n} levels; split uses floor counts");
        let v = (n as f64 * SPLIT_FRACTIONS.1).floor() as usize;
        let t = ((n as f64 * SPLIT_FRACTIONS.2).floor() as usize).max(1);
        (v, t)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n - n_val - n_test;
    let pick = |ix: &[usize]| ix.iter().map(|&i| levels[i].clone()).collect::<Vec<_>>();
    Ok(CorpusSplit {
        train: pick(&order[..n_train]),
        validation: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
        seed,
    })
}
