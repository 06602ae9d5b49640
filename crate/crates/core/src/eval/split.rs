//! Stratified holdout splits and k-fold partitions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for Fractions {
    fn default() -> Self {
        Fractions {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl Fractions {
    fn validate(&self) -> Result<(), EvalError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(EvalError::InvalidFractions(format!("{parts:?} must be in [0, 1] and sum to 1")));
        }
        Ok(())
    }
}

/// Indices into the labeled item list, each part sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

fn class_indices(labels: &[u8]) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        out[usize::from(y != 0)].push(i);
    }
    out
}

fn require(labels: &[u8], need: usize) -> Result<[Vec<usize>; 2], EvalError> {
    let classes = class_indices(labels);
    for (c, idx) in classes.iter().enumerate() {
        if idx.len() < need {
            return Err(EvalError::TooFewDesigns {
                class: c as u8,
                count: idx.len(),
                need,
            });
        }
    }
    Ok(classes)
}

/// Part sizes are `⌊N·val⌋` and `⌊N·test⌋`, the remainder going to train.
/// Within each part the trojan count is the part size times the corpus
/// ratio, rounded, so every part sits within one design of the corpus
/// ratio. A part with a nonzero fraction holds at least one design of each
/// class, which overrides the ratio bound only for extreme imbalances.
pub fn make_split(labels: &[u8], fractions: Fractions, seed: u64) -> Result<Split, EvalError> {
    fractions.validate()?;
    let mut classes = require(labels, 3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for idx in &mut classes {
        idx.shuffle(&mut rng);
    }
    let n = labels.len();
    let ratio = classes[1].len() as f64 / n as f64;
    let size = |f: f64| {
        let k = (n as f64 * f + 1e-9).floor() as usize;
        if f > 0.0 { k.max(2) } else { k }
    };
    // Cursor into each shuffled class list.
    let mut used = [0usize; 2];
    let mut take = |part_size: usize, reserve: usize| -> Vec<usize> {
        if part_size == 0 {
            return Vec::new();
        }
        let avail = [classes[0].len() - used[0], classes[1].len() - used[1]];
        let ones = ((part_size as f64 * ratio).round() as usize)
            .clamp(1, part_size - 1)
            .min(avail[1] - reserve);
        let zeros = (part_size - ones).min(avail[0] - reserve);
        let mut out = Vec::with_capacity(ones + zeros);
        for (class, count) in [(0, zeros), (1, ones)] {
            out.extend_from_slice(&classes[class][used[class]..used[class] + count]);
            used[class] += count;
        }
        out
    };
    // Validation leaves one design of each class for test and one for train.
    let mut val = take(size(fractions.val), 2);
    let mut test = take(size(fractions.test), 1);
    let mut train: Vec<usize> = classes[0][used[0]..].iter().chain(&classes[1][used[1]..]).copied().collect();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train,
        val,
        test,
        seed,
    })
}

/// Stratified k-fold assignment: each class is shuffled and dealt
/// round-robin, continuing the rotation across classes so fold sizes differ
/// by at most one. Returns the test indices of each fold, sorted.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidFractions(format!("k = {k}; need at least 2 folds")));
    }
    let classes = require(labels, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut slot = 0;
    for mut idx in classes {
        idx.shuffle(&mut rng);
        for i in idx {
            folds[slot % k].push(i);
            slot += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Stratified subset of roughly `fraction` of `pool`, at least one item per
/// class when that class has two or more; used to carve a validation set
/// from a fold's training part. Returns (rest, carved).
pub fn carve(pool: &[usize], labels: &[u8], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rest = Vec::new();
    let mut carved = Vec::new();
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = pool.iter().copied().filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let k = if fraction > 0.0 && idx.len() >= 2 {
            ((idx.len() as f64 * fraction).round() as usize).clamp(1, idx.len() - 1)
        } else {
            0
        };
        carved.extend_from_slice(&idx[..k]);
        rest.extend_from_slice(&idx[k..]);
    }
    rest.sort_unstable();
    carved.sort_unstable();
    (rest, carved)
}
