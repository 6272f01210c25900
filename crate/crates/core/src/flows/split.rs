use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default seed for the train/test split when none is configured.
pub const DEFAULT_SPLIT_SEED: u64 = 20_170_703;

fn indices_by_class(labels: &[usize]) -> Vec<Vec<usize>> {
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    by_class
}

/// Per-class shuffled split. Each class sends `round(count * test_fraction)`
/// rows to the test side. Both index lists are returned sorted.
pub fn stratified_split(labels: &[usize], test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut rows in indices_by_class(labels) {
        rows.shuffle(&mut rng);
        let n_test = (rows.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&rows[..n_test]);
        train.extend_from_slice(&rows[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Stratified subsample of exactly `size` rows. Per-class quotas use
/// largest remainders (ties to the lower class index) so each class is
/// within one row of its proportional share. Indices come back sorted;
/// `size == labels.len()` returns every row in order.
pub fn stratified_sample(labels: &[usize], size: usize, seed: u64) -> Result<Vec<usize>> {
    let n = labels.len();
    if size > n {
        return Err(Error::SampleTooLarge {
            requested: size,
            available: n,
        });
    }
    if size == n {
        return Ok((0..n).collect());
    }
    let by_class = indices_by_class(labels);
    let shares: Vec<f64> = by_class
        .iter()
        .map(|rows| rows.len() as f64 * size as f64 / n as f64)
        .collect();
    let mut quota: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut remaining = size - quota.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..by_class.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &c in &order {
        if remaining == 0 {
            break;
        }
        if quota[c] < by_class[c].len() {
            quota[c] += 1;
            remaining -= 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(size);
    for (mut rows, q) in by_class.into_iter().zip(quota) {
        rows.shuffle(&mut rng);
        out.extend_from_slice(&rows[..q]);
    }
    out.sort_unstable();
    Ok(out)
}
