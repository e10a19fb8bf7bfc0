use rand::Rng;

use super::{RngStream, SimplexPoint};
use crate::error::{Error, Result};

/// Draws `m` clients independently with replacement, client `i` with
/// probability `lambda_i`. Duplicates are kept as separate slots.
pub fn sample_participants(lambda: &SimplexPoint, m: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::param("participant count must be at least 1"));
    }
    let mut cumulative = Vec::with_capacity(lambda.len());
    let mut acc = 0.0;
    for w in lambda.weights() {
        acc += w;
        cumulative.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::Invariant("dual weights carry no mass".into()));
    }
    let last_positive = lambda
        .weights()
        .iter()
        .rposition(|w| *w > 0.0)
        .expect("positive total implies a positive entry");
    Ok((0..m)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cumulative.partition_point(|c| *c <= u).min(last_positive)
        })
        .collect())
}

/// Uniform size-`m` subset of `0..n` without replacement, in ascending order.
pub fn sample_uniform_subset(n: usize, m: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if m == 0 || m > n {
        return Err(Error::param(format!("subset size {m} must lie in 1..={n}")));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    for k in 0..m {
        let j = rng.random_range(k..n);
        ids.swap(k, j);
    }
    ids.truncate(m);
    ids.sort_unstable();
    Ok(ids)
}

/// Snapshot iteration, uniform on `s·τ+1 ..= (s+1)·τ`.
pub fn sample_snapshot_index(round: u64, tau: u64, rng: &mut RngStream) -> Result<u64> {
    if tau == 0 {
        return Err(Error::param("local step count must be at least 1"));
    }
    Ok(round * tau + 1 + rng.random_range(0..tau))
}
