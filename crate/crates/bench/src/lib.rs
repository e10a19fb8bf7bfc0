//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use fedrobust_core::data::{synthetic_two_gaussians, Dataset};
use fedrobust_core::fedcore::ShardObjective;
use fedrobust_core::geometry::{Purpose, RngStream};
use fedrobust_core::models::{ModelParams, ModelShape};
use fedrobust_core::{BallConstraint, Federation, HyperParams, Result};

/// MNIST-sized input dimension.
pub const INPUT: usize = 784;

/// A 10-class dataset of `n` random MNIST-shaped rows.
pub fn mnist_like(n: usize, seed: u64) -> Result<Dataset> {
    use fedrobust_core::numerics::DenseMatrix;
    use rand::Rng;
    let mut rng = RngStream::for_purpose(seed, Purpose::Custom(1), 0, 0);
    let values = (0..n * INPUT).map(|_| rng.random::<f64>()).collect();
    let labels = (0..n).map(|_| rng.random_range(0..10)).collect();
    Dataset::new(DenseMatrix::new(n, INPUT, values)?, labels, 10)
}

/// Random parameters for `shape`.
pub fn random_params(shape: ModelShape, seed: u64) -> Result<ModelParams> {
    use rand::Rng;
    let mut rng = RngStream::for_purpose(seed, Purpose::Custom(2), 0, 0);
    let flat = (0..shape.param_count()).map(|_| rng.random_range(-0.1..0.1)).collect();
    ModelParams::new(shape, flat)
}

/// `n` clients with 200 samples each of a 2-class, 20-feature problem.
pub fn small_federation(n: usize, m: usize, tau: usize) -> Result<Federation<ShardObjective>> {
    let mut rng = RngStream::for_purpose(3, Purpose::Synthetic, 0, 0);
    let data = Arc::new(synthetic_two_gaussians(100 * n, 20, 2.0, &mut rng)?);
    let shape = ModelShape::linear(20, 2);
    let objectives = (0..n)
        .map(|i| {
            let shard: Vec<usize> = (0..100).map(|k| i * 100 + k).chain((0..100).map(|k| 100 * n + i * 100 + k)).collect();
            ShardObjective::new(data.clone(), shard, shape, 32)
        })
        .collect::<Result<Vec<_>>>()?;
    let hp = HyperParams {
        eta: 0.05,
        gamma: 0.002,
        mu: 0.1,
        tau,
        m,
        batch: 32,
        rounds: 1,
    };
    Federation::new(objectives, hp, BallConstraint::default(), 9)
}
