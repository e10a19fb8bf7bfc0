use std::sync::Arc;

use crate::data::{sample_minibatch, Dataset};
use crate::error::{check_len, Error, Result};
use crate::geometry::RngStream;
use crate::models::{accuracy_flat, loss_flat, loss_grad_flat, LossGrad, ModelShape};
use crate::numerics::{dot_unchecked, l2_norm, squared_distance, DenseVector};

/// A client's local objective `f_i`, seen by the federated algorithms only
/// through losses and gradients at flat parameter vectors.
pub trait LocalObjective: Send + Sync {
    fn dim(&self) -> usize;

    /// Loss and gradient on a fresh minibatch drawn from `rng`.
    fn stochastic_loss_grad(&self, w: &[f64], rng: &mut RngStream) -> Result<LossGrad>;

    /// Loss on a fresh minibatch drawn from `rng`.
    fn stochastic_loss(&self, w: &[f64], rng: &mut RngStream) -> Result<f64>;

    fn full_loss(&self, w: &[f64]) -> Result<f64>;

    fn full_gradient(&self, w: &[f64]) -> Result<DenseVector>;

    fn is_convex(&self) -> bool;

    /// An upper bound on the gradient's Lipschitz constant, when one is known.
    fn smoothness(&self) -> Option<f64> {
        None
    }
}

/// Cross-entropy of a classifier over one client's shard of a shared dataset.
#[derive(Clone, Debug)]
pub struct ShardObjective {
    data: Arc<Dataset>,
    shard: Vec<usize>,
    shape: ModelShape,
    batch: usize,
}

impl ShardObjective {
    pub fn new(data: Arc<Dataset>, shard: Vec<usize>, shape: ModelShape, batch: usize) -> Result<Self> {
        if shard.is_empty() {
            return Err(Error::state("client shard is empty"));
        }
        if batch == 0 {
            return Err(Error::param("batch size must be at least 1"));
        }
        check_len(shape.input, data.feature_dim())?;
        if let Some(bad) = shard.iter().find(|i| **i >= data.len()) {
            return Err(Error::param(format!("shard index {bad} outside dataset of {}", data.len())));
        }
        Ok(Self {
            data,
            shard,
            shape,
            batch,
        })
    }

    pub fn shard(&self) -> &[usize] {
        &self.shard
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    pub fn data(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn accuracy(&self, w: &[f64]) -> Result<f64> {
        accuracy_flat(&self.shape, w, &self.data.subset(&self.shard))
    }
}

impl LocalObjective for ShardObjective {
    fn dim(&self) -> usize {
        self.shape.param_count()
    }

    fn stochastic_loss_grad(&self, w: &[f64], rng: &mut RngStream) -> Result<LossGrad> {
        let idx = sample_minibatch(&self.shard, self.batch, rng)?;
        loss_grad_flat(&self.shape, w, &self.data.subset(&idx))
    }

    fn stochastic_loss(&self, w: &[f64], rng: &mut RngStream) -> Result<f64> {
        let idx = sample_minibatch(&self.shard, self.batch, rng)?;
        loss_flat(&self.shape, w, &self.data.subset(&idx))
    }

    fn full_loss(&self, w: &[f64]) -> Result<f64> {
        loss_flat(&self.shape, w, &self.data.subset(&self.shard))
    }

    fn full_gradient(&self, w: &[f64]) -> Result<DenseVector> {
        Ok(loss_grad_flat(&self.shape, w, &self.data.subset(&self.shard))?.grad)
    }

    fn is_convex(&self) -> bool {
        self.shape.is_convex()
    }

    /// For softmax cross-entropy the Hessian is bounded by
    /// `½ · E[x̃x̃ᵀ] ⊗ I` with `x̃ = (x, 1)`, so `L ≤ ½ λ_max(E[x̃x̃ᵀ])`.
    fn smoothness(&self) -> Option<f64> {
        self.shape.is_convex().then(|| 0.5 * augmented_gram_top_eigenvalue(&self.data, &self.shard))
    }
}

/// Largest eigenvalue of `mean(x̃ x̃ᵀ)` over the shard, by power iteration.
fn augmented_gram_top_eigenvalue(data: &Dataset, shard: &[usize]) -> f64 {
    let d = data.feature_dim();
    let mut v = vec![1.0 / ((d + 1) as f64).sqrt(); d + 1];
    let mut eig = 0.0;
    for _ in 0..200 {
        let mut next = vec![0.0; d + 1];
        for &i in shard {
            let x = data.sample(i).0;
            let proj = dot_unchecked(x, &v[..d]) + v[d];
            for (n, xv) in next[..d].iter_mut().zip(x) {
                *n += proj * xv;
            }
            next[d] += proj;
        }
        next.iter_mut().for_each(|n| *n /= shard.len() as f64);
        let norm = l2_norm(&next);
        if norm == 0.0 {
            return 0.0;
        }
        next.iter_mut().for_each(|n| *n /= norm);
        let converged = (norm - eig).abs() <= 1e-12 * norm;
        eig = norm;
        v = next;
        if converged {
            break;
        }
    }
    eig
}

/// Deterministic quadratic `f(w) = ½‖w − a‖²`; every "stochastic" draw is exact.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticObjective {
    center: DenseVector,
}

impl QuadraticObjective {
    pub fn new(center: impl Into<DenseVector>) -> Self {
        Self { center: center.into() }
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }
}

impl LocalObjective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn stochastic_loss_grad(&self, w: &[f64], _rng: &mut RngStream) -> Result<LossGrad> {
        Ok(LossGrad {
            loss: self.full_loss(w)?,
            grad: self.full_gradient(w)?,
        })
    }

    fn stochastic_loss(&self, w: &[f64], _rng: &mut RngStream) -> Result<f64> {
        self.full_loss(w)
    }

    fn full_loss(&self, w: &[f64]) -> Result<f64> {
        Ok(0.5 * squared_distance(w, &self.center)?)
    }

    fn full_gradient(&self, w: &[f64]) -> Result<DenseVector> {
        check_len(self.center.len(), w.len())?;
        Ok(w.iter().zip(self.center.iter()).map(|(w, a)| w - a).collect())
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn smoothness(&self) -> Option<f64> {
        Some(1.0)
    }
}
