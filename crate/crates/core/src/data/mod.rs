//! Datasets, IDX ingestion, synthetic data and non-IID partitioning.

mod idx;
mod partition;
mod synthetic;

pub use idx::{load_idx, write_idx, IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC};
pub use partition::{
    dirichlet_class_mixtures, partition_dataset, partition_with_mixtures, zipf_sizes, Partition, PartitionSpec,
};
pub use synthetic::{synthetic_two_gaussians, write_csv};

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::RngStream;
use crate::numerics::DenseMatrix;

/// Labelled feature matrix, one sample per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: DenseMatrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: DenseMatrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Dimension {
                expected: features.rows(),
                actual: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|l| **l >= num_classes) {
            return Err(Error::param(format!("label {bad} outside 0..{num_classes}")));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> (&[f64], usize) {
        (self.features.row(i), self.labels[i])
    }

    /// Sample indices grouped by class.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes];
        for (i, l) in self.labels.iter().enumerate() {
            out[*l].push(i);
        }
        out
    }

    pub fn all(&self) -> Batch<'_> {
        Batch {
            data: self,
            indices: None,
        }
    }

    pub fn subset<'a>(&'a self, indices: &'a [usize]) -> Batch<'a> {
        Batch {
            data: self,
            indices: Some(indices),
        }
    }
}

/// A borrowed view of some rows of a [`Dataset`]; indices may repeat.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    data: &'a Dataset,
    indices: Option<&'a [usize]>,
}

impl<'a> Batch<'a> {
    pub fn len(&self) -> usize {
        self.indices.map_or(self.data.len(), <[usize]>::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.data.feature_dim()
    }

    pub fn get(&self, k: usize) -> (&'a [f64], usize) {
        let i = self.indices.map_or(k, |ix| ix[k]);
        self.data.sample(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'a [f64], usize)> + '_ {
        (0..self.len()).map(move |k| self.get(k))
    }
}

/// Draws `batch` indices uniformly with replacement from `shard`.
pub fn sample_minibatch(shard: &[usize], batch: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if shard.is_empty() {
        return Err(Error::state("cannot draw a minibatch from an empty shard"));
    }
    if batch == 0 {
        return Err(Error::param("batch size must be at least 1"));
    }
    Ok((0..batch).map(|_| shard[rng.random_range(0..shard.len())]).collect())
}
