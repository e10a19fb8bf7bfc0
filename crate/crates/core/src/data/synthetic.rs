use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::geometry::RngStream;
use crate::numerics::DenseMatrix;

/// Two isotropic unit-variance Gaussian classes centred at `∓(separation/2)·e₁`.
///
/// Class 0 occupies the first `n_per_class` rows, class 1 the rest.
pub fn synthetic_two_gaussians(
    n_per_class: usize,
    feature_dim: usize,
    separation: f64,
    rng: &mut RngStream,
) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::param("need at least one sample per class"));
    }
    if feature_dim == 0 {
        return Err(Error::param("feature dimension must be at least 1"));
    }
    let n = 2 * n_per_class;
    let mut features = DenseMatrix::zeros(n, feature_dim);
    let mut labels = Vec::with_capacity(n);
    for r in 0..n {
        let label = usize::from(r >= n_per_class);
        let shift = if label == 0 { -separation / 2.0 } else { separation / 2.0 };
        let row = features.row_mut(r);
        for v in row.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        row[0] += shift;
        labels.push(label);
    }
    Dataset::new(features, labels, 2)
}

/// CSV dump with header `label,f0,f1,...`; floats use round-trip formatting.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "label")?;
    for k in 0..ds.feature_dim() {
        write!(out, ",f{k}")?;
    }
    writeln!(out)?;
    for (features, label) in ds.all().iter() {
        write!(out, "{label}")?;
        for v in features {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
