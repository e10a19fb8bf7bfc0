//! Feasible sets and the samplers that drive each round.

mod rng;
mod sampling;

pub use rng::{hash64, splitmix64, Purpose, RngStream, StreamId};
pub use sampling::{sample_participants, sample_snapshot_index, sample_uniform_subset};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{l2_norm, DenseVector};

/// Tolerance on `Σ weights = 1` accepted for a [`SimplexPoint`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A point of the probability simplex: non-negative weights summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexPoint(DenseVector);

impl SimplexPoint {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Dimension {
                expected: 1,
                actual: 0,
            });
        }
        if let Some(bad) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::Invariant(format!("simplex weight {bad} is negative or not finite")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::Invariant(format!("simplex weights sum to {sum}")));
        }
        Ok(Self(DenseVector::new(weights)))
    }

    pub fn uniform(n: usize) -> Self {
        Self(DenseVector::filled(n, 1.0 / n as f64))
    }

    pub fn one_hot(n: usize, k: usize) -> Self {
        let mut w = DenseVector::zeros(n);
        w[k] = 1.0;
        Self(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vector(self) -> DenseVector {
        self.0
    }
}

/// L2 ball centred at the origin; the feasible set for model parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallConstraint {
    radius: f64,
}

impl BallConstraint {
    pub const DEFAULT_RADIUS: f64 = 1e6;

    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::param(format!("ball radius must be finite and positive, got {radius}")));
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Diameter of the feasible set.
    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }
}

impl Default for BallConstraint {
    fn default() -> Self {
        Self {
            radius: Self::DEFAULT_RADIUS,
        }
    }
}

/// Euclidean projection onto the unit simplex (sort-then-threshold).
///
/// Inputs that already lie on the simplex up to rounding are returned as-is,
/// so the projection is exactly idempotent.
pub fn project_simplex(x: &[f64]) -> Result<SimplexPoint> {
    let n = x.len();
    if n == 0 {
        return Err(Error::Dimension {
            expected: 1,
            actual: 0,
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("cannot project a non-finite vector onto the simplex"));
    }
    let sum: f64 = x.iter().sum();
    let slack = 4.0 * n as f64 * f64::EPSILON;
    if x.iter().all(|v| *v >= 0.0) && (sum - 1.0).abs() <= slack {
        return Ok(SimplexPoint(DenseVector::new(x.to_vec())));
    }

    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    let mut out: Vec<f64> = x.iter().map(|v| (v - theta).max(0.0)).collect();
    // Renormalize away the last few ulps so the output is a valid point.
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|v| *v /= total);
    }
    Ok(SimplexPoint(DenseVector::new(out)))
}

/// Projection onto a [`BallConstraint`]. Points inside are returned unchanged.
pub fn project_ball(x: &[f64], ball: &BallConstraint) -> DenseVector {
    let mut out = DenseVector::new(x.to_vec());
    project_ball_in_place(&mut out, ball);
    out
}

pub(crate) fn project_ball_in_place(x: &mut [f64], ball: &BallConstraint) {
    let mut norm = l2_norm(x);
    if norm <= ball.radius {
        return;
    }
    let factor = ball.radius / norm;
    x.iter_mut().for_each(|v| *v *= factor);
    // Rounding can leave the norm a hair above the radius; shrink until the
    // result is strictly feasible, which makes a second projection a no-op.
    norm = l2_norm(x);
    while norm > ball.radius {
        x.iter_mut().for_each(|v| *v *= 1.0 - 2.0 * f64::EPSILON);
        norm = l2_norm(x);
    }
}
