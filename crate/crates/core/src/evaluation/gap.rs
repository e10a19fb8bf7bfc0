use crate::error::{check_len, Error, Result};
use crate::fedcore::LocalObjective;
use crate::geometry::{project_ball_in_place, BallConstraint, SimplexPoint};
use crate::numerics::DenseVector;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualityGapEstimate {
    pub gap: f64,
    /// `max_i f_i(w)`.
    pub primal_value: f64,
    /// `min_{w′ ∈ W} Σ_i λ_i f_i(w′)`, as found by the oracle.
    pub dual_value: f64,
}

/// Settings of the projected gradient descent that estimates the dual value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapOracle {
    pub steps: usize,
    /// Step size; `None` uses `1/L` from the objectives' smoothness bounds.
    pub lr: Option<f64>,
    /// Stop once an iteration lowers the objective by less than this.
    pub tolerance: f64,
}

impl Default for GapOracle {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: None,
            tolerance: 1e-10,
        }
    }
}

fn weighted_loss_grad<O: LocalObjective>(objectives: &[O], lambda: &[f64], w: &[f64]) -> Result<(f64, DenseVector)> {
    let mut loss = 0.0;
    let mut grad = DenseVector::zeros(w.len());
    for (o, &l) in objectives.iter().zip(lambda) {
        if l == 0.0 {
            continue;
        }
        loss += l * o.full_loss(w)?;
        grad.add_scaled(l, &o.full_gradient(w)?)?;
    }
    Ok((loss, grad))
}

/// Duality gap of `(w, λ)` for the convex min-max problem `min_w max_λ Σ λ_i f_i(w)`.
///
/// The primal side is exact (a linear function of λ peaks at a vertex). The
/// dual side minimizes `Σ λ_i f_i` by full-batch projected gradient descent
/// from `w`, halving the step whenever it would increase the objective, so
/// the reported dual value is an upper bound on the true minimum.
pub fn duality_gap<O: LocalObjective>(
    w: &[f64],
    lambda: &SimplexPoint,
    objectives: &[O],
    ball: &BallConstraint,
    oracle: GapOracle,
) -> Result<DualityGapEstimate> {
    if objectives.is_empty() {
        return Err(Error::state("duality gap of an empty fleet"));
    }
    check_len(objectives.len(), lambda.len())?;
    if !objectives.iter().all(|o| o.is_convex()) {
        return Err(Error::Unsupported(
            "duality gap certificates need convex client objectives".into(),
        ));
    }
    let mut primal = f64::NEG_INFINITY;
    for o in objectives {
        primal = primal.max(o.full_loss(w)?);
    }

    let mut lr = match oracle.lr {
        Some(lr) if lr > 0.0 => lr,
        Some(lr) => return Err(Error::param(format!("oracle step size must be positive, got {lr}"))),
        None => {
            let mut l = 0.0f64;
            for o in objectives {
                l = l.max(o.smoothness().ok_or_else(|| {
                    Error::Unsupported("no smoothness bound available for the dual oracle".into())
                })?);
            }
            if l > 0.0 {
                1.0 / l
            } else {
                1.0
            }
        }
    };

    let weights = lambda.weights();
    let mut x = DenseVector::new(w.to_vec());
    project_ball_in_place(&mut x, ball);
    let (mut value, mut grad) = weighted_loss_grad(objectives, weights, &x)?;
    let mut step = 0;
    while step < oracle.steps {
        let mut next = x.clone();
        next.add_scaled(-lr, &grad)?;
        project_ball_in_place(&mut next, ball);
        let (nv, ng) = weighted_loss_grad(objectives, weights, &next)?;
        if nv > value {
            lr *= 0.5;
            if lr < 1e-20 {
                break;
            }
            continue;
        }
        step += 1;
        let decrease = value - nv;
        x = next;
        value = nv;
        grad = ng;
        if decrease < oracle.tolerance {
            break;
        }
    }
    Ok(DualityGapEstimate {
        gap: primal - value,
        primal_value: primal,
        dual_value: value,
    })
}
