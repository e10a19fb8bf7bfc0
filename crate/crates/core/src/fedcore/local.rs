use super::{HyperParams, LocalObjective};
use crate::error::{check_len, Error, Result};
use crate::geometry::{project_ball_in_place, BallConstraint, RngStream};
use crate::numerics::DenseVector;

/// Turns a minibatch gradient into the direction of a DRDM local step.
pub trait DriftRule: Send + Sync {
    /// Overwrites `grad` with the corrected direction. All slices have equal length.
    fn correct(&self, grad: &mut [f64], memory: &[f64], w_bar: &[f64], w: &[f64], mu: f64);
}

/// `d = g − h − μ(w̄ − w)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct StandardDrift;

impl DriftRule for StandardDrift {
    fn correct(&self, grad: &mut [f64], memory: &[f64], w_bar: &[f64], w: &[f64], mu: f64) {
        for k in 0..grad.len() {
            grad[k] -= memory[k] + mu * (w_bar[k] - w[k]);
        }
    }
}

/// Returns `batch_grad − memory − mu·(w_bar − w_i)`.
pub fn drift_corrected_gradient(
    batch_grad: &[f64],
    memory: &[f64],
    w_bar: &[f64],
    w_i: &[f64],
    mu: f64,
) -> Result<DenseVector> {
    let n = batch_grad.len();
    check_len(n, memory.len())?;
    check_len(n, w_bar.len())?;
    check_len(n, w_i.len())?;
    let mut d = DenseVector::new(batch_grad.to_vec());
    StandardDrift.correct(&mut d, memory, w_bar, w_i, mu);
    Ok(d)
}

/// The model after the last local step and the one right after the snapshot step.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOutcome {
    pub final_model: DenseVector,
    pub snapshot_model: DenseVector,
}

fn check_snapshot(round: u64, tau: usize, snapshot_t: u64) -> Result<usize> {
    let first = round * tau as u64 + 1;
    let last = (round + 1) * tau as u64;
    if snapshot_t < first || snapshot_t > last {
        return Err(Error::param(format!(
            "snapshot index {snapshot_t} outside round {round} range [{first}, {last}]"
        )));
    }
    Ok((snapshot_t - first) as usize)
}

/// τ projected DRDM steps starting from `w_bar`, each on a fresh minibatch.
#[allow(clippy::too_many_arguments)]
pub fn local_update_steps<O, D>(
    objective: &O,
    drift: &D,
    memory: &[f64],
    w_bar: &[f64],
    hp: &HyperParams,
    ball: &BallConstraint,
    round: u64,
    snapshot_t: u64,
    rng: &mut RngStream,
) -> Result<LocalOutcome>
where
    O: LocalObjective + ?Sized,
    D: DriftRule + ?Sized,
{
    check_len(objective.dim(), w_bar.len())?;
    check_len(objective.dim(), memory.len())?;
    let snap_step = check_snapshot(round, hp.tau, snapshot_t)?;
    let mut w = DenseVector::new(w_bar.to_vec());
    let mut snapshot = None;
    for step in 0..hp.tau {
        let mut d = objective.stochastic_loss_grad(&w, rng)?.grad;
        drift.correct(&mut d, memory, w_bar, &w, hp.mu);
        for (wk, dk) in w.iter_mut().zip(d.iter()) {
            *wk -= hp.eta * dk;
        }
        project_ball_in_place(&mut w, ball);
        if step == snap_step {
            snapshot = Some(w.clone());
        }
    }
    Ok(LocalOutcome {
        snapshot_model: snapshot.expect("snapshot step lies inside the round"),
        final_model: w,
    })
}

/// τ projected SGD steps from `start` along `∇ℓ + shift` (no shift for FedAvg and DRFA,
/// `c − c_i` for SCAFFOLD).
#[allow(clippy::too_many_arguments)]
pub fn local_sgd_steps<O>(
    objective: &O,
    start: &[f64],
    shift: Option<&[f64]>,
    hp: &HyperParams,
    ball: &BallConstraint,
    round: u64,
    snapshot_t: u64,
    rng: &mut RngStream,
) -> Result<LocalOutcome>
where
    O: LocalObjective + ?Sized,
{
    check_len(objective.dim(), start.len())?;
    if let Some(s) = shift {
        check_len(start.len(), s.len())?;
    }
    let snap_step = check_snapshot(round, hp.tau, snapshot_t)?;
    let mut w = DenseVector::new(start.to_vec());
    let mut snapshot = None;
    for step in 0..hp.tau {
        let mut g = objective.stochastic_loss_grad(&w, rng)?.grad;
        if let Some(s) = shift {
            for (gk, sk) in g.iter_mut().zip(s) {
                *gk += sk;
            }
        }
        for (wk, gk) in w.iter_mut().zip(g.iter()) {
            *wk -= hp.eta * gk;
        }
        project_ball_in_place(&mut w, ball);
        if step == snap_step {
            snapshot = Some(w.clone());
        }
    }
    Ok(LocalOutcome {
        snapshot_model: snapshot.expect("snapshot step lies inside the round"),
        final_model: w,
    })
}
