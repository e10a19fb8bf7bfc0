//! Fairness metrics, gradient dissimilarity, duality-gap certificates and the
//! energy model used to pick the number of local steps.

mod energy;
mod gap;

pub use energy::{
    optimal_tau_from_rounds, optimal_tau_search, total_energy, transmission_energy, EnergyCost, EnergyParams, TauOutcome,
    TauSearch,
};
pub use gap::{duality_gap, DualityGapEstimate, GapOracle};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fedcore::LocalObjective;
use crate::geometry::SimplexPoint;
use crate::numerics::squared_distance;

/// Test-set metrics of the global model after a round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: u64,
    pub avg_acc: f64,
    pub worst_acc: f64,
    pub std_acc: f64,
    pub lambda: SimplexPoint,
    /// Joules spent up to and including this round.
    pub cumulative_energy: f64,
}

/// Mean, minimum and population standard deviation.
pub fn aggregate_metrics(per_client_acc: &[f64]) -> Result<(f64, f64, f64)> {
    if per_client_acc.is_empty() {
        return Err(Error::state("no client accuracies to aggregate"));
    }
    let n = per_client_acc.len() as f64;
    let mean = per_client_acc.iter().sum::<f64>() / n;
    let worst = per_client_acc.iter().copied().fold(f64::INFINITY, f64::min);
    let var = per_client_acc.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    Ok((mean, worst, var.sqrt()))
}

/// `max_i Σ_j p_j ‖∇f_i(w) − ∇f_j(w)‖²` from full gradients at `w`.
pub fn gamma_dissimilarity<O: LocalObjective>(objectives: &[O], w: &[f64], p: &SimplexPoint) -> Result<f64> {
    if objectives.is_empty() {
        return Err(Error::state("gradient dissimilarity of an empty fleet"));
    }
    check_len(objectives.len(), p.len())?;
    let grads = objectives.iter().map(|o| o.full_gradient(w)).collect::<Result<Vec<_>>>()?;
    let mut best = 0.0f64;
    for gi in &grads {
        let mut acc = 0.0;
        for (gj, pj) in grads.iter().zip(p.weights()) {
            acc += pj * squared_distance(gi, gj)?;
        }
        best = best.max(acc);
    }
    Ok(best)
}

/// First round whose worst-case accuracy reaches `target`.
pub fn rounds_to_target(rows: &[MetricsRow], target_worst_acc: f64) -> Option<u64> {
    rows.iter().find(|r| r.worst_acc >= target_worst_acc).map(|r| r.round)
}
