use serde::{Deserialize, Serialize};

use super::{rounds_to_target, MetricsRow};
use crate::error::{Error, Result};

/// Device energy constants shared by every client of an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyParams {
    /// Joules per local step.
    pub proc_energy_per_step: f64,
    /// Watts.
    pub tx_power: f64,
    /// Bits per model upload.
    pub model_bits: f64,
    /// Hertz.
    pub bandwidth: f64,
    pub snr_db: f64,
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("proc_energy_per_step", self.proc_energy_per_step),
            ("tx_power", self.tx_power),
            ("model_bits", self.model_bits),
            ("bandwidth", self.bandwidth),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(format!("{name} must be non-negative and finite, got {v}")));
            }
        }
        if self.bandwidth == 0.0 || !self.snr_db.is_finite() {
            return Err(Error::param("bandwidth must be positive and snr_db finite"));
        }
        Ok(())
    }

    pub fn participant_cost(&self) -> EnergyCost {
        EnergyCost {
            per_step: self.proc_energy_per_step,
            per_upload: transmission_energy(self),
        }
    }
}

/// One participant's energy: per local step and per upload.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyCost {
    pub per_step: f64,
    pub per_upload: f64,
}

/// Joules for one upload at the Shannon rate: `P·bits / (B·log₂(1 + SNR))`.
pub fn transmission_energy(ep: &EnergyParams) -> f64 {
    let snr = 10f64.powf(ep.snr_db / 10.0);
    ep.tx_power * ep.model_bits / (ep.bandwidth * snr.ln_1p() / std::f64::consts::LN_2)
}

/// `rounds·τ·Σ E^p + rounds·Σ E^t` over the participants of a round.
pub fn total_energy(rounds_used: u64, tau: usize, participants: &[EnergyCost]) -> f64 {
    let proc: f64 = participants.iter().map(|c| c.per_step).sum();
    let tx: f64 = participants.iter().map(|c| c.per_upload).sum();
    let r = rounds_used as f64;
    r * tau as f64 * proc + r * tx
}

#[derive(Clone, Debug, PartialEq)]
pub struct TauOutcome {
    pub tau: usize,
    /// Rounds needed to reach the target; `None` when the run never got there.
    pub rounds: Option<f64>,
    pub energy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TauSearch {
    /// Energy-minimizing τ; `None` when no grid point reached the target.
    pub best_tau: Option<usize>,
    pub table: Vec<TauOutcome>,
}

/// Energy-optimal τ given measured rounds-to-target per grid point. `rounds`
/// may be fractional (a mean over seeds). Ties go to the smaller τ.
pub fn optimal_tau_from_rounds(measured: &[(usize, Option<f64>)], m: usize, ep: &EnergyParams) -> Result<TauSearch> {
    if measured.is_empty() {
        return Err(Error::param("tau grid is empty"));
    }
    ep.validate()?;
    let cost = ep.participant_cost();
    let per_round = |tau: usize| m as f64 * (tau as f64 * cost.per_step + cost.per_upload);
    let table: Vec<TauOutcome> = measured
        .iter()
        .map(|&(tau, rounds)| TauOutcome {
            tau,
            rounds,
            energy: rounds.map(|r| r * per_round(tau)),
        })
        .collect();
    let mut best: Option<(f64, usize)> = None;
    for row in &table {
        if let Some(e) = row.energy {
            let better = match best {
                None => true,
                Some((be, bt)) => e < be || (e == be && row.tau < bt),
            };
            if better {
                best = Some((e, row.tau));
            }
        }
    }
    Ok(TauSearch {
        best_tau: best.map(|b| b.1),
        table,
    })
}

/// Runs `train(τ)` for each grid point and picks the energy-optimal τ for
/// reaching `target_worst_acc`.
pub fn optimal_tau_search<F>(
    tau_grid: &[usize],
    target_worst_acc: f64,
    m: usize,
    ep: &EnergyParams,
    mut train: F,
) -> Result<TauSearch>
where
    F: FnMut(usize) -> Result<Vec<MetricsRow>>,
{
    let mut measured = Vec::with_capacity(tau_grid.len());
    for &tau in tau_grid {
        let rows = train(tau)?;
        measured.push((tau, rounds_to_target(&rows, target_worst_acc).map(|r| r as f64)));
    }
    optimal_tau_from_rounds(&measured, m, ep)
}
