use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::experiment::{run_single, training_options, LoadedData};
use crate::error::{Error, Result};
use crate::evaluation::{optimal_tau_from_rounds, rounds_to_target, EnergyParams};

/// Rounds one Monte Carlo run needed to reach the target at a given τ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TauSweepRow {
    pub tau: usize,
    pub run: usize,
    /// `None` when the round cap came first.
    pub rounds_to_target: Option<u64>,
}

/// Trains every (τ, run) pair until the worst-case accuracy reaches
/// `target_worst_acc` or the configured round cap is hit. Accuracy is checked
/// every round regardless of `metrics_every`.
pub fn sweep_tau(cfg: &ExperimentConfig, data: &LoadedData, grid: &[usize], target_worst_acc: f64) -> Result<Vec<TauSweepRow>> {
    if grid.is_empty() {
        return Err(Error::param("tau grid is empty"));
    }
    let jobs: Vec<(usize, usize)> = grid
        .iter()
        .flat_map(|&tau| (0..cfg.monte_carlo_runs).map(move |run| (tau, run)))
        .collect();
    jobs.into_par_iter()
        .map(|(tau, run)| {
            let mut c = cfg.clone();
            c.training.tau = tau;
            c.validate()?;
            let mut opts = training_options(&c);
            opts.metrics_every = 1;
            opts.stop_at_worst_acc = Some(target_worst_acc);
            let out = run_single(&c, data, run, &opts)?;
            Ok(TauSweepRow {
                tau,
                run,
                rounds_to_target: rounds_to_target(&out.rows, target_worst_acc),
            })
        })
        .collect()
}

/// Mean rounds-to-target per τ (grid order); `None` if any run missed the target.
pub fn mean_rounds_per_tau(rows: &[TauSweepRow]) -> Vec<(usize, Option<f64>)> {
    let mut taus: Vec<usize> = Vec::new();
    for r in rows {
        if !taus.contains(&r.tau) {
            taus.push(r.tau);
        }
    }
    taus.into_iter()
        .map(|tau| {
            let hits: Vec<Option<u64>> = rows.iter().filter(|r| r.tau == tau).map(|r| r.rounds_to_target).collect();
            let mean = hits
                .iter()
                .copied()
                .collect::<Option<Vec<u64>>>()
                .map(|v| v.iter().sum::<u64>() as f64 / v.len() as f64);
            (tau, mean)
        })
        .collect()
}

pub fn emit_tau_csv(rows: &[TauSweepRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "tau,run,rounds_to_target")?;
    for r in rows {
        match r.rounds_to_target {
            Some(n) => writeln!(out, "{},{},{n}", r.tau, r.run)?,
            None => writeln!(out, "{},{},", r.tau, r.run)?,
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergySweepRow {
    pub snr_db: f64,
    pub bandwidth_hz: f64,
    pub opt_tau: Option<usize>,
    pub energy_j: Option<f64>,
}

/// Energy-optimal τ for every (SNR, bandwidth) cell, from measured rounds-to-target.
pub fn sweep_energy(
    measured: &[(usize, Option<f64>)],
    m: usize,
    base: &EnergyParams,
    snr_grid: &[f64],
    bandwidth_grid: &[f64],
) -> Result<Vec<EnergySweepRow>> {
    if snr_grid.is_empty() || bandwidth_grid.is_empty() {
        return Err(Error::param("SNR and bandwidth grids must be non-empty"));
    }
    let mut rows = Vec::with_capacity(snr_grid.len() * bandwidth_grid.len());
    for &snr_db in snr_grid {
        for &bandwidth in bandwidth_grid {
            let ep = EnergyParams {
                snr_db,
                bandwidth,
                ..*base
            };
            let search = optimal_tau_from_rounds(measured, m, &ep)?;
            let energy_j = search
                .best_tau
                .and_then(|t| search.table.iter().find(|r| r.tau == t))
                .and_then(|r| r.energy);
            rows.push(EnergySweepRow {
                snr_db,
                bandwidth_hz: bandwidth,
                opt_tau: search.best_tau,
                energy_j,
            });
        }
    }
    Ok(rows)
}

pub fn emit_energy_csv(rows: &[EnergySweepRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "snr_db,bandwidth_hz,opt_tau,energy_j")?;
    for r in rows {
        let tau = r.opt_tau.map(|t| t.to_string()).unwrap_or_default();
        let e = r.energy_j.map(|e| format!("{e:.6}")).unwrap_or_default();
        writeln!(out, "{:.6},{:.6},{tau},{e}", r.snr_db, r.bandwidth_hz)?;
    }
    out.flush()?;
    Ok(())
}
