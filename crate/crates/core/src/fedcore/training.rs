use std::sync::Arc;

use rayon::prelude::*;

use super::{Algorithm, ClientState, DriftRule, Federation, LocalObjective, ServerState};
use crate::data::Dataset;
use crate::error::{check_len, Error, Result};
use crate::evaluation::{aggregate_metrics, EnergyCost, MetricsRow};
use crate::models::{accuracy_flat, ModelShape};
use crate::numerics::DenseVector;

/// Per-client test accuracy of a global model.
pub trait AccuracyEvaluator: Sync {
    fn num_clients(&self) -> usize;

    fn client_accuracy(&self, client: usize, w: &[f64]) -> Result<f64>;

    fn accuracies(&self, w: &[f64]) -> Result<Vec<f64>> {
        (0..self.num_clients())
            .into_par_iter()
            .map(|i| self.client_accuracy(i, w))
            .collect()
    }
}

/// Accuracy on each client's test shard of a shared test set.
#[derive(Clone, Debug)]
pub struct ShardEvaluator {
    data: Arc<Dataset>,
    shards: Vec<Vec<usize>>,
    shape: ModelShape,
}

impl ShardEvaluator {
    pub fn new(data: Arc<Dataset>, shards: Vec<Vec<usize>>, shape: ModelShape) -> Result<Self> {
        check_len(shape.input, data.feature_dim())?;
        if let Some(i) = shards.iter().position(|s| s.is_empty()) {
            return Err(Error::state(format!("client {i} has an empty test shard")));
        }
        Ok(Self { data, shards, shape })
    }
}

impl AccuracyEvaluator for ShardEvaluator {
    fn num_clients(&self) -> usize {
        self.shards.len()
    }

    fn client_accuracy(&self, client: usize, w: &[f64]) -> Result<f64> {
        accuracy_flat(&self.shape, w, &self.data.subset(&self.shards[client]))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingOptions {
    pub algorithm: Algorithm,
    /// Evaluate every this many rounds; round 0 and the last round are always evaluated.
    pub metrics_every: usize,
    /// Energy of one participant slot, accumulated every round.
    pub energy: Option<EnergyCost>,
    /// Stop after the first evaluated round whose worst-case accuracy reaches this.
    pub stop_at_worst_acc: Option<f64>,
}

impl TrainingOptions {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            metrics_every: 1,
            energy: None,
            stop_at_worst_acc: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainingOutput {
    pub rows: Vec<MetricsRow>,
    pub server: ServerState,
    pub clients: Vec<ClientState>,
    pub rounds_run: u64,
}

fn metrics_row<E: AccuracyEvaluator + ?Sized>(
    evaluator: &E,
    server: &ServerState,
    energy: f64,
) -> Result<MetricsRow> {
    let accs = evaluator.accuracies(&server.w_bar)?;
    let (avg_acc, worst_acc, std_acc) = aggregate_metrics(&accs)?;
    Ok(MetricsRow {
        round: server.round,
        avg_acc,
        worst_acc,
        std_acc,
        lambda: server.lambda.clone(),
        cumulative_energy: energy,
    })
}

/// Runs the configured number of rounds from `w0`, recording metrics of the
/// global model before the first round and after evaluated rounds.
pub fn run_training<O, D, E>(
    fed: &Federation<O, D>,
    w0: DenseVector,
    evaluator: &E,
    options: &TrainingOptions,
) -> Result<TrainingOutput>
where
    O: LocalObjective,
    D: DriftRule,
    E: AccuracyEvaluator + ?Sized,
{
    check_len(fed.num_clients(), evaluator.num_clients())?;
    let every = options.metrics_every.max(1) as u64;
    let hp = *fed.hyper_params();
    let per_round_energy = options.energy.map_or(0.0, |c| {
        crate::evaluation::total_energy(1, hp.tau, &vec![c; hp.m])
    });
    let (mut server, mut clients) = fed.initial_state(w0)?;
    let mut energy = 0.0;
    let mut rows = vec![metrics_row(evaluator, &server, energy)?];
    let reached = |row: &MetricsRow| options.stop_at_worst_acc.is_some_and(|t| row.worst_acc >= t);
    if !reached(&rows[0]) {
        let total = hp.rounds as u64;
        for s in 0..total {
            fed.run_round(options.algorithm, &mut server, &mut clients)?;
            energy += per_round_energy;
            let done = s + 1;
            if done % every == 0 || done == total {
                let row = metrics_row(evaluator, &server, energy)?;
                let stop = reached(&row);
                rows.push(row);
                if stop {
                    break;
                }
            }
        }
    }
    Ok(TrainingOutput {
        rounds_run: server.round,
        rows,
        server,
        clients,
    })
}
