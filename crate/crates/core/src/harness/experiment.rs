use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use super::config::{DatasetKind, ExperimentConfig};
use crate::data::{
    dirichlet_class_mixtures, load_idx, partition_with_mixtures, synthetic_two_gaussians, zipf_sizes, Dataset,
};
use crate::error::{Error, Result};
use crate::evaluation::MetricsRow;
use crate::fedcore::{run_training, Federation, ShardEvaluator, ShardObjective, TrainingOptions, TrainingOutput};
use crate::geometry::{Purpose, RngStream};
use crate::models::ModelParams;
use crate::numerics::DenseVector;

/// Train and test sets shared by every run of an experiment.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub train: Arc<Dataset>,
    pub test: Arc<Dataset>,
}

/// Loads IDX files (relative paths resolved from `base`) or generates the
/// synthetic two-class problem from the master seed.
pub fn load_data(cfg: &ExperimentConfig, base: &Path) -> Result<LoadedData> {
    let d = &cfg.dataset;
    let (train, test) = match d.kind {
        DatasetKind::Idx => {
            let p = d.idx_paths(base)?;
            (
                load_idx(&p.train_images, &p.train_labels)?,
                load_idx(&p.test_images, &p.test_labels)?,
            )
        }
        DatasetKind::Synthetic => {
            let mut rng = RngStream::for_purpose(cfg.seed, Purpose::Synthetic, 0, 0);
            let train = synthetic_two_gaussians(d.samples_per_class, d.feature_dim, d.separation, &mut rng)?;
            let mut rng = RngStream::for_purpose(cfg.seed, Purpose::Synthetic, 1, 0);
            let test = synthetic_two_gaussians(d.test_samples_per_class, d.feature_dim, d.separation, &mut rng)?;
            (train, test)
        }
    };
    if train.feature_dim() != test.feature_dim() {
        return Err(Error::Dimension {
            expected: train.feature_dim(),
            actual: test.feature_dim(),
        });
    }
    Ok(LoadedData {
        train: Arc::new(train),
        test: Arc::new(test),
    })
}

/// Seed of Monte Carlo run `k`: `master + k`. Streams hash the seed, so
/// neighbouring seeds are unrelated.
pub fn child_seed(master: u64, run: usize) -> u64 {
    master.wrapping_add(run as u64)
}

/// Everything one Monte Carlo run needs.
pub struct RunSetup {
    pub federation: Federation<ShardObjective>,
    pub evaluator: ShardEvaluator,
    pub w0: DenseVector,
    pub train_shards: Vec<Vec<usize>>,
    pub test_shards: Vec<Vec<usize>>,
}

/// Partitions the data for run `run` and builds the federation. Each client's
/// test shard follows the same class mixture as its training shard.
pub fn setup_run(cfg: &ExperimentConfig, data: &LoadedData, run: usize) -> Result<RunSetup> {
    let seed = child_seed(cfg.seed, run);
    let n = cfg.partition.num_clients;
    let classes = data.train.num_classes().max(data.test.num_classes());
    let mixtures =
        dirichlet_class_mixtures(n, classes, cfg.partition.alpha, &mut RngStream::for_purpose(seed, Purpose::Mixtures, 0, 0))?;
    let shards = |ds: &Dataset, purpose: Purpose| -> Result<Vec<Vec<usize>>> {
        let sizes = zipf_sizes(ds.len(), n, cfg.partition.sigma)?;
        let mut rng = RngStream::for_purpose(seed, purpose, 0, 0);
        let mix: Vec<Vec<f64>> = mixtures.iter().map(|m| m[..ds.num_classes()].to_vec()).collect();
        Ok(partition_with_mixtures(ds, &sizes, &mix, &mut rng)?.assignments().to_vec())
    };
    let train_shards = shards(&data.train, Purpose::Partition)?;
    let test_shards = shards(&data.test, Purpose::TestPartition)?;

    let shape = cfg.model.shape(data.train.feature_dim(), classes);
    let objectives = train_shards
        .iter()
        .map(|s| ShardObjective::new(data.train.clone(), s.clone(), shape, cfg.training.batch))
        .collect::<Result<Vec<_>>>()?;
    let federation = Federation::new(objectives, cfg.training.hyper_params(), cfg.training.ball()?, seed)?
        .with_correction(cfg.training.c_update);
    let evaluator = ShardEvaluator::new(data.test.clone(), test_shards.clone(), shape)?;
    let w0 = ModelParams::init(shape, &mut RngStream::for_purpose(seed, Purpose::ModelInit, 0, 0))?.flat;
    Ok(RunSetup {
        federation,
        evaluator,
        w0,
        train_shards,
        test_shards,
    })
}

/// Training options implied by the config.
pub fn training_options(cfg: &ExperimentConfig) -> TrainingOptions {
    let mut opts = TrainingOptions::new(cfg.training.algorithm);
    opts.metrics_every = cfg.metrics_every;
    opts.energy = cfg.energy.map(|e| e.participant_cost());
    opts
}

/// One Monte Carlo run with caller-supplied options.
pub fn run_single(cfg: &ExperimentConfig, data: &LoadedData, run: usize, opts: &TrainingOptions) -> Result<TrainingOutput> {
    let setup = setup_run(cfg, data, run)?;
    run_training(&setup.federation, setup.w0, &setup.evaluator, opts)
}

/// Mean and population standard deviation of one metric over runs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub round: u64,
    pub avg_acc: MeanStd,
    pub worst_acc: MeanStd,
    pub std_acc: MeanStd,
    pub energy: MeanStd,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    /// Metrics of every run, in run order.
    pub runs: Vec<Vec<MetricsRow>>,
    /// Per-round mean and standard deviation over runs.
    pub summary: Vec<SummaryRow>,
}

impl RunResult {
    pub fn from_runs(runs: Vec<Vec<MetricsRow>>) -> Self {
        let rounds = runs.iter().map(Vec::len).min().unwrap_or(0);
        let summary = (0..rounds)
            .map(|r| {
                let col = |f: fn(&MetricsRow) -> f64| MeanStd::of(&runs.iter().map(|run| f(&run[r])).collect::<Vec<_>>());
                SummaryRow {
                    round: runs[0][r].round,
                    avg_acc: col(|m| m.avg_acc),
                    worst_acc: col(|m| m.worst_acc),
                    std_acc: col(|m| m.std_acc),
                    energy: col(|m| m.cumulative_energy),
                }
            })
            .collect();
        Self { runs, summary }
    }

    pub fn final_summary(&self) -> Option<&SummaryRow> {
        self.summary.last()
    }
}

/// All Monte Carlo runs of `cfg`, in parallel, on pre-loaded data.
pub fn run_experiment_with(cfg: &ExperimentConfig, data: &LoadedData) -> Result<RunResult> {
    cfg.validate()?;
    let opts = training_options(cfg);
    let runs = (0..cfg.monte_carlo_runs)
        .into_par_iter()
        .map(|k| Ok(run_single(cfg, data, k, &opts)?.rows))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult::from_runs(runs))
}

/// Loads the data (relative paths from `base`) and runs every Monte Carlo run.
pub fn run_experiment(cfg: &ExperimentConfig, base: &Path) -> Result<RunResult> {
    let data = load_data(cfg, base)?;
    run_experiment_with(cfg, &data)
}

/// Per-(run, round) metrics as CSV with six decimals.
pub fn emit_csv(result: &RunResult, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "run,round,avg_acc,worst_acc,std_acc,energy_j")?;
    for (k, run) in result.runs.iter().enumerate() {
        for r in run {
            writeln!(
                out,
                "{k},{},{:.6},{:.6},{:.6},{:.6}",
                r.round, r.avg_acc, r.worst_acc, r.std_acc, r.cumulative_energy
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Per-round mean and standard deviation over runs.
pub fn emit_summary_csv(result: &RunResult, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "round,avg_acc_mean,avg_acc_std,worst_acc_mean,worst_acc_std,std_acc_mean,std_acc_std,energy_j_mean"
    )?;
    for s in &result.summary {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.round,
            s.avg_acc.mean,
            s.avg_acc.std,
            s.worst_acc.mean,
            s.worst_acc.std,
            s.std_acc.mean,
            s.std_acc.std,
            s.energy.mean
        )?;
    }
    out.flush()?;
    Ok(())
}
