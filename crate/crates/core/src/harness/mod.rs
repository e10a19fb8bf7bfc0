//! Experiment configuration, Monte Carlo orchestration, parameter sweeps,
//! CSV output and the verification suites behind `fedrobust verify`.

mod config;
mod experiment;
mod sweep;
mod verify;

pub use config::{
    parse_config, DatasetConfig, DatasetKind, ExperimentConfig, IdxPaths, ModelConfig, ModelKind, PartitionConfig,
    TrainingConfig, MNIST_TEST_IMAGES, MNIST_TEST_LABELS, MNIST_TRAIN_IMAGES, MNIST_TRAIN_LABELS,
};
pub use experiment::{
    child_seed, emit_csv, emit_summary_csv, load_data, run_experiment, run_experiment_with, run_single, setup_run,
    training_options, LoadedData, MeanStd, RunResult, RunSetup, SummaryRow,
};
pub use sweep::{
    emit_energy_csv, emit_tau_csv, mean_rounds_per_tau, sweep_energy, sweep_tau, EnergySweepRow, TauSweepRow,
};
pub use verify::{
    drdm_drfa_max_difference, gradient_relative_error, grid_projection_oracle, participant_sampling_unbiasedness,
    reduction_checks, scalar_fleet_state, snapshot_unbiasedness, dual_gradient_unbiasedness, synthetic_fleet,
    toy_fleet, verify, Check, Suite, VerifyReport,
};
