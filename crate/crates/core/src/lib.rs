//! Deterministic federated-learning simulator centred on distributionally
//! robust training with drift-corrected local updates (DRDM), alongside the
//! FedAvg, DRFA and SCAFFOLD baselines.
//!
//! Layout:
//! * [`numerics`], [`geometry`]: vectors, projections, replayable randomness
//! * [`data`], [`models`]: datasets, partitioning, differentiable classifiers
//! * [`fedcore`]: the training rounds of each algorithm
//! * [`evaluation`]: fairness metrics, duality gap, energy model
//! * [`harness`]: configuration, experiments, sweeps, verification suites

pub mod data;
pub mod error;
pub mod evaluation;
pub mod fedcore;
pub mod geometry;
pub mod harness;
pub mod models;
pub mod numerics;

pub use error::{Error, Result};
pub use evaluation::{EnergyParams, MetricsRow};
pub use fedcore::{Algorithm, ClientState, Federation, HyperParams, ServerState};
pub use geometry::{BallConstraint, RngStream, SimplexPoint};
pub use numerics::{DenseMatrix, DenseVector};
