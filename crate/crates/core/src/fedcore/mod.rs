//! Federated training rounds: DRDM and the FedAvg, DRFA and SCAFFOLD baselines.
//!
//! A [`Federation`] bundles the client objectives with the round settings.
//! Rounds mutate a [`ServerState`] and the per-client [`ClientState`]s and
//! return a [`RoundTranscript`] of everything that crossed the (simulated)
//! network. All randomness comes from [`RngStream`]s keyed by round and
//! client, so a round gives bitwise identical results whether participants
//! run sequentially or in parallel.

mod local;
mod objective;
mod rounds;
mod schedule;
mod server;
mod training;

pub use local::{drift_corrected_gradient, local_sgd_steps, local_update_steps, DriftRule, LocalOutcome, StandardDrift};
pub use objective::{LocalObjective, QuadraticObjective, ShardObjective};
pub use schedule::{theoretical_hyperparams, TheoreticalSchedule};
pub use server::{
    dual_gradient_vector, dual_variable_update, mean_model, server_aggregate, server_update_c, update_gradient_memory,
};
pub use training::{run_training, AccuracyEvaluator, ShardEvaluator, TrainingOptions, TrainingOutput};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    sample_participants, sample_snapshot_index, sample_uniform_subset, BallConstraint, Purpose, RngStream, SimplexPoint,
};
use crate::numerics::DenseVector;

/// Step sizes and round structure shared by every algorithm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Primal (local) step size.
    pub eta: f64,
    /// Dual step size.
    pub gamma: f64,
    /// Dynamic-regularization strength; only DRDM reads it.
    pub mu: f64,
    /// Local steps per round.
    pub tau: usize,
    /// Participants per round.
    pub m: usize,
    pub batch: usize,
    /// Communication rounds `S`; the total iteration count is `S·τ`.
    pub rounds: usize,
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::param(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::param(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::param(format!("mu must be non-negative, got {}", self.mu)));
        }
        if self.tau == 0 || self.m == 0 || self.batch == 0 {
            return Err(Error::param("tau, m and batch must all be at least 1"));
        }
        Ok(())
    }

    pub fn total_iterations(&self) -> usize {
        self.rounds * self.tau
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Drdm,
    Drfa,
    #[serde(rename = "fedavg")]
    FedAvg,
    Scaffold,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Drdm => "drdm",
            Algorithm::Drfa => "drfa",
            Algorithm::FedAvg => "fedavg",
            Algorithm::Scaffold => "scaffold",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drdm" => Ok(Algorithm::Drdm),
            "drfa" => Ok(Algorithm::Drfa),
            "fedavg" => Ok(Algorithm::FedAvg),
            "scaffold" => Ok(Algorithm::Scaffold),
            other => Err(Error::param(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// How the server's correction state subtracts the broadcast model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionUpdate {
    /// `c ← c − (μ/N)·Σ_i (w_i − w̄)`: the broadcast model is subtracted once
    /// per uploaded model, so an unchanged fleet leaves `c` unchanged.
    #[default]
    PerClientWBar,
    /// `c ← c − (μ/N)·(Σ_i w_i − w̄)`: the broadcast model is subtracted once
    /// per round.
    PerRoundWBar,
}

/// State held by one client between rounds.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientState {
    pub id: usize,
    /// Local model after the client's last participation.
    pub w: DenseVector,
    /// DRDM: the gradient memory `h_i`. SCAFFOLD: the client control variate.
    pub memory: DenseVector,
}

impl ClientState {
    pub fn new(id: usize, w: DenseVector) -> Self {
        let memory = DenseVector::zeros(w.len());
        Self { id, w, memory }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServerState {
    pub w_bar: DenseVector,
    /// DRDM correction state; SCAFFOLD server control variate.
    pub c: DenseVector,
    pub lambda: SimplexPoint,
    pub round: u64,
}

impl ServerState {
    pub fn new(w0: DenseVector, num_clients: usize) -> Self {
        let c = DenseVector::zeros(w0.len());
        Self {
            w_bar: w0,
            c,
            lambda: SimplexPoint::uniform(num_clients),
            round: 0,
        }
    }
}

/// Who takes part in a round and where its dual snapshot is taken.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundPlan {
    /// Participant slots; DRDM and DRFA may repeat a client.
    pub participants: Vec<usize>,
    /// Global iteration index `t′ ∈ [sτ+1, (s+1)τ]`.
    pub snapshot_t: u64,
    /// Clients that evaluate the dual loss, `m` distinct ids.
    pub dual_eval_set: Vec<usize>,
}

/// What one participant slot sends back.
#[derive(Clone, Debug, PartialEq)]
pub struct Upload {
    pub client: usize,
    pub final_model: DenseVector,
    pub snapshot_model: DenseVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundTranscript {
    pub round: u64,
    pub plan: RoundPlan,
    pub uploads: Vec<Upload>,
    /// `(client, ℓ_i(w^{(t′)}; ζ_i))` for each member of the dual evaluation set.
    pub dual_losses: Vec<(usize, f64)>,
    /// Server state after the round.
    pub server: ServerState,
}

/// Client objectives plus the settings every round needs.
pub struct Federation<O, D = StandardDrift> {
    objectives: Vec<O>,
    hp: HyperParams,
    ball: BallConstraint,
    seed: u64,
    correction: CorrectionUpdate,
    drift: D,
}

impl<O: LocalObjective> Federation<O, StandardDrift> {
    pub fn new(objectives: Vec<O>, hp: HyperParams, ball: BallConstraint, seed: u64) -> Result<Self> {
        Self::with_drift(objectives, hp, ball, seed, StandardDrift)
    }
}

impl<O: LocalObjective, D: DriftRule> Federation<O, D> {
    /// Builds a federation whose DRDM local steps use `drift` for the
    /// corrected direction; used to plug in test doubles.
    pub fn with_drift(objectives: Vec<O>, hp: HyperParams, ball: BallConstraint, seed: u64, drift: D) -> Result<Self> {
        hp.validate()?;
        let n = objectives.len();
        if n == 0 {
            return Err(Error::param("a federation needs at least one client"));
        }
        if hp.m > n {
            return Err(Error::param(format!("m = {} exceeds the {n} available clients", hp.m)));
        }
        let dim = objectives[0].dim();
        if let Some(bad) = objectives.iter().position(|o| o.dim() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                actual: objectives[bad].dim(),
            });
        }
        Ok(Self {
            objectives,
            hp,
            ball,
            seed,
            correction: CorrectionUpdate::default(),
            drift,
        })
    }

    pub fn with_correction(mut self, rule: CorrectionUpdate) -> Self {
        self.correction = rule;
        self
    }

    pub fn num_clients(&self) -> usize {
        self.objectives.len()
    }

    pub fn dim(&self) -> usize {
        self.objectives[0].dim()
    }

    pub fn objectives(&self) -> &[O] {
        &self.objectives
    }

    pub fn hyper_params(&self) -> &HyperParams {
        &self.hp
    }

    pub fn ball(&self) -> &BallConstraint {
        &self.ball
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn correction(&self) -> CorrectionUpdate {
        self.correction
    }

    pub(crate) fn drift(&self) -> &D {
        &self.drift
    }

    /// Fresh server and client states all holding `w0`.
    pub fn initial_state(&self, w0: DenseVector) -> Result<(ServerState, Vec<ClientState>)> {
        crate::error::check_len(self.dim(), w0.len())?;
        let clients = (0..self.num_clients()).map(|i| ClientState::new(i, w0.clone())).collect();
        Ok((ServerState::new(w0, self.num_clients()), clients))
    }

    pub fn stream(&self, purpose: Purpose, client: usize, round: u64) -> RngStream {
        RngStream::for_purpose(self.seed, purpose, client as u64, round)
    }

    /// λ-weighted participants with replacement, snapshot index and uniform
    /// dual evaluation set for round `round`.
    pub fn plan_round(&self, round: u64, lambda: &SimplexPoint) -> Result<RoundPlan> {
        let n = self.num_clients();
        if lambda.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: lambda.len(),
            });
        }
        let participants = sample_participants(lambda, self.hp.m, &mut self.stream(Purpose::Participants, 0, round))?;
        let snapshot_t = sample_snapshot_index(round, self.hp.tau as u64, &mut self.stream(Purpose::Snapshot, 0, round))?;
        let dual_eval_set = sample_uniform_subset(n, self.hp.m, &mut self.stream(Purpose::DualSet, 0, round))?;
        Ok(RoundPlan {
            participants,
            snapshot_t,
            dual_eval_set,
        })
    }

    /// Uniform participants without replacement (FedAvg, SCAFFOLD).
    pub fn plan_uniform_round(&self, round: u64) -> Result<RoundPlan> {
        let participants =
            sample_uniform_subset(self.num_clients(), self.hp.m, &mut self.stream(Purpose::Participants, 0, round))?;
        Ok(RoundPlan {
            participants,
            snapshot_t: (round + 1) * self.hp.tau as u64,
            dual_eval_set: Vec::new(),
        })
    }

    pub fn run_round(
        &self,
        algorithm: Algorithm,
        server: &mut ServerState,
        clients: &mut [ClientState],
    ) -> Result<RoundTranscript> {
        match algorithm {
            Algorithm::Drdm => self.run_round_drdm(server, clients),
            Algorithm::Drfa => self.run_round_drfa(server, clients),
            Algorithm::FedAvg => self.run_round_fedavg(server, clients),
            Algorithm::Scaffold => self.run_round_scaffold(server, clients),
        }
    }
}

/// Stream lane for each participant slot: how many earlier slots hold the same client.
pub(crate) fn occurrence_lanes(participants: &[usize]) -> Vec<u64> {
    let mut seen = std::collections::HashMap::new();
    participants
        .iter()
        .map(|c| {
            let e = seen.entry(*c).or_insert(0u64);
            let lane = *e;
            *e += 1;
            lane
        })
        .collect()
}
