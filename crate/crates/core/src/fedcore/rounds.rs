use rayon::prelude::*;

use super::{
    dual_gradient_vector, dual_variable_update, local_sgd_steps, local_update_steps, mean_model, occurrence_lanes,
    server_aggregate, server_update_c, update_gradient_memory, ClientState, DriftRule, Federation, LocalObjective,
    LocalOutcome, RoundPlan, RoundTranscript, ServerState, Upload,
};
use crate::error::{check_len, Error, Result};
use crate::geometry::{Purpose, RngStream, StreamId};
use crate::numerics::DenseVector;

struct SlotResult {
    client: usize,
    outcome: LocalOutcome,
    memory: DenseVector,
}

impl<O: LocalObjective, D: DriftRule> Federation<O, D> {
    fn check_states(&self, server: &ServerState, clients: &[ClientState]) -> Result<()> {
        let n = self.num_clients();
        check_len(n, clients.len())?;
        check_len(n, server.lambda.len())?;
        check_len(self.dim(), server.w_bar.len())?;
        check_len(self.dim(), server.c.len())?;
        for (i, c) in clients.iter().enumerate() {
            if c.id != i {
                return Err(Error::state(format!("client slot {i} holds client {}", c.id)));
            }
            check_len(self.dim(), c.w.len())?;
            check_len(self.dim(), c.memory.len())?;
        }
        Ok(())
    }

    fn local_stream(&self, client: usize, round: u64, lane: u64) -> RngStream {
        RngStream::new(
            self.seed(),
            StreamId::new(Purpose::LocalSteps, client as u64, round).with_lane(lane),
        )
    }

    /// Fresh-minibatch losses at `model` for every member of the dual evaluation set.
    fn dual_losses(&self, plan: &RoundPlan, model: &[f64], round: u64) -> Result<Vec<(usize, f64)>> {
        plan.dual_eval_set
            .par_iter()
            .map(|&i| {
                let mut rng = self.stream(Purpose::DualLoss, i, round);
                Ok((i, self.objectives()[i].stochastic_loss(model, &mut rng)?))
            })
            .collect()
    }

    fn finish(
        &self,
        server: &mut ServerState,
        plan: RoundPlan,
        uploads: Vec<Upload>,
        dual_losses: Vec<(usize, f64)>,
    ) -> RoundTranscript {
        server.round += 1;
        RoundTranscript {
            round: server.round - 1,
            plan,
            uploads,
            dual_losses,
            server: server.clone(),
        }
    }

    /// One DRDM round: drift-corrected local steps from `w̄`, memory updates,
    /// corrected aggregation of both the final and the snapshot models, and a
    /// dual step at the snapshot model.
    pub fn run_round_drdm(&self, server: &mut ServerState, clients: &mut [ClientState]) -> Result<RoundTranscript> {
        self.check_states(server, clients)?;
        let hp = *self.hyper_params();
        let s = server.round;
        let plan = self.plan_round(s, &server.lambda)?;
        let lanes = occurrence_lanes(&plan.participants);
        let w_bar = &server.w_bar;
        let snapshot: &[ClientState] = clients;
        let slots: Vec<SlotResult> = plan
            .participants
            .par_iter()
            .zip(lanes.par_iter())
            .map(|(&i, &lane)| {
                let mut rng = self.local_stream(i, s, lane);
                let memory = &snapshot[i].memory;
                let outcome = local_update_steps(
                    &self.objectives()[i],
                    self.drift(),
                    memory,
                    w_bar,
                    &hp,
                    self.ball(),
                    s,
                    plan.snapshot_t,
                    &mut rng,
                )?;
                let memory = update_gradient_memory(memory, &outcome.final_model, w_bar, hp.mu)?;
                Ok(SlotResult { client: i, outcome, memory })
            })
            .collect::<Result<_>>()?;

        let finals: Vec<&[f64]> = slots.iter().map(|r| r.outcome.final_model.as_slice()).collect();
        let snaps: Vec<&[f64]> = slots.iter().map(|r| r.outcome.snapshot_model.as_slice()).collect();
        let n = self.num_clients();
        let c_snap = server_update_c(&server.c, &snaps, w_bar, hp.mu, n, self.correction())?;
        let w_snap = server_aggregate(&snaps, &c_snap, hp.mu)?;
        let c_new = server_update_c(&server.c, &finals, w_bar, hp.mu, n, self.correction())?;
        let w_new = server_aggregate(&finals, &c_new, hp.mu)?;

        let dual_losses = self.dual_losses(&plan, &w_snap, s)?;
        let v = dual_gradient_vector(&dual_losses, n)?;
        let lambda = dual_variable_update(&server.lambda, &v, hp.tau, hp.gamma)?;

        let mut uploads = Vec::with_capacity(slots.len());
        for r in slots {
            let state = &mut clients[r.client];
            state.w = r.outcome.final_model.clone();
            state.memory = r.memory;
            uploads.push(Upload {
                client: r.client,
                final_model: r.outcome.final_model,
                snapshot_model: r.outcome.snapshot_model,
            });
        }
        server.w_bar = w_new;
        server.c = c_new;
        server.lambda = lambda;
        Ok(self.finish(server, plan, uploads, dual_losses))
    }

    /// DRFA: λ-weighted participants, plain local SGD, plain averaging, dual step
    /// at the averaged snapshot.
    pub fn run_round_drfa(&self, server: &mut ServerState, clients: &mut [ClientState]) -> Result<RoundTranscript> {
        self.check_states(server, clients)?;
        let hp = *self.hyper_params();
        let s = server.round;
        let plan = self.plan_round(s, &server.lambda)?;
        let lanes = occurrence_lanes(&plan.participants);
        let w_bar = &server.w_bar;
        let outcomes: Vec<LocalOutcome> = plan
            .participants
            .par_iter()
            .zip(lanes.par_iter())
            .map(|(&i, &lane)| {
                let mut rng = self.local_stream(i, s, lane);
                local_sgd_steps(&self.objectives()[i], w_bar, None, &hp, self.ball(), s, plan.snapshot_t, &mut rng)
            })
            .collect::<Result<_>>()?;

        let finals: Vec<&[f64]> = outcomes.iter().map(|o| o.final_model.as_slice()).collect();
        let snaps: Vec<&[f64]> = outcomes.iter().map(|o| o.snapshot_model.as_slice()).collect();
        let w_snap = mean_model(&snaps)?;
        let w_new = mean_model(&finals)?;

        let dual_losses = self.dual_losses(&plan, &w_snap, s)?;
        let v = dual_gradient_vector(&dual_losses, self.num_clients())?;
        let lambda = dual_variable_update(&server.lambda, &v, hp.tau, hp.gamma)?;

        let uploads = self.persist_models(clients, &plan.participants, outcomes);
        server.w_bar = w_new;
        server.lambda = lambda;
        Ok(self.finish(server, plan, uploads, dual_losses))
    }

    /// FedAvg: uniform participants without replacement, local SGD, plain mean.
    pub fn run_round_fedavg(&self, server: &mut ServerState, clients: &mut [ClientState]) -> Result<RoundTranscript> {
        self.check_states(server, clients)?;
        let hp = *self.hyper_params();
        let s = server.round;
        let plan = self.plan_uniform_round(s)?;
        let w_bar = &server.w_bar;
        let outcomes: Vec<LocalOutcome> = plan
            .participants
            .par_iter()
            .map(|&i| {
                let mut rng = self.local_stream(i, s, 0);
                local_sgd_steps(&self.objectives()[i], w_bar, None, &hp, self.ball(), s, plan.snapshot_t, &mut rng)
            })
            .collect::<Result<_>>()?;
        let finals: Vec<&[f64]> = outcomes.iter().map(|o| o.final_model.as_slice()).collect();
        server.w_bar = mean_model(&finals)?;
        let uploads = self.persist_models(clients, &plan.participants, outcomes);
        Ok(self.finish(server, plan, uploads, Vec::new()))
    }

    /// SCAFFOLD with difference-based control updates. The client control
    /// variate lives in [`ClientState::memory`], the server's in [`ServerState::c`].
    pub fn run_round_scaffold(&self, server: &mut ServerState, clients: &mut [ClientState]) -> Result<RoundTranscript> {
        self.check_states(server, clients)?;
        let hp = *self.hyper_params();
        let s = server.round;
        let plan = self.plan_uniform_round(s)?;
        let x = &server.w_bar;
        let c = &server.c;
        let snapshot: &[ClientState] = clients;
        let inv_steps = 1.0 / (hp.tau as f64 * hp.eta);
        let slots: Vec<SlotResult> = plan
            .participants
            .par_iter()
            .map(|&i| {
                let c_i = &snapshot[i].memory;
                let shift: Vec<f64> = c.iter().zip(c_i.iter()).map(|(c, ci)| c - ci).collect();
                let mut rng = self.local_stream(i, s, 0);
                let outcome =
                    local_sgd_steps(&self.objectives()[i], x, Some(&shift), &hp, self.ball(), s, plan.snapshot_t, &mut rng)?;
                let memory = (0..x.len())
                    .map(|k| c_i[k] - c[k] + (x[k] - outcome.final_model[k]) * inv_steps)
                    .collect();
                Ok(SlotResult { client: i, outcome, memory })
            })
            .collect::<Result<_>>()?;

        let n = self.num_clients() as f64;
        let m = slots.len() as f64;
        let mut w_new = x.clone();
        let mut c_new = c.clone();
        for k in 0..x.len() {
            let dy: f64 = slots.iter().map(|r| r.outcome.final_model[k] - x[k]).sum();
            let dc: f64 = slots.iter().map(|r| r.memory[k] - clients[r.client].memory[k]).sum();
            w_new[k] += dy / m;
            c_new[k] += dc / n;
        }

        let mut uploads = Vec::with_capacity(slots.len());
        for r in slots {
            let state = &mut clients[r.client];
            state.w = r.outcome.final_model.clone();
            state.memory = r.memory;
            uploads.push(Upload {
                client: r.client,
                final_model: r.outcome.final_model,
                snapshot_model: r.outcome.snapshot_model,
            });
        }
        server.w_bar = w_new;
        server.c = c_new;
        Ok(self.finish(server, plan, uploads, Vec::new()))
    }

    fn persist_models(&self, clients: &mut [ClientState], participants: &[usize], outcomes: Vec<LocalOutcome>) -> Vec<Upload> {
        participants
            .iter()
            .zip(outcomes)
            .map(|(&i, o)| {
                clients[i].w = o.final_model.clone();
                Upload {
                    client: i,
                    final_model: o.final_model,
                    snapshot_model: o.snapshot_model,
                }
            })
            .collect()
    }
}
