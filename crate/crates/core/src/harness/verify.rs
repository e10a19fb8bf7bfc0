//! Self-checks against independent oracles: brute-force projections, finite
//! differences, scalar re-implementations of whole rounds and Monte Carlo
//! unbiasedness tests.

use std::sync::Arc;

use rand::Rng;

use crate::data::{synthetic_two_gaussians, Dataset};
use crate::error::{Error, Result};
use crate::evaluation::{duality_gap, GapOracle};
use crate::fedcore::{
    dual_gradient_vector, local_update_steps, server_aggregate, server_update_c, Algorithm, ClientState,
    CorrectionUpdate, DriftRule, Federation, HyperParams, LocalObjective, QuadraticObjective, ServerState,
    ShardObjective, StandardDrift,
};
use crate::geometry::{project_simplex, sample_snapshot_index, BallConstraint, Purpose, RngStream, SimplexPoint};
use crate::models::{loss_grad, ModelParams, ModelShape};
use crate::numerics::{finite_difference_gradient, l2_norm, DenseVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Suite {
    Projections,
    Gradients,
    Reduction,
    Unbiasedness,
    ScalarOracle,
    DualityGap,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Projections,
        Suite::Gradients,
        Suite::Reduction,
        Suite::Unbiasedness,
        Suite::ScalarOracle,
        Suite::DualityGap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Projections => "projections",
            Suite::Gradients => "gradients",
            Suite::Reduction => "reduction",
            Suite::Unbiasedness => "unbiasedness",
            Suite::ScalarOracle => "scalar-oracle",
            Suite::DualityGap => "duality-gap",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::param(format!("unknown verification suite `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(suite: Suite, name: &str, outcome: Result<std::result::Result<String, String>>) -> Check {
    let (passed, detail) = match outcome {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(e) => (false, format!("error: {e}")),
    };
    Check {
        suite: suite.name(),
        name: name.to_string(),
        passed,
        detail,
    }
}

pub fn verify(suites: &[Suite]) -> VerifyReport {
    let mut report = VerifyReport::default();
    for &suite in suites {
        report.checks.extend(match suite {
            Suite::Projections => projection_checks(),
            Suite::Gradients => gradient_checks(),
            Suite::Reduction => reduction_checks(StandardDrift),
            Suite::Unbiasedness => unbiasedness_checks(),
            Suite::ScalarOracle => scalar_oracle_checks(),
            Suite::DualityGap => duality_gap_checks(),
        });
    }
    report
}

fn verify_stream(k: u64) -> RngStream {
    RngStream::for_purpose(0x5EED, Purpose::Verify, k, 0)
}

// ---------------------------------------------------------------- projections

/// Brute-force Euclidean projection of a 3-vector onto the simplex: a full
/// grid at pitch 1e-2, then windows of ±3 pitches refined tenfold per level
/// down to pitch 1e-9. Grid lines contain the faces, so the best grid point
/// stays within two pitches of the true projection at every level.
pub fn grid_projection_oracle(x: [f64; 3]) -> [f64; 3] {
    let dist = |a: f64, b: f64| {
        let c = 1.0 - a - b;
        (a - x[0]).powi(2) + (b - x[1]).powi(2) + (c - x[2]).powi(2)
    };
    let mut h = 1e-2;
    let steps = (1.0 / h) as i64;
    let mut best = (0.0, 0.0);
    let mut best_d = f64::INFINITY;
    for i in 0..=steps {
        for j in 0..=(steps - i) {
            let (a, b) = (i as f64 * h, j as f64 * h);
            let d = dist(a, b);
            if d < best_d {
                best_d = d;
                best = (a, b);
            }
        }
    }
    while h > 1.5e-9 {
        let fine = h / 10.0;
        let (ca, cb) = best;
        for i in -30..=30 {
            let a = ca + i as f64 * fine;
            if !(-1e-15..=1.0 + 1e-15).contains(&a) {
                continue;
            }
            for j in -30..=30 {
                let b = cb + j as f64 * fine;
                if b < -1e-15 || a + b > 1.0 + 1e-15 {
                    continue;
                }
                let (a, b) = (a.max(0.0), b.max(0.0));
                let d = dist(a, b);
                if d < best_d {
                    best_d = d;
                    best = (a, b);
                }
            }
        }
        h = fine;
    }
    [best.0, best.1, (1.0 - best.0 - best.1).max(0.0)]
}

fn projection_checks() -> Vec<Check> {
    let s = Suite::Projections;
    let mut rng = verify_stream(1);
    let inputs: Vec<[f64; 3]> = (0..1000)
        .map(|k| {
            let scale = [0.5, 1.0, 3.0][k % 3];
            [0, 1, 2].map(|_| rng.random_range(-scale..scale))
        })
        .collect();
    let grid = check(
        s,
        "simplex_matches_grid_oracle",
        (|| {
            let mut worst = 0.0f64;
            for x in &inputs {
                let p = project_simplex(x)?;
                let o = grid_projection_oracle(*x);
                for k in 0..3 {
                    worst = worst.max((p.weights()[k] - o[k]).abs());
                }
            }
            Ok(if worst <= 1e-6 {
                Ok(format!("max deviation {worst:.2e}"))
            } else {
                Err(format!("max deviation {worst:.2e} > 1e-6"))
            })
        })(),
    );
    let idem = check(
        s,
        "simplex_idempotent",
        (|| {
            for x in &inputs {
                let p = project_simplex(x)?;
                if project_simplex(p.weights())? != p {
                    return Ok(Err(format!("second projection moved {x:?}")));
                }
            }
            Ok(Ok(String::new()))
        })(),
    );
    let ball = check(
        s,
        "ball_feasible_and_idempotent",
        (|| {
            let b = BallConstraint::new(1.5)?;
            for _ in 0..200 {
                let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
                let p = crate::geometry::project_ball(&x, &b);
                if l2_norm(&p) > 1.5 || crate::geometry::project_ball(&p, &b) != p {
                    return Ok(Err(format!("ball projection of {x:?} misbehaves")));
                }
            }
            Ok(Ok(String::new()))
        })(),
    );
    vec![grid, idem, ball]
}

// ------------------------------------------------------------------ gradients

/// Largest relative error `‖g − g_fd‖ / max(‖g‖, ‖g_fd‖, 1e-8)` over `cases` random points.
pub fn gradient_relative_error(shape: ModelShape, cases: usize, seed: u64) -> Result<f64> {
    let mut rng = RngStream::for_purpose(seed, Purpose::Verify, 2, shape.param_count() as u64);
    let classes = shape.classes;
    let n = 6;
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let features: Vec<f64> = (0..n * shape.input).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let data = Dataset::new(crate::numerics::DenseMatrix::new(n, shape.input, features)?, labels, classes)?;
        let flat: DenseVector = (0..shape.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let params = ModelParams::new(shape, flat.clone())?;
        let analytic = loss_grad(&params, &data.all())?.grad;
        let numeric = finite_difference_gradient(
            |w| {
                let p = ModelParams::new(shape, DenseVector::new(w.to_vec())).expect("shape");
                crate::models::forward_loss(&p, &data.all()).expect("loss")
            },
            &flat,
            1e-5,
        )?;
        let diff: Vec<f64> = analytic.iter().zip(numeric.iter()).map(|(a, b)| a - b).collect();
        let denom = l2_norm(&analytic).max(l2_norm(&numeric)).max(1e-8);
        worst = worst.max(l2_norm(&diff) / denom);
    }
    Ok(worst)
}

fn gradient_checks() -> Vec<Check> {
    let s = Suite::Gradients;
    [("linear", ModelShape::linear(5, 3)), ("mlp", ModelShape::mlp(4, 6, 3))]
        .into_iter()
        .map(|(name, shape)| {
            check(
                s,
                &format!("{name}_matches_finite_differences"),
                gradient_relative_error(shape, 20, 7).map(|e| {
                    if e < 1e-4 {
                        Ok(format!("max relative error {e:.2e}"))
                    } else {
                        Err(format!("relative error {e:.2e} >= 1e-4"))
                    }
                }),
            )
        })
        .collect()
}

// ------------------------------------------------------------------ reduction

/// Six clients over a skewed two-class synthetic problem.
pub fn synthetic_fleet(clients: usize, seed: u64, batch: usize) -> Result<Vec<ShardObjective>> {
    let mut rng = RngStream::for_purpose(seed, Purpose::Synthetic, 0, 0);
    let per_class = 40 * clients;
    let data = Arc::new(synthetic_two_gaussians(per_class, 4, 1.5, &mut rng)?);
    let shape = ModelShape::linear(4, 2);
    (0..clients)
        .map(|i| {
            // client i takes a share of class 0 that grows with i
            let zeros = 10 + 50 * i / clients.max(1);
            let shard: Vec<usize> = (0..zeros)
                .map(|k| i * 40 + k % 40)
                .chain((0..60 - zeros).map(|k| per_class + i * 40 + k % 40))
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            ShardObjective::new(data.clone(), shard, shape, batch)
        })
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// DRDM with `mu = 0` against DRFA, 20 rounds; returns the largest coordinate difference.
pub fn drdm_drfa_max_difference<D: DriftRule + Clone>(drift: D, rounds: usize) -> Result<f64> {
    let hp = HyperParams {
        eta: 0.1,
        gamma: 0.05,
        mu: 0.0,
        tau: 4,
        m: 3,
        batch: 5,
        rounds,
    };
    let fed = Federation::with_drift(synthetic_fleet(6, 21, 5)?, hp, BallConstraint::default(), 31, drift)?;
    let w0 = DenseVector::zeros(fed.dim());
    let (mut sa, mut ca) = fed.initial_state(w0.clone())?;
    let (mut sb, mut cb) = fed.initial_state(w0)?;
    let mut worst = 0.0f64;
    for _ in 0..rounds {
        let a = fed.run_round_drdm(&mut sa, &mut ca)?;
        let b = fed.run_round_drfa(&mut sb, &mut cb)?;
        if a.plan != b.plan || a.uploads.len() != b.uploads.len() {
            return Ok(f64::INFINITY);
        }
        for (x, y) in a.uploads.iter().zip(&b.uploads) {
            if x.client != y.client {
                return Ok(f64::INFINITY);
            }
            worst = worst.max(max_abs_diff(&x.final_model, &y.final_model));
            worst = worst.max(max_abs_diff(&x.snapshot_model, &y.snapshot_model));
        }
        for ((i, x), (j, y)) in a.dual_losses.iter().zip(&b.dual_losses) {
            if i != j {
                return Ok(f64::INFINITY);
            }
            worst = worst.max((x - y).abs());
        }
        worst = worst.max(max_abs_diff(&a.server.w_bar, &b.server.w_bar));
        worst = worst.max(max_abs_diff(a.server.lambda.weights(), b.server.lambda.weights()));
    }
    Ok(worst)
}

/// Two DRDM rounds for one 1-D quadratic client against hand-unrolled steps.
fn drift_closed_form<D: DriftRule + Clone>(drift: D) -> Result<std::result::Result<String, String>> {
    let (a, eta, mu, w0) = (2.0, 0.25, 0.8, -1.0);
    let hp = HyperParams {
        eta,
        gamma: 0.0,
        mu,
        tau: 2,
        m: 1,
        batch: 1,
        rounds: 2,
    };
    let fed = Federation::with_drift(vec![QuadraticObjective::new(vec![a])], hp, BallConstraint::default(), 5, drift)?
        .with_correction(CorrectionUpdate::PerClientWBar);
    let (mut server, mut clients) = fed.initial_state(DenseVector::new(vec![w0]))?;
    let (mut wb, mut h, mut c) = (w0, 0.0, 0.0);
    for _ in 0..2 {
        fed.run_round_drdm(&mut server, &mut clients)?;
        let mut w = wb;
        for _ in 0..2 {
            w -= eta * ((w - a) - h - mu * (wb - w));
        }
        h -= mu * (w - wb);
        c -= mu * (w - wb);
        wb = w - c / mu;
        let got = (server.w_bar[0], clients[0].memory[0], clients[0].w[0]);
        let want = (wb, h, w);
        let err = (got.0 - want.0).abs().max((got.1 - want.1).abs()).max((got.2 - want.2).abs());
        if err > 1e-12 {
            return Ok(Err(format!("got {got:?}, expected {want:?}")));
        }
    }
    Ok(Ok(String::new()))
}

/// Memory recursion `h⁺ − h + μ(w_final − w̄) = 0` and staleness over eight rounds.
fn memory_recursion<D: DriftRule + Clone>(drift: D) -> Result<std::result::Result<String, String>> {
    let mu = 0.6;
    let hp = HyperParams {
        eta: 0.1,
        gamma: 0.05,
        mu,
        tau: 3,
        m: 3,
        batch: 5,
        rounds: 8,
    };
    let fed = Federation::with_drift(synthetic_fleet(6, 22, 5)?, hp, BallConstraint::default(), 32, drift)?;
    let (mut server, mut clients) = fed.initial_state(DenseVector::zeros(fed.dim()))?;
    for _ in 0..8 {
        let before = clients.clone();
        let w_bar = server.w_bar.clone();
        let t = fed.run_round_drdm(&mut server, &mut clients)?;
        for (i, c) in clients.iter().enumerate() {
            match t.uploads.iter().rev().find(|u| u.client == i) {
                None => {
                    if c != &before[i] {
                        return Ok(Err(format!("stale client {i} changed")));
                    }
                }
                Some(u) => {
                    for k in 0..c.memory.len() {
                        let r = c.memory[k] - before[i].memory[k] + mu * (u.final_model[k] - w_bar[k]);
                        if r.abs() > 1e-12 {
                            return Ok(Err(format!("client {i} residual {r:.2e}")));
                        }
                    }
                }
            }
        }
        SimplexPoint::new(server.lambda.weights().to_vec())?;
    }
    Ok(Ok(String::new()))
}

/// The reduction suite with a caller-chosen drift rule; a faulty rule must fail it.
pub fn reduction_checks<D: DriftRule + Clone>(drift: D) -> Vec<Check> {
    let s = Suite::Reduction;
    vec![
        check(
            s,
            "drdm_without_mu_equals_drfa",
            drdm_drfa_max_difference(drift.clone(), 20).map(|d| {
                if d <= 1e-12 {
                    Ok(format!("max difference {d:.2e}"))
                } else {
                    Err(format!("max difference {d:.2e} > 1e-12"))
                }
            }),
        ),
        check(s, "drift_step_closed_form", drift_closed_form(drift.clone())),
        check(s, "memory_recursion_and_staleness", memory_recursion(drift)),
    ]
}

// --------------------------------------------------------------- unbiasedness

/// Per-coordinate test that `mean` lies within `z` standard errors of `truth`.
fn within_standard_errors(samples: &[Vec<f64>], truth: &[f64], z: f64) -> std::result::Result<String, String> {
    let n = samples.len() as f64;
    let mut worst = 0.0f64;
    for (k, t) in truth.iter().enumerate() {
        let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let dev = (mean - t).abs();
        if se == 0.0 {
            if dev > 1e-12 * t.abs().max(1.0) {
                return Err(format!("coordinate {k}: constant {mean} != {t}"));
            }
            continue;
        }
        worst = worst.max(dev / se);
        if dev > z * se {
            return Err(format!("coordinate {k}: mean {mean:.6} vs {t:.6} ({:.2} SE)", dev / se));
        }
    }
    Ok(format!("max {worst:.2} SE"))
}

/// The deterministic toy fleet: 1-D quadratics with distinct centres.
pub fn toy_fleet() -> Vec<QuadraticObjective> {
    [-2.0, -0.5, 0.25, 1.0, 3.0].iter().map(|a| QuadraticObjective::new(vec![*a])).collect()
}

fn toy_hp(m: usize) -> HyperParams {
    HyperParams {
        eta: 0.1,
        gamma: 0.05,
        mu: 0.5,
        tau: 5,
        m,
        batch: 1,
        rounds: 1,
    }
}

/// Mean over `samples` plans of `(1/m)Σ_{i∈D} ∇f_i(w)` against `Σ λ_i ∇f_i(w)`.
pub fn participant_sampling_unbiasedness(samples: usize) -> Result<std::result::Result<String, String>> {
    let fed = Federation::new(toy_fleet(), toy_hp(3), BallConstraint::default(), 41)?;
    let lambda = SimplexPoint::new(vec![0.1, 0.35, 0.05, 0.2, 0.3])?;
    let w = [0.7];
    let grads: Vec<f64> = fed.objectives().iter().map(|o| Ok(o.full_gradient(&w)?[0])).collect::<Result<_>>()?;
    let truth: f64 = grads.iter().zip(lambda.weights()).map(|(g, l)| g * l).sum();
    let draws = (0..samples as u64)
        .map(|k| {
            let plan = fed.plan_round(k, &lambda)?;
            Ok(vec![plan.participants.iter().map(|&i| grads[i]).sum::<f64>() / plan.participants.len() as f64])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(within_standard_errors(&draws, &[truth], 3.0))
}

/// Mean over `samples` dual evaluation sets of `v` against `(f_1(w), …, f_N(w))`.
pub fn dual_gradient_unbiasedness(samples: usize) -> Result<std::result::Result<String, String>> {
    let fed = Federation::new(toy_fleet(), toy_hp(2), BallConstraint::default(), 42)?;
    let lambda = SimplexPoint::uniform(5);
    let w = [0.4];
    let truth: Vec<f64> = fed.objectives().iter().map(|o| o.full_loss(&w)).collect::<Result<_>>()?;
    let draws = (0..samples as u64)
        .map(|k| {
            let plan = fed.plan_round(k, &lambda)?;
            let losses: Vec<(usize, f64)> = plan.dual_eval_set.iter().map(|&i| (i, truth[i])).collect();
            Ok(dual_gradient_vector(&losses, 5)?.into_inner())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(within_standard_errors(&draws, &truth, 3.0))
}

/// With every client in the dual set, `τ·v` at a uniformly drawn snapshot
/// against the round's accumulated `Σ_t (f_1(w^{(t)}), …, f_N(w^{(t)}))`.
pub fn snapshot_unbiasedness(samples: usize) -> Result<std::result::Result<String, String>> {
    let n = 5;
    let hp = toy_hp(n);
    let fed = Federation::new(toy_fleet(), hp, BallConstraint::default(), 43)?;
    let round = 3u64;
    let w_bar = DenseVector::new(vec![0.2]);
    let c = DenseVector::new(vec![0.05]);
    let memories: Vec<DenseVector> = (0..n).map(|i| DenseVector::new(vec![0.1 * i as f64 - 0.2])).collect();
    let participants = fed.plan_round(round, &SimplexPoint::uniform(n))?.participants;

    let virtual_model = |t: u64| -> Result<DenseVector> {
        let snaps = participants
            .iter()
            .map(|&i| {
                let mut rng = RngStream::for_purpose(0, Purpose::LocalSteps, i as u64, round);
                Ok(local_update_steps(
                    &fed.objectives()[i],
                    &StandardDrift,
                    &memories[i],
                    &w_bar,
                    &hp,
                    fed.ball(),
                    round,
                    t,
                    &mut rng,
                )?
                .snapshot_model)
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[f64]> = snaps.iter().map(|s| s.as_slice()).collect();
        let c_t = server_update_c(&c, &refs, &w_bar, hp.mu, n, fed.correction())?;
        server_aggregate(&refs, &c_t, hp.mu)
    };
    let losses_at = |w: &[f64]| -> Result<Vec<f64>> { fed.objectives().iter().map(|o| o.full_loss(w)).collect() };

    let tau = hp.tau as u64;
    let mut truth = vec![0.0; n];
    for t in round * tau + 1..=(round + 1) * tau {
        for (acc, l) in truth.iter_mut().zip(losses_at(&virtual_model(t)?)?) {
            *acc += l;
        }
    }
    let per_t: Vec<Vec<f64>> = (round * tau + 1..=(round + 1) * tau)
        .map(|t| losses_at(&virtual_model(t)?))
        .collect::<Result<_>>()?;
    let draws = (0..samples as u64)
        .map(|k| {
            let mut rng = RngStream::for_purpose(k, Purpose::Snapshot, 0, round);
            let t = sample_snapshot_index(round, tau, &mut rng)?;
            let all: Vec<(usize, f64)> = per_t[(t - round * tau - 1) as usize].iter().copied().enumerate().collect();
            let mut v = dual_gradient_vector(&all, n)?;
            v.scale(tau as f64);
            Ok(v.into_inner())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(within_standard_errors(&draws, &truth, 3.0))
}

fn unbiasedness_checks() -> Vec<Check> {
    let s = Suite::Unbiasedness;
    vec![
        check(s, "participant_sampling", participant_sampling_unbiasedness(10_000)),
        check(s, "dual_gradient", dual_gradient_unbiasedness(10_000)),
        check(s, "snapshot", snapshot_unbiasedness(10_000)),
    ]
}

// -------------------------------------------------------------- scalar oracle

/// Simplex projection by bisection on the threshold, written without the
/// library routine.
fn bisect_simplex(y: &[f64]) -> Vec<f64> {
    let mass = |theta: f64| y.iter().map(|v| (v - theta).max(0.0)).sum::<f64>();
    let mut lo = y.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    y.iter().map(|v| (v - theta).max(0.0)).collect()
}

/// Starting state for the scalar-oracle rounds: nothing at its default.
pub fn scalar_fleet_state(centers: &[f64]) -> (ServerState, Vec<ClientState>) {
    let n = centers.len();
    let clients = (0..n)
        .map(|i| ClientState {
            id: i,
            w: DenseVector::new(vec![0.3 * i as f64 - 0.4]),
            memory: DenseVector::new(vec![0.05 * (i as f64 - 1.0)]),
        })
        .collect();
    let raw: Vec<f64> = (1..=n).map(|i| i as f64).collect();
    let total: f64 = raw.iter().sum();
    let server = ServerState {
        w_bar: DenseVector::new(vec![0.35]),
        c: DenseVector::new(vec![-0.08]),
        lambda: SimplexPoint::new(raw.iter().map(|r| r / total).collect()).expect("valid weights"),
        round: 2,
    };
    (server, clients)
}

/// One DRDM round on 1-D quadratics `½(w − a_i)²`, recomputed with plain
/// scalars from the round's plan. Returns the largest deviation.
fn scalar_drdm_round(rule: CorrectionUpdate) -> Result<f64> {
    let centers = [-1.0, 0.5, 2.0, 4.0];
    let (eta, gamma, mu, tau, m) = (0.15, 0.08, 0.9, 3usize, 3usize);
    let hp = HyperParams {
        eta,
        gamma,
        mu,
        tau,
        m,
        batch: 1,
        rounds: 1,
    };
    let fleet: Vec<QuadraticObjective> = centers.iter().map(|a| QuadraticObjective::new(vec![*a])).collect();
    let fed = Federation::new(fleet, hp, BallConstraint::default(), 77)?.with_correction(rule);
    let (mut server, mut clients) = scalar_fleet_state(&centers);
    let (s0, c0) = (server.clone(), clients.clone());
    let t = fed.run_round(Algorithm::Drdm, &mut server, &mut clients)?;

    let n = centers.len() as f64;
    let wb = s0.w_bar[0];
    let first = s0.round * tau as u64 + 1;
    let mut finals = Vec::new();
    let mut snaps = Vec::new();
    let mut h_new: Vec<f64> = c0.iter().map(|c| c.memory[0]).collect();
    let mut w_new: Vec<f64> = c0.iter().map(|c| c.w[0]).collect();
    for &i in &t.plan.participants {
        let h = c0[i].memory[0];
        let mut w = wb;
        let mut snap = f64::NAN;
        for step in 0..tau {
            w -= eta * ((w - centers[i]) - h - mu * (wb - w));
            if first + step as u64 == t.plan.snapshot_t {
                snap = w;
            }
        }
        finals.push(w);
        snaps.push(w);
        *snaps.last_mut().expect("pushed") = snap;
        h_new[i] = h - mu * (w - wb);
        w_new[i] = w;
    }
    let copies = match rule {
        CorrectionUpdate::PerRoundWBar => 1.0,
        CorrectionUpdate::PerClientWBar => m as f64,
    };
    let c_of = |ws: &[f64]| s0.c[0] - mu / n * (ws.iter().sum::<f64>() - copies * wb);
    let c_new = c_of(&finals);
    let c_snap = c_of(&snaps);
    let w_bar_new = finals.iter().sum::<f64>() / m as f64 - c_new / mu;
    let w_snap = snaps.iter().sum::<f64>() / m as f64 - c_snap / mu;
    let mut y = s0.lambda.weights().to_vec();
    for &i in &t.plan.dual_eval_set {
        y[i] += tau as f64 * gamma * (n / m as f64) * 0.5 * (w_snap - centers[i]).powi(2);
    }
    let lambda = bisect_simplex(&y);

    let mut worst = (server.w_bar[0] - w_bar_new).abs().max((server.c[0] - c_new).abs());
    worst = worst.max(max_abs_diff(server.lambda.weights(), &lambda));
    for (i, c) in clients.iter().enumerate() {
        worst = worst.max((c.w[0] - w_new[i]).abs()).max((c.memory[0] - h_new[i]).abs());
    }
    for (u, (f, sn)) in t.uploads.iter().zip(finals.iter().zip(&snaps)) {
        worst = worst.max((u.final_model[0] - f).abs()).max((u.snapshot_model[0] - sn).abs());
    }
    Ok(worst)
}

/// One SCAFFOLD round on the same fleet, recomputed with plain scalars.
fn scalar_scaffold_round() -> Result<f64> {
    let centers = [-1.0, 0.5, 2.0, 4.0];
    let (eta, tau, m) = (0.15, 3usize, 2usize);
    let hp = HyperParams {
        eta,
        gamma: 0.0,
        mu: 0.0,
        tau,
        m,
        batch: 1,
        rounds: 1,
    };
    let fleet: Vec<QuadraticObjective> = centers.iter().map(|a| QuadraticObjective::new(vec![*a])).collect();
    let fed = Federation::new(fleet, hp, BallConstraint::default(), 78)?;
    let (mut server, mut clients) = scalar_fleet_state(&centers);
    let (s0, c0) = (server.clone(), clients.clone());
    let t = fed.run_round(Algorithm::Scaffold, &mut server, &mut clients)?;

    let n = centers.len() as f64;
    let (x, c) = (s0.w_bar[0], s0.c[0]);
    let mut dy = 0.0;
    let mut dc = 0.0;
    let mut worst = 0.0f64;
    for &i in &t.plan.participants {
        let ci = c0[i].memory[0];
        let mut y = x;
        for _ in 0..tau {
            y -= eta * ((y - centers[i]) - ci + c);
        }
        let ci_new = ci - c + (x - y) / (tau as f64 * eta);
        dy += y - x;
        dc += ci_new - ci;
        worst = worst.max((clients[i].w[0] - y).abs()).max((clients[i].memory[0] - ci_new).abs());
    }
    worst = worst.max((server.w_bar[0] - (x + dy / m as f64)).abs());
    worst = worst.max((server.c[0] - (c + dc / n)).abs());
    worst = worst.max(max_abs_diff(server.lambda.weights(), s0.lambda.weights()));
    Ok(worst)
}

fn scalar_oracle_checks() -> Vec<Check> {
    let s = Suite::ScalarOracle;
    let judge = |r: Result<f64>| {
        r.map(|d| {
            if d <= 1e-12 {
                Ok(format!("max deviation {d:.2e}"))
            } else {
                Err(format!("max deviation {d:.2e} > 1e-12"))
            }
        })
    };
    vec![
        check(s, "drdm_round", judge(scalar_drdm_round(CorrectionUpdate::PerClientWBar))),
        check(s, "drdm_round_per_round_w_bar", judge(scalar_drdm_round(CorrectionUpdate::PerRoundWBar))),
        check(s, "scaffold_round", judge(scalar_scaffold_round())),
    ]
}

// ---------------------------------------------------------------- duality gap

fn duality_gap_checks() -> Vec<Check> {
    let s = Suite::DualityGap;
    let fleet = vec![QuadraticObjective::new(vec![-1.0]), QuadraticObjective::new(vec![3.0])];
    let ball = BallConstraint::default();
    let saddle = check(
        s,
        "closed_form_saddle",
        duality_gap(&[1.0], &SimplexPoint::uniform(2), &fleet, &ball, GapOracle::default()).map(|g| {
            if g.gap.abs() < 1e-6 {
                Ok(format!("gap {:.2e}", g.gap))
            } else {
                Err(format!("gap {:.2e} at the saddle", g.gap))
            }
        }),
    );
    let mut rng = verify_stream(6);
    let weak = check(
        s,
        "weak_duality",
        (|| {
            for _ in 0..100 {
                let w = rng.random_range(-6.0..6.0);
                let l = rng.random::<f64>();
                let g = duality_gap(&[w], &SimplexPoint::new(vec![l, 1.0 - l])?, &fleet, &ball, GapOracle::default())?;
                if g.gap < -1e-6 {
                    return Ok(Err(format!("gap {:.2e} at w = {w}", g.gap)));
                }
            }
            Ok(Ok(String::new()))
        })(),
    );
    vec![saddle, weak]
}
