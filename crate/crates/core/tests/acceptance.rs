//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints its PASS/FAIL line into the test log.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;

use fedrobust_core::data::{synthetic_two_gaussians, Dataset};
use fedrobust_core::evaluation::{duality_gap, optimal_tau_from_rounds, EnergyParams, GapOracle};
use fedrobust_core::fedcore::{
    dual_gradient_vector, theoretical_hyperparams, CorrectionUpdate, LocalObjective, QuadraticObjective, ShardObjective,
};
use fedrobust_core::geometry::{project_simplex, Purpose, RngStream};
use fedrobust_core::harness::{
    emit_csv, load_data, mean_rounds_per_tau, parse_config, run_experiment_with, sweep_tau, ExperimentConfig, LoadedData,
    TauSweepRow,
};
use fedrobust_core::models::{loss_grad, ModelParams, ModelShape};
use fedrobust_core::numerics::{DenseMatrix, DenseVector};
use fedrobust_core::{Algorithm, BallConstraint, ClientState, Federation, HyperParams, Result, ServerState, SimplexPoint};

type Outcome = std::result::Result<String, String>;

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 10] = [
        ("mnist table reproduction", table3),
        ("drdm without mu equals drfa", reduction),
        ("simplex projection vs grid", projection),
        ("gradients vs finite differences", gradients),
        ("unbiased estimators", unbiasedness),
        ("scalar round oracles", scalar_oracle),
        ("duality gap shrinks", convergence),
        ("rounds to target fall with tau", tau_trend),
        ("optimal tau falls with snr", energy_trend),
        ("thread-count determinism", determinism),
    ];
    // optional criterion numbers on the command line select a subset
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (k, (name, f)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(k + 1)) {
            continue;
        }
        let start = Instant::now();
        let outcome = f().unwrap_or_else(|e| Err(format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS criterion {} {name}: {d} [{secs:.1}s]", k + 1),
            Err(d) => {
                println!("FAIL criterion {} {name}: {d} [{secs:.1}s]", k + 1);
                failed.push(k + 1);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn verdict(ok: bool, detail: String) -> Result<Outcome> {
    Ok(if ok { Ok(detail) } else { Err(detail) })
}

// ------------------------------------------------------------------ MNIST

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace_root().join("data/mnist"))
}

fn table3_config() -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(workspace_root().join("configs/mnist_table3.toml"))?;
    let mut cfg = parse_config(&text)?;
    cfg.dataset.dir = Some(mnist_dir());
    Ok(cfg)
}

fn mnist() -> Result<&'static LoadedData> {
    static DATA: std::sync::OnceLock<LoadedData> = std::sync::OnceLock::new();
    if let Some(d) = DATA.get() {
        return Ok(d);
    }
    let data = load_data(&table3_config()?, Path::new("."))?;
    Ok(DATA.get_or_init(|| data))
}

fn table3() -> Result<Outcome> {
    let start = Instant::now();
    let data = match mnist() {
        Ok(d) => d,
        Err(e) => return verdict(false, format!("MNIST not available under {} ({e})", mnist_dir().display())),
    };
    let mut cfg = table3_config()?;
    let final_of = |cfg: &ExperimentConfig| -> Result<(f64, f64)> {
        let r = run_experiment_with(cfg, data)?;
        let s = r.final_summary().expect("at least one round");
        Ok((100.0 * s.avg_acc.mean, 100.0 * s.worst_acc.mean))
    };
    cfg.training.algorithm = Algorithm::Drdm;
    let (avg, worst) = final_of(&cfg)?;
    cfg.training.algorithm = Algorithm::FedAvg;
    let (fedavg_avg, fedavg_worst) = final_of(&cfg)?;
    let secs = start.elapsed().as_secs_f64();
    let ok = (avg - 90.31).abs() <= 3.0 && (worst - 84.81).abs() <= 4.0 && worst - fedavg_worst >= 2.0 && secs <= 900.0;
    verdict(
        ok,
        format!(
            "DRDM avg {avg:.2} worst {worst:.2}, FedAvg avg {fedavg_avg:.2} worst {fedavg_worst:.2}, margin {:.2}, {} runs in {secs:.0}s",
            worst - fedavg_worst,
            cfg.monte_carlo_runs
        ),
    )
}

fn tau_sweep() -> Result<&'static (Vec<TauSweepRow>, usize)> {
    static ROWS: std::sync::OnceLock<(Vec<TauSweepRow>, usize)> = std::sync::OnceLock::new();
    if let Some(r) = ROWS.get() {
        return Ok(r);
    }
    let mut cfg = table3_config()?;
    cfg.training.algorithm = Algorithm::Drdm;
    cfg.training.rounds = 1000;
    let rows = sweep_tau(&cfg, mnist()?, &[5, 10, 20, 30], 0.80)?;
    Ok(ROWS.get_or_init(|| (rows, cfg.training.m)))
}

fn tau_trend() -> Result<Outcome> {
    let (rows, _) = tau_sweep()?;
    let runs = rows.iter().map(|r| r.run).max().map_or(0, |r| r + 1);
    let mut good = 0;
    let mut seqs = Vec::new();
    for run in 0..runs {
        let seq: Vec<u64> = [5, 10, 20, 30]
            .iter()
            .map(|&t| {
                rows.iter()
                    .find(|r| r.run == run && r.tau == t)
                    .and_then(|r| r.rounds_to_target)
                    .unwrap_or(u64::MAX)
            })
            .collect();
        if seq.windows(2).all(|w| w[0] >= w[1]) {
            good += 1;
        }
        seqs.push(format!("{seq:?}"));
    }
    verdict(good >= 8, format!("{good}/{runs} seeds non-increasing: {}", seqs.join(" ")))
}

fn energy_trend() -> Result<Outcome> {
    let (rows, m) = tau_sweep()?;
    let means = mean_rounds_per_tau(rows);
    let base = EnergyParams {
        proc_energy_per_step: 2e-3,
        tx_power: 0.2,
        model_bits: 7850.0 * 32.0,
        bandwidth: 1e6,
        snr_db: 0.0,
    };
    let mut taus = Vec::new();
    for snr in [0.0, 5.0, 10.0, 15.0, 20.0] {
        let ep = EnergyParams { snr_db: snr, ..base };
        let search = optimal_tau_from_rounds(&means, *m, &ep)?;
        // independent energy model and argmin
        let e_tx = ep.tx_power * ep.model_bits / (ep.bandwidth * (1.0 + 10f64.powf(snr / 10.0)).log2());
        let mut best: Option<(usize, f64)> = None;
        for &(tau, r) in &means {
            if let Some(r) = r {
                let e = r * *m as f64 * (tau as f64 * ep.proc_energy_per_step + e_tx);
                if best.is_none_or(|(_, b)| e < b) {
                    best = Some((tau, e));
                }
            }
        }
        if search.best_tau != best.map(|b| b.0) {
            return verdict(false, format!("snr {snr}: search picked {:?}, oracle {:?}", search.best_tau, best));
        }
        taus.push(search.best_tau);
    }
    let ok = taus.iter().all(Option::is_some) && taus.windows(2).all(|w| w[0] >= w[1]);
    verdict(ok, format!("tau* over snr 0..20 dB: {taus:?}, mean rounds {means:?}"))
}

// ------------------------------------------------------- synthetic fleets

fn skewed_fleet(clients: usize, seed: u64, batch: usize) -> Result<Vec<ShardObjective>> {
    let mut rng = RngStream::for_purpose(seed, Purpose::Custom(100), 0, 0);
    let per_class = 30 * clients;
    let data = Arc::new(synthetic_two_gaussians(per_class, 3, 1.5, &mut rng)?);
    let shape = ModelShape::linear(3, 2);
    (0..clients)
        .map(|i| {
            let zeros = 5 + 20 * i / clients;
            let shard = (0..zeros).map(|k| i * 30 + k).chain((0..30 - zeros).map(|k| per_class + i * 30 + k)).collect();
            ShardObjective::new(data.clone(), shard, shape, batch)
        })
        .collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn reduction() -> Result<Outcome> {
    let hp = HyperParams {
        eta: 0.2,
        gamma: 0.1,
        mu: 0.0,
        tau: 5,
        m: 4,
        batch: 6,
        rounds: 20,
    };
    let fed = Federation::new(skewed_fleet(6, 1, 6)?, hp, BallConstraint::new(5.0)?, 11)?;
    let (mut sa, mut ca) = fed.initial_state(DenseVector::zeros(fed.dim()))?;
    let (mut sb, mut cb) = (sa.clone(), ca.clone());
    let mut worst = 0.0f64;
    for s in 0..20 {
        let a = fed.run_round(Algorithm::Drdm, &mut sa, &mut ca)?;
        let b = fed.run_round(Algorithm::Drfa, &mut sb, &mut cb)?;
        if a.plan != b.plan {
            return verdict(false, format!("round {s}: plans differ"));
        }
        for (x, y) in a.uploads.iter().zip(&b.uploads) {
            worst = worst.max(max_diff(&x.final_model, &y.final_model));
            worst = worst.max(max_diff(&x.snapshot_model, &y.snapshot_model));
        }
        let (la, lb): (Vec<f64>, Vec<f64>) = a.dual_losses.iter().zip(&b.dual_losses).map(|(x, y)| (x.1, y.1)).unzip();
        worst = worst.max(max_diff(&la, &lb));
        worst = worst.max(max_diff(&sa.w_bar, &sb.w_bar));
        worst = worst.max(max_diff(sa.lambda.weights(), sb.lambda.weights()));
        for (x, y) in ca.iter().zip(&cb) {
            worst = worst.max(max_diff(&x.w, &y.w));
        }
    }
    let moved = max_diff(sa.lambda.weights(), SimplexPoint::uniform(6).weights());
    verdict(
        worst <= 1e-12 && moved > 1e-3,
        format!("max coordinate difference {worst:.2e} over 20 rounds (λ moved {moved:.3})"),
    )
}

// ------------------------------------------------------------ projection

/// Closest simplex point to `x` on successively finer grids over (p0, p1).
fn grid_oracle(x: &[f64; 3]) -> [f64; 3] {
    let cost = |p0: f64, p1: f64| {
        let p2 = 1.0 - p0 - p1;
        (p0 - x[0]).powi(2) + (p1 - x[1]).powi(2) + (p2 - x[2]).powi(2)
    };
    let mut best = (0.0, 0.0, f64::INFINITY);
    let coarse = 100;
    for i in 0..=coarse {
        for j in 0..=coarse - i {
            let (p0, p1) = (i as f64 / coarse as f64, j as f64 / coarse as f64);
            let c = cost(p0, p1);
            if c < best.2 {
                best = (p0, p1, c);
            }
        }
    }
    let mut pitch = 1.0 / coarse as f64;
    while pitch > 2e-9 {
        pitch /= 10.0;
        let (c0, c1) = (best.0, best.1);
        for i in -40..=40 {
            for j in -40..=40 {
                let p0 = (c0 + i as f64 * pitch).clamp(0.0, 1.0);
                let p1 = (c1 + j as f64 * pitch).clamp(0.0, 1.0 - p0);
                let c = cost(p0, p1);
                if c < best.2 {
                    best = (p0, p1, c);
                }
            }
        }
    }
    [best.0, best.1, 1.0 - best.0 - best.1]
}

fn projection() -> Result<Outcome> {
    let mut rng = RngStream::for_purpose(3, Purpose::Custom(101), 0, 0);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let spread = [0.4, 1.0, 4.0][k % 3];
        let x = [0, 1, 2].map(|_| rng.random_range(-spread..spread));
        let p = project_simplex(&x)?;
        worst = worst.max(max_diff(p.weights(), &grid_oracle(&x)));
        if project_simplex(p.weights())? != p {
            return verdict(false, format!("projection of {x:?} is not idempotent"));
        }
    }
    verdict(worst <= 1e-6, format!("max deviation from grid oracle {worst:.2e}; idempotent on all 1000 inputs"))
}

// ------------------------------------------------------------- gradients

/// Mean softmax cross-entropy computed straight from the flat layout.
fn reference_loss(shape: ModelShape, w: &[f64], x: &[Vec<f64>], y: &[usize]) -> f64 {
    let (d, c) = (shape.input, shape.classes);
    let mut total = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let logits: Vec<f64> = match shape.hidden {
            None => (0..c)
                .map(|k| (0..d).map(|j| w[k * d + j] * xi[j]).sum::<f64>() + w[c * d + k])
                .collect(),
            Some(h) => {
                let a: Vec<f64> = (0..h)
                    .map(|u| ((0..d).map(|j| w[u * d + j] * xi[j]).sum::<f64>() + w[h * d + u]).max(0.0))
                    .collect();
                let off = h * d + h;
                (0..c)
                    .map(|k| (0..h).map(|u| w[off + k * h + u] * a[u]).sum::<f64>() + w[off + c * h + k])
                    .collect()
            }
        };
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = top + logits.iter().map(|z| (z - top).exp()).sum::<f64>().ln();
        total += lse - logits[yi];
    }
    total / x.len() as f64
}

fn gradients() -> Result<Outcome> {
    let mut rng = RngStream::for_purpose(4, Purpose::Custom(102), 0, 0);
    let mut details = Vec::new();
    let mut ok = true;
    for (name, shape) in [("linear", ModelShape::linear(7, 4)), ("mlp", ModelShape::mlp(5, 6, 3))] {
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let n = 8;
            let x: Vec<Vec<f64>> = (0..n).map(|_| (0..shape.input).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..shape.classes)).collect();
            let ds = Dataset::new(DenseMatrix::new(n, shape.input, x.concat())?, y.clone(), shape.classes)?;
            let w: Vec<f64> = (0..shape.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lg = loss_grad(&ModelParams::new(shape, DenseVector::new(w.clone()))?, &ds.all())?;
            let h = 1e-5;
            let mut probe = w.clone();
            let mut num = 0.0;
            let mut den = 0.0f64;
            for k in 0..w.len() {
                probe[k] = w[k] + h;
                let up = reference_loss(shape, &probe, &x, &y);
                probe[k] = w[k] - h;
                let down = reference_loss(shape, &probe, &x, &y);
                probe[k] = w[k];
                let fd = (up - down) / (2.0 * h);
                num += (lg.grad[k] - fd).powi(2);
                den = den.max(fd.abs()).max(lg.grad[k].abs());
            }
            worst = worst.max(num.sqrt() / den.max(1e-8));
            ok &= (lg.loss - reference_loss(shape, &w, &x, &y)).abs() < 1e-12;
        }
        ok &= worst < 1e-4;
        details.push(format!("{name} max rel. error {worst:.2e}"));
    }
    verdict(ok, details.join(", "))
}

// ----------------------------------------------------------- unbiasedness

const TOY_CENTERS: [f64; 5] = [-2.0, -0.5, 0.25, 1.0, 3.0];

fn toy_fleet() -> Vec<QuadraticObjective> {
    TOY_CENTERS.iter().map(|a| QuadraticObjective::new(vec![*a])).collect()
}

/// Whether the sample mean of each column is within `z` standard errors of `truth`.
fn within_se(samples: &[Vec<f64>], truth: &[f64], z: f64) -> (bool, f64) {
    let n = samples.len() as f64;
    let mut worst = 0.0f64;
    for (k, &t) in truth.iter().enumerate() {
        let mean = samples.iter().map(|s| s[k]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let score = if se > 0.0 { (mean - t).abs() / se } else if (mean - t).abs() < 1e-12 { 0.0 } else { f64::INFINITY };
        worst = worst.max(score);
    }
    (worst <= z, worst)
}

fn unbiasedness() -> Result<Outcome> {
    const SAMPLES: u64 = 10_000;
    let n = TOY_CENTERS.len();
    let loss = |i: usize, w: f64| 0.5 * (w - TOY_CENTERS[i]).powi(2);

    // participant sampling: E[(1/m) Σ_{i∈D} ∇f_i(w)] = Σ λ_i ∇f_i(w)
    let hp = HyperParams {
        eta: 0.1,
        gamma: 0.05,
        mu: 0.5,
        tau: 4,
        m: 3,
        batch: 1,
        rounds: 1,
    };
    let fed = Federation::new(toy_fleet(), hp, BallConstraint::default(), 51)?;
    let lambda = SimplexPoint::new(vec![0.3, 0.05, 0.15, 0.4, 0.1])?;
    let w = 0.6;
    let truth: f64 = (0..n).map(|i| lambda.weights()[i] * (w - TOY_CENTERS[i])).sum();
    let draws: Vec<Vec<f64>> = (0..SAMPLES)
        .map(|k| {
            let p = fed.plan_round(k, &lambda)?.participants;
            Ok(vec![p.iter().map(|&i| w - TOY_CENTERS[i]).sum::<f64>() / p.len() as f64])
        })
        .collect::<Result<_>>()?;
    let (ok1, z1) = within_se(&draws, &[truth], 3.0);

    // dual gradient: E_U[v] = (f_1(w), …, f_N(w))
    let truth: Vec<f64> = (0..n).map(|i| loss(i, w)).collect();
    let draws: Vec<Vec<f64>> = (0..SAMPLES)
        .map(|k| {
            let u = fed.plan_round(k, &lambda)?.dual_eval_set;
            let losses: Vec<(usize, f64)> = u.iter().map(|&i| (i, loss(i, w))).collect();
            Ok(dual_gradient_vector(&losses, n)?.into_inner())
        })
        .collect::<Result<_>>()?;
    let (ok2, z2) = within_se(&draws, &truth, 3.0);

    // snapshot: E[τ v] = Σ_t f(w^(t)) over the round's virtual global models
    let (mu, eta, tau, m) = (hp.mu, hp.eta, hp.tau, hp.m);
    let fed = Federation::new(toy_fleet(), hp, BallConstraint::default(), 52)?.with_correction(CorrectionUpdate::PerClientWBar);
    let (server0, clients0) = quadratic_state(n);
    let draws: Vec<Vec<f64>> = (0..SAMPLES)
        .map(|k| {
            let mut server = ServerState {
                round: k,
                ..server0.clone()
            };
            let mut clients = clients0.clone();
            let t = fed.run_round(Algorithm::Drdm, &mut server, &mut clients)?;
            let wb = server0.w_bar[0];
            let mut paths = Vec::new();
            for &i in &t.plan.participants {
                let h = clients0[i].memory[0];
                let mut wi = wb;
                let mut path = Vec::new();
                for _ in 0..tau {
                    wi -= eta * ((wi - TOY_CENTERS[i]) - h - mu * (wb - wi));
                    path.push(wi);
                }
                paths.push(path);
            }
            let mut acc = vec![0.0; n];
            for step in 0..tau {
                let sum: f64 = paths.iter().map(|p| p[step]).sum();
                let c = server0.c[0] - mu / n as f64 * (sum - m as f64 * wb);
                let wv = sum / m as f64 - c / mu;
                for (i, a) in acc.iter_mut().enumerate() {
                    *a += loss(i, wv);
                }
            }
            let scale = n as f64 / t.dual_losses.len() as f64 * tau as f64;
            let mut err = acc.iter().map(|a| -a).collect::<Vec<_>>();
            for &(i, l) in &t.dual_losses {
                err[i] += scale * l;
            }
            Ok(err)
        })
        .collect::<Result<_>>()?;
    let (ok3, z3) = within_se(&draws, &vec![0.0; n], 3.0);

    verdict(
        ok1 && ok2 && ok3,
        format!("max |mean − truth|/SE: sampling {z1:.2}, dual gradient {z2:.2}, snapshot {z3:.2} (10^4 samples each)"),
    )
}

// ---------------------------------------------------------- scalar oracle

fn quadratic_state(n: usize) -> (ServerState, Vec<ClientState>) {
    let clients = (0..n)
        .map(|i| ClientState {
            id: i,
            w: DenseVector::new(vec![0.2 * i as f64 - 0.3]),
            memory: DenseVector::new(vec![0.07 * i as f64 - 0.1]),
        })
        .collect();
    let total = (n * (n + 1) / 2) as f64;
    let server = ServerState {
        w_bar: DenseVector::new(vec![0.45]),
        c: DenseVector::new(vec![0.12]),
        lambda: SimplexPoint::new((1..=n).map(|i| i as f64 / total).collect()).expect("simplex"),
        round: 4,
    };
    (server, clients)
}

/// Simplex projection by bisection on the shift θ in Σ max(y_i − θ, 0) = 1.
fn bisection_projection(y: &[f64]) -> Vec<f64> {
    let (mut lo, mut hi) = (y.iter().copied().fold(f64::INFINITY, f64::min) - 1.0, y.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if y.iter().map(|v| (v - mid).max(0.0)).sum::<f64>() > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    y.iter().map(|v| (v - 0.5 * (lo + hi)).max(0.0)).collect()
}

fn scalar_oracle() -> Result<Outcome> {
    let centers = [-1.5, -0.2, 0.7, 2.5, 3.1];
    let n = centers.len();
    let fleet = || centers.iter().map(|a| QuadraticObjective::new(vec![*a])).collect::<Vec<_>>();
    let mut report = Vec::new();
    let mut ok = true;

    for rule in [CorrectionUpdate::PerClientWBar, CorrectionUpdate::PerRoundWBar] {
        let (eta, gamma, mu, tau, m) = (0.12, 0.3, 0.7, 4usize, 3usize);
        let hp = HyperParams {
            eta,
            gamma,
            mu,
            tau,
            m,
            batch: 1,
            rounds: 1,
        };
        let fed = Federation::new(fleet(), hp, BallConstraint::default(), 61)?.with_correction(rule);
        let (s0, c0) = quadratic_state(n);
        let (mut server, mut clients) = (s0.clone(), c0.clone());
        let t = fed.run_round(Algorithm::Drdm, &mut server, &mut clients)?;

        let wb = s0.w_bar[0];
        let t_first = s0.round * tau as u64 + 1;
        let (mut fin, mut snap) = (Vec::new(), Vec::new());
        let (mut w_new, mut h_new): (Vec<f64>, Vec<f64>) = c0.iter().map(|c| (c.w[0], c.memory[0])).unzip();
        for &i in &t.plan.participants {
            let h = c0[i].memory[0];
            let mut w = wb;
            for step in 0..tau as u64 {
                w -= eta * ((w - centers[i]) - h - mu * (wb - w));
                if t_first + step == t.plan.snapshot_t {
                    snap.push(w);
                }
            }
            fin.push(w);
            w_new[i] = w;
            h_new[i] = h - mu * (w - wb);
        }
        let subtract = if rule == CorrectionUpdate::PerClientWBar { m as f64 * wb } else { wb };
        let c_of = |v: &[f64]| s0.c[0] - mu / n as f64 * (v.iter().sum::<f64>() - subtract);
        let (c_new, c_snap) = (c_of(&fin), c_of(&snap));
        let w_bar = fin.iter().sum::<f64>() / m as f64 - c_new / mu;
        let w_snap = snap.iter().sum::<f64>() / m as f64 - c_snap / mu;
        let mut y = s0.lambda.weights().to_vec();
        let u = t.plan.dual_eval_set.len() as f64;
        for &i in &t.plan.dual_eval_set {
            y[i] += tau as f64 * gamma * n as f64 / u * 0.5 * (w_snap - centers[i]).powi(2);
        }
        let lambda = bisection_projection(&y);

        let mut dev = (server.w_bar[0] - w_bar).abs().max((server.c[0] - c_new).abs());
        dev = dev.max(max_diff(server.lambda.weights(), &lambda));
        for i in 0..n {
            dev = dev.max((clients[i].w[0] - w_new[i]).abs()).max((clients[i].memory[0] - h_new[i]).abs());
        }
        ok &= dev <= 1e-12 && server.round == s0.round + 1;
        report.push(format!("drdm ({rule:?}) {dev:.2e}"));
    }

    let (eta, tau, m) = (0.12, 4usize, 3usize);
    let hp = HyperParams {
        eta,
        gamma: 0.0,
        mu: 0.0,
        tau,
        m,
        batch: 1,
        rounds: 1,
    };
    let fed = Federation::new(fleet(), hp, BallConstraint::default(), 62)?;
    let (s0, c0) = quadratic_state(n);
    let (mut server, mut clients) = (s0.clone(), c0.clone());
    let t = fed.run_round(Algorithm::Scaffold, &mut server, &mut clients)?;
    let (x, c) = (s0.w_bar[0], s0.c[0]);
    let (mut dx, mut dc) = (0.0, 0.0);
    let (mut w_new, mut ci_new): (Vec<f64>, Vec<f64>) = c0.iter().map(|s| (s.w[0], s.memory[0])).unzip();
    for &i in &t.plan.participants {
        let ci = c0[i].memory[0];
        let mut y = x;
        for _ in 0..tau {
            y -= eta * ((y - centers[i]) - ci + c);
        }
        let cp = ci - c + (x - y) / (tau as f64 * eta);
        dx += (y - x) / m as f64;
        dc += (cp - ci) / n as f64;
        w_new[i] = y;
        ci_new[i] = cp;
    }
    let mut dev = (server.w_bar[0] - (x + dx)).abs().max((server.c[0] - (c + dc)).abs());
    for i in 0..n {
        dev = dev.max((clients[i].w[0] - w_new[i]).abs()).max((clients[i].memory[0] - ci_new[i]).abs());
    }
    let distinct = {
        let mut p = t.plan.participants.clone();
        p.sort_unstable();
        p.dedup();
        p.len() == m
    };
    ok &= dev <= 1e-12 && distinct;
    report.push(format!("scaffold {dev:.2e}"));
    verdict(ok, format!("max deviation: {}", report.join(", ")))
}

// ------------------------------------------------------------ convergence

/// Two linear-softmax clients. Client 0 holds 320 class-0 and 80 class-1
/// points; client 1 holds either its mirror image (features negated, labels
/// swapped) or a fresh draw with the class balance reversed.
fn two_client_fleet(mirror: bool) -> Result<Vec<ShardObjective>> {
    let mut rng = RngStream::for_purpose(7, Purpose::Custom(103), 0, 0);
    let base = synthetic_two_gaussians(400, 4, 2.0, &mut rng)?;
    let first: Vec<usize> = (0..320).chain(400..480).collect();
    let second: Vec<usize> = (320..400).chain(480..800).collect();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for &r in &first {
        let (x, y) = base.sample(r);
        features.extend_from_slice(x);
        labels.push(y);
    }
    for &r in if mirror { &first } else { &second } {
        let (x, y) = base.sample(r);
        if mirror {
            features.extend(x.iter().map(|v| -v));
            labels.push(1 - y);
        } else {
            features.extend_from_slice(x);
            labels.push(y);
        }
    }
    let data = Arc::new(Dataset::new(DenseMatrix::new(800, 4, features)?, labels, 2)?);
    let shape = ModelShape::linear(4, 2);
    [(0..400).collect::<Vec<_>>(), (400..800).collect()]
        .into_iter()
        .map(|s| ShardObjective::new(data.clone(), s, shape, 16))
        .collect()
}

/// Gap at initialization and every S/10 rounds under the theoretical schedule.
fn gap_trace(fleet: Vec<ShardObjective>, m: usize) -> Result<(Vec<f64>, HyperParams)> {
    let l = fleet.iter().filter_map(LocalObjective::smoothness).fold(0.0, f64::max);
    let hp = theoretical_hyperparams(20_000, m, fleet.len(), l)?.hyper_params(m, 16);
    let ball = BallConstraint::new(10.0)?;
    let fed = Federation::new(fleet, hp, ball, 71)?;
    let (mut server, mut clients) = fed.initial_state(DenseVector::zeros(fed.dim()))?;
    let gap = |s: &ServerState| duality_gap(&s.w_bar, &s.lambda, fed.objectives(), &ball, GapOracle::default()).map(|g| g.gap);
    let every = (hp.rounds / 10).max(1);
    let mut gaps = vec![gap(&server)?];
    for s in 1..=hp.rounds {
        fed.run_round(Algorithm::Drdm, &mut server, &mut clients)?;
        if s % every == 0 || s == hp.rounds {
            gaps.push(gap(&server)?);
        }
    }
    Ok((gaps, hp))
}

fn fmt_gaps(gaps: &[f64]) -> String {
    gaps.iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>().join(" ")
}

fn convergence() -> Result<Outcome> {
    let (gaps, hp) = gap_trace(two_client_fleet(true)?, 1)?;
    let (first, last) = (gaps[0], *gaps.last().expect("non-empty"));
    // sampled gaps may rise by at most 10% of the initial gap
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0] + 0.1 * first);

    let (other, _) = gap_trace(two_client_fleet(false)?, 2)?;
    println!(
        "INFO criterion 7 unscored: class-reversed pair with m = 2 ends at {:.3}× its initial gap, sampled gaps {}",
        other.last().expect("non-empty") / other[0],
        fmt_gaps(&other)
    );

    verdict(
        last <= 0.2 * first && monotone,
        format!(
            "mirror pair, m {}, τ {}, η {:.2e}, γ {:.2e}, μ {:.3}, {} rounds; gap {first:.4} → {last:.4} ({:.3}×); sampled gaps {}",
            hp.m,
            hp.tau,
            hp.eta,
            hp.gamma,
            hp.mu,
            hp.rounds,
            last / first,
            fmt_gaps(&gaps)
        ),
    )
}

// ------------------------------------------------------------ determinism

fn csv_at_threads(cfg: &ExperimentConfig, data: &LoadedData, threads: usize, dir: &Path) -> Result<Vec<u8>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    let result = pool.install(|| run_experiment_with(cfg, data))?;
    let path = dir.join(format!("metrics_{threads}.csv"));
    emit_csv(&result, &path)?;
    Ok(std::fs::read(path)?)
}

fn determinism() -> Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let mut checked = Vec::new();
    let synthetic = parse_config(
        "seed = 5\nmonte_carlo_runs = 3\n[dataset]\nkind = \"synthetic\"\nsamples_per_class = 300\n\
         [partition]\nnum_clients = 8\nsigma = 0.5\n[training]\nalgorithm = \"drdm\"\nm = 5\ntau = 4\nrounds = 25\n",
    )?;
    let data = load_data(&synthetic, Path::new("."))?;
    for alg in [Algorithm::Drdm, Algorithm::Drfa, Algorithm::FedAvg, Algorithm::Scaffold] {
        let mut cfg = synthetic.clone();
        cfg.training.algorithm = alg;
        if csv_at_threads(&cfg, &data, 1, dir.path())? != csv_at_threads(&cfg, &data, 8, dir.path())? {
            return verdict(false, format!("synthetic {alg} CSV differs between 1 and 8 threads"));
        }
        checked.push(format!("synthetic {alg}"));
    }
    if let Ok(data) = mnist() {
        let mut cfg = table3_config()?;
        cfg.monte_carlo_runs = 2;
        cfg.training.rounds = 15;
        cfg.metrics_every = 5;
        if csv_at_threads(&cfg, data, 1, dir.path())? != csv_at_threads(&cfg, data, 8, dir.path())? {
            return verdict(false, "MNIST CSV differs between 1 and 8 threads".into());
        }
        checked.push("mnist drdm".into());
    }
    verdict(true, format!("byte-identical CSV at 1 and 8 threads: {}", checked.join(", ")))
}
