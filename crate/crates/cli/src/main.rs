use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use fedrobust_core::data::write_csv;
use fedrobust_core::harness::{
    emit_csv, emit_energy_csv, emit_summary_csv, emit_tau_csv, load_data, mean_rounds_per_tau, parse_config,
    run_experiment_with, sweep_energy, sweep_tau, verify, DatasetKind, ExperimentConfig, Suite,
};
use fedrobust_core::Error;

#[derive(Parser)]
#[command(name = "fedrobust", version, about = "Federated distributionally robust training simulator")]
struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every Monte Carlo repetition of an experiment.
    Run(RunArgs),
    /// Rounds needed to reach a worst-case accuracy target for each τ.
    SweepTau(TauArgs),
    /// Energy-optimal τ over a grid of SNR and bandwidth values.
    SweepEnergy(EnergyArgs),
    /// Run the built-in verification suites.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TauArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,30")]
    taus: Vec<usize>,
    /// Worst-case test accuracy to reach.
    #[arg(long, default_value_t = 0.8)]
    target: f64,
}

#[derive(Args)]
struct EnergyArgs {
    #[command(flatten)]
    tau: TauArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,5,10,15,20")]
    snr: Vec<f64>,
    /// Bandwidths in hertz; defaults to the config's.
    #[arg(long, value_delimiter = ',')]
    bandwidth: Vec<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suites to run; all when empty.
    suites: Vec<String>,
}

/// Failure classes with their process exit codes.
enum Failure {
    Verification(anyhow::Error),
    Config(anyhow::Error),
    Io(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        match err.downcast_ref::<Error>() {
            Some(Error::Config { .. } | Error::Parameter(_)) => Failure::Config(err),
            Some(Error::Io(_) | Error::Format { .. }) => Failure::Io(err),
            _ if err.downcast_ref::<std::io::Error>().is_some() => Failure::Io(err),
            _ => Failure::Verification(err),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot start {k} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Run(a) => run(&a.common),
        Command::SweepTau(a) => sweep_tau_cmd(&a).map(|_| ()),
        Command::SweepEnergy(a) => sweep_energy_cmd(&a),
        Command::Verify(a) => verify_cmd(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Verification(e) | Failure::Config(e) | Failure::Io(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}

fn load_config(common: &Common) -> Result<(ExperimentConfig, PathBuf), Failure> {
    let text = std::fs::read_to_string(&common.config)
        .with_context(|| format!("reading {}", common.config.display()))
        .map_err(Failure::Io)?;
    let mut cfg = parse_config(&text)
        .map_err(anyhow::Error::from)
        .map_err(|e| Failure::Config(e.context(format!("in {}", common.config.display()))))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let base = common.config.parent().map(Path::to_path_buf).unwrap_or_default();
    std::fs::create_dir_all(&common.out)
        .with_context(|| format!("creating {}", common.out.display()))
        .map_err(Failure::Io)?;
    Ok((cfg, base))
}

fn write_canonical(cfg: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    let text = cfg.to_toml().map_err(anyhow::Error::from)?;
    std::fs::write(out.join("config.toml"), text).context("writing config.toml")?;
    Ok(())
}

fn run(common: &Common) -> Result<(), Failure> {
    let (cfg, base) = load_config(common)?;
    let data = load_data(&cfg, &base).map_err(anyhow::Error::from)?;
    if cfg.dataset.kind == DatasetKind::Synthetic {
        write_csv(&data.train, common.out.join("dataset.csv")).map_err(anyhow::Error::from)?;
    }
    let result = run_experiment_with(&cfg, &data).map_err(anyhow::Error::from)?;
    emit_csv(&result, common.out.join("metrics.csv")).map_err(anyhow::Error::from)?;
    emit_summary_csv(&result, common.out.join("summary.csv")).map_err(anyhow::Error::from)?;
    write_canonical(&cfg, &common.out)?;
    if let Some(s) = result.final_summary() {
        println!(
            "{} after {} rounds over {} runs: average {:.2}% ± {:.2}, worst-case {:.2}% ± {:.2}, std {:.2}",
            cfg.training.algorithm,
            s.round,
            result.runs.len(),
            100.0 * s.avg_acc.mean,
            100.0 * s.avg_acc.std,
            100.0 * s.worst_acc.mean,
            100.0 * s.worst_acc.std,
            100.0 * s.std_acc.mean
        );
    }
    Ok(())
}

fn sweep_tau_cmd(a: &TauArgs) -> Result<(ExperimentConfig, Vec<(usize, Option<f64>)>), Failure> {
    let (cfg, base) = load_config(&a.common)?;
    let data = load_data(&cfg, &base).map_err(anyhow::Error::from)?;
    let rows = sweep_tau(&cfg, &data, &a.taus, a.target).map_err(anyhow::Error::from)?;
    emit_tau_csv(&rows, a.common.out.join("tau_sweep.csv")).map_err(anyhow::Error::from)?;
    write_canonical(&cfg, &a.common.out)?;
    let means = mean_rounds_per_tau(&rows);
    for (tau, mean) in &means {
        match mean {
            Some(r) => println!("tau {tau}: {r:.1} rounds to reach {:.0}% worst-case", 100.0 * a.target),
            None => println!("tau {tau}: target not reached in every run"),
        }
    }
    Ok((cfg, means))
}

fn sweep_energy_cmd(a: &EnergyArgs) -> Result<(), Failure> {
    let (cfg, means) = sweep_tau_cmd(&a.tau)?;
    let ep = cfg
        .energy
        .ok_or_else(|| Failure::Config(anyhow!("config error at `energy`: sweep-energy needs an [energy] section")))?;
    let bandwidths = if a.bandwidth.is_empty() { vec![ep.bandwidth] } else { a.bandwidth.clone() };
    let rows = sweep_energy(&means, cfg.training.m, &ep, &a.snr, &bandwidths).map_err(anyhow::Error::from)?;
    emit_energy_csv(&rows, a.tau.common.out.join("energy_sweep.csv")).map_err(anyhow::Error::from)?;
    for r in &rows {
        match r.opt_tau {
            Some(t) => println!("snr {} dB, bandwidth {} Hz: optimal tau {t}", r.snr_db, r.bandwidth_hz),
            None => println!("snr {} dB, bandwidth {} Hz: no tau reached the target", r.snr_db, r.bandwidth_hz),
        }
    }
    Ok(())
}

fn verify_cmd(a: &VerifyArgs) -> Result<(), Failure> {
    let suites = if a.suites.is_empty() {
        Suite::ALL.to_vec()
    } else {
        a.suites
            .iter()
            .map(|s| s.parse::<Suite>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Failure::Config(anyhow::Error::from(e)))?
    };
    let report = verify(&suites);
    for check in &report.checks {
        println!(
            "{} {}::{}{}",
            if check.passed { "PASS" } else { "FAIL" },
            check.suite,
            check.name,
            if check.detail.is_empty() { String::new() } else { format!(" ({})", check.detail) }
        );
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failed", report.checks.len());
    if failed > 0 {
        return Err(Failure::Verification(anyhow!("{failed} verification checks failed")));
    }
    Ok(())
}
