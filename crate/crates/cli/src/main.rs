//! `drsf`: run closed-loop trials, parameter sweeps and one-shot
//! certifications for the sampling-based robust safety filter.
//!
//! Exit codes: 0 success, 1 configuration error, 2 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use drsf_core::filter::certify;
use drsf_core::harness::{
    emit_outputs, run_sweep, run_trial, HarnessError, RunConfig, SweepTable,
};
use drsf_core::rollout::RolloutContext;
use drsf_core::scenarios::build_scenario;

#[derive(Parser)]
#[command(name = "drsf", version, about = "Sampling-based robust safety filtering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print per-invocation certification diagnostics
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one closed-loop trial
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for metrics, trajectory and manifest files
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the parameter sweep declared in the config
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// One certification at the scenario start state; prints the outcome
    Certify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };

    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }

    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                HarnessError::Config(_) => ExitCode::from(1),
                HarnessError::Io { .. } => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, out.as_deref(), cli.verbose),
        Command::Sweep { config, out } => cmd_sweep(&config, &out, cli.verbose),
        Command::Certify { config, seed } => cmd_certify(&config, seed, cli.verbose),
    }
}

fn fmt_goal(goal_time: Option<f64>) -> String {
    goal_time.map_or("inf".to_string(), |t| format!("{t:.3}"))
}

fn cmd_run(
    config: &std::path::Path,
    seed: u64,
    out: Option<&std::path::Path>,
    verbose: bool,
) -> Result<(), HarnessError> {
    let cfg = RunConfig::load(config)?;
    let record = out.is_some() || cfg.sim.write_trajectories;
    let trial = run_trial(&cfg.scenario, &cfg.gatekeeper, seed, cfg.sim.max_steps, record)?;

    if verbose {
        for rec in &trial.diagnostics {
            println!(
                "t={} switch={} fell_back={} feasible={:?}",
                rec.time, rec.outcome.selected_switch, rec.outcome.fell_back, rec.outcome.feasible
            );
        }
    }
    println!(
        "seed={} safe={} goal_time={} backup_ratio={:.4} steps={} wall_time={:.2}s",
        trial.seed,
        trial.safe,
        fmt_goal(trial.goal_time),
        trial.backup_ratio,
        trial.steps,
        trial.wall_time,
    );

    if let Some(dir) = out {
        // single-trial table: one row on the config's own epsilon
        let row = drsf_core::harness::aggregate(
            cfg.gatekeeper.epsilon,
            &[(trial.safe, trial.goal_time, trial.backup_ratio)],
        );
        let table = SweepTable {
            axis: "epsilon".into(),
            rows: vec![row],
            trials: vec![vec![trial]],
        };
        let files = emit_outputs(dir, &cfg, &table)?;
        println!("wrote {}", files.manifest.display());
    }
    Ok(())
}

fn cmd_sweep(
    config: &std::path::Path,
    out: &std::path::Path,
    verbose: bool,
) -> Result<(), HarnessError> {
    let cfg = RunConfig::load(config)?;
    let table = run_sweep(&cfg)?;
    for (row, trials) in table.rows.iter().zip(&table.trials) {
        println!(
            "{}={} safe={:.1}% goal_time={} backup={:.1}%",
            table.axis,
            row.value,
            row.safe_pct,
            fmt_goal(row.mean_goal_time),
            row.mean_backup_pct,
        );
        if verbose {
            for t in trials {
                println!(
                    "  seed={} safe={} goal_time={} backup_ratio={:.4}",
                    t.seed,
                    t.safe,
                    fmt_goal(t.goal_time),
                    t.backup_ratio,
                );
            }
        }
    }
    let files = emit_outputs(out, &cfg, &table)?;
    println!("wrote {}", files.metrics.display());
    Ok(())
}

fn cmd_certify(config: &std::path::Path, seed: u64, verbose: bool) -> Result<(), HarnessError> {
    let cfg = RunConfig::load(config)?;
    let scenario = build_scenario(&cfg.scenario, seed)?;
    let ctx = RolloutContext {
        model: scenario.model(),
        nominal: scenario.nominal_policy(),
        backup: scenario.backup_policy(),
        safety: scenario.safety(),
        process_sampler: scenario.nominal_sampler(),
        theta_sampler: scenario.theta_sampler(),
    };
    let x0 = scenario.initial_state();
    let outcome = certify(&ctx, 0, &x0, 0, &cfg.gatekeeper, seed)
        .map_err(|e| HarnessError::Config(e.to_string()))?;

    if verbose {
        println!("m,violations,lipschitz,bound,diverged");
        for m in 0..outcome.counts.len() {
            println!(
                "{},{},{},{},{}",
                m, outcome.counts[m], outcome.lipschitz[m], outcome.bounds[m], outcome.diverged[m]
            );
        }
    }
    println!(
        "threshold={} feasible={:?} selected_switch={} fell_back={}",
        outcome.threshold, outcome.feasible, outcome.selected_switch, outcome.fell_back
    );
    Ok(())
}
