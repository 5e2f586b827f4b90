//! `vesica` — simulation harness CLI for the bladder-volume monitor model.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use vesica_cli::report::{write_report, REPORT_FILE, VOLUMES_FILE};
use vesica_cli::runner::run_scenario;
use vesica_cli::scenario::{builtin, builtin_names, Scenario};
use vesica_cli::session::{load_session, replay_session, save_session};

#[derive(Parser)]
#[command(
    name = "vesica",
    version,
    about = "Simulate a wearable ultrasonic bladder-volume monitor end to end"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and record the session to a directory.
    Sim {
        /// Built-in scenario name (see `list-scenarios`).
        #[arg(long, conflicts_with = "config")]
        scenario: Option<String>,
        /// Scenario TOML file to run instead of a built-in.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the scenario's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario's noise level (dB below the echo peak).
        #[arg(long)]
        snr_db: Option<f64>,
        /// Session output directory [default: sessions/<name>].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-estimate a recorded session from its raw frames and verify the log.
    Replay {
        /// Session directory written by `sim`.
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Summarise a recorded session into report.txt and volumes.txt.
    Report {
        /// Session directory written by `sim`.
        #[arg(long = "in")]
        input: PathBuf,
        /// Where to write the report files.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// List built-in scenarios.
    ListScenarios,
}

fn resolve_scenario(
    name: Option<String>,
    config: Option<PathBuf>,
    seed: Option<u64>,
    snr_db: Option<f64>,
) -> Result<Scenario> {
    let mut sc = match (name, config) {
        (Some(n), None) => builtin(&n).with_context(|| {
            format!("unknown scenario {n:?}; available: {}", builtin_names().join(", "))
        })?,
        (None, Some(path)) => Scenario::load(&path)?,
        (None, None) => bail!("pass one of --scenario <name> or --config <file>"),
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    if let Some(s) = seed {
        sc.seed = s;
    }
    if let Some(db) = snr_db {
        sc.snr_db = Some(db);
    }
    sc.validate()?;
    Ok(sc)
}

fn cmd_sim(sc: &Scenario, out: Option<PathBuf>) -> Result<ExitCode> {
    let out = out.unwrap_or_else(|| PathBuf::from("sessions").join(&sc.name));
    let log = run_scenario(sc)?;
    save_session(&log, &out)?;

    println!("scenario: {}", sc.name);
    println!("session:  {}", out.display());
    println!("# time_s volume_ml point_count quality residual_mm");
    for record in &log.estimate_records {
        println!("{record}");
    }

    let failed = log
        .estimate_records
        .iter()
        .filter(|r| r.contains(" error:"))
        .count();
    if failed > 0 {
        eprintln!(
            "error: {failed} of {} sweeps failed to process; see {}",
            log.estimate_records.len(),
            out.display()
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_replay(input: PathBuf) -> Result<ExitCode> {
    let outcome = replay_session(&input)?;
    if outcome.trailing_bytes > 0 {
        eprintln!(
            "warning: frame stream ends mid-frame ({} stray bytes); verified the intact prefix",
            outcome.trailing_bytes
        );
    }
    println!(
        "replay ok: {} estimate record(s) reproduced from raw frames",
        outcome.records_verified
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(input: PathBuf, out_dir: PathBuf) -> Result<ExitCode> {
    let log = load_session(&input)?;
    let summary = write_report(&log, &out_dir)?;
    println!(
        "report: {} sample(s), {} estimate(s), {} alert(s), {} error(s)",
        summary.rows, summary.ok_rows, summary.alert_rows, summary.error_rows
    );
    if let Some(max) = summary.max_rel_error {
        println!("worst relative error: {:.2}%", max * 100.0);
    }
    println!("wrote {}", out_dir.join(REPORT_FILE).display());
    println!("wrote {}", out_dir.join(VOLUMES_FILE).display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_list() -> ExitCode {
    for name in builtin_names() {
        let sc = builtin(name).expect("listed builtin exists");
        println!("{name:<20} {}", sc.description);
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sim { scenario, config, seed, snr_db, out } => {
            resolve_scenario(scenario, config, seed, snr_db).and_then(|sc| cmd_sim(&sc, out))
        }
        Command::Replay { input } => cmd_replay(input),
        Command::Report { input, out_dir } => cmd_report(input, out_dir),
        Command::ListScenarios => Ok(cmd_list()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
