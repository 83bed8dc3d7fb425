//! `distreg`: generate data, run experiments and sweeps, tabulate reports.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error,
//! 3 divergence, 4 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use distreg::artifacts::{self, AGGREGATE_FILE, CHECKPOINT_FILE, DENSITY_FILE, EPOCH_LOG_FILE, REPORT_FILE};
use distreg::config::{default_output_root, load_experiment, parse_kind};
use distreg::data::{generate, write_csv};
use distreg::trainer::{aggregate, sweep, train, TrainOutcome};
use distreg::Error;

#[derive(Parser)]
#[command(name = "distreg", version, about = "Distribution-aware regression experiments")]
struct Cli {
    /// Output root for `run` and `sweep` [env: DISTREG_OUTPUT_DIR, default: runs]
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV (columns x0,x1,y).
    Generate {
        /// inverse-square, two-path or unimodal-linear
        #[arg(long)]
        kind: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Noise standard deviation (defaults per kind)
        #[arg(long)]
        noise_sd: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one configuration; writes report, density, epoch log and checkpoint.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train every grid point of the config's [sweep] section.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (default: available cores)
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print a table of every report under a directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

enum Failure {
    Error(Error),
    Diverged,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse { .. } => 2,
        Error::Diverged(_) => 3,
        Error::Io { .. } | Error::Json(_) | Error::Csv(_) => 4,
        _ => 1,
    }
}

fn save_outcome(dir: &Path, out: &TrainOutcome) -> Result<(), Error> {
    artifacts::write_report(&out.report, &dir.join(REPORT_FILE))?;
    artifacts::write_epoch_log(&out.epochs, &dir.join(EPOCH_LOG_FILE))?;
    artifacts::write_checkpoint(&out.model.to_checkpoint(), &dir.join(CHECKPOINT_FILE))?;
    if let Some(d) = &out.density {
        artifacts::write_density(d, &dir.join(DENSITY_FILE))?;
    }
    Ok(())
}

fn cmd_run(root: &Path, config: &Path) -> Result<(), Failure> {
    let exp = load_experiment(config)?;
    let hash = exp.run.hash();
    let dir = root.join(format!("run-{}", &hash[..12]));
    let out = train(&exp.run)?;
    save_outcome(&dir, &out)?;
    eprintln!(
        "{} seed {} finished in {:.1}s -> {}",
        out.report.label,
        out.report.seed,
        out.report.wall_time_s,
        dir.display()
    );
    print!("{}", artifacts::report_table(std::slice::from_ref(&out.report)));
    if out.report.diverged {
        return Err(Failure::Diverged);
    }
    Ok(())
}

fn cmd_sweep(root: &Path, config: &Path, jobs: usize) -> Result<(), Failure> {
    let exp = load_experiment(config)?;
    let spec = exp
        .sweep
        .ok_or_else(|| Error::Config(format!("{} has no [sweep] section", config.display())))?;
    let dir = root.join(format!("sweep-{}", &exp.run.hash()[..12]));
    let runs = sweep(&exp.run, &spec, jobs)?;
    let mut bad = 0;
    for (i, r) in runs.iter().enumerate() {
        let run_dir = dir.join("runs").join(format!("{i:04}-{}", &r.run.hash()[..12]));
        match &r.report {
            Ok(report) => {
                artifacts::write_report(report, &run_dir.join(REPORT_FILE))?;
                if report.diverged {
                    bad += 1;
                }
            }
            Err(msg) => {
                bad += 1;
                eprintln!("grid point {i} ({}) failed: {msg}", r.point.loss_label);
            }
        }
    }
    let rows = aggregate(&runs);
    artifacts::write_aggregate(&rows, &dir.join(AGGREGATE_FILE))?;
    eprintln!("{} runs, {} aggregate rows -> {}", runs.len(), rows.len(), dir.display());
    if bad > 0 {
        eprintln!("{bad} runs diverged or failed (flagged in {AGGREGATE_FILE})");
        return Err(Failure::Diverged);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let root = cli.out_dir.unwrap_or_else(default_output_root);
    match cli.command {
        Command::Generate {
            kind,
            n,
            seed,
            noise_sd,
            out,
        } => {
            let ds = generate(parse_kind(&kind)?, n, noise_sd, seed)?;
            write_csv(&ds, &out)?;
            Ok(())
        }
        Command::Run { config } => cmd_run(&root, &config),
        Command::Sweep { config, jobs } => {
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            cmd_sweep(&root, &config, jobs)
        }
        Command::Report { dir } => {
            let reports = artifacts::load_reports(&dir)?;
            print!("{}", artifacts::report_table(&reports));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Diverged) => ExitCode::from(3),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
