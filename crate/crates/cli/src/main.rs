use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fsfd_cli::commands::{self, DETECTOR_FILE, TEST_SIGNALS, TRAIN_SIGNALS};
use fsfd_cli::config::{self, Experiment};
use fsfd_cli::{bench, thread_pool, verify, CliError, Result};

#[derive(Parser)]
#[command(name = "fsfd", version, about = "Finite-sample data-driven fault detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate fault-free training and faulty test records.
    Simulate(Common),
    /// Train a detector on the fault-free prefix of a signal file.
    Train {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out>/train.csv`.
        #[arg(long)]
        signals: Option<PathBuf>,
    },
    /// Evaluate a trained detector on a signal file.
    Detect {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out>/detector.json`.
        #[arg(long)]
        detector: Option<PathBuf>,
        /// Defaults to `<out>/test.csv`.
        #[arg(long)]
        signals: Option<PathBuf>,
    },
    /// Run the identity, rank and bound checks.
    Verify(Common),
    /// Compare detectors over fault amplitudes.
    Bench(Common),
}

fn experiment(common: &Common) -> Result<Option<Experiment>> {
    let Some(path) = &common.config else { return Ok(None) };
    let mut cfg = config::load(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    config::validate(&cfg).map(Some)
}

fn required(common: &Common) -> Result<Experiment> {
    experiment(common)?.ok_or_else(|| CliError::config("--config", "this command needs a configuration file"))
}

fn out_dir(common: &Common, exp: Option<&Experiment>) -> PathBuf {
    common.out.clone().or_else(|| exp.map(|e| e.config.output.dir.clone())).unwrap_or_else(|| PathBuf::from("out"))
}

fn say(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        println!("{}", msg.as_ref());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            let exp = required(&common)?;
            let out = out_dir(&common, Some(&exp));
            let man = commands::cmd_simulate(&exp, &out)?;
            for f in &man.outputs {
                say(common.quiet, format!("wrote {} ({} bytes)", out.join(&f.file).display(), f.bytes));
            }
        }
        Command::Train { common, signals } => {
            let exp = required(&common)?;
            let out = out_dir(&common, Some(&exp));
            let signals = commands::default_input(&out, signals, TRAIN_SIGNALS);
            let (det, _) = commands::cmd_train(&exp, &signals, &out)?;
            say(
                common.quiet,
                format!(
                    "trained {} detector: s = {}, gamma = {}, theta = {}, threshold = {:.6}",
                    det.mode.name(),
                    det.meta.s,
                    det.meta.gamma,
                    det.theta(),
                    det.threshold
                ),
            );
        }
        Command::Detect { common, detector, signals } => {
            let exp = experiment(&common)?;
            let out = out_dir(&common, exp.as_ref());
            let detector = commands::default_input(&out, detector, DETECTOR_FILE);
            let signals = commands::default_input(&out, signals, TEST_SIGNALS);
            let (report, _) = commands::cmd_detect(exp.as_ref(), &detector, &signals, &out)?;
            let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
            say(
                common.quiet,
                format!(
                    "{} windows, FAR {}, MDR {}, delay {}",
                    report.alarms.len(),
                    show(report.far),
                    show(report.mdr),
                    report.detection_delay.map_or("n/a".to_string(), |d| d.to_string())
                ),
            );
        }
        Command::Verify(common) => {
            let exp = required(&common)?;
            let out = out_dir(&common, Some(&exp));
            let report = verify::cmd_verify(&exp, &out, &thread_pool()?)?;
            say(common.quiet, report.table());
            say(common.quiet, format!("max identity residual {:.3e}", report.max_identity_residual()));
            report.ensure_passed()?;
        }
        Command::Bench(common) => {
            let exp = required(&common)?;
            let out = out_dir(&common, Some(&exp));
            let rows = bench::cmd_bench(&exp, &out, &thread_pool()?)?;
            if !common.quiet {
                print!("{}", String::from_utf8_lossy(&bench::to_csv(&rows)?));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
