//! `simulate`, `train` and `detect`.

use std::path::{Path, PathBuf};

use fsfd_core::detect::{run_detection, train_detector, DetectionReport, Detector};
use fsfd_core::ltisim::{gaussian_input, simulate, FaultProfile, Trajectory};
use nalgebra::DVector;

use crate::config::Experiment;
use crate::io;
use crate::manifest::RunManifest;
use crate::{CliError, Result};

pub const TRAIN_SIGNALS: &str = "train.csv";
pub const TEST_SIGNALS: &str = "test.csv";
pub const DETECTOR_FILE: &str = "detector.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";

/// Independent seed for a named stream (splitmix64 finalizer).
pub fn substream(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One simulated record of `len` samples from zero initial state.
pub fn record(exp: &Experiment, len: usize, fault: Option<&FaultProfile>, seed: u64, tag: u64) -> Result<Trajectory> {
    let u = gaussian_input(exp.model.p(), len, exp.config.input_std, substream(seed, 2 * tag))?;
    let x0 = DVector::zeros(exp.model.n());
    Ok(simulate(&exp.model, exp.noise.as_ref(), fault, &u, &x0, substream(seed, 2 * tag + 1))?)
}

/// Fault-free training record and the test record carrying the configured fault.
pub fn simulate_records(exp: &Experiment) -> Result<(Trajectory, Trajectory)> {
    let seed = exp.config.seed;
    let train = record(exp, exp.train_samples(), None, seed, 1)?;
    let test = record(exp, exp.config.n_samples, exp.fault.as_ref(), seed, 2)?;
    Ok((train, test))
}

pub fn cmd_simulate(exp: &Experiment, out: &Path) -> Result<RunManifest> {
    let (train, test) = simulate_records(exp)?;
    let mut manifest = RunManifest::new("simulate", Some(&exp.config));
    manifest.emit(out, TRAIN_SIGNALS, &io::signals_to_csv(&train)?)?;
    manifest.emit(out, TEST_SIGNALS, &io::signals_to_csv(&test)?)?;
    manifest.finish(out)?;
    Ok(manifest)
}

/// Longest fault-free prefix of a record.
pub fn fault_free_prefix(traj: &Trajectory) -> Result<Trajectory> {
    let len = traj.labels.iter().position(|&l| l).unwrap_or(traj.len());
    if len == 0 {
        return Err(fsfd_core::Error::Data("signals start with a fault-labelled sample".into()).into());
    }
    Ok(traj.slice(0, len)?)
}

fn check_dims(exp: &Experiment, traj: &Trajectory, path: &Path) -> Result<()> {
    let (p, m) = (exp.model.p(), exp.model.m());
    if traj.u.dim() != p || traj.y.dim() != m {
        return Err(CliError::Format {
            path: path.into(),
            message: format!("signals have p = {}, m = {}; the model has p = {p}, m = {m}", traj.u.dim(), traj.y.dim()),
        });
    }
    Ok(())
}

pub fn train_on(exp: &Experiment, traj: &Trajectory) -> Result<Detector> {
    let c = &exp.config;
    Ok(train_detector(&fault_free_prefix(traj)?, c.s, exp.gamma_choice(), exp.mode, c.ridge)?)
}

pub fn cmd_train(exp: &Experiment, signals: &Path, out: &Path) -> Result<(Detector, RunManifest)> {
    let bytes = io::read(signals)?;
    let traj = io::signals_from_csv(&bytes, signals)?;
    check_dims(exp, &traj, signals)?;
    let det = train_on(exp, &traj)?;
    let mut manifest = RunManifest::new("train", Some(&exp.config));
    manifest.input(signals, &bytes);
    manifest.emit(out, DETECTOR_FILE, &io::detector_to_json(&det))?;
    manifest.finish(out)?;
    Ok((det, manifest))
}

pub fn cmd_detect(
    exp: Option<&Experiment>,
    detector: &Path,
    signals: &Path,
    out: &Path,
) -> Result<(DetectionReport, RunManifest)> {
    let det_bytes = io::read(detector)?;
    let det = io::detector_from_json(&det_bytes, detector)?;
    let sig_bytes = io::read(signals)?;
    let traj = io::signals_from_csv(&sig_bytes, signals)?;
    if traj.u.dim() != det.meta.p || traj.y.dim() != det.meta.m {
        return Err(CliError::Format {
            path: signals.into(),
            message: format!(
                "signals have p = {}, m = {}; the detector expects p = {}, m = {}",
                traj.u.dim(),
                traj.y.dim(),
                det.meta.p,
                det.meta.m
            ),
        });
    }
    let report = run_detection(&det, &traj)?;
    let mut manifest = RunManifest::new("detect", exp.map(|e| &e.config));
    manifest.input(detector, &det_bytes);
    manifest.input(signals, &sig_bytes);
    manifest.emit(out, REPORT_CSV, &io::report_to_csv(&report)?)?;
    let summary = io::ReportSummary::from_report(&report, det.mode.name());
    manifest.emit(out, REPORT_JSON, &io::to_json(&summary))?;
    manifest.finish(out)?;
    Ok((report, manifest))
}

pub fn default_input(out: &Path, given: Option<PathBuf>, name: &str) -> PathBuf {
    given.unwrap_or_else(|| out.join(name))
}
