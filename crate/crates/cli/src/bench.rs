//! Monte-Carlo comparison of the projection detector with parity and LS output residuals.

use std::path::Path;

use fsfd_core::detect::{baseline_ls_output, baseline_parity, run_detection, ResidualCalibration};
use fsfd_core::ltisim::Trajectory;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::commands::{record, substream, train_on};
use crate::config::{Experiment, ExperimentConfig, FaultKind};
use crate::manifest::RunManifest;
use crate::{CliError, Result};

pub const BENCH_CSV: &str = "bench.csv";
/// `projection_long` runs the projection detector on windows of `s + ρ` samples,
/// the span of one LS output regression window.
pub const METHODS: [&str; 4] = ["projection", "projection_long", "parity", "ls_output"];

/// Pooled window counts for one method at one amplitude.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Counts {
    pub fault_free: usize,
    pub false_alarms: usize,
    pub faulty: usize,
    pub missed: usize,
    pub delay_sum: usize,
    pub detected_runs: usize,
}

impl Counts {
    fn add(&mut self, o: &Counts) {
        self.fault_free += o.fault_free;
        self.false_alarms += o.false_alarms;
        self.faulty += o.faulty;
        self.missed += o.missed;
        self.delay_sum += o.delay_sum;
        self.detected_runs += o.detected_runs;
    }

    pub fn far(&self) -> Option<f64> {
        (self.fault_free > 0).then(|| self.false_alarms as f64 / self.fault_free as f64)
    }

    pub fn mdr(&self) -> Option<f64> {
        (self.faulty > 0).then(|| self.missed as f64 / self.faulty as f64)
    }

    pub fn mean_delay(&self) -> Option<f64> {
        (self.detected_runs > 0).then(|| self.delay_sum as f64 / self.detected_runs as f64)
    }
}

/// Counts windows of `depth` samples anchored at positions `0..stats.len()`.
fn tally(stats: &[f64], threshold: f64, labels: &[bool], depth: usize) -> Counts {
    let onset = labels.iter().position(|&l| l);
    let mut c = Counts::default();
    let mut first = None;
    for (pos, &j) in stats.iter().enumerate() {
        let alarm = j > threshold;
        if labels[pos..pos + depth].iter().any(|&l| l) {
            c.faulty += 1;
            if alarm {
                first.get_or_insert(pos + depth - 1);
            } else {
                c.missed += 1;
            }
        } else {
            c.fault_free += 1;
            c.false_alarms += usize::from(alarm);
        }
    }
    if let (Some(end), Some(o)) = (first, onset) {
        c.delay_sum = end.saturating_sub(o);
        c.detected_runs = 1;
    }
    c
}

fn calibrated(cal: &ResidualCalibration, res: &DMatrix<f64>) -> Vec<f64> {
    res.column_iter().map(|r| cal.statistic(&r.into_owned())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: &'static str,
    pub amplitude: f64,
    pub trials: usize,
    pub counts: Counts,
}

/// Per-trial counts for every (amplitude, method); common random numbers across amplitudes.
fn trial(exp: &Experiment, t: usize) -> Result<Vec<[Counts; 4]>> {
    let c = &exp.config;
    let seed = substream(c.seed, 10_000 + t as u64);
    let (s, ntrain) = (c.s, exp.train_samples());
    let n = exp.latent.unwrap_or(exp.model.n());
    let rho = c.bench.rho.unwrap_or(n + 1);
    let train = record(exp, ntrain, None, seed, 1)?;
    let calib = record(exp, ntrain, None, seed, 3)?;
    let det = train_on(exp, &train)?;
    let long_exp = Experiment { config: ExperimentConfig { s: s + rho, ..c.clone() }, ..exp.clone() };
    let det_long = train_on(&long_exp, &train)?;
    let parity = baseline_parity(&exp.model, s, None)?;
    let par_cal = ResidualCalibration::fit(&parity.residuals(&calib)?, c.alpha, c.ridge)?;
    let ls = baseline_ls_output(&train, s, rho, n)?;
    let ls_cal = ResidualCalibration::fit(&ls.residuals(&calib)?, c.alpha, c.ridge)?;
    c.bench
        .amplitudes
        .iter()
        .map(|&a| {
            let test: Trajectory = record(exp, c.n_samples, exp.scaled_fault(a).as_ref(), seed, 2)?;
            let rep = run_detection(&det, &test)?;
            let rep_long = run_detection(&det_long, &test)?;
            Ok([
                tally(&rep.statistics, det.threshold, &test.labels, s),
                tally(&rep_long.statistics, det_long.threshold, &test.labels, s + rho),
                tally(&calibrated(&par_cal, &parity.residuals(&test)?), par_cal.threshold, &test.labels, s),
                tally(&calibrated(&ls_cal, &ls.residuals(&test)?), ls_cal.threshold, &test.labels, rho + s),
            ])
        })
        .collect()
}

pub fn run_bench(exp: &Experiment, pool: &rayon::ThreadPool) -> Result<Vec<BenchRow>> {
    let c = &exp.config;
    if c.fault.kind == FaultKind::None {
        return Err(CliError::config("fault.kind", "bench needs a fault scenario"));
    }
    if c.n_samples < n_window_need(exp) {
        return Err(CliError::config("n_samples", "test record is shorter than one LS output window"));
    }
    let per_trial: Vec<Vec<[Counts; 4]>> =
        pool.install(|| (0..c.bench.trials).into_par_iter().map(|t| trial(exp, t)).collect::<Result<_>>())?;
    let mut rows = Vec::new();
    for (ai, &amplitude) in c.bench.amplitudes.iter().enumerate() {
        for (mi, method) in METHODS.iter().enumerate() {
            let mut counts = Counts::default();
            for t in &per_trial {
                counts.add(&t[ai][mi]);
            }
            rows.push(BenchRow { method, amplitude, trials: c.bench.trials, counts });
        }
    }
    Ok(rows)
}

fn n_window_need(exp: &Experiment) -> usize {
    let n = exp.latent.unwrap_or(exp.model.n());
    exp.config.bench.rho.unwrap_or(n + 1) + exp.config.s
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

pub fn to_csv(rows: &[BenchRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Format { path: BENCH_CSV.into(), message: e.to_string() };
    w.write_record(["method", "amplitude", "trials", "fault_free_windows", "far", "faulty_windows", "mdr", "mean_delay"])
        .map_err(err)?;
    for r in rows {
        let c = &r.counts;
        w.write_record([
            r.method.to_string(),
            r.amplitude.to_string(),
            r.trials.to_string(),
            c.fault_free.to_string(),
            opt(c.far()),
            c.faulty.to_string(),
            opt(c.mdr()),
            opt(c.mean_delay()),
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Format { path: BENCH_CSV.into(), message: e.to_string() })
}

pub fn cmd_bench(exp: &Experiment, out: &Path, pool: &rayon::ThreadPool) -> Result<Vec<BenchRow>> {
    let rows = run_bench(exp, pool)?;
    let mut manifest = RunManifest::new("bench", Some(&exp.config));
    manifest.emit(out, BENCH_CSV, &to_csv(&rows)?)?;
    manifest.finish(out)?;
    Ok(rows)
}
