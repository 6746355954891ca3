//! Signal tables, detector documents and atomic file output.

use std::fs;
use std::path::{Path, PathBuf};

use fsfd_core::detect::{DetectionReport, Detector, DetectorMeta, Mode};
use fsfd_core::ltisim::Trajectory;
use fsfd_core::sigkit::SignalSequence;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, Result};

pub const DETECTOR_FORMAT: &str = "fsfd-detector";
pub const FORMAT_VERSION: u32 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Format { path: path.to_path_buf(), message: message.into() }
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let name = path.file_name().ok_or_else(|| format_err(path, "not a file path"))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(io_err(path))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// CSV with header `u1..up,y1..ym,label`; floats use the shortest round-trip form.
pub fn signals_to_csv(traj: &Trajectory) -> Result<Vec<u8>> {
    let (p, m) = (traj.u.dim(), traj.y.dim());
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> =
        (1..=p).map(|i| format!("u{i}")).chain((1..=m).map(|i| format!("y{i}"))).chain(["label".into()]).collect();
    let csv_err = |e: csv::Error| format_err(Path::new("<signals>"), e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for t in 0..traj.len() {
        let row: Vec<String> = traj
            .u
            .sample(t)
            .iter()
            .chain(traj.y.sample(t).iter())
            .map(|v| v.to_string())
            .chain([u8::from(traj.labels[t]).to_string()])
            .collect();
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| format_err(Path::new("<signals>"), e.to_string()))
}

pub fn signals_from_csv(bytes: &[u8], path: &Path) -> Result<Trajectory> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers().map_err(|e| format_err(path, e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().collect();
    let p = names.iter().take_while(|h| h.starts_with('u')).count();
    let m = names[p..].iter().take_while(|h| h.starts_with('y')).count();
    let expected: Vec<String> =
        (1..=p).map(|i| format!("u{i}")).chain((1..=m).map(|i| format!("y{i}"))).chain(["label".into()]).collect();
    if p == 0 || m == 0 || names != expected {
        return Err(format_err(path, format!("header must read u1..up,y1..ym,label, got {}", names.join(","))));
    }
    let (mut us, mut ys, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| format_err(path, e.to_string()))?;
        let line = i + 2;
        let num = |j: usize| -> Result<f64> {
            rec[j].trim().parse::<f64>().map_err(|_| format_err(path, format!("line {line}: bad number {:?}", &rec[j])))
        };
        us.extend((0..p).map(num).collect::<Result<Vec<_>>>()?);
        ys.extend((p..p + m).map(num).collect::<Result<Vec<_>>>()?);
        labels.push(match rec[p + m].trim() {
            "0" => false,
            "1" => true,
            other => return Err(format_err(path, format!("line {line}: label must be 0 or 1, got {other:?}"))),
        });
    }
    let len = labels.len();
    if len == 0 {
        return Err(format_err(path, "no samples"));
    }
    let seq = |data: Vec<f64>, dim: usize| SignalSequence::new(DMatrix::from_vec(dim, len, data), 0);
    Ok(Trajectory { u: seq(us, p)?, y: seq(ys, m)?, x: None, labels })
}

pub fn load_signals(path: &Path) -> Result<Trajectory> {
    signals_from_csv(&read(path)?, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixPayload {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries.
    pub data: Vec<f64>,
}

impl MatrixPayload {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), data: m.transpose().as_slice().to_vec() }
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        Self { rows: v.len(), cols: 1, data: v.as_slice().to_vec() }
    }

    pub fn to_matrix(&self, what: &str, path: &Path) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(format_err(
                path,
                format!("{what}: {} entries for shape {}x{}", self.data.len(), self.rows, self.cols),
            ));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModeDoc {
    Chi2 { alpha: f64 },
    Svdd { c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaDoc {
    pub s: usize,
    pub gamma: usize,
    pub p: usize,
    pub m: usize,
    pub n_train: usize,
    pub ridge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorDoc {
    pub format: String,
    pub version: u32,
    pub mode: ModeDoc,
    pub threshold: f64,
    pub meta: MetaDoc,
    pub u2_rows: MatrixPayload,
    pub delta_hat: MatrixPayload,
    pub cov_inv_factor: MatrixPayload,
}

impl DetectorDoc {
    pub fn from_detector(det: &Detector) -> Self {
        let mt = &det.meta;
        Self {
            format: DETECTOR_FORMAT.into(),
            version: FORMAT_VERSION,
            mode: match det.mode {
                Mode::Chi2 { alpha } => ModeDoc::Chi2 { alpha },
                Mode::Svdd { c } => ModeDoc::Svdd { c },
            },
            threshold: det.threshold,
            meta: MetaDoc { s: mt.s, gamma: mt.gamma, p: mt.p, m: mt.m, n_train: mt.n_train, ridge: mt.ridge },
            u2_rows: MatrixPayload::from_matrix(&det.u2_rows),
            delta_hat: MatrixPayload::from_vector(&det.delta_hat),
            cov_inv_factor: MatrixPayload::from_matrix(&det.cov_inv_factor),
        }
    }

    pub fn to_detector(&self, path: &Path) -> Result<Detector> {
        if self.format != DETECTOR_FORMAT || self.version != FORMAT_VERSION {
            return Err(format_err(path, format!("unsupported document {} v{}", self.format, self.version)));
        }
        let delta = self.delta_hat.to_matrix("delta_hat", path)?;
        if delta.ncols() != 1 {
            return Err(format_err(path, "delta_hat must be a column"));
        }
        let mt = &self.meta;
        let meta = DetectorMeta { s: mt.s, gamma: mt.gamma, p: mt.p, m: mt.m, n_train: mt.n_train, ridge: mt.ridge };
        let mode = match self.mode {
            ModeDoc::Chi2 { alpha } => Mode::Chi2 { alpha },
            ModeDoc::Svdd { c } => Mode::Svdd { c },
        };
        Ok(Detector::from_parts(
            self.u2_rows.to_matrix("u2_rows", path)?,
            delta.column(0).into_owned(),
            self.cov_inv_factor.to_matrix("cov_inv_factor", path)?,
            self.threshold,
            mode,
            meta,
        )?)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("documents serialize");
    bytes.push(b'\n');
    bytes
}

pub fn detector_to_json(det: &Detector) -> Vec<u8> {
    to_json(&DetectorDoc::from_detector(det))
}

pub fn detector_from_json(bytes: &[u8], path: &Path) -> Result<Detector> {
    let doc: DetectorDoc = serde_json::from_slice(bytes).map_err(|e| format_err(path, e.to_string()))?;
    doc.to_detector(path)
}

pub fn load_detector(path: &Path) -> Result<Detector> {
    detector_from_json(&read(path)?, path)
}

/// Per-window rows: 0-based anchor `k`, statistic, alarm flag and window label.
pub fn report_to_csv(report: &DetectionReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| format_err(Path::new("<report>"), e.to_string());
    w.write_record(["k", "J", "alarm", "faulty"]).map_err(err)?;
    for i in 0..report.anchors.len() {
        w.write_record([
            report.anchors[i].to_string(),
            report.statistics[i].to_string(),
            u8::from(report.alarms[i]).to_string(),
            u8::from(report.window_faulty[i]).to_string(),
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| format_err(Path::new("<report>"), e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub windows: usize,
    pub fault_free_windows: usize,
    pub faulty_windows: usize,
    pub false_alarms: usize,
    pub missed_detections: usize,
    pub far: Option<f64>,
    pub mdr: Option<f64>,
    pub detection_delay: Option<usize>,
    pub threshold: f64,
    pub mode: String,
}

impl ReportSummary {
    pub fn from_report(report: &DetectionReport, mode: &str) -> Self {
        let pairs = || report.alarms.iter().zip(&report.window_faulty);
        Self {
            windows: report.alarms.len(),
            fault_free_windows: report.window_faulty.iter().filter(|f| !**f).count(),
            faulty_windows: report.window_faulty.iter().filter(|f| **f).count(),
            false_alarms: pairs().filter(|(a, f)| **a && !**f).count(),
            missed_detections: pairs().filter(|(a, f)| !**a && **f).count(),
            far: report.far,
            mdr: report.mdr,
            detection_delay: report.detection_delay,
            threshold: report.threshold,
            mode: mode.into(),
        }
    }
}

/// One row of a per-window report.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct ReportRow {
    pub k: i64,
    #[serde(rename = "J")]
    pub j: f64,
    pub alarm: u8,
    pub faulty: u8,
}

pub fn report_rows(bytes: &[u8], path: &Path) -> Result<Vec<ReportRow>> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .collect::<std::result::Result<Vec<ReportRow>, _>>()
        .map_err(|e| format_err(path, e.to_string()))
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
