//! Projection-based residual generation, chi-square/SVDD evaluation and baselines.

mod baselines;
mod chi2;
mod svdd;

pub use baselines::{
    baseline_ls_output, baseline_parity, dimension_comparison, DimensionComparison,
    LsOutputGenerator, ParityGenerator, LS_RIDGE,
};
pub use chi2::{chi2_quantile, chi2_sf, ln_gamma};
pub use svdd::{kkt_residual, svdd_fit, SvddModel};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::ltisim::Trajectory;
use crate::sigkit::stack_window;
use crate::subspace::{build_data_matrix, estimate_order, svd_split};

pub const DEFAULT_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Chi2 { alpha: f64 },
    Svdd { c: f64 },
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Chi2 { .. } => "chi2",
            Mode::Svdd { .. } => "svdd",
        }
    }
}

/// Split rank: fixed, or estimated from the spectral gap with a fallback order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaChoice {
    Fixed(usize),
    Auto { gap_factor: f64, fallback_n: Option<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorMeta {
    pub s: usize,
    pub gamma: usize,
    pub p: usize,
    pub m: usize,
    pub n_train: usize,
    pub ridge: f64,
}

impl DetectorMeta {
    pub fn window_len(&self) -> usize {
        self.s * (self.p + self.m)
    }

    pub fn theta(&self) -> usize {
        self.window_len() - self.gamma
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    /// Residual basis as rows (θ' x s(p+m)).
    pub u2_rows: DMatrix<f64>,
    pub delta_hat: DVector<f64>,
    /// Symmetric inverse square root of the regularized covariance.
    pub cov_inv_factor: DMatrix<f64>,
    pub threshold: f64,
    pub mode: Mode,
    pub meta: DetectorMeta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationResult {
    pub k: i64,
    pub j: f64,
    pub alarm: bool,
}

impl Detector {
    pub fn from_parts(
        u2_rows: DMatrix<f64>,
        delta_hat: DVector<f64>,
        cov_inv_factor: DMatrix<f64>,
        threshold: f64,
        mode: Mode,
        meta: DetectorMeta,
    ) -> Result<Self> {
        let theta = u2_rows.nrows();
        if u2_rows.ncols() != meta.window_len() || theta != meta.theta() {
            return Err(Error::Shape(format!(
                "U2 is {:?}, expected {:?}",
                u2_rows.shape(),
                (meta.theta(), meta.window_len())
            )));
        }
        if delta_hat.len() != theta || cov_inv_factor.shape() != (theta, theta) {
            return Err(Error::Shape("offset or covariance factor does not match U2".into()));
        }
        let defect = linalg::orthonormality_defect(&u2_rows.transpose());
        if defect > 1e-8 {
            return Err(Error::Basis(format!("U2 rows are not orthonormal (defect {defect:.3e})")));
        }
        if (&cov_inv_factor - cov_inv_factor.transpose()).amax() > 1e-10 * cov_inv_factor.amax().max(1.0) {
            return Err(Error::Parameter("covariance factor is not symmetric".into()));
        }
        if !(threshold >= 0.0) {
            return Err(Error::Parameter(format!("threshold {threshold} must be non-negative")));
        }
        Ok(Self { u2_rows, delta_hat, cov_inv_factor, threshold, mode, meta })
    }

    pub fn theta(&self) -> usize {
        self.u2_rows.nrows()
    }

    /// `r = U2 w` for a stacked `[u_s; y_s]` window.
    pub fn residual(&self, window: &DVector<f64>) -> Result<DVector<f64>> {
        if window.len() != self.u2_rows.ncols() {
            return Err(Error::Shape(format!(
                "window has length {}, expected {}",
                window.len(),
                self.u2_rows.ncols()
            )));
        }
        Ok(&self.u2_rows * window)
    }

    /// Squared Mahalanobis distance of the residual from `delta_hat`.
    pub fn statistic(&self, window: &DVector<f64>) -> Result<f64> {
        let r = self.residual(window)?;
        Ok((&self.cov_inv_factor * (r - &self.delta_hat)).norm_squared())
    }

    pub fn evaluate(&self, window: &DVector<f64>, k: i64) -> Result<EvaluationResult> {
        let j = self.statistic(window)?;
        Ok(EvaluationResult { k, j, alarm: j > self.threshold })
    }
}

pub fn residual_r_u2(det: &Detector, window: &DVector<f64>) -> Result<DVector<f64>> {
    det.residual(window)
}

pub fn chi2_statistic(det: &Detector, window: &DVector<f64>, k: i64) -> Result<EvaluationResult> {
    match det.mode {
        Mode::Chi2 { .. } => det.evaluate(window, k),
        Mode::Svdd { .. } => Err(Error::Mode("detector was trained in svdd mode".into())),
    }
}

pub fn svdd_statistic(det: &Detector, window: &DVector<f64>, k: i64) -> Result<EvaluationResult> {
    match det.mode {
        Mode::Svdd { .. } => det.evaluate(window, k),
        Mode::Chi2 { .. } => Err(Error::Mode("detector was trained in chi2 mode".into())),
    }
}

/// Offset, inverse covariance factor and chi-square threshold fitted to
/// residual samples (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualCalibration {
    pub mean: DVector<f64>,
    pub cov_inv_factor: DMatrix<f64>,
    pub threshold: f64,
}

impl ResidualCalibration {
    pub fn fit(residuals: &DMatrix<f64>, alpha: f64, ridge: f64) -> Result<Self> {
        let (mean, cov_inv_factor) = mean_and_whitener(residuals, ridge, None)?;
        Ok(Self { mean, cov_inv_factor, threshold: chi2_quantile(alpha, residuals.nrows())? })
    }

    pub fn statistic(&self, r: &DVector<f64>) -> f64 {
        (&self.cov_inv_factor * (r - &self.mean)).norm_squared()
    }
}

/// Row mean and `Σ̂^{-1/2}` with `Σ̂ = centered Gram / (cols - 1) + ridge (trace/θ) I`.
/// `trace` is `trace_override` when given, else the trace of the centered Gram term.
fn mean_and_whitener(
    residuals: &DMatrix<f64>,
    ridge: f64,
    trace_override: Option<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (theta, cols) = residuals.shape();
    if theta == 0 || cols < 2 {
        return Err(Error::Data("need at least two residual samples of positive dimension".into()));
    }
    if !(ridge >= 0.0) {
        return Err(Error::Parameter(format!("ridge {ridge} must be non-negative")));
    }
    let mean = residuals.column_mean();
    let centered = residuals - &mean * DMatrix::from_element(1, cols, 1.0);
    let mut cov = &centered * centered.transpose() / (cols - 1) as f64;
    let level = trace_override.unwrap_or_else(|| cov.trace()) / theta as f64;
    for i in 0..theta {
        cov[(i, i)] += ridge * level;
    }
    let (vals, vecs) = linalg::sym_eigen_desc(&cov);
    let smallest = vals.last().copied().unwrap_or(0.0);
    if !(smallest > 0.0) || !(vals[0] / smallest < 1e15) {
        return Err(Error::Conditioning(format!(
            "regularized residual covariance is singular (eigenvalues {:.3e} .. {:.3e})",
            vals[0], smallest
        )));
    }
    let inv_sqrt = DVector::from_iterator(theta, vals.iter().map(|v| 1.0 / v.sqrt()));
    let factor = &vecs * DMatrix::from_diagonal(&inv_sqrt) * vecs.transpose();
    Ok((mean, (&factor + factor.transpose()) * 0.5))
}

/// Whitens residual columns, fits SVDD and returns `(delta_hat, radius², model)`.
pub fn svdd_threshold(
    cov_inv_factor: &DMatrix<f64>,
    residuals: &DMatrix<f64>,
    c: f64,
) -> Result<(DVector<f64>, f64, SvddModel)> {
    let white = cov_inv_factor * residuals;
    let model = svdd_fit(&white, c)?;
    let unwhiten = cov_inv_factor
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Conditioning("covariance factor is not invertible".into()))?;
    Ok((unwhiten * &model.center, model.radius_sq, model))
}

/// Trains a projection detector on fault-free data.
pub fn train_detector(traj: &Trajectory, s: usize, gamma: GammaChoice, mode: Mode, ridge: f64) -> Result<Detector> {
    let (p, m) = (traj.u.dim(), traj.y.dim());
    let len = s * (p + m);
    let n = traj.len();
    if traj.labels.iter().any(|&l| l) {
        return Err(Error::Data("training data contains fault-labelled samples".into()));
    }
    if s == 0 || n < len + s - 1 {
        return Err(Error::Data(format!("need N >= s(p+m) + s - 1 = {}, got N = {n}", len + s - 1)));
    }
    let t = build_data_matrix(traj, s, true)?;
    let sigma = crate::linalg::singular_values(&t.data);
    let gamma = match gamma {
        GammaChoice::Fixed(g) => g,
        GammaChoice::Auto { gap_factor, fallback_n } => {
            let mut padded = sigma.clone();
            padded.resize(len, 0.0);
            let order = estimate_order(&padded, s, p, m, gap_factor)
                .or(fallback_n)
                .ok_or_else(|| Error::Data("no spectral gap found and no fallback order given".into()))?;
            s * p + order
        }
    };
    let dec = svd_split(&t, gamma)?;
    let u2_rows = dec.u2.transpose();
    let raw = &t.data * (n as f64).sqrt();
    let residuals = &u2_rows * &raw;
    // ridge scaled by the per-window data energy, so noise-free training keeps a ridge-only floor
    let data_trace = raw.norm_squared() / raw.ncols() as f64;
    let (mean, factor) = mean_and_whitener(&residuals, ridge, Some(data_trace))?;
    let meta = DetectorMeta { s, gamma, p, m, n_train: n, ridge };
    let theta = len - gamma;
    let (delta_hat, threshold) = match mode {
        Mode::Chi2 { alpha } => (mean, chi2_quantile(alpha, theta)?),
        Mode::Svdd { c } => {
            let (d, thr, _) = svdd_threshold(&factor, &residuals, c)?;
            (d, thr)
        }
    };
    Detector::from_parts(u2_rows, delta_hat, factor, threshold, mode, meta)
}

/// Stacked `[u_s(k); y_s(k)]` for 0-based window start `pos`.
pub fn io_window(traj: &Trajectory, s: usize, pos: usize) -> Result<DVector<f64>> {
    let k = traj.u.start() + pos as i64;
    let u = stack_window(&traj.u, s, k)?.entries;
    let y = stack_window(&traj.y, s, k)?.entries;
    Ok(DVector::from_iterator(u.len() + y.len(), u.iter().chain(y.iter()).copied()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    /// `None` when there are no fault-free windows.
    pub far: Option<f64>,
    /// `None` when there are no faulty windows.
    pub mdr: Option<f64>,
    pub anchors: Vec<i64>,
    pub statistics: Vec<f64>,
    pub alarms: Vec<bool>,
    pub window_faulty: Vec<bool>,
    pub threshold: f64,
    /// End sample of the first alarmed faulty window minus the onset sample.
    pub detection_delay: Option<usize>,
}

impl DetectionReport {
    /// Missed-detection rate over faulty windows starting at 0-based position `first_pos` or later.
    pub fn mdr_after(&self, first_pos: usize) -> Option<f64> {
        let picked: Vec<bool> = (first_pos..self.alarms.len())
            .filter(|&i| self.window_faulty[i])
            .map(|i| self.alarms[i])
            .collect();
        (!picked.is_empty()).then(|| picked.iter().filter(|&&a| !a).count() as f64 / picked.len() as f64)
    }
}

/// Slides windows with stride 1 and aggregates FAR/MDR from the labels.
pub fn run_detection(det: &Detector, traj: &Trajectory) -> Result<DetectionReport> {
    let s = det.meta.s;
    let n = traj.len();
    if traj.u.dim() != det.meta.p || traj.y.dim() != det.meta.m {
        return Err(Error::Shape("trajectory dimensions do not match the detector".into()));
    }
    if n < s {
        return Err(Error::Size(format!("trajectory of length {n} is shorter than one window ({s})")));
    }
    let count = n - s + 1;
    let onset = traj.labels.iter().position(|&l| l);
    let mut report = DetectionReport {
        far: None,
        mdr: None,
        anchors: Vec::with_capacity(count),
        statistics: Vec::with_capacity(count),
        alarms: Vec::with_capacity(count),
        window_faulty: Vec::with_capacity(count),
        threshold: det.threshold,
        detection_delay: None,
    };
    let (mut ff, mut fa, mut fy, mut md) = (0usize, 0usize, 0usize, 0usize);
    for pos in 0..count {
        let k = traj.u.start() + pos as i64;
        let eval = det.evaluate(&io_window(traj, s, pos)?, k)?;
        let faulty = traj.labels[pos..pos + s].iter().any(|&l| l);
        if faulty {
            fy += 1;
            if !eval.alarm {
                md += 1;
            } else if report.detection_delay.is_none() {
                report.detection_delay = onset.map(|o| (pos + s - 1).saturating_sub(o));
            }
        } else {
            ff += 1;
            if eval.alarm {
                fa += 1;
            }
        }
        report.anchors.push(k);
        report.statistics.push(eval.j);
        report.alarms.push(eval.alarm);
        report.window_faulty.push(faulty);
    }
    report.far = (ff > 0).then(|| fa as f64 / ff as f64);
    report.mdr = (fy > 0).then(|| md as f64 / fy as f64);
    Ok(report)
}

#[cfg(test)]
mod tests;
