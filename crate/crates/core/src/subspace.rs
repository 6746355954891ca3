//! Data matrices, SVD-based subspace splits, projectors and perturbation bounds.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::ltisim::{StateSpaceModel, Trajectory};
use crate::repr::{controller_image_rep, image_rep};
use crate::sigkit::{build_hankel, numerical_rank, HankelMatrix, SignalSequence};

/// `[H_s(u); H_s(y)]`, optionally scaled by `1/sqrt(N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelDataMatrix {
    pub data: DMatrix<f64>,
    pub s: usize,
    pub n_samples: usize,
    pub p: usize,
    pub m: usize,
    pub normalized: bool,
    /// `N - s + 1 >= s(p+m)`.
    pub width_sufficient: bool,
}

impl HankelDataMatrix {
    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }
}

pub fn build_data_matrix(traj: &Trajectory, s: usize, normalize: bool) -> Result<HankelDataMatrix> {
    data_matrix_from(&traj.u, &traj.y, s, normalize)
}

pub fn data_matrix_from(u: &SignalSequence, y: &SignalSequence, s: usize, normalize: bool) -> Result<HankelDataMatrix> {
    if u.len() != y.len() || u.start() != y.start() {
        return Err(Error::Shape("u and y must share length and start index".into()));
    }
    if s == 0 || u.len() < s {
        return Err(Error::Size(format!("need 1 <= s <= N, got s = {s}, N = {}", u.len())));
    }
    let hu = build_hankel(u, s)?;
    let hy = build_hankel(y, s)?;
    let n_samples = u.len();
    let mut data = linalg::vstack(&[&hu.data, &hy.data]);
    if normalize {
        data /= (n_samples as f64).sqrt();
    }
    let (p, m) = (u.dim(), y.dim());
    Ok(HankelDataMatrix {
        width_sufficient: data.ncols() >= s * (p + m),
        data,
        s,
        n_samples,
        p,
        m,
        normalized: normalize,
    })
}

/// `U = [U1, U2]` split at `gamma`, with the full singular value list.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceDecomposition {
    pub u1: DMatrix<f64>,
    pub u2: DMatrix<f64>,
    /// Descending, length `s(p+m)` (zero padded when T is wide-short).
    pub sigma: Vec<f64>,
    pub gamma: usize,
}

pub fn svd_split(t: &HankelDataMatrix, gamma: usize) -> Result<SubspaceDecomposition> {
    split_matrix(&t.data, gamma)
}

pub fn split_matrix(t: &DMatrix<f64>, gamma: usize) -> Result<SubspaceDecomposition> {
    let rows = t.nrows();
    if gamma == 0 || gamma >= rows {
        return Err(Error::Parameter(format!("gamma = {gamma} outside (0, {rows})")));
    }
    let (u, mut sigma) = linalg::full_left_svd(t);
    sigma.resize(rows, 0.0);
    Ok(SubspaceDecomposition {
        u1: u.columns(0, gamma).into_owned(),
        u2: u.columns(gamma, rows - gamma).into_owned(),
        sigma,
        gamma,
    })
}

/// Symmetric idempotent matrix `P = U U^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    pub p: DMatrix<f64>,
}

impl Projector {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.p * x
    }

    /// `I - P`.
    pub fn complement(&self) -> Projector {
        let n = self.p.nrows();
        Projector { p: DMatrix::identity(n, n) - &self.p }
    }

    pub fn idempotency_defect(&self) -> f64 {
        (&self.p * &self.p - &self.p).amax()
    }
}

pub fn projector_from_basis(u: &DMatrix<f64>) -> Result<Projector> {
    let defect = linalg::orthonormality_defect(u);
    if defect > 1e-10 {
        return Err(Error::Basis(format!("basis is not orthonormal (defect {defect:.3e})")));
    }
    Ok(Projector { p: u * u.transpose() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gap {
    /// `‖(I - U U^T) V‖₂` when dimensions agree, otherwise 1.
    pub gap: f64,
    /// `‖(I - U U^T) V‖₂` regardless of dimensions.
    pub directed: f64,
    pub equal_dims: bool,
}

pub fn gap_metric(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<Gap> {
    if u.nrows() != v.nrows() {
        return Err(Error::Shape(format!("ambient dimensions differ: {} vs {}", u.nrows(), v.nrows())));
    }
    let residual = v - u * (u.transpose() * v);
    let directed = if v.ncols() == 0 { 0.0 } else { linalg::spectral_norm(&residual).min(1.0) };
    let equal_dims = u.ncols() == v.ncols();
    Ok(Gap { gap: if equal_dims { directed } else { 1.0 }, directed, equal_dims })
}

/// `‖P_U - P_V‖₂` straight from projectors.
pub fn projector_gap(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    linalg::basis_gap(u, v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalLemmaReport {
    pub rank_t: usize,
    pub gap: Gap,
    /// `‖T g* - w‖ / ‖w‖` for each supplied window.
    pub member_residuals: Vec<f64>,
}

impl FundamentalLemmaReport {
    pub fn max_member_residual(&self) -> f64 {
        self.member_residuals.iter().cloned().fold(0.0, f64::max)
    }
}

/// Compares `Im(T)` with the model image and tests window membership by least squares.
pub fn fundamental_lemma_check(
    t: &HankelDataMatrix,
    model: &StateSpaceModel,
    f: &DMatrix<f64>,
    rel_tol: f64,
    windows: &[DVector<f64>],
) -> Result<FundamentalLemmaReport> {
    let img = image_rep(model, f, t.s)?.stacked();
    if img.nrows() != t.rows() {
        return Err(Error::Shape("data matrix and model windows differ in size".into()));
    }
    let qt = linalg::column_space(&t.data, rel_tol);
    let qi = linalg::column_space(&img, rel_tol);
    let gap = gap_metric(&qt, &qi)?;
    let mut member_residuals = Vec::with_capacity(windows.len());
    for w in windows {
        if w.len() != t.rows() {
            return Err(Error::Shape(format!("window has length {}, expected {}", w.len(), t.rows())));
        }
        let fit = &qt * (qt.transpose() * w);
        let denom = w.norm();
        member_residuals.push(if denom == 0.0 { 0.0 } else { (w - fit).norm() / denom });
    }
    Ok(FundamentalLemmaReport { rank_t: qt.ncols(), gap, member_residuals })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DavisKahanReport {
    pub bound: f64,
    pub gap_measured: f64,
    pub lambda_gamma: f64,
    pub s2_norm: f64,
    pub gamma: usize,
    pub s1: DMatrix<f64>,
    pub s2: DMatrix<f64>,
}

impl DavisKahanReport {
    /// `None` when the bound is vacuous (>= 1).
    pub fn holds(&self) -> Option<bool> {
        (self.bound < 1.0).then_some(self.gap_measured <= self.bound)
    }
}

/// Oracle perturbation bound from latent Hankels of depth `s+n` that start
/// `n` samples before the data window. Normalization uses their column count.
pub fn davis_kahan_oracle_bound(
    model: &StateSpaceModel,
    f: &DMatrix<f64>,
    l: &DMatrix<f64>,
    latent_v: &HankelMatrix,
    latent_r: &HankelMatrix,
) -> Result<DavisKahanReport> {
    let n = model.n();
    if latent_v.depth != latent_r.depth || latent_v.depth <= n {
        return Err(Error::Shape("latent Hankels need equal depth s + n with s >= 1".into()));
    }
    if latent_v.ncols() != latent_r.ncols() {
        return Err(Error::Shape("latent Hankels differ in width".into()));
    }
    let s = latent_v.depth - n;
    let ig = image_rep(model, f, s)?.stacked();
    let ic = controller_image_rep(model, f, l, s)?.stacked();
    if ig.ncols() != latent_v.data.nrows() || ic.ncols() != latent_r.data.nrows() {
        return Err(Error::Shape("latent Hankel block sizes do not match (p, m)".into()));
    }
    let norm = latent_v.ncols() as f64;
    let hv = &latent_v.data;
    let hr = &latent_r.data;
    let sigma_v = hv * hv.transpose() / norm;
    let sigma_vr = hv * hr.transpose() / norm;
    let sigma_r = hr * hr.transpose() / norm;
    let s1 = &ig * sigma_v * ig.transpose();
    let cross = &ig * sigma_vr * ic.transpose();
    let s2 = &cross + cross.transpose() + &ic * sigma_r * ic.transpose();
    let gamma = s * model.p() + n;
    let (l1, _) = linalg::sym_eigen_desc(&s1);
    let lambda_gamma = l1[gamma - 1];
    if lambda_gamma <= 1e-14 * l1[0].max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate(format!("lambda_gamma(S1) = {lambda_gamma:.3e}")));
    }
    let (_, vecs) = linalg::sym_eigen_desc(&(&s1 + &s2));
    let u1 = vecs.columns(0, gamma).into_owned();
    let basis = linalg::column_space(&ig, 1e-10);
    let gap_measured = projector_gap(&basis, &u1);
    let s2_norm = linalg::spectral_norm(&s2);
    Ok(DavisKahanReport { bound: s2_norm / lambda_gamma, gap_measured, lambda_gamma, s2_norm, gamma, s1, s2 })
}

/// `sigma_{gamma+1}^2 / sigma_gamma^2` (1-based gamma).
pub fn empirical_bound(sigma: &[f64], gamma: usize) -> Result<f64> {
    if gamma == 0 || gamma + 1 > sigma.len() {
        return Err(Error::Parameter(format!("gamma = {gamma} needs 1 <= gamma < {}", sigma.len())));
    }
    let sg = sigma[gamma - 1];
    if sg == 0.0 {
        return Err(Error::Degenerate("sigma_gamma is zero".into()));
    }
    Ok((sigma[gamma] / sg).powi(2))
}

/// Order estimate from the spectral gap: the largest `i` in `[sp, sp + sm - 1]`
/// with `sigma_i / sigma_{i+1} > gap_factor` gives `n = i - sp`. Values below
/// `1e-12 * sigma_1` count as zero.
pub fn estimate_order(sigma: &[f64], s: usize, p: usize, m: usize, gap_factor: f64) -> Option<usize> {
    let top = sigma.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return None;
    }
    let floor = 1e-12 * top;
    let clean = |i: usize| sigma.get(i - 1).map_or(0.0, |&v| if v < floor { 0.0 } else { v });
    let lo = (s * p).max(1);
    let hi = s * p + s * m - 1;
    (lo..=hi).rev().find(|&i| {
        let (a, b) = (clean(i), clean(i + 1));
        a > 0.0 && (b == 0.0 || a / b > gap_factor)
    })
    .map(|i| i - s * p)
}

/// Best rank-`gamma` approximation `U1 Σ1 V1^T`.
pub fn rank_truncation(t: &DMatrix<f64>, gamma: usize) -> DMatrix<f64> {
    let svd = t.clone().svd(true, true);
    let u = svd.u.expect("U requested");
    let vt = svd.v_t.expect("V^T requested");
    let k = gamma.min(svd.singular_values.len());
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut out = DMatrix::zeros(t.nrows(), t.ncols());
    for &i in order.iter().take(k) {
        out += svd.singular_values[i] * u.column(i) * vt.row(i);
    }
    out
}

/// `min_Q ‖target - U1 Q‖₂`, attained at `Q = U1^T target`.
pub fn model_matching_residual(u1: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    linalg::spectral_norm(&(target - u1 * (u1.transpose() * target)))
}

/// Numerical rank of a data matrix at the given tolerance.
pub fn data_rank(t: &HankelDataMatrix, rel_tol: f64) -> Result<usize> {
    numerical_rank(&t.data, rel_tol)
}
