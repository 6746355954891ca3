//! Model-based parity space and data-driven least-squares output residuals.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::ltisim::{observability_matrix, toeplitz_markov, StateSpaceModel, Trajectory};
use crate::sigkit::{build_hankel, numerical_rank, stack_window, DEFAULT_RANK_TOL};

/// `r(k) = P_s (y_s(k) - T_{s,s}(G) u_s(k))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParityGenerator {
    pub parity: DMatrix<f64>,
    pub tss: DMatrix<f64>,
    pub s: usize,
}

impl ParityGenerator {
    /// Equivalent kernel form `[-P T, P]` acting on `[u_s; y_s]`.
    pub fn kernel_form(&self) -> DMatrix<f64> {
        let sm = self.parity.ncols();
        &self.parity * linalg::hstack(&[&(-&self.tss), &DMatrix::identity(sm, sm)])
    }

    pub fn residual(&self, u_s: &DVector<f64>, y_s: &DVector<f64>) -> Result<DVector<f64>> {
        if u_s.len() != self.tss.ncols() || y_s.len() != self.tss.nrows() {
            return Err(Error::Shape("window sizes do not match the parity generator".into()));
        }
        Ok(&self.parity * (y_s - &self.tss * u_s))
    }

    /// Residual sequence over all windows of a trajectory (columns).
    pub fn residuals(&self, traj: &Trajectory) -> Result<DMatrix<f64>> {
        sliding(traj, self.s, |k| {
            let u = stack_window(&traj.u, self.s, k)?.entries;
            let y = stack_window(&traj.y, self.s, k)?.entries;
            self.residual(&u, &y)
        })
    }
}

fn sliding(traj: &Trajectory, depth: usize, mut f: impl FnMut(i64) -> Result<DVector<f64>>) -> Result<DMatrix<f64>> {
    if traj.len() < depth {
        return Err(Error::Size(format!("trajectory shorter than window {depth}")));
    }
    let count = traj.len() - depth + 1;
    let cols: Vec<DVector<f64>> = (0..count).map(|j| f(traj.u.start() + j as i64)).collect::<Result<_>>()?;
    Ok(DMatrix::from_columns(&cols))
}

/// Parity residual generator. Without an explicit matrix, `P_s` is taken from
/// the unit eigenvectors of `I - O_s (O_s^T O_s)^{-1} O_s^T`.
pub fn baseline_parity(model: &StateSpaceModel, s: usize, parity: Option<&DMatrix<f64>>) -> Result<ParityGenerator> {
    let os = observability_matrix(model, s);
    let sm = os.nrows();
    let beta = numerical_rank(&os, DEFAULT_RANK_TOL)?;
    if sm <= beta {
        return Err(Error::EmptyKernel(format!("parity space is empty for s = {s}")));
    }
    let parity = match parity {
        Some(p) => {
            if p.ncols() != sm {
                return Err(Error::Shape(format!("parity matrix has {} columns, expected {sm}", p.ncols())));
            }
            p.clone()
        }
        None => {
            if beta < model.n() {
                return Err(Error::EmptyKernel("O_s is rank deficient".into()));
            }
            let gram = os.transpose() * &os;
            let inv = gram
                .cholesky()
                .ok_or_else(|| Error::Conditioning("O_s^T O_s is not positive definite".into()))?
                .inverse();
            let proj = DMatrix::identity(sm, sm) - &os * inv * os.transpose();
            let (vals, vecs) = linalg::sym_eigen_desc(&proj);
            let keep = vals.iter().filter(|&&v| v > 0.5).count();
            vecs.columns(0, keep).transpose()
        }
    };
    let scale = linalg::spectral_norm(&parity) * linalg::spectral_norm(&os);
    if (&parity * &os).amax() > 1e-8 * scale.max(1.0) {
        return Err(Error::Parameter("parity matrix does not annihilate O_s".into()));
    }
    if numerical_rank(&parity, DEFAULT_RANK_TOL)? != parity.nrows() {
        return Err(Error::Parameter("parity matrix is not full row rank".into()));
    }
    Ok(ParityGenerator { parity, tss: toeplitz_markov(model, s), s })
}

/// `r_{y,s}(k) = y_s(k) - Φ_s [u_ρ(k-ρ); y_ρ(k-ρ); u_s(k)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LsOutputGenerator {
    pub phi: DMatrix<f64>,
    pub s: usize,
    pub rho: usize,
    pub p: usize,
    pub m: usize,
    pub ridge: f64,
}

/// Relative ridge: `λ = (ridge * σ_max(Z))²`.
pub const LS_RIDGE: f64 = 1e-10;

/// Regressor `Z` and target `Y` from all windows of depth `ρ + s`.
pub(crate) fn ls_regression_data(traj: &Trajectory, s: usize, rho: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (p, m) = (traj.u.dim(), traj.y.dim());
    let hu = build_hankel(&traj.u, rho + s)?.data;
    let hy = build_hankel(&traj.y, rho + s)?.data;
    let z = linalg::vstack(&[
        &hu.rows(0, rho * p).into_owned(),
        &hy.rows(0, rho * m).into_owned(),
        &hu.rows(rho * p, s * p).into_owned(),
    ]);
    Ok((z, hy.rows(rho * m, s * m).into_owned()))
}

pub fn baseline_ls_output(train: &Trajectory, s: usize, rho: usize, n: usize) -> Result<LsOutputGenerator> {
    let (p, m) = (train.u.dim(), train.y.dim());
    if s == 0 || rho <= n {
        return Err(Error::Parameter(format!("need s >= 1 and rho > n, got s = {s}, rho = {rho}, n = {n}")));
    }
    let dim = rho * (p + m) + s * p;
    if train.len() < rho + s || train.len() - rho - s + 1 < dim {
        return Err(Error::Data(format!("need at least {dim} regression columns")));
    }
    let (z, y) = ls_regression_data(train, s, rho)?;
    let smax = linalg::spectral_norm(&z);
    if smax == 0.0 {
        return Err(Error::Conditioning("regressor is identically zero".into()));
    }
    let lambda_sqrt = LS_RIDGE * smax;
    // [Zᵀ; √λ I] Φᵀ = [Yᵀ; 0] by QR
    let cols = z.ncols();
    let mut a = DMatrix::zeros(cols + dim, dim);
    a.view_mut((0, 0), (cols, dim)).copy_from(&z.transpose());
    a.view_mut((cols, 0), (dim, dim)).fill_diagonal(lambda_sqrt);
    let mut b = DMatrix::zeros(cols + dim, s * m);
    b.view_mut((0, 0), (cols, s * m)).copy_from(&y.transpose());
    let qr = a.qr();
    let qtb = qr.q().transpose() * b;
    let r = qr.r();
    let phi_t = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::Conditioning("triangular factor is singular".into()))?;
    Ok(LsOutputGenerator { phi: phi_t.transpose(), s, rho, p, m, ridge: lambda_sqrt * lambda_sqrt })
}

impl LsOutputGenerator {
    /// Residuals for every window of depth `ρ + s` (columns).
    pub fn residuals(&self, traj: &Trajectory) -> Result<DMatrix<f64>> {
        if traj.u.dim() != self.p || traj.y.dim() != self.m {
            return Err(Error::Shape("trajectory dimensions do not match the generator".into()));
        }
        let (z, y) = ls_regression_data(traj, self.s, self.rho)?;
        Ok(y - &self.phi * z)
    }

    pub fn residual_dim(&self) -> usize {
        self.s * self.m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DimensionComparison {
    /// Projection residual on windows of length `s + ρ`: `(s+ρ)m - n`.
    pub projection_dim: usize,
    /// LS output residual: `sm`.
    pub ls_dim: usize,
}

pub fn dimension_comparison(s: usize, rho: usize, n: usize, m: usize) -> DimensionComparison {
    DimensionComparison { projection_dim: (s + rho) * m - n, ls_dim: s * m }
}
