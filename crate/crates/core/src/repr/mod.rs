//! Model-based finite-sample image, controller-image and kernel representations.
//!
//! Block-Toeplitz conventions: an `s`-row representation acting on a latent
//! window of length `s + n` anchored at `k - n` has block `(i, j)` equal to
//! the sequence value at offset `n + i - j`.

mod checks;

pub use checks::{
    controller_param_residual, factorization_residual, intersection_nontrivial,
    lemma_v_residual, parity_equivalence_gap, residual_generator_rank,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::ltisim::{observability_matrix, toeplitz_markov, StateSpaceModel};
use crate::sigkit::{numerical_rank, BlockToeplitzSpec, DEFAULT_RANK_TOL};

/// `(M_s, N_s)`: `[u_s(k); y_s(k)] = [M_s; N_s] v_{s+n}(k-n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRep {
    pub m_s: DMatrix<f64>,
    pub n_s: DMatrix<f64>,
    pub s: usize,
    pub f: DMatrix<f64>,
}

impl ImageRep {
    pub fn stacked(&self) -> DMatrix<f64> {
        linalg::vstack(&[&self.m_s, &self.n_s])
    }
}

/// `(Ŷ_s, X̂_s)`: response of `[u_s; y_s]` to the residual window `r_{s+n}(k-n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerImageRep {
    pub y_hat: DMatrix<f64>,
    pub x_hat: DMatrix<f64>,
    pub s: usize,
    pub f: DMatrix<f64>,
    pub l: DMatrix<f64>,
}

impl ControllerImageRep {
    pub fn stacked(&self) -> DMatrix<f64> {
        linalg::vstack(&[&self.y_hat, &self.x_hat])
    }
}

/// Triangular parameterization blocks `V`, `R` and `R̄`, each `T_{s+n,s+n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMatrices {
    pub v: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub r_bar: DMatrix<f64>,
}

impl ParamMatrices {
    /// `[[V, R̄], [0, R]]`.
    pub fn parameterizer(&self) -> DMatrix<f64> {
        let zero = DMatrix::zeros(self.r.nrows(), self.v.ncols());
        let top = linalg::hstack(&[&self.v, &self.r_bar]);
        let bot = linalg::hstack(&[&zero, &self.r]);
        linalg::vstack(&[&top, &bot])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiStack {
    /// `Ψ_s = [[M_s, Ŷ_s], [N_s, X̂_s]]` for the given gains.
    pub psi: DMatrix<f64>,
    /// `Ψ_{s,0} = [I_{G0}, I_{C0}]`.
    pub psi0: DMatrix<f64>,
    /// `Ψ̄_{s,0} = [[M_{s,0}, 0], [N_{s,0}, I]]`.
    pub psi_bar0: DMatrix<f64>,
    pub params: ParamMatrices,
    pub s: usize,
}

/// `K_{G,s} = K_2 [-T_{s,s}(G), I]` with orthonormal rows in `K_2`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRep {
    pub k_gs: DMatrix<f64>,
    pub k2: DMatrix<f64>,
    pub s: usize,
}

impl KernelRep {
    pub fn theta(&self) -> usize {
        self.k_gs.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankProfile {
    pub rank_igs: usize,
    pub beta: usize,
    pub gamma: usize,
    pub theta: usize,
    pub dim_residual: usize,
    /// `rank(I_{G,s}) < s(p+m)`: a nontrivial residual subspace exists.
    pub has_residual_subspace: bool,
}

fn check_f(model: &StateSpaceModel, f: &DMatrix<f64>) -> Result<()> {
    if f.shape() != (model.p(), model.n()) {
        return Err(Error::Shape(format!("F is {:?}, expected {:?}", f.shape(), (model.p(), model.n()))));
    }
    Ok(())
}

fn check_l(model: &StateSpaceModel, l: &DMatrix<f64>) -> Result<()> {
    if l.shape() != (model.n(), model.m()) {
        return Err(Error::Shape(format!("L is {:?}, expected {:?}", l.shape(), (model.n(), model.m()))));
    }
    Ok(())
}

fn check_s(s: usize) -> Result<()> {
    if s == 0 {
        return Err(Error::Parameter("window length s must be at least 1".into()));
    }
    Ok(())
}

/// Block Toeplitz with `first` at offset 0 and `tail(k)` for k >= 1.
fn toeplitz_seq(
    rows: usize,
    cols: usize,
    base: i64,
    shape: (usize, usize),
    first: &DMatrix<f64>,
    mut tail: impl FnMut(usize) -> DMatrix<f64>,
) -> DMatrix<f64> {
    BlockToeplitzSpec::new(rows, cols, base)
        .realize(|k| match k {
            k if k < 0 => DMatrix::zeros(shape.0, shape.1),
            0 => first.clone(),
            k => tail(k as usize),
        })
        .expect("sequence blocks share one shape")
}

/// `F A_F^(k-1) B`-type tails share this power table.
fn closed_loop_powers(model: &StateSpaceModel, f: &DMatrix<f64>, count: usize) -> Vec<DMatrix<f64>> {
    linalg::powers(&(&model.a + &model.b * f), count)
}

pub fn image_rep(model: &StateSpaceModel, f: &DMatrix<f64>, s: usize) -> Result<ImageRep> {
    check_s(s)?;
    check_f(model, f)?;
    let (n, p, m) = (model.n(), model.p(), model.m());
    let pw = closed_loop_powers(model, f, s + n);
    let cf = &model.c + &model.d * f;
    let m_s = toeplitz_seq(s, s + n, n as i64, (p, p), &DMatrix::identity(p, p), |k| f * &pw[k - 1] * &model.b);
    let n_s = toeplitz_seq(s, s + n, n as i64, (m, p), &model.d, |k| &cf * &pw[k - 1] * &model.b);
    Ok(ImageRep { m_s, n_s, s, f: f.clone() })
}

/// `I_{G,s} = [[0, I], [O_s C_n, T_{s,s}(G)]]`, the image at `F = 0`.
pub fn io_image(model: &StateSpaceModel, s: usize) -> Result<DMatrix<f64>> {
    Ok(image_rep(model, &DMatrix::zeros(model.p(), model.n()), s)?.stacked())
}

/// `I_{C0} = [[0, 0], [0, I_{sm}]]`, of size `s(p+m) x (s+n)m`.
pub fn controller_base(model: &StateSpaceModel, s: usize) -> DMatrix<f64> {
    let (n, p, m) = (model.n(), model.p(), model.m());
    let mut out = DMatrix::zeros(s * (p + m), (s + n) * m);
    out.view_mut((s * p, n * m), (s * m, s * m)).fill_with_identity();
    out
}

/// Closed-form controller image for arbitrary `(F, L)`:
/// `Ŷ_k = F A_F^(k-1) L`, `X̂_0 = I`, `X̂_k = C_F A_F^(k-1) L`.
pub fn controller_image_rep(
    model: &StateSpaceModel,
    f: &DMatrix<f64>,
    l: &DMatrix<f64>,
    s: usize,
) -> Result<ControllerImageRep> {
    check_s(s)?;
    check_f(model, f)?;
    check_l(model, l)?;
    let (n, p, m) = (model.n(), model.p(), model.m());
    let pw = closed_loop_powers(model, f, s + n);
    let cf = &model.c + &model.d * f;
    let y_hat = toeplitz_seq(s, s + n, n as i64, (p, m), &DMatrix::zeros(p, m), |k| f * &pw[k - 1] * l);
    let x_hat = toeplitz_seq(s, s + n, n as i64, (m, m), &DMatrix::identity(m, m), |k| &cf * &pw[k - 1] * l);
    Ok(ControllerImageRep { y_hat, x_hat, s, f: f.clone(), l: l.clone() })
}

/// Controller image through the base-gain factorization
/// `[Ŷ; X̂] = [M_0, Ŷ_0; N_0, X̂_0] [R̄; R]`.
pub fn controller_image_rep_factored(
    model: &StateSpaceModel,
    f: &DMatrix<f64>,
    l: &DMatrix<f64>,
    s: usize,
) -> Result<ControllerImageRep> {
    check_s(s)?;
    check_f(model, f)?;
    check_l(model, l)?;
    let (p, n, m) = (model.p(), model.n(), model.m());
    let (r, r_bar) = param_r_rbar(model, f, l, &DMatrix::zeros(p, n), &DMatrix::zeros(n, m), s)?;
    let base = linalg::hstack(&[&io_image(model, s)?, &controller_base(model, s)]);
    let stacked = base * linalg::vstack(&[&r_bar, &r]);
    Ok(ControllerImageRep {
        y_hat: stacked.rows(0, s * p).into_owned(),
        x_hat: stacked.rows(s * p, s * m).into_owned(),
        s,
        f: f.clone(),
        l: l.clone(),
    })
}

/// `V_{s+n}`: `V_0 = I`, `V_k = (F1 - F2) A_{F1}^(k-1) B`.
pub fn param_v(model: &StateSpaceModel, f1: &DMatrix<f64>, f2: &DMatrix<f64>, s: usize) -> Result<DMatrix<f64>> {
    check_s(s)?;
    check_f(model, f1)?;
    check_f(model, f2)?;
    let (n, p) = (model.n(), model.p());
    let pw = closed_loop_powers(model, f1, s + n);
    let df = f1 - f2;
    Ok(toeplitz_seq(s + n, s + n, 0, (p, p), &DMatrix::identity(p, p), |k| &df * &pw[k - 1] * &model.b))
}

/// `(R_{s+n}, R̄_{s+n})` relating the controller images of `(F1, L1)` and `(F2, L2)`.
pub fn param_r_rbar(
    model: &StateSpaceModel,
    f1: &DMatrix<f64>,
    l1: &DMatrix<f64>,
    f2: &DMatrix<f64>,
    l2: &DMatrix<f64>,
    s: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_s(s)?;
    for f in [f1, f2] {
        check_f(model, f)?;
    }
    for l in [l1, l2] {
        check_l(model, l)?;
    }
    let (n, p, m) = (model.n(), model.p(), model.m());
    let pf1 = closed_loop_powers(model, f1, s + n);
    let pl2 = linalg::powers(&(&model.a - l2 * &model.c), s + n);
    let dl = l1 - l2;
    let df = f1 - f2;
    let r = toeplitz_seq(s + n, s + n, 0, (m, m), &DMatrix::identity(m, m), |k| &model.c * &pl2[k - 1] * &dl);
    let r_bar = toeplitz_seq(s + n, s + n, 0, (p, m), &DMatrix::zeros(p, m), |k| {
        &df * &pf1[k - 1] * l1 + f2 * &pl2[k - 1] * &dl
    });
    Ok((r, r_bar))
}

/// Parameterization of `(F, L)` relative to the zero base gains.
pub fn param_matrices(model: &StateSpaceModel, f: &DMatrix<f64>, l: &DMatrix<f64>, s: usize) -> Result<ParamMatrices> {
    let zf = DMatrix::zeros(model.p(), model.n());
    let zl = DMatrix::zeros(model.n(), model.m());
    let v = param_v(model, f, &zf, s)?;
    let (r, r_bar) = param_r_rbar(model, f, l, &zf, &zl, s)?;
    Ok(ParamMatrices { v, r, r_bar })
}

pub fn psi_stack(model: &StateSpaceModel, f: &DMatrix<f64>, l: &DMatrix<f64>, s: usize) -> Result<PsiStack> {
    let (n, p, m) = (model.n(), model.p(), model.m());
    let img = image_rep(model, f, s)?;
    let ctl = controller_image_rep(model, f, l, s)?;
    let psi = linalg::hstack(&[&img.stacked(), &ctl.stacked()]);
    let ig0 = io_image(model, s)?;
    let psi0 = linalg::hstack(&[&ig0, &controller_base(model, s)]);
    let mut lower = DMatrix::zeros(s * (p + m), s * m);
    lower.view_mut((s * p, 0), (s * m, s * m)).fill_with_identity();
    let psi_bar0 = linalg::hstack(&[&ig0, &lower]);
    let params = param_matrices(model, f, l, s)?;
    let full = s * (p + m);
    for (name, mat) in [("Psi_s", &psi), ("Psi_s0", &psi0), ("Psi_bar_s0", &psi_bar0)] {
        let r = numerical_rank(mat, DEFAULT_RANK_TOL)?;
        if r != full {
            return Err(Error::Construction(format!("rank({name}) = {r}, expected {full}")));
        }
    }
    debug_assert_eq!(psi.ncols(), (s + n) * (p + m));
    Ok(PsiStack { psi, psi0, psi_bar0, params, s })
}

pub fn kernel_rep(model: &StateSpaceModel, s: usize) -> Result<KernelRep> {
    check_s(s)?;
    let (n, m) = (model.n(), model.m());
    let os = observability_matrix(model, s);
    let beta = numerical_rank(&os, DEFAULT_RANK_TOL)?;
    if beta < n || s * m <= n {
        return Err(Error::EmptyKernel(format!(
            "s = {s} gives rank(O_s) = {beta} with sm = {}; need rank n = {n} and sm > n",
            s * m
        )));
    }
    let k2 = linalg::left_null_space(&os, DEFAULT_RANK_TOL);
    let theta = s * m - n;
    let tss = toeplitz_markov(model, s);
    let k_gs = &k2 * linalg::hstack(&[&(-&tss), &DMatrix::identity(s * m, s * m)]);

    let scale = linalg::spectral_norm(&k2) * linalg::spectral_norm(&os);
    if (&k2 * &os).amax() > 1e-10 * scale.max(1.0) {
        return Err(Error::Construction("K2 does not annihilate O_s".into()));
    }
    for (name, mat) in [
        ("K2", k2.clone()),
        ("K_Gs", k_gs.clone()),
        ("K_Gs I_C", &k_gs * controller_base(model, s)),
    ] {
        let r = numerical_rank(&mat, DEFAULT_RANK_TOL)?;
        if r != theta {
            return Err(Error::Construction(format!("rank({name}) = {r}, expected {theta}")));
        }
    }
    Ok(KernelRep { k_gs, k2, s })
}

pub fn rank_profile(model: &StateSpaceModel, s: usize) -> Result<RankProfile> {
    check_s(s)?;
    let (p, m) = (model.p(), model.m());
    let beta = numerical_rank(&observability_matrix(model, s), DEFAULT_RANK_TOL)?;
    let rank_igs = numerical_rank(&io_image(model, s)?, DEFAULT_RANK_TOL)?;
    let full = s * (p + m);
    Ok(RankProfile {
        rank_igs,
        beta,
        gamma: s * p + beta,
        theta: s * m - beta,
        dim_residual: full - rank_igs,
        has_residual_subspace: rank_igs < full,
    })
}
