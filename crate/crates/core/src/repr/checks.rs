//! Numerical certificates for the representation identities.

use nalgebra::DMatrix;

use super::{
    controller_base, controller_image_rep, image_rep, io_image, kernel_rep, psi_stack, KernelRep,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::ltisim::{toeplitz_markov, StateSpaceModel};
use crate::sigkit::{numerical_rank, DEFAULT_RANK_TOL};

/// `‖lhs - rhs‖_F / max(‖lhs‖_F, ‖rhs‖_F, 1)`.
pub(crate) fn relative_residual(lhs: &DMatrix<f64>, rhs: &DMatrix<f64>) -> f64 {
    (lhs - rhs).norm() / lhs.norm().max(rhs.norm()).max(1.0)
}

/// Relative residuals of `M_{1,s} = M_{2,s} V` and `N_{1,s} = N_{2,s} V`.
pub fn lemma_v_residual(
    model: &StateSpaceModel,
    f1: &DMatrix<f64>,
    f2: &DMatrix<f64>,
    s: usize,
) -> Result<(f64, f64)> {
    let one = image_rep(model, f1, s)?;
    let two = image_rep(model, f2, s)?;
    let v = super::param_v(model, f1, f2, s)?;
    Ok((
        relative_residual(&one.m_s, &(&two.m_s * &v)),
        relative_residual(&one.n_s, &(&two.n_s * &v)),
    ))
}

/// Relative residual of `[Ŷ_1; X̂_1] = [M_2, Ŷ_2; N_2, X̂_2] [R̄; R]`.
pub fn controller_param_residual(
    model: &StateSpaceModel,
    f1: &DMatrix<f64>,
    l1: &DMatrix<f64>,
    f2: &DMatrix<f64>,
    l2: &DMatrix<f64>,
    s: usize,
) -> Result<f64> {
    let lhs = controller_image_rep(model, f1, l1, s)?.stacked();
    let img2 = image_rep(model, f2, s)?.stacked();
    let ctl2 = controller_image_rep(model, f2, l2, s)?.stacked();
    let (r, r_bar) = super::param_r_rbar(model, f1, l1, f2, l2, s)?;
    let rhs = linalg::hstack(&[&img2, &ctl2]) * linalg::vstack(&[&r_bar, &r]);
    Ok(relative_residual(&lhs, &rhs))
}

/// Relative residual of `Ψ_s = Ψ_{s,0} [[V, R̄], [0, R]]`.
pub fn factorization_residual(model: &StateSpaceModel, f: &DMatrix<f64>, l: &DMatrix<f64>, s: usize) -> Result<f64> {
    let psi = psi_stack(model, f, l, s)?;
    Ok(relative_residual(&psi.psi, &(&psi.psi0 * psi.params.parameterizer())))
}

/// Gap between the row spaces of `K_{G,s}` and `[-P_s T_{s,s}(G), P_s]`.
pub fn parity_equivalence_gap(model: &StateSpaceModel, s: usize, parity: &DMatrix<f64>) -> Result<f64> {
    let kernel = kernel_rep(model, s)?;
    let sm = s * model.m();
    if parity.ncols() != sm {
        return Err(Error::Shape(format!("parity matrix has {} columns, expected {sm}", parity.ncols())));
    }
    let tss = toeplitz_markov(model, s);
    let via_parity = parity * linalg::hstack(&[&(-&tss), &DMatrix::identity(sm, sm)]);
    let a = linalg::column_space(&kernel.k_gs.transpose(), DEFAULT_RANK_TOL);
    let b = linalg::column_space(&via_parity.transpose(), DEFAULT_RANK_TOL);
    if a.ncols() != b.ncols() {
        return Ok(1.0);
    }
    Ok(linalg::basis_gap(&a, &b))
}

/// `rank([I_G, I_C]) < rank(I_G) + rank(I_C)`.
pub fn intersection_nontrivial(model: &StateSpaceModel, s: usize) -> Result<bool> {
    let ig = io_image(model, s)?;
    let ic = controller_base(model, s);
    let joint = numerical_rank(&linalg::hstack(&[&ig, &ic]), DEFAULT_RANK_TOL)?;
    Ok(joint < numerical_rank(&ig, DEFAULT_RANK_TOL)? + numerical_rank(&ic, DEFAULT_RANK_TOL)?)
}

/// `rank(R K_{G,s} I_{C,s})` for a residual parameterization `R`.
pub fn residual_generator_rank(model: &StateSpaceModel, kernel: &KernelRep, r: &DMatrix<f64>) -> Result<usize> {
    if r.ncols() != kernel.theta() {
        return Err(Error::Shape(format!("R has {} columns, expected {}", r.ncols(), kernel.theta())));
    }
    numerical_rank(&(r * &kernel.k_gs * controller_base(model, kernel.s)), DEFAULT_RANK_TOL)
}
