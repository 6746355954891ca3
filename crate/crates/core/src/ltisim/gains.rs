use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{controllability_matrix, is_schur, NoiseModel, StateSpaceModel};
use crate::error::{Error, Result};
use crate::linalg;
use crate::sigkit::{numerical_rank, DEFAULT_RANK_TOL};

const DEADBEAT_SEED: u64 = 0x00de_adbe_a700;
const DEADBEAT_TRIES: usize = 16;

/// State feedback and observer gain with closed-loop stability checked.
#[derive(Debug, Clone, PartialEq)]
pub struct GainPair {
    pub f: DMatrix<f64>,
    pub l: DMatrix<f64>,
}

impl GainPair {
    pub fn new(model: &StateSpaceModel, f: DMatrix<f64>, l: DMatrix<f64>) -> Result<Self> {
        if f.shape() != (model.p(), model.n()) {
            return Err(Error::Shape(format!("F is {:?}, expected {:?}", f.shape(), (model.p(), model.n()))));
        }
        if l.shape() != (model.n(), model.m()) {
            return Err(Error::Shape(format!("L is {:?}, expected {:?}", l.shape(), (model.n(), model.m()))));
        }
        if !is_schur(&(&model.a + &model.b * &f)) {
            return Err(Error::Parameter("A + BF is not Schur".into()));
        }
        if !is_schur(&(&model.a - &l * &model.c)) {
            return Err(Error::Parameter("A - LC is not Schur".into()));
        }
        Ok(Self { f, l })
    }

    /// Deadbeat feedback and deadbeat observer.
    pub fn deadbeat(model: &StateSpaceModel) -> Result<Self> {
        Self::new(model, deadbeat_gain(model)?, observer_gain_deadbeat(model)?)
    }
}

/// `‖M^n‖₂ / (1 + ‖A‖₂)^n`; deadbeat gains are accepted below 1e-8.
pub fn nilpotency_certificate(a: &DMatrix<f64>, closed: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let pw = linalg::powers(closed, n + 1);
    linalg::spectral_norm(&pw[n]) / (1.0 + linalg::spectral_norm(a)).powi(n as i32)
}

/// Ackermann row `f` placing the eigenvalues of `A + b f` at the roots of
/// the monic polynomial with the given low-to-high coefficients.
fn ackermann(a: &DMatrix<f64>, b: &DVector<f64>, coeffs: &[f64]) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut ctrb = DMatrix::zeros(n, n);
    let mut col = b.clone();
    for i in 0..n {
        ctrb.set_column(i, &col);
        col = a * col;
    }
    let inv = ctrb.clone().try_inverse()?;
    if !inv.iter().all(|v| v.is_finite()) {
        return None;
    }
    let pw = linalg::powers(a, n + 1);
    let mut phi = pw[n].clone();
    for (k, c) in coeffs.iter().enumerate() {
        phi += &pw[k] * *c;
    }
    let last = DMatrix::from_iterator(1, n, inv.row(n - 1).iter().copied());
    Some(-(last * phi))
}

/// Monic polynomial coefficients (low to high, leading term implicit).
fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for &r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (i, &ci) in c.iter().enumerate() {
            next[i + 1] += ci;
            next[i] -= r * ci;
        }
        c = next;
    }
    c.pop();
    c
}

/// Feedback placing `A + B F` at the given real poles via randomized
/// single-input reduction.
fn place(model_a: &DMatrix<f64>, model_b: &DMatrix<f64>, poles: &[f64]) -> Result<DMatrix<f64>> {
    let (n, p) = (model_a.nrows(), model_b.ncols());
    let coeffs = poly_from_roots(poles);
    let mut rng = ChaCha8Rng::seed_from_u64(DEADBEAT_SEED);
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for attempt in 0..DEADBEAT_TRIES {
        let w = if p == 1 {
            DVector::from_element(1, 1.0)
        } else if attempt == 0 {
            DVector::from_element(p, 1.0 / (p as f64).sqrt())
        } else {
            let v = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let nv = v.norm();
            if nv == 0.0 {
                continue;
            }
            v / nv
        };
        let bw = model_b * &w;
        let Some(f) = ackermann(model_a, &bw, &coeffs) else { continue };
        let gain = &w * f;
        let closed = model_a + model_b * &gain;
        let score = if poles.iter().all(|&r| r == 0.0) {
            nilpotency_certificate(model_a, &closed)
        } else {
            linalg::spectral_radius(&closed) - poles.iter().fold(0.0f64, |acc, r| acc.max(r.abs()))
        };
        if !score.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, gain));
        }
        if score <= 1e-12 || p == 1 {
            break;
        }
    }
    best.map(|(_, g)| g)
        .ok_or_else(|| Error::Synthesis(format!("no single-input reduction succeeded for n={n}, p={p}")))
}

/// Deadbeat state feedback: `A + B F_d` nilpotent.
pub fn deadbeat_gain(model: &StateSpaceModel) -> Result<DMatrix<f64>> {
    deadbeat_for(&model.a, &model.b)
}

fn deadbeat_for(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let zero = DMatrix::zeros(b.ncols(), n);
    if nilpotency_certificate(a, a) <= 1e-8 {
        return Ok(zero);
    }
    let proxy = StateSpaceModel::from_parts(a.clone(), b.clone(), DMatrix::zeros(1, n), DMatrix::zeros(1, b.ncols()))?;
    if numerical_rank(&controllability_matrix(&proxy, n), DEFAULT_RANK_TOL)? != n {
        return Err(Error::Model("(A, B) is not controllable".into()));
    }
    let f = place(a, b, &vec![0.0; n])?;
    let cert = nilpotency_certificate(a, &(a + b * &f));
    if cert > 1e-8 {
        return Err(Error::Synthesis(format!("nilpotency certificate {cert:.3e} exceeds 1e-8")));
    }
    Ok(f)
}

/// Deadbeat observer gain by duality: `A - L C` nilpotent.
pub fn observer_gain_deadbeat(model: &StateSpaceModel) -> Result<DMatrix<f64>> {
    let ft = deadbeat_for(&model.a.transpose(), &model.c.transpose()).map_err(dual_error)?;
    Ok(-ft.transpose())
}

/// Observer gain with distinct real poles inside the given radius.
pub fn observer_gain_place(model: &StateSpaceModel, radius: f64) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&radius) {
        return Err(Error::Parameter(format!("radius {radius} outside [0, 1)")));
    }
    if radius == 0.0 {
        return observer_gain_deadbeat(model);
    }
    let n = model.n();
    let at = model.a.transpose();
    let ct = model.c.transpose();
    let proxy = StateSpaceModel::from_parts(at.clone(), ct.clone(), DMatrix::zeros(1, n), DMatrix::zeros(1, ct.ncols()))?;
    if numerical_rank(&controllability_matrix(&proxy, n), DEFAULT_RANK_TOL)? != n {
        return Err(Error::Model("(C, A) is not observable".into()));
    }
    let poles: Vec<f64> = (1..=n).map(|k| radius * k as f64 / (n + 1) as f64).collect();
    let ft = place(&at, &ct, &poles)?;
    let l = -ft.transpose();
    let rho = linalg::spectral_radius(&(&model.a - &l * &model.c));
    if rho > radius + 1e-6 {
        return Err(Error::Synthesis(format!("placed observer has spectral radius {rho:.6}")));
    }
    Ok(l)
}

fn dual_error(e: Error) -> Error {
    match e {
        Error::Model(_) => Error::Model("(C, A) is not observable".into()),
        other => other,
    }
}

/// Stationary Kalman predictor gain and innovation covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanGain {
    pub l: DMatrix<f64>,
    pub sigma_r: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub iterations: usize,
}

const KALMAN_MAX_ITER: usize = 100_000;

/// One application of the predictor Riccati map.
pub(crate) fn riccati_step(model: &StateSpaceModel, noise: &NoiseModel, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (a, c) = (&model.a, &model.c);
    let sr = c * p * c.transpose() + &noise.sigma_v;
    let g = a * p * c.transpose() + &noise.s_wv;
    let inv = sr
        .clone()
        .cholesky()
        .map(|ch| ch.inverse())
        .ok_or_else(|| Error::Conditioning("innovation covariance is not positive definite".into()))?;
    let next = a * p * a.transpose() + &noise.sigma_w - &g * inv * g.transpose();
    Ok((&next + next.transpose()) * 0.5)
}

pub fn kalman_gain(model: &StateSpaceModel, noise: &NoiseModel) -> Result<KalmanGain> {
    noise.check_dims(model)?;
    let n = model.n();
    let mut p = DMatrix::<f64>::zeros(n, n);
    for it in 1..=KALMAN_MAX_ITER {
        let next = riccati_step(model, noise, &p)?;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Convergence("Riccati iteration diverged".into()));
        }
        let delta = (&next - &p).norm();
        let scale = 1.0 + p.norm();
        p = next;
        if delta < 1e-12 * scale {
            let sigma_r = &model.c * &p * model.c.transpose() + &noise.sigma_v;
            let g = &model.a * &p * model.c.transpose() + &noise.s_wv;
            let inv = sigma_r
                .clone()
                .cholesky()
                .map(|ch| ch.inverse())
                .ok_or_else(|| Error::Conditioning("innovation covariance is singular".into()))?;
            let l = g * inv;
            if !is_schur(&(&model.a - &l * &model.c)) {
                return Err(Error::Convergence("Kalman closed loop is not Schur".into()));
            }
            return Ok(KalmanGain { l, sigma_r, p, iterations: it });
        }
    }
    Err(Error::Convergence(format!("Riccati iteration did not settle in {KALMAN_MAX_ITER} steps")))
}
