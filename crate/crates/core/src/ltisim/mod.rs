//! State-space plants, gain synthesis and trajectory simulation.

mod gains;
mod simulate;

pub use gains::{
    deadbeat_gain, kalman_gain, nilpotency_certificate, observer_gain_deadbeat,
    observer_gain_place, GainPair, KalmanGain,
};
pub use simulate::{
    gaussian_input, latent_signals, observer_residual, simulate, simulate_innovation,
    FaultProfile, FaultShape, Trajectory,
};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::sigkit::{numerical_rank, DEFAULT_RANK_TOL};

/// Discrete-time plant `x+ = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpaceModel {
    /// Builds a minimal realization; rejects inconsistent shapes and
    /// uncontrollable or unobservable pairs.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let model = Self::from_parts(a, b, c, d)?;
        let n = model.n();
        if numerical_rank(&controllability_matrix(&model, n), DEFAULT_RANK_TOL)? != n {
            return Err(Error::Model("(A, B) is not controllable".into()));
        }
        if numerical_rank(&observability_matrix(&model, n), DEFAULT_RANK_TOL)? != n {
            return Err(Error::Model("(C, A) is not observable".into()));
        }
        Ok(model)
    }

    /// Shape checks only; minimality is not enforced.
    pub fn from_parts(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let (p, m) = (b.ncols(), c.nrows());
        if n == 0 || p == 0 || m == 0 {
            return Err(Error::Shape("n, p and m must all be at least 1".into()));
        }
        if a.ncols() != n {
            return Err(Error::Shape(format!("A is {}x{}, expected square", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::Shape(format!("B has {} rows, expected {n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::Shape(format!("C has {} columns, expected {n}", c.ncols())));
        }
        if d.shape() != (m, p) {
            return Err(Error::Shape(format!("D is {:?}, expected {:?}", d.shape(), (m, p))));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    pub fn m(&self) -> usize {
        self.c.nrows()
    }

    /// A random minimal model with A scaled to the given spectral radius.
    /// Draws are repeated until the controllability and observability
    /// matrices are comfortably full rank.
    pub fn random_minimal<R: Rng>(rng: &mut R, n: usize, p: usize, m: usize, radius: f64) -> Self {
        loop {
            let mut draw = |r, c| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
            let a0 = draw(n, n);
            let b = draw(n, p);
            let c = draw(m, n);
            let d = draw(m, p);
            let rho = linalg::spectral_radius(&a0);
            if rho < 1e-3 {
                continue;
            }
            let a = a0 * (radius / rho);
            let Ok(model) = Self::from_parts(a, b, c, d) else { continue };
            let ctrb = linalg::singular_values(&controllability_matrix(&model, n));
            let obsv = linalg::singular_values(&observability_matrix(&model, n));
            let well = |s: &[f64]| s.len() >= n && s[n - 1] > 1e-3 * s[0];
            if well(&ctrb) && well(&obsv) {
                return model;
            }
        }
    }

    /// Markov block `G_k`: `D` for k = 0, `C A^(k-1) B` for k >= 1, zero below.
    pub fn markov(&self, k: i64) -> DMatrix<f64> {
        match k {
            k if k < 0 => DMatrix::zeros(self.m(), self.p()),
            0 => self.d.clone(),
            k => {
                let pw = linalg::powers(&self.a, k as usize);
                &self.c * &pw[k as usize - 1] * &self.b
            }
        }
    }
}

/// `O_s = [C; CA; ...; CA^(s-1)]`.
pub fn observability_matrix(model: &StateSpaceModel, s: usize) -> DMatrix<f64> {
    let (n, m) = (model.n(), model.m());
    let mut out = DMatrix::zeros(s * m, n);
    let mut blk = model.c.clone();
    for i in 0..s {
        out.view_mut((i * m, 0), (m, n)).copy_from(&blk);
        blk = &blk * &model.a;
    }
    out
}

/// `C_s = [B, AB, ..., A^(s-1) B]`.
pub fn controllability_matrix(model: &StateSpaceModel, s: usize) -> DMatrix<f64> {
    let (n, p) = (model.n(), model.p());
    let mut out = DMatrix::zeros(n, s * p);
    let mut blk = model.b.clone();
    for i in 0..s {
        out.view_mut((0, i * p), (n, p)).copy_from(&blk);
        blk = &model.a * &blk;
    }
    out
}

/// Lower block-triangular Toeplitz of Markov parameters, `T_{s,s}(G)`.
pub fn toeplitz_markov(model: &StateSpaceModel, s: usize) -> DMatrix<f64> {
    let spec = crate::sigkit::BlockToeplitzSpec::new(s, s, 0);
    let pw = linalg::powers(&model.a, s.max(1));
    spec.realize(|k| match k {
        k if k < 0 => DMatrix::zeros(model.m(), model.p()),
        0 => model.d.clone(),
        k => &model.c * &pw[k as usize - 1] * &model.b,
    })
    .expect("Markov blocks share one shape")
}

/// Smallest `s` with `rank(O_s) = n`.
pub fn observability_index(model: &StateSpaceModel) -> Result<usize> {
    let n = model.n();
    for s in 1..=n {
        if numerical_rank(&observability_matrix(model, s), DEFAULT_RANK_TOL)? == n {
            return Ok(s);
        }
    }
    Err(Error::Model("(C, A) is not observable".into()))
}

/// Joint Gaussian process/measurement noise `(w, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub sigma_w: DMatrix<f64>,
    pub s_wv: DMatrix<f64>,
    pub sigma_v: DMatrix<f64>,
}

impl NoiseModel {
    pub fn new(sigma_w: DMatrix<f64>, s_wv: DMatrix<f64>, sigma_v: DMatrix<f64>) -> Result<Self> {
        let n = sigma_w.nrows();
        let m = sigma_v.nrows();
        if sigma_w.shape() != (n, n) || sigma_v.shape() != (m, m) || s_wv.shape() != (n, m) {
            return Err(Error::Shape("noise covariance blocks are inconsistent".into()));
        }
        let noise = Self { sigma_w, s_wv, sigma_v };
        let joint = noise.joint();
        let (vals, _) = linalg::sym_eigen_desc(&joint);
        let floor = -1e-12 * joint.trace().abs().max(f64::MIN_POSITIVE);
        if vals.iter().any(|&v| v < floor) {
            return Err(Error::Parameter("joint noise covariance is not PSD".into()));
        }
        Ok(noise)
    }

    /// Independent white noises with the given standard deviations.
    pub fn isotropic(n: usize, m: usize, process_std: f64, measurement_std: f64) -> Result<Self> {
        Self::new(
            DMatrix::identity(n, n) * process_std.powi(2),
            DMatrix::zeros(n, m),
            DMatrix::identity(m, m) * measurement_std.powi(2),
        )
    }

    pub fn joint(&self) -> DMatrix<f64> {
        let top = linalg::hstack(&[&self.sigma_w, &self.s_wv]);
        let bot = linalg::hstack(&[&self.s_wv.transpose(), &self.sigma_v]);
        linalg::vstack(&[&top, &bot])
    }

    fn check_dims(&self, model: &StateSpaceModel) -> Result<()> {
        if self.sigma_w.nrows() != model.n() || self.sigma_v.nrows() != model.m() {
            return Err(Error::Shape("noise model does not match plant dimensions".into()));
        }
        Ok(())
    }
}

/// Convenience: spectral radius check used by gain validation.
pub(crate) fn is_schur(m: &DMatrix<f64>) -> bool {
    linalg::spectral_radius(m) < 1.0
}
