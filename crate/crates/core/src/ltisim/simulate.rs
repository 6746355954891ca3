use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{NoiseModel, StateSpaceModel};
use crate::error::{Error, Result};
use crate::linalg;
use crate::sigkit::SignalSequence;

/// Time course of an injected fault, evaluated at `t - onset` samples after onset.
#[derive(Debug, Clone, PartialEq)]
pub enum FaultShape {
    /// Constant offset.
    Step(DVector<f64>),
    /// Offset growing by `slope` per sample, starting from zero at onset.
    Ramp(DVector<f64>),
    /// Multiplicative deviation: the channel becomes `(1 + g) * nominal`.
    Gain(DVector<f64>),
    /// Explicit values keyed by 0-based sample position; missing keys are zero.
    Samples(BTreeMap<usize, DVector<f64>>),
}

impl FaultShape {
    fn dim(&self) -> Option<usize> {
        match self {
            Self::Step(v) | Self::Ramp(v) | Self::Gain(v) => Some(v.len()),
            Self::Samples(map) => map.values().next().map(|v| v.len()),
        }
    }

    fn value(&self, t: usize, onset: usize, nominal: &DVector<f64>) -> DVector<f64> {
        if t < onset {
            return DVector::zeros(nominal.len());
        }
        match self {
            Self::Step(v) => v.clone(),
            Self::Ramp(v) => v * ((t - onset) as f64),
            Self::Gain(g) => g.component_mul(nominal),
            Self::Samples(map) => map.get(&t).cloned().unwrap_or_else(|| DVector::zeros(nominal.len())),
        }
    }
}

/// Sensor and actuator faults switched on at a common onset (0-based sample position).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FaultProfile {
    pub onset: usize,
    pub sensor: Option<FaultShape>,
    pub actuator: Option<FaultShape>,
}

impl FaultProfile {
    pub fn sensor_step(onset: usize, offset: DVector<f64>) -> Self {
        Self { onset, sensor: Some(FaultShape::Step(offset)), actuator: None }
    }

    pub fn actuator_step(onset: usize, offset: DVector<f64>) -> Self {
        Self { onset, sensor: None, actuator: Some(FaultShape::Step(offset)) }
    }

    fn is_active(&self) -> bool {
        self.sensor.is_some() || self.actuator.is_some()
    }

    fn check_dims(&self, model: &StateSpaceModel) -> Result<()> {
        if let Some(d) = self.sensor.as_ref().and_then(FaultShape::dim) {
            if d != model.m() {
                return Err(Error::Shape(format!("sensor fault has dimension {d}, expected {}", model.m())));
            }
        }
        if let Some(d) = self.actuator.as_ref().and_then(FaultShape::dim) {
            if d != model.p() {
                return Err(Error::Shape(format!("actuator fault has dimension {d}, expected {}", model.p())));
            }
        }
        Ok(())
    }
}

/// Simulated input/output record. `labels[t]` marks samples with an active fault.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub u: SignalSequence,
    pub y: SignalSequence,
    pub x: Option<SignalSequence>,
    pub labels: Vec<bool>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Keep `count` samples from position `from`.
    pub fn slice(&self, from: usize, count: usize) -> Result<Self> {
        Ok(Self {
            u: self.u.slice(from, count)?,
            y: self.y.slice(from, count)?,
            x: self.x.as_ref().map(|x| x.slice(from, count)).transpose()?,
            labels: self.labels[from..from + count].to_vec(),
        })
    }
}

/// I.i.d. Gaussian input with the given standard deviation.
pub fn gaussian_input(p: usize, len: usize, std: f64, seed: u64) -> Result<SignalSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = DMatrix::from_fn(p, len, |_, _| std * rng.sample::<f64, _>(StandardNormal));
    SignalSequence::new(data, 0)
}

fn check_vec(v: &DVector<f64>, n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::Shape(format!("{what} has length {}, expected {n}", v.len())));
    }
    Ok(())
}

/// `x+ = A x + B (u + f_a) + w`, `y = C x + D (u + f_a) + v + f_s`; the recorded
/// input is `u` without the actuator fault.
pub fn simulate(
    model: &StateSpaceModel,
    noise: Option<&NoiseModel>,
    faults: Option<&FaultProfile>,
    u: &SignalSequence,
    x0: &DVector<f64>,
    seed: u64,
) -> Result<Trajectory> {
    let (n, p, m) = (model.n(), model.p(), model.m());
    if u.dim() != p {
        return Err(Error::Shape(format!("input has dimension {}, expected {p}", u.dim())));
    }
    check_vec(x0, n, "x0")?;
    if let Some(nm) = noise {
        nm.check_dims(model)?;
    }
    if let Some(f) = faults {
        f.check_dims(model)?;
    }
    let root = noise.map(|nm| linalg::psd_sqrt(&nm.joint()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = u.len();
    let mut ys = DMatrix::zeros(m, len);
    let mut xs = DMatrix::zeros(n, len);
    let mut labels = vec![false; len];
    let mut x = x0.clone();
    #[allow(clippy::needless_range_loop)]
    for t in 0..len {
        let ut = u.sample(t);
        let mut u_eff = ut.clone();
        let mut f_s = DVector::zeros(m);
        if let Some(f) = faults {
            if let Some(a) = &f.actuator {
                u_eff += a.value(t, f.onset, &ut);
            }
            labels[t] = f.is_active() && t >= f.onset;
        }
        let (w, v) = match &root {
            Some(r) => {
                let z = DVector::from_fn(n + m, |_, _| rng.sample::<f64, _>(StandardNormal));
                let wv = r * z;
                (wv.rows(0, n).into_owned(), wv.rows(n, m).into_owned())
            }
            None => (DVector::zeros(n), DVector::zeros(m)),
        };
        let y_clean = &model.c * &x + &model.d * &u_eff + v;
        if let Some(sf) = faults.and_then(|f| f.sensor.as_ref().map(|s| (s, f.onset))) {
            f_s = sf.0.value(t, sf.1, &y_clean);
        }
        ys.set_column(t, &(y_clean + f_s));
        xs.set_column(t, &x);
        x = &model.a * &x + &model.b * &u_eff + w;
    }
    Ok(Trajectory {
        u: u.clone(),
        y: SignalSequence::new(ys, u.start())?,
        x: Some(SignalSequence::new(xs, u.start())?),
        labels,
    })
}

/// Innovation form `x+ = A x + B u + L r`, `y = C x + D u + r` with white
/// `r ~ N(0, sigma_r)`. The returned `x` holds the predictor state.
pub fn simulate_innovation(
    model: &StateSpaceModel,
    l: &DMatrix<f64>,
    sigma_r: &DMatrix<f64>,
    u: &SignalSequence,
    x0: &DVector<f64>,
    seed: u64,
) -> Result<Trajectory> {
    let (n, m) = (model.n(), model.m());
    if u.dim() != model.p() || l.shape() != (n, m) || sigma_r.shape() != (m, m) {
        return Err(Error::Shape("innovation model dimensions are inconsistent".into()));
    }
    check_vec(x0, n, "x0")?;
    let root = linalg::psd_sqrt(sigma_r);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = u.len();
    let mut ys = DMatrix::zeros(m, len);
    let mut xs = DMatrix::zeros(n, len);
    let mut x = x0.clone();
    for t in 0..len {
        let ut = u.sample(t);
        let r = &root * DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        ys.set_column(t, &(&model.c * &x + &model.d * &ut + &r));
        xs.set_column(t, &x);
        x = &model.a * &x + &model.b * &ut + l * r;
    }
    Ok(Trajectory {
        u: u.clone(),
        y: SignalSequence::new(ys, u.start())?,
        x: Some(SignalSequence::new(xs, u.start())?),
        labels: vec![false; len],
    })
}

/// Runs the observer and returns `(r, xhat)` sample by sample.
fn run_observer(
    model: &StateSpaceModel,
    l: &DMatrix<f64>,
    traj: &Trajectory,
    xhat0: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, m) = (model.n(), model.m());
    if l.shape() != (n, m) {
        return Err(Error::Shape(format!("L is {:?}, expected {:?}", l.shape(), (n, m))));
    }
    if traj.u.dim() != model.p() || traj.y.dim() != m || traj.u.len() != traj.y.len() {
        return Err(Error::Shape("trajectory does not match plant dimensions".into()));
    }
    check_vec(xhat0, n, "xhat0")?;
    let len = traj.len();
    let mut rs = DMatrix::zeros(m, len);
    let mut xh = DMatrix::zeros(n, len);
    let mut x = xhat0.clone();
    for t in 0..len {
        let ut = traj.u.sample(t);
        let r = traj.y.sample(t) - &model.c * &x - &model.d * &ut;
        xh.set_column(t, &x);
        x = &model.a * &x + &model.b * &ut + l * &r;
        rs.set_column(t, &r);
    }
    Ok((rs, xh))
}

/// Observer residual `r = y - C xhat - D u` with `xhat+ = A xhat + B u + L r`.
pub fn observer_residual(
    model: &StateSpaceModel,
    l: &DMatrix<f64>,
    traj: &Trajectory,
    xhat0: &DVector<f64>,
) -> Result<SignalSequence> {
    let (rs, _) = run_observer(model, l, traj, xhat0)?;
    SignalSequence::new(rs, traj.u.start())
}

/// Latent pair `(v, r)` with `v = u - F xhat` along the observer trajectory.
pub fn latent_signals(
    model: &StateSpaceModel,
    f: &DMatrix<f64>,
    l: &DMatrix<f64>,
    traj: &Trajectory,
    xhat0: &DVector<f64>,
) -> Result<(SignalSequence, SignalSequence)> {
    if f.shape() != (model.p(), model.n()) {
        return Err(Error::Shape(format!("F is {:?}, expected {:?}", f.shape(), (model.p(), model.n()))));
    }
    let (rs, xh) = run_observer(model, l, traj, xhat0)?;
    let v = traj.u.data() - f * xh;
    Ok((SignalSequence::new(v, traj.u.start())?, SignalSequence::new(rs, traj.u.start())?))
}
