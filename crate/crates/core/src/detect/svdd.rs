//! Linear-kernel support vector data description solved by pairwise coordinate ascent.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100_000;

/// Minimal enclosing ball with slack; `center` lives in the fitted coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SvddModel {
    pub center: DVector<f64>,
    pub radius_sq: f64,
    pub alphas: Vec<f64>,
    pub xi: Vec<f64>,
    pub c: f64,
    pub iterations: usize,
}

impl SvddModel {
    pub fn distance_sq(&self, x: &DVector<f64>) -> f64 {
        (x - &self.center).norm_squared()
    }
}

/// Points are the columns of `points`.
pub fn svdd_fit(points: &DMatrix<f64>, c: f64) -> Result<SvddModel> {
    let count = points.ncols();
    if count == 0 || points.nrows() == 0 {
        return Err(Error::Size("SVDD needs at least one point".into()));
    }
    if !(c * count as f64 >= 1.0 - 1e-12) {
        return Err(Error::Parameter(format!("C = {c} < 1/N = {}", 1.0 / count as f64)));
    }
    let mean = points.column_mean();
    let x = points - &mean * DMatrix::from_element(1, count, 1.0);
    let k = x.transpose() * &x;
    let scale = k.diagonal().amax().max(1.0);
    let tol = 1e-12 * scale;

    let mut alpha = vec![1.0 / count as f64; count];
    // gradient of αᵀKα - Σ α_i K_ii
    let ka = &k * DVector::from_column_slice(&alpha);
    let mut g: Vec<f64> = (0..count).map(|i| 2.0 * ka[i] - k[(i, i)]).collect();
    let at_upper = |a: f64| a >= c - 1e-15 * c.max(1.0);

    let mut iterations = 0;
    let limit = MAX_SWEEPS.saturating_mul(count.max(1));
    loop {
        let mut up = None;
        let mut down = None;
        for i in 0..count {
            if !at_upper(alpha[i]) && up.is_none_or(|u: usize| g[i] < g[u]) {
                up = Some(i);
            }
            if alpha[i] > 0.0 && down.is_none_or(|d: usize| g[i] > g[d]) {
                down = Some(i);
            }
        }
        let (Some(i), Some(j)) = (up, down) else { break };
        if g[j] - g[i] <= tol || i == j {
            break;
        }
        if iterations >= limit {
            return Err(Error::Convergence(format!("SVDD did not converge in {limit} updates")));
        }
        iterations += 1;
        let eta = k[(i, i)] + k[(j, j)] - 2.0 * k[(i, j)];
        let cap = (c - alpha[i]).min(alpha[j]);
        let t = if eta > 1e-15 * scale { ((g[j] - g[i]) / (2.0 * eta)).min(cap) } else { cap };
        if t <= 0.0 {
            break;
        }
        alpha[i] += t;
        alpha[j] -= t;
        if alpha[j] < 1e-18 {
            alpha[j] = 0.0;
        }
        for (q, gq) in g.iter_mut().enumerate() {
            *gq += 2.0 * t * (k[(q, i)] - k[(q, j)]);
        }
    }

    let a = DVector::from_column_slice(&alpha);
    let center_c = &x * &a;
    let d2: Vec<f64> = (0..count).map(|i| (x.column(i) - &center_c).norm_squared()).collect();
    let eps = 1e-9 * c.max(1.0 / count as f64);
    let free: Vec<f64> = (0..count).filter(|&i| alpha[i] > eps && alpha[i] < c - eps).map(|i| d2[i]).collect();
    let radius_sq = if !free.is_empty() {
        free.iter().sum::<f64>() / free.len() as f64
    } else {
        let lower = (0..count).filter(|&i| alpha[i] <= eps).map(|i| d2[i]).fold(f64::NEG_INFINITY, f64::max);
        let upper = (0..count).filter(|&i| alpha[i] >= c - eps).map(|i| d2[i]).fold(f64::INFINITY, f64::min);
        match (lower.is_finite(), upper.is_finite()) {
            (true, true) => 0.5 * (lower + upper),
            (true, false) => lower,
            (false, true) => upper,
            (false, false) => 0.0,
        }
    }
    .max(0.0);
    let xi = d2.iter().map(|d| (d - radius_sq).max(0.0)).collect();
    Ok(SvddModel { center: center_c + mean, radius_sq, alphas: alpha, xi, c, iterations })
}

/// Largest violation of the SVDD optimality conditions, relative to
/// `max(1, max_i ‖x_i - mean‖²)`.
pub fn kkt_residual(model: &SvddModel, points: &DMatrix<f64>) -> f64 {
    let count = points.ncols();
    let mean = points.column_mean();
    let scale = (0..count)
        .map(|i| (points.column(i) - &mean).norm_squared())
        .fold(1.0, f64::max);
    let eps = 1e-9 * model.c.max(1.0 / count as f64);
    let mut worst = (model.alphas.iter().sum::<f64>() - 1.0).abs();
    for i in 0..count {
        let a = model.alphas[i];
        if a < -1e-15 || a > model.c + 1e-15 {
            worst = worst.max(1.0);
        }
        let d2 = model.distance_sq(&points.column(i).into_owned());
        let r = model.radius_sq;
        let v = if a <= eps {
            (d2 - r).max(0.0)
        } else if a >= model.c - eps {
            (r - d2).max(0.0)
        } else {
            (d2 - r).abs()
        };
        worst = worst.max(v / scale);
    }
    worst
}
