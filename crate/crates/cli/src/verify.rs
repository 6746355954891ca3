//! Identity, rank and bound checks over the configured model and random models.

use std::fmt;
use std::path::Path;

use fsfd_core::linalg;
use fsfd_core::ltisim::{
    deadbeat_gain, gaussian_input, kalman_gain, latent_signals, observability_index, observability_matrix,
    simulate, NoiseModel, StateSpaceModel,
};
use fsfd_core::repr::{
    controller_base, controller_param_residual, factorization_residual, image_rep, io_image, kernel_rep,
    lemma_v_residual, parity_equivalence_gap, psi_stack,
};
use fsfd_core::sigkit::{build_hankel, numerical_rank, stack_window, DEFAULT_RANK_TOL};
use fsfd_core::subspace::{build_data_matrix, davis_kahan_oracle_bound, fundamental_lemma_check};
use fsfd_core::detect::{baseline_parity, io_window};
use fsfd_core::Error;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::commands::substream;
use crate::config::Experiment;
use crate::manifest::RunManifest;
use crate::{CliError, Result};

pub const IDENTITY_TOL: f64 = 1e-8;
pub const CERTIFICATE_TOL: f64 = 1e-10;
pub const VERIFY_CSV: &str = "verify.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::NotApplicable => "N/A",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub model: String,
    pub check: &'static str,
    pub status: Status,
    pub value: f64,
    pub tol: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    pub fn failures(&self) -> Vec<String> {
        self.rows.iter().filter(|r| r.status == Status::Fail).map(|r| format!("{}:{}", r.model, r.check)).collect()
    }

    /// Fails with the violated check labels.
    pub fn ensure_passed(&self) -> Result<()> {
        let failures = self.failures();
        if failures.is_empty() {
            Ok(())
        } else {
            Err(CliError::Verification(failures))
        }
    }

    /// Largest residual among passing identity checks.
    pub fn max_identity_residual(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.status == Status::Pass && r.tol == IDENTITY_TOL)
            .map(|r| r.value)
            .fold(0.0, f64::max)
    }

    pub fn status_of(&self, model: &str, check: &str) -> Option<Status> {
        self.rows.iter().find(|r| r.model == model && r.check == check).map(|r| r.status)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Format { path: VERIFY_CSV.into(), message: e.to_string() };
        w.write_record(["model", "check", "status", "value", "tol", "note"]).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.model.clone(),
                r.check.into(),
                r.status.to_string(),
                format!("{:.3e}", r.value),
                format!("{:.2e}", r.tol),
                r.note.clone(),
            ])
            .map_err(err)?;
        }
        w.into_inner().map_err(|e| CliError::Format { path: VERIFY_CSV.into(), message: e.to_string() })
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:<10} {:<28} {:<5} {:>10} {:>7}  {}\n", "model", "check", "", "value", "tol", "note");
        for r in &self.rows {
            s += &format!(
                "{:<10} {:<28} {:<5} {:>10.3e} {:>9.2e}  {}\n",
                r.model, r.check, r.status.to_string(), r.value, r.tol, r.note
            );
        }
        s
    }
}

struct Rows<'a> {
    model: &'a str,
    rows: Vec<CheckRow>,
}

impl Rows<'_> {
    fn push(&mut self, check: &'static str, status: Status, value: f64, tol: f64, note: impl Into<String>) {
        self.rows.push(CheckRow { model: self.model.into(), check, status, value, tol, note: note.into() });
    }

    fn bound(&mut self, check: &'static str, value: f64, tol: f64) {
        let status = if value <= tol { Status::Pass } else { Status::Fail };
        self.push(check, status, value, tol, "");
    }

    fn rank(&mut self, check: &'static str, got: usize, want: usize) {
        let status = if got == want { Status::Pass } else { Status::Fail };
        self.push(check, status, got.abs_diff(want) as f64, 0.0, format!("rank {got}, expected {want}"));
    }

    fn error(&mut self, check: &'static str, e: &Error) {
        self.push(check, Status::Fail, f64::NAN, 0.0, e.to_string());
    }

    fn run<T>(&mut self, check: &'static str, r: fsfd_core::Result<T>, f: impl FnOnce(&mut Self, T)) {
        match r {
            Ok(v) => f(self, v),
            Err(e) => self.error(check, &e),
        }
    }
}

fn rmat(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn rel_max(prod: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    prod.amax() / (linalg::spectral_norm(a) * linalg::spectral_norm(b)).max(f64::MIN_POSITIVE)
}

/// Every check on one model with window length `s`.
pub fn verify_model(label: &str, model: &StateSpaceModel, s: usize, noise: &NoiseModel, seed: u64) -> Vec<CheckRow> {
    let (n, p, m) = (model.n(), model.p(), model.m());
    let mut rows = Rows { model: label, rows: Vec::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (f1, f2) = (rmat(&mut rng, p, n, 0.5), rmat(&mut rng, p, n, 0.5));
    let (l1, l2) = (rmat(&mut rng, n, m, 0.5), rmat(&mut rng, n, m, 0.5));
    let fd = match deadbeat_gain(model) {
        Ok(f) => f,
        Err(e) => {
            rows.error("deadbeat-synthesis", &e);
            return rows.rows;
        }
    };

    rows.run("image-rank", image_rep(model, &fd, s), |r, img| {
        r.run("image-rank", numerical_rank(&img.stacked(), DEFAULT_RANK_TOL), |r, k| r.rank("image-rank", k, s * p + n))
    });
    rows.run("image-parameterization", lemma_v_residual(model, &f1, &f2, s), |r, (a, b)| {
        r.bound("image-parameterization", a.max(b), IDENTITY_TOL)
    });
    rows.run("controller-parameterization", controller_param_residual(model, &f1, &l1, &f2, &l2, s), |r, v| {
        r.bound("controller-parameterization", v, IDENTITY_TOL)
    });
    rows.run("psi-factorization", factorization_residual(model, &f1, &l1, s), |r, v| {
        r.bound("psi-factorization", v, IDENTITY_TOL)
    });
    rows.run("psi-rank", psi_stack(model, &f1, &l1, s), |r, psi| {
        r.run("psi-rank", numerical_rank(&psi.psi, DEFAULT_RANK_TOL), |r, k| r.rank("psi-rank", k, s * (p + m)))
    });

    let mu = observability_index(model).unwrap_or(n);
    match kernel_rep(model, s) {
        Err(Error::EmptyKernel(msg)) => {
            let note = format!("s = {s} <= observability index {mu}: {msg}");
            for check in ["kernel-certificates", "kernel-controller-rank", "parity-equivalence"] {
                rows.push(check, Status::NotApplicable, 0.0, 0.0, note.clone());
            }
        }
        Err(e) => rows.error("kernel-certificates", &e),
        Ok(k) => {
            let os = observability_matrix(model, s);
            let ig = io_image(model, s).expect("image of a validated model");
            let cert = rel_max(&(&k.k2 * &os), &k.k2, &os).max(rel_max(&(&k.k_gs * &ig), &k.k_gs, &ig));
            rows.bound("kernel-certificates", cert, CERTIFICATE_TOL);
            let ic = controller_base(model, s);
            rows.run("kernel-controller-rank", numerical_rank(&(&k.k_gs * ic), DEFAULT_RANK_TOL), |r, got| {
                r.rank("kernel-controller-rank", got, s * m - n)
            });
            rows.run("parity-equivalence", baseline_parity(model, s, None), |r, par| {
                r.run("parity-equivalence", parity_equivalence_gap(model, s, &par.parity), |r, g| {
                    r.bound("parity-equivalence", g, IDENTITY_TOL)
                })
            });
        }
    }

    // noise-free record of length 2(s(p+m) + s)
    let x0 = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let clean = gaussian_input(p, 2 * (s * (p + m) + s), 1.0, seed ^ 0x51)
        .and_then(|u| simulate(model, None, None, &u, &x0, 0));
    let fresh = gaussian_input(p, 60 + s, 1.0, seed ^ 0x52).and_then(|u| simulate(model, None, None, &u, &x0, 0));
    rows.run("fundamental-lemma", clean.and_then(|c| fresh.map(|f| (c, f))), |r, (clean, fresh)| {
        let windows: fsfd_core::Result<Vec<DVector<f64>>> = (0..10).map(|j| io_window(&fresh, s, 5 * j)).collect();
        let check = windows.and_then(|w| {
            build_data_matrix(&clean, s, false).and_then(|t| fundamental_lemma_check(&t, model, &fd, DEFAULT_RANK_TOL, &w))
        });
        r.run("fundamental-lemma", check, |r, rep| {
            r.bound("fundamental-lemma", rep.gap.gap.max(rep.max_member_residual()), IDENTITY_TOL)
        });
    });

    let len = 400;
    let noisy = kalman_gain(model, noise).and_then(|kg| {
        let u = gaussian_input(p, len + n, 1.0, seed ^ 0x53)?;
        let traj = simulate(model, Some(noise), None, &u, &DVector::zeros(n), seed ^ 0x54)?;
        let (v, r) = latent_signals(model, &fd, &kg.l, &traj, &DVector::zeros(n))?;
        Ok((kg.l, traj, v, r))
    });
    let (l, traj, v, r) = match noisy {
        Ok(x) => x,
        Err(e) => {
            rows.error("noisy-simulation", &e);
            return rows.rows;
        }
    };
    let data = traj.slice(n, len).expect("record holds len + n samples");
    rows.run("noisy-rank", build_data_matrix(&data, s, false), |r, t| {
        r.run("noisy-rank", numerical_rank(&t.data, DEFAULT_RANK_TOL), |r, k| r.rank("noisy-rank", k, s * (p + m)))
    });
    let dk = build_hankel(&v, s + n).and_then(|hv| build_hankel(&r, s + n).map(|hr| (hv, hr)));
    rows.run("davis-kahan", dk.and_then(|(hv, hr)| davis_kahan_oracle_bound(model, &fd, &l, &hv, &hr)), |r, rep| {
        match rep.holds() {
            Some(ok) => r.push(
                "davis-kahan",
                if ok { Status::Pass } else { Status::Fail },
                rep.gap_measured,
                rep.bound,
                "tol column holds the bound",
            ),
            None => r.push("davis-kahan", Status::NotApplicable, rep.gap_measured, rep.bound, "bound >= 1"),
        }
    });
    rows.run("latent-reconstruction", psi_stack(model, &fd, &l, s), |rr, psi| {
        let mut worst = 0.0f64;
        for k in (n as i64)..((len - s) as i64) {
            let lat = || -> fsfd_core::Result<DVector<f64>> {
                let a = stack_window(&v, s + n, k - n as i64)?.entries;
                let b = stack_window(&r, s + n, k - n as i64)?.entries;
                Ok(DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied()))
            };
            match lat().and_then(|z| io_window(&traj, s, k as usize).map(|w| (z, w))) {
                Ok((z, w)) => worst = worst.max((&psi.psi * &z - w).amax() / (1.0 + z.norm())),
                Err(e) => return rr.error("latent-reconstruction", &e),
            }
        }
        rr.bound("latent-reconstruction", worst, IDENTITY_TOL)
    });
    rows.rows
}

/// Draws `(model, s)` with `n in [1,4]`, `p, m in [1,3]`, `s in [n+1, n+3]`.
pub fn random_model(seed: u64) -> (StateSpaceModel, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=4);
    let p = rng.random_range(1..=3);
    let m = rng.random_range(1..=3);
    let model = StateSpaceModel::random_minimal(&mut rng, n, p, m, 0.9);
    (model, n + rng.random_range(1..=3))
}

pub fn run_verify(exp: &Experiment, pool: &rayon::ThreadPool) -> Result<VerifyReport> {
    let c = &exp.config;
    let (n, m) = (exp.model.n(), exp.model.m());
    let noise = match &exp.noise {
        Some(nm) => nm.clone(),
        None => NoiseModel::isotropic(n, m, 0.05, 0.05)?,
    };
    let mut cases = vec![("config".to_string(), exp.model.clone(), c.s, noise)];
    for i in 0..c.verify.random_models {
        let (model, s) = random_model(substream(c.seed, 500 + i as u64));
        let noise = NoiseModel::isotropic(model.n(), model.m(), 0.05, 0.05)?;
        cases.push((format!("random-{i}"), model, s, noise));
    }
    let rows: Vec<Vec<CheckRow>> = pool.install(|| {
        cases
            .par_iter()
            .enumerate()
            .map(|(i, (label, model, s, noise))| verify_model(label, model, *s, noise, substream(c.seed, 900 + i as u64)))
            .collect()
    });
    Ok(VerifyReport { rows: rows.into_iter().flatten().collect() })
}

/// Writes the table and manifest.
pub fn cmd_verify(exp: &Experiment, out: &Path, pool: &rayon::ThreadPool) -> Result<VerifyReport> {
    let report = run_verify(exp, pool)?;
    let mut manifest = RunManifest::new("verify", Some(&exp.config));
    manifest.emit(out, VERIFY_CSV, &report.to_csv()?)?;
    manifest.finish(out)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_model_ranges() {
        for seed in 0..30 {
            let (model, s) = random_model(seed);
            assert!((1..=4).contains(&model.n()) && (1..=3).contains(&model.p()) && (1..=3).contains(&model.m()));
            assert!(s > model.n() && s <= model.n() + 3);
        }
    }

    #[test]
    fn every_check_passes_on_a_random_model() {
        let (model, s) = random_model(11);
        let noise = NoiseModel::isotropic(model.n(), model.m(), 0.05, 0.05).unwrap();
        let rows = verify_model("r", &model, s, &noise, 3);
        assert!(rows.len() >= 12);
        for r in &rows {
            assert_ne!(r.status, Status::Fail, "{r:?}");
        }
    }
}
