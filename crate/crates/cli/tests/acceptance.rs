//! Acceptance suite: one PASS/FAIL line per criterion. Tolerances are pinned below.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use fsfd_cli::verify::random_model;
use fsfd_core::detect::{
    baseline_ls_output, baseline_parity, chi2_quantile, io_window, kkt_residual, run_detection, svdd_fit,
    train_detector, Detector, DetectorMeta, GammaChoice, Mode, DEFAULT_RIDGE, LS_RIDGE,
};
use fsfd_core::linalg;
use fsfd_core::ltisim::{
    deadbeat_gain, gaussian_input, kalman_gain, latent_signals, observability_matrix,
    observer_residual, simulate, simulate_innovation, FaultProfile, NoiseModel, StateSpaceModel, Trajectory,
};
use fsfd_core::repr::{
    controller_base, factorization_residual, image_rep, io_image, kernel_rep, lemma_v_residual,
    parity_equivalence_gap, psi_stack,
};
use fsfd_core::sigkit::{build_hankel, numerical_rank, stack_window};
use fsfd_core::subspace::{build_data_matrix, davis_kahan_oracle_bound, fundamental_lemma_check};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const RANK_TOL: f64 = 1e-10;
const IDENTITY_TOL: f64 = 1e-8;
const CERT_TOL: f64 = 1e-10;
const GAP_TOL: f64 = 1e-8;
const RANK_LAW_SECONDS: f64 = 30.0;
const MEAN_J_REL: f64 = 0.05;
const BINOMIAL_SIGMAS: f64 = 3.0;
const QUANTILE_TOL: f64 = 1e-6;
const SVDD_EXACT_TOL: f64 = 1e-6;
const SVDD_CENTER_TOL: f64 = 1e-3;
const KKT_TOL: f64 = 1e-6;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn rmat(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn plant() -> StateSpaceModel {
    StateSpaceModel::new(
        DMatrix::from_row_slice(2, 2, &[0.6, 0.2, -0.1, 0.5]),
        DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
        DMatrix::identity(2, 2),
        DMatrix::zeros(2, 1),
    )
    .unwrap()
}

fn run(model: &StateSpaceModel, noise: Option<&NoiseModel>, faults: Option<&FaultProfile>, len: usize, seed: u64) -> Trajectory {
    let u = gaussian_input(model.p(), len, 1.0, seed).unwrap();
    simulate(model, noise, faults, &u, &DVector::zeros(model.n()), seed.wrapping_add(7919)).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn window(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

// 1
fn rank_law() -> Outcome {
    let start = Instant::now();
    let mut hits = 0;
    for seed in 0..200u64 {
        let (model, s) = random_model(10_000 + seed);
        let f = DMatrix::zeros(model.p(), model.n());
        let rank = numerical_rank(&image_rep(&model, &f, s).unwrap().stacked(), RANK_TOL).unwrap();
        if rank == s * model.p() + model.n() {
            hits += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(hits == 200 && secs < RANK_LAW_SECONDS, || format!("{hits}/200 in {secs:.2}s"))?;
    Ok(format!("{hits}/200 rank sp+n, {secs:.2}s"))
}

// 2
fn image_parameterization() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let (model, s) = random_model(20_000 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f1 = rmat(&mut rng, model.p(), model.n(), 0.5);
        let f2 = rmat(&mut rng, model.p(), model.n(), 0.5);
        let (a, b) = lemma_v_residual(&model, &f1, &f2, s).unwrap();
        worst = worst.max(a).max(b);
    }
    ensure(worst <= IDENTITY_TOL, || format!("max relative residual {worst:.3e}"))?;
    Ok(format!("max relative residual {worst:.3e} over 100 draws"))
}

// 3
fn psi_factorization() -> Outcome {
    let mut worst = 0.0f64;
    let mut ranks = 0;
    for seed in 0..100u64 {
        let (model, s) = random_model(30_000 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = rmat(&mut rng, model.p(), model.n(), 0.5);
        let l = rmat(&mut rng, model.n(), model.m(), 0.5);
        worst = worst.max(factorization_residual(&model, &f, &l, s).unwrap());
        let psi = psi_stack(&model, &f, &l, s).unwrap();
        if numerical_rank(&psi.psi, RANK_TOL).unwrap() == s * (model.p() + model.m()) {
            ranks += 1;
        }
    }
    ensure(worst <= IDENTITY_TOL && ranks == 100, || format!("residual {worst:.3e}, full rank {ranks}/100"))?;
    Ok(format!("max residual {worst:.3e}, rank s(p+m) in {ranks}/100"))
}

// 4
fn kernel_certificates() -> Outcome {
    let (mut cert, mut resid, mut ranks) = (0.0f64, 0.0f64, 0);
    for seed in 0..100u64 {
        let (model, s) = random_model(40_000 + seed);
        let (n, m) = (model.n(), model.m());
        let k = kernel_rep(&model, s).unwrap();
        let os = observability_matrix(&model, s);
        let ig = io_image(&model, s).unwrap();
        let rel = |prod: DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>| {
            prod.amax() / (linalg::spectral_norm(a) * linalg::spectral_norm(b))
        };
        cert = cert.max(rel(&k.k2 * &os, &k.k2, &os)).max(rel(&k.k_gs * &ig, &k.k_gs, &ig));
        if numerical_rank(&(&k.k_gs * controller_base(&model, s)), RANK_TOL).unwrap() == s * m - n {
            ranks += 1;
        }
        let noise = NoiseModel::isotropic(n, m, 0.3, 0.3).unwrap();
        let traj = run(&model, Some(&noise), None, 40 + s, seed);
        let rbar = observer_residual(&model, &DMatrix::zeros(n, m), &traj, &DVector::zeros(n)).unwrap();
        for k0 in 0..40i64 {
            let w = window(&stack_window(&traj.u, s, k0).unwrap().entries, &stack_window(&traj.y, s, k0).unwrap().entries);
            let via_kernel = &k.k_gs * &w;
            let via_observer = &k.k2 * stack_window(&rbar, s, k0).unwrap().entries;
            resid = resid.max((via_kernel - via_observer).amax() / (1.0 + w.norm()));
        }
    }
    ensure(cert <= CERT_TOL && ranks == 100 && resid <= IDENTITY_TOL, || {
        format!("certificates {cert:.3e}, rank {ranks}/100, residual match {resid:.3e}")
    })?;
    Ok(format!("certificates {cert:.3e}, rank sm-n {ranks}/100, r_K vs K2 r_bar {resid:.3e}"))
}

// 5
fn fundamental_lemma() -> Outcome {
    let (mut gap, mut member) = (0.0f64, 0.0f64);
    let mut cases = vec![(plant(), 4usize)];
    cases.extend((0..20u64).map(|i| random_model(50_000 + i)));
    for (i, (model, s)) in cases.iter().enumerate() {
        let (n, p, m) = (model.n(), model.p(), model.m());
        let len = 2 * (s * (p + m) + s);
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let u = gaussian_input(p, len, 1.0, 100 + i as u64).unwrap();
        let x0 = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let traj = simulate(model, None, None, &u, &x0, 0).unwrap();
        let t = build_data_matrix(&traj, *s, false).unwrap();
        let fresh = run(model, None, None, 50 + s, 200 + i as u64);
        let windows: Vec<DVector<f64>> = (0..50).map(|pos| io_window(&fresh, *s, pos).unwrap()).collect();
        let f = DMatrix::zeros(p, n);
        let rep = fundamental_lemma_check(&t, model, &f, RANK_TOL, &windows).unwrap();
        gap = gap.max(rep.gap.gap);
        member = member.max(rep.max_member_residual());
    }
    ensure(gap < GAP_TOL && member < IDENTITY_TOL, || format!("gap {gap:.3e}, member residual {member:.3e}"))?;
    Ok(format!("21 models: gap {gap:.3e}, 50 fresh windows each, max LS residual {member:.3e}"))
}

// 6
fn noisy_full_rank() -> Outcome {
    let model = plant();
    let s = 4;
    let noise = NoiseModel::isotropic(2, 2, 0.05, 0.1).unwrap();
    let full = (0..100u64)
        .filter(|&seed| {
            let t = build_data_matrix(&run(&model, Some(&noise), None, 200, 60_000 + seed), s, false).unwrap();
            numerical_rank(&t.data, RANK_TOL).unwrap() == s * 3
        })
        .count();
    ensure(full >= 99, || format!("{full}/100 full rank"))?;
    Ok(format!("rank s(p+m) in {full}/100 seeds"))
}

// 7
fn latent_reconstruction() -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    for i in 0..10u64 {
        let (model, s) = random_model(70_000 + i);
        let (n, m) = (model.n(), model.m());
        let noise = NoiseModel::isotropic(n, m, 0.2, 0.1).unwrap();
        let f = deadbeat_gain(&model).unwrap();
        let l = kalman_gain(&model, &noise).unwrap().l;
        let traj = run(&model, Some(&noise), None, 10 + s + n, 70 + i);
        let (v, r) = latent_signals(&model, &f, &l, &traj, &DVector::zeros(n)).unwrap();
        let psi = psi_stack(&model, &f, &l, s).unwrap();
        for k in (n as i64)..(n as i64 + 10) {
            let z = window(
                &stack_window(&v, s + n, k - n as i64).unwrap().entries,
                &stack_window(&r, s + n, k - n as i64).unwrap().entries,
            );
            let w = io_window(&traj, s, k as usize).unwrap();
            worst = worst.max((&psi.psi * &z - w).amax() / (1.0 + z.norm()));
            count += 1;
        }
    }
    ensure(count == 100 && worst <= IDENTITY_TOL, || format!("{count} windows, residual {worst:.3e}"))?;
    Ok(format!("{count} windows, max residual {worst:.3e}"))
}

// 8
fn davis_kahan() -> Outcome {
    let model = plant();
    let (n, s, len) = (2usize, 3usize, 400usize);
    let noise = NoiseModel::isotropic(2, 2, 0.05, 0.05).unwrap();
    let f = deadbeat_gain(&model).unwrap();
    let l = kalman_gain(&model, &noise).unwrap().l;
    let (mut counted, mut held, mut vacuous) = (0, 0, 0);
    let mut max_ratio = 0.0f64;
    for seed in 0..100u64 {
        let traj = run(&model, Some(&noise), None, len + n, 80_000 + seed);
        let (v, r) = latent_signals(&model, &f, &l, &traj, &DVector::zeros(n)).unwrap();
        let rep = davis_kahan_oracle_bound(&model, &f, &l, &build_hankel(&v, s + n).unwrap(), &build_hankel(&r, s + n).unwrap())
            .unwrap();
        match rep.holds() {
            None => vacuous += 1,
            Some(ok) => {
                counted += 1;
                held += usize::from(ok);
                max_ratio = max_ratio.max(rep.gap_measured / rep.bound);
            }
        }
    }
    ensure(held == counted && counted > 0, || format!("{held}/{counted} held, {vacuous} vacuous"))?;
    Ok(format!("gap <= bound in {held}/{counted} trials (max gap/bound {max_ratio:.3}), {vacuous} with bound >= 1"))
}

/// Detector with the exact model-based residual basis and covariance.
fn model_detector(model: &StateSpaceModel, l: &DMatrix<f64>, sigma_r: &DMatrix<f64>, s: usize, alpha: f64) -> Detector {
    let (n, p, m) = (model.n(), model.p(), model.m());
    let k = kernel_rep(model, s).unwrap();
    let u2_rows = linalg::column_space(&k.k_gs.transpose(), RANK_TOL).transpose();
    // y_s = O x̂ + T u_s + H r_s with H block lower triangular: I on the diagonal, C A^{j-1} L below
    let pw = linalg::powers(&model.a, s);
    let mut h = DMatrix::zeros(s * m, s * m);
    for i in 0..s {
        for j in 0..=i {
            let block = if i == j { DMatrix::identity(m, m) } else { &model.c * &pw[i - j - 1] * l };
            h.view_mut((i * m, j * m), (m, m)).copy_from(&block);
        }
    }
    let mut sr = DMatrix::zeros(s * m, s * m);
    for i in 0..s {
        sr.view_mut((i * m, i * m), (m, m)).copy_from(sigma_r);
    }
    let g = linalg::vstack(&[&DMatrix::zeros(s * p, s * m), &h]);
    let cov = &u2_rows * &g * sr * g.transpose() * u2_rows.transpose();
    let (vals, vecs) = linalg::sym_eigen_desc(&cov);
    let inv = DVector::from_iterator(vals.len(), vals.iter().map(|v| 1.0 / v.sqrt()));
    let factor = &vecs * DMatrix::from_diagonal(&inv) * vecs.transpose();
    let factor = (&factor + factor.transpose()) * 0.5;
    let theta = s * m - n;
    let meta = DetectorMeta { s, gamma: s * (p + m) - theta, p, m, n_train: 0, ridge: 0.0 };
    Detector::from_parts(u2_rows, DVector::zeros(theta), factor, chi2_quantile(alpha, theta).unwrap(), Mode::Chi2 { alpha }, meta)
        .unwrap()
}

// 9
fn chi2_calibration() -> Outcome {
    let model = plant();
    let s = 4;
    let kg = kalman_gain(&model, &NoiseModel::isotropic(2, 2, 0.05, 0.1).unwrap()).unwrap();
    let windows = 10_000usize;
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, alpha) in [0.01, 0.05].into_iter().enumerate() {
        let det = model_detector(&model, &kg.l, &kg.sigma_r, s, alpha);
        let theta = det.theta() as f64;
        let u = gaussian_input(1, windows * s, 1.0, 90 + i as u64).unwrap();
        let traj = simulate_innovation(&model, &kg.l, &kg.sigma_r, &u, &DVector::zeros(2), 91 + i as u64).unwrap();
        // non-overlapping windows are independent
        let (mut alarms, mut sum_j) = (0usize, 0.0);
        for w in 0..windows {
            let e = det.evaluate(&io_window(&traj, s, w * s).unwrap(), w as i64).unwrap();
            alarms += usize::from(e.alarm);
            sum_j += e.j;
        }
        let far = alarms as f64 / windows as f64;
        let band = BINOMIAL_SIGMAS * (alpha * (1.0 - alpha) / windows as f64).sqrt();
        let mean_j = sum_j / windows as f64;
        let pass = (far - alpha).abs() <= band && (mean_j - theta).abs() <= MEAN_J_REL * theta;
        ok &= pass;
        lines.push(format!("alpha {alpha}: FAR {far:.4} (band ±{band:.4}), mean J {mean_j:.3} vs {theta}"));
    }
    ensure(ok, || lines.join("; "))?;
    Ok(lines.join("; "))
}

/// Bisection on the regularized upper incomplete gamma from statrs.
fn quantile_oracle(alpha: f64, dof: usize) -> f64 {
    let a = dof as f64 / 2.0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while statrs::function::gamma::gamma_ur(a, hi / 2.0) > alpha {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if statrs::function::gamma::gamma_ur(a, mid / 2.0) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// 10
fn chi2_quantile_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for dof in [1, 2, 5, 10, 20] {
        for alpha in [0.01, 0.05, 0.5] {
            let got = chi2_quantile(alpha, dof).unwrap();
            worst = worst.max((got - quantile_oracle(alpha, dof)).abs());
        }
    }
    ensure(worst <= QUANTILE_TOL, || format!("max deviation {worst:.3e}"))?;
    Ok(format!("15 cases, max deviation {worst:.3e}"))
}

// 11
fn svdd() -> Outcome {
    let two = DMatrix::from_column_slice(2, 2, &[1.0, 2.0, 3.0, -2.0]);
    let fit = svdd_fit(&two, 1.0).unwrap();
    let mid = DVector::from_vec(vec![2.0, 0.0]);
    let two_err = (&fit.center - mid).amax().max((fit.radius_sq - 5.0).abs());
    let mut kkt = kkt_residual(&fit, &two);

    let k = 40;
    let mut cols: Vec<DVector<f64>> = (0..k)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            DVector::from_vec(vec![t.cos() + 0.3, t.sin() - 0.2])
        })
        .collect();
    cols.push(DVector::from_vec(vec![0.3, -0.2]));
    let circle = DMatrix::from_columns(&cols);
    let fit = svdd_fit(&circle, 1.0).unwrap();
    let center_err = (&fit.center - DVector::from_vec(vec![0.3, -0.2])).norm();
    kkt = kkt.max(kkt_residual(&fit, &circle));

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for c in [0.05, 0.2, 1.0] {
        let pts = rmat(&mut rng, 3, 60, 1.0);
        kkt = kkt.max(kkt_residual(&svdd_fit(&pts, c).unwrap(), &pts));
    }
    ensure(two_err <= SVDD_EXACT_TOL && center_err < SVDD_CENTER_TOL && kkt < KKT_TOL, || {
        format!("two-point {two_err:.3e}, center {center_err:.3e}, KKT {kkt:.3e}")
    })?;
    Ok(format!("two-point error {two_err:.3e}, circle center error {center_err:.3e}, max KKT {kkt:.3e}"))
}

// 12
fn detection_behavior() -> Outcome {
    let model = plant();
    // window length of the reference configuration
    let s = 4;
    let noise = NoiseModel::isotropic(2, 2, 0.05, 0.1).unwrap();
    let onset = 100;
    // SNR 10: offset ten times the measurement noise standard deviation on sensor 1
    let strong = FaultProfile::sensor_step(onset, DVector::from_vec(vec![1.0, 0.0]));
    // sweep from SNR 1 so the missed-detection rates are not all zero
    let base = DVector::from_vec(vec![0.1, 0.0]);
    let mut zero_after = 0;
    let (mut missed, mut faulty) = ([0usize; 3], 0usize);
    for seed in 0..100u64 {
        let train = run(&model, Some(&noise), None, 1500, 120_000 + seed);
        let det = train_detector(&train, s, GammaChoice::Fixed(s + 2), Mode::Chi2 { alpha: 0.01 }, DEFAULT_RIDGE).unwrap();
        let rep = run_detection(&det, &run(&model, Some(&noise), Some(&strong), 250, 130_000 + seed)).unwrap();
        if rep.mdr_after(onset) == Some(0.0) {
            zero_after += 1;
        }
        for (i, scale) in [1.0, 2.0, 4.0].into_iter().enumerate() {
            let faults = FaultProfile::sensor_step(onset, &base * scale);
            let rep = run_detection(&det, &run(&model, Some(&noise), Some(&faults), 250, 140_000 + seed)).unwrap();
            for (&f, &a) in rep.window_faulty.iter().zip(&rep.alarms) {
                missed[i] += usize::from(f && !a);
                faulty += usize::from(f && i == 0);
            }
        }
    }
    let mdr: Vec<f64> = missed.iter().map(|&k| k as f64 / faulty as f64).collect();
    let monotone = mdr.windows(2).all(|w| w[1] <= w[0]);
    ensure(zero_after == 100 && monotone, || format!("MDR 0 after onset in {zero_after}/100, sweep {mdr:?}"))?;
    Ok(format!(
        "SNR 10: MDR 0 after first full window in {zero_after}/100 seeds; pooled MDR at SNR 1/2/4 = {:.4}/{:.4}/{:.4}",
        mdr[0], mdr[1], mdr[2]
    ))
}

// 13
fn baselines() -> Outcome {
    let mut gap = 0.0f64;
    for seed in 0..30u64 {
        let (model, s) = random_model(140_000 + seed);
        let par = baseline_parity(&model, s, None).unwrap();
        gap = gap.max(parity_equivalence_gap(&model, s, &par.parity).unwrap());
    }
    let model = plant();
    let (s, rho, n) = (3usize, 3usize, 2usize);
    let clean = run(&model, None, None, 300, 150);
    let ls = baseline_ls_output(&clean, s, rho, n).unwrap();
    let res = ls.residuals(&run(&model, None, None, 200, 151)).unwrap();
    let hy = build_hankel(&run(&model, None, None, 200, 151).y, rho + s).unwrap().data;
    let ls_rel = res.amax() / hy.amax();

    let noisy = run(&model, Some(&NoiseModel::isotropic(2, 2, 0.05, 0.1).unwrap()), None, 400, 152);
    let ls = baseline_ls_output(&noisy, s, rho, n).unwrap();
    let hu = build_hankel(&noisy.u, rho + s).unwrap().data;
    let hy = build_hankel(&noisy.y, rho + s).unwrap().data;
    let z = linalg::vstack(&[&hu.rows(0, rho).into_owned(), &hy.rows(0, rho * 2).into_owned(), &hu.rows(rho, s).into_owned()]);
    let y = hy.rows(rho * 2, s * 2).into_owned();
    let lambda = (LS_RIDGE * linalg::spectral_norm(&z)).powi(2);
    let gram = &z * z.transpose() + DMatrix::identity(z.nrows(), z.nrows()) * lambda;
    let phi_ne = gram.cholesky().unwrap().solve(&(&z * y.transpose())).transpose();
    let phi_err = (&ls.phi - &phi_ne).amax() / phi_ne.amax();
    ensure(gap < GAP_TOL && ls_rel <= IDENTITY_TOL && phi_err <= IDENTITY_TOL, || {
        format!("parity gap {gap:.3e}, LS residual {ls_rel:.3e}, Phi vs normal equations {phi_err:.3e}")
    })?;
    Ok(format!("parity/kernel gap {gap:.3e}, noise-free LS residual {ls_rel:.3e}, Phi vs normal equations {phi_err:.3e}"))
}

const CLI_CONFIG: &str = r#"
seed = 5
n_samples = 400
train_samples = 800
s = 4
latent = 2
[model]
a = [[0.6, 0.2], [-0.1, 0.5]]
b = [[1.0], [0.5]]
c = [[1.0, 0.0], [0.0, 1.0]]
[noise]
process_std = 0.05
measurement_std = 0.1
[fault]
kind = "sensor_step"
onset = 200
magnitude = [1.0, 0.0]
"#;

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x != "toml"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

// 14
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, CLI_CONFIG).unwrap();
    let pass = || {
        for cmd in ["simulate", "train", "detect"] {
            let out = Command::new(env!("CARGO_BIN_EXE_fsfd"))
                .args([cmd, "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--quiet"])
                .env("SOURCE_DATE_EPOCH", "1700000000")
                .output()
                .unwrap();
            assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        }
        snapshot(dir.path())
    };
    let first = pass();
    let second = pass();
    let differing: Vec<&str> =
        first.iter().zip(&second).filter(|(a, b)| a != b).map(|(a, _)| a.0.as_str()).collect();
    ensure(first.len() == 8 && second.len() == 8 && differing.is_empty(), || {
        format!("{} files, differing: {differing:?}", first.len())
    })?;
    Ok(format!("{} files byte-identical across reruns", first.len()))
}

fn main() {
    let criteria: [Criterion; 14] = [
        ("rank law of the finite-sample image", rank_law),
        ("image parameterization identity", image_parameterization),
        ("Psi factorization and rank", psi_factorization),
        ("kernel certificates", kernel_certificates),
        ("fundamental lemma", fundamental_lemma),
        ("noisy data matrix full rank", noisy_full_rank),
        ("latent reconstruction", latent_reconstruction),
        ("Davis-Kahan bound", davis_kahan),
        ("chi-square calibration", chi2_calibration),
        ("chi-square quantile", chi2_quantile_oracle),
        ("SVDD", svdd),
        ("detection behavior", detection_behavior),
        ("baselines", baselines),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
