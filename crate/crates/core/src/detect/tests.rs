use super::*;
use crate::ltisim::{
    gaussian_input, kalman_gain, simulate, FaultProfile, NoiseModel, StateSpaceModel,
};
use crate::repr::kernel_rep;
use crate::subspace::gap_metric;
use proptest::prelude::{prop_assert, proptest, ProptestConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

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
    simulate(model, noise, faults, &u, &DVector::zeros(model.n()), seed.wrapping_add(1)).unwrap()
}

fn noise() -> NoiseModel {
    NoiseModel::isotropic(2, 2, 0.05, 0.1).unwrap()
}

#[test]
fn chi2_threshold_for_two_dof() {
    let det = train_detector(&run(&plant(), Some(&noise()), None, 500, 1), 2, GammaChoice::Fixed(4), Mode::Chi2 { alpha: 0.05 }, DEFAULT_RIDGE).unwrap();
    assert_eq!(det.theta(), 2);
    assert!((det.threshold - 5.991_464_547_107_98).abs() < 1e-8);
}

#[test]
fn noise_free_training_collapses_residuals() {
    let model = plant();
    let s = 3;
    let det = train_detector(&run(&model, None, None, 400, 2), s, GammaChoice::Fixed(s + 2), Mode::Chi2 { alpha: 0.01 }, DEFAULT_RIDGE).unwrap();
    assert!(det.delta_hat.amax() < 1e-10);
    // Σ̂ is ridge-only: ridge * (mean window energy) / θ' on the diagonal
    let train = run(&model, None, None, 400, 2);
    let cols = 400 - s + 1;
    let energy: f64 = (0..cols).map(|p| io_window(&train, s, p).unwrap().norm_squared()).sum::<f64>() / cols as f64;
    let theta = det.theta();
    let expected = 1.0 / (DEFAULT_RIDGE * energy / theta as f64).sqrt();
    let ideal = DMatrix::identity(theta, theta) * expected;
    assert!((&det.cov_inv_factor - ideal).amax() < 1e-3 * expected);
    let clean = run(&model, None, None, 50, 3);
    for pos in 0..(50 - s) {
        assert!(det.residual(&io_window(&clean, s, pos).unwrap()).unwrap().amax() < 1e-9);
    }
    assert_eq!(run_detection(&det, &clean).unwrap().far, Some(0.0));
    let noisy = run(&model, Some(&noise()), None, 50, 4);
    let rep = run_detection(&det, &noisy).unwrap();
    assert!(rep.alarms.iter().all(|&a| a));
}

#[test]
fn training_rejects_short_or_faulty_data() {
    let model = plant();
    let short = run(&model, Some(&noise()), None, 10, 5);
    assert!(matches!(train_detector(&short, 3, GammaChoice::Fixed(5), Mode::Chi2 { alpha: 0.05 }, DEFAULT_RIDGE), Err(Error::Data(_))));
    let faults = FaultProfile::sensor_step(50, DVector::from_element(2, 1.0));
    let faulty = run(&model, Some(&noise()), Some(&faults), 200, 5);
    assert!(matches!(train_detector(&faulty, 3, GammaChoice::Fixed(5), Mode::Chi2 { alpha: 0.05 }, DEFAULT_RIDGE), Err(Error::Data(_))));
}

#[test]
fn automatic_gamma_recovers_order() {
    let model = plant();
    let det = train_detector(
        &run(&model, Some(&NoiseModel::isotropic(2, 2, 1e-4, 1e-4).unwrap()), None, 600, 6),
        4,
        GammaChoice::Auto { gap_factor: 10.0, fallback_n: None },
        Mode::Chi2 { alpha: 0.05 },
        DEFAULT_RIDGE,
    )
    .unwrap();
    assert_eq!(det.meta.gamma, 4 + 2);
}

#[test]
fn held_out_chi2_mean_matches_dof() {
    let model = plant();
    let s = 3;
    let det = train_detector(&run(&model, Some(&noise()), None, 20_000, 7), s, GammaChoice::Fixed(s + 2), Mode::Chi2 { alpha: 0.05 }, DEFAULT_RIDGE).unwrap();
    let test = run(&model, Some(&noise()), None, 20_000, 8);
    let rep = run_detection(&det, &test).unwrap();
    let mean = rep.statistics.iter().sum::<f64>() / rep.statistics.len() as f64;
    let theta = det.theta() as f64;
    assert!((mean - theta).abs() < 0.05 * theta, "mean {mean} vs {theta}");
}

#[test]
fn residual_examples() {
    let model = plant();
    let s = 3;
    let det = train_detector(&run(&model, Some(&noise()), None, 500, 9), s, GammaChoice::Fixed(s + 2), Mode::Chi2 { alpha: 0.05 }, DEFAULT_RIDGE).unwrap();
    let u1 = linalg::complement(&det.u2_rows.transpose());
    let w = &u1 * DVector::from_fn(u1.ncols(), |i, _| 1.0 + i as f64);
    assert!(det.residual(&w).unwrap().amax() < 1e-12 * w.norm());
    for i in 0..det.theta() {
        let row = det.u2_rows.row(i).transpose();
        let r = det.residual(&row).unwrap();
        for j in 0..det.theta() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((r[j] - expect).abs() < 1e-12);
        }
    }
    assert!(det.residual(&DVector::zeros(4)).is_err());
}

#[test]
fn residual_of_clean_window_is_bounded_by_subspace_gap() {
    let model = plant();
    let s = 3;
    let det = train_detector(&run(&model, Some(&noise()), None, 4000, 10), s, GammaChoice::Fixed(s + 2), Mode::Chi2 { alpha: 0.05 }, DEFAULT_RIDGE).unwrap();
    let k = kernel_rep(&model, s).unwrap();
    let kt = linalg::column_space(&k.k_gs.transpose(), 1e-10);
    let gap = gap_metric(&kt, &det.u2_rows.transpose()).unwrap().gap;
    let clean = run(&model, None, None, 60, 11);
    for pos in 0..(60 - s) {
        let w = io_window(&clean, s, pos).unwrap();
        assert!(det.residual(&w).unwrap().norm() <= gap * w.norm() + 1e-12);
    }
}

fn unit_detector(mode: Mode) -> Detector {
    let meta = DetectorMeta { s: 1, gamma: 1, p: 1, m: 2, n_train: 0, ridge: 0.0 };
    Detector::from_parts(
        DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
        DVector::from_vec(vec![1.0, -1.0]),
        DMatrix::identity(2, 2),
        9.0,
        mode,
        meta,
    )
    .unwrap()
}

#[test]
fn chi2_statistic_examples() {
    let det = unit_detector(Mode::Chi2 { alpha: 0.05 });
    let at_offset = DVector::from_vec(vec![7.0, 1.0, -1.0]);
    let e = chi2_statistic(&det, &at_offset, 0).unwrap();
    assert_eq!(e.j, 0.0);
    assert!(!e.alarm);
    let shifted = DVector::from_vec(vec![0.0, 4.0, 3.0]);
    let e = chi2_statistic(&det, &shifted, 5).unwrap();
    assert!((e.j - 25.0).abs() < 1e-12);
    assert!(e.alarm && e.k == 5);
    assert!(matches!(svdd_statistic(&det, &shifted, 0), Err(Error::Mode(_))));
    let sv = unit_detector(Mode::Svdd { c: 1.0 });
    assert!(matches!(chi2_statistic(&sv, &shifted, 0), Err(Error::Mode(_))));
}

#[test]
fn from_parts_validates() {
    let meta = DetectorMeta { s: 1, gamma: 1, p: 1, m: 2, n_train: 0, ridge: 0.0 };
    let bad = Detector::from_parts(
        DMatrix::from_row_slice(2, 3, &[0.0, 2.0, 0.0, 0.0, 0.0, 1.0]),
        DVector::zeros(2),
        DMatrix::identity(2, 2),
        1.0,
        Mode::Chi2 { alpha: 0.05 },
        meta,
    );
    assert!(matches!(bad, Err(Error::Basis(_))));
}

#[test]
fn svdd_threshold_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    use rand::Rng;
    use rand_distr::StandardNormal;
    let res = DMatrix::from_fn(3, 300, |_, _| rng.sample::<f64, _>(StandardNormal));
    let (_, factor) = mean_and_whitener(&res, DEFAULT_RIDGE, None).unwrap();
    let (delta, thr, model) = svdd_threshold(&factor, &res, 1.0).unwrap();
    let j: Vec<f64> = (0..300).map(|i| (&factor * (res.column(i) - &delta)).norm_squared()).collect();
    let max_j = j.iter().cloned().fold(0.0, f64::max);
    assert!(thr >= max_j - 1e-9);
    assert!(kkt_residual(&model, &(&factor * &res)) < 1e-6);

    let (_, thr_small, model) = svdd_threshold(&factor, &res, 0.01).unwrap();
    assert!(model.xi.iter().any(|&x| x > 0.0));
    assert!(thr_small < max_j);

    let single = DMatrix::from_column_slice(3, 1, &[0.5, -1.0, 2.0]);
    let (delta, thr, _) = svdd_threshold(&DMatrix::identity(3, 3), &single, 1.0).unwrap();
    assert_eq!(thr, 0.0);
    assert!((delta - single.column(0)).amax() < 1e-15);
}

#[test]
fn svdd_detector_trains_and_encloses() {
    let model = plant();
    let traj = run(&model, Some(&noise()), None, 800, 12);
    let det = train_detector(&traj, 3, GammaChoice::Fixed(5), Mode::Svdd { c: 1.0 }, DEFAULT_RIDGE).unwrap();
    let rep = run_detection(&det, &traj).unwrap();
    let max_j = rep.statistics.iter().cloned().fold(0.0, f64::max);
    assert!(max_j <= det.threshold * (1.0 + 1e-9));
    assert_eq!(rep.mdr, None);
}

#[test]
fn clean_data_gives_no_false_alarms() {
    let model = plant();
    let det = train_detector(&run(&model, Some(&noise()), None, 2000, 13), 3, GammaChoice::Fixed(5), Mode::Chi2 { alpha: 0.01 }, DEFAULT_RIDGE).unwrap();
    let rep = run_detection(&det, &run(&model, None, None, 300, 14)).unwrap();
    assert_eq!(rep.far, Some(0.0));
}

#[test]
fn sensor_step_fault_is_detected_and_sweep_is_monotone() {
    let model = plant();
    let s = 3;
    let det = train_detector(&run(&model, Some(&noise()), None, 3000, 15), s, GammaChoice::Fixed(s + 2), Mode::Chi2 { alpha: 0.01 }, DEFAULT_RIDGE).unwrap();
    let onset = 100;
    let mut last = f64::INFINITY;
    for scale in [1.0, 2.0, 4.0] {
        let f = DVector::from_vec(vec![1.0, 0.0]) * scale;
        let faults = FaultProfile::sensor_step(onset, f);
        let test = run(&model, Some(&noise()), Some(&faults), 300, 16);
        let rep = run_detection(&det, &test).unwrap();
        assert_eq!(rep.mdr_after(onset), Some(0.0));
        let mdr = rep.mdr.unwrap();
        assert!(mdr <= last);
        last = mdr;
        assert!(rep.detection_delay.unwrap() < s);
    }
}

#[test]
fn window_labels_follow_any_sample_rule() {
    let model = plant();
    let det = train_detector(&run(&model, Some(&noise()), None, 500, 17), 3, GammaChoice::Fixed(5), Mode::Chi2 { alpha: 0.05 }, DEFAULT_RIDGE).unwrap();
    let faults = FaultProfile::sensor_step(20, DVector::from_element(2, 0.0));
    let traj = run(&model, Some(&noise()), Some(&faults), 40, 18);
    let rep = run_detection(&det, &traj).unwrap();
    for (pos, &faulty) in rep.window_faulty.iter().enumerate() {
        assert_eq!(faulty, pos + 3 > 20);
    }
    assert!(rep.far.is_some() && rep.mdr.is_some());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn decisions_are_consistent_and_u1_invariant(seed in 0u64..10_000, scale in 0.1f64..10.0) {
        let model = plant();
        let det = train_detector(&run(&model, Some(&noise()), None, 300, seed), 3, GammaChoice::Fixed(5), Mode::Chi2 { alpha: 0.05 }, DEFAULT_RIDGE).unwrap();
        let w = io_window(&run(&model, Some(&noise()), None, 10, seed + 1), 3, 0).unwrap();
        let a = det.evaluate(&w, 0).unwrap();
        let b = det.evaluate(&w, 0).unwrap();
        prop_assert!(a.j.to_bits() == b.j.to_bits() && a.alarm == b.alarm);
        prop_assert!(a.alarm == (a.j > det.threshold));
        let u1 = linalg::complement(&det.u2_rows.transpose());
        let add = &u1 * DVector::from_fn(u1.ncols(), |i, _| scale * (i as f64 + 0.5).sin());
        let r0 = det.residual(&w).unwrap();
        let r1 = det.residual(&(&w + &add)).unwrap();
        prop_assert!((r1 - r0).norm() <= 1e-10 * add.norm());
    }
}

#[test]
fn parity_baseline_examples() {
    let model = plant();
    let s = 3;
    let gen = baseline_parity(&model, s, None).unwrap();
    let clean = run(&model, None, None, 80, 20);
    assert!(gen.residuals(&clean).unwrap().amax() < 1e-10);
    let k = kernel_rep(&model, s).unwrap();
    let a = linalg::column_space(&k.k_gs.transpose(), 1e-10);
    let b = linalg::column_space(&gen.kernel_form().transpose(), 1e-10);
    assert!(gap_metric(&a, &b).unwrap().gap < 1e-8);

    let onset = 40;
    let faults = FaultProfile::sensor_step(onset, DVector::from_vec(vec![0.0, 1.0]));
    let faulty = run(&model, Some(&NoiseModel::isotropic(2, 2, 0.01, 0.01).unwrap()), Some(&faults), 80, 20);
    let res = gen.residuals(&faulty).unwrap();
    let before = (0..onset - s).map(|j| res.column(j).norm()).fold(0.0, f64::max);
    let after = (onset..res.ncols()).map(|j| res.column(j).norm()).fold(f64::INFINITY, f64::min);
    assert!(after > 5.0 * before);

    let short = StateSpaceModel::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -0.2, 0.3]),
        DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DMatrix::zeros(1, 1),
    )
    .unwrap();
    assert!(matches!(baseline_parity(&short, 2, None), Err(Error::EmptyKernel(_))));
}

#[test]
fn ls_baseline_zero_on_noise_free_data() {
    let model = plant();
    let (s, rho) = (3, 3);
    let gen = baseline_ls_output(&run(&model, None, None, 400, 21), s, rho, 2).unwrap();
    let test = run(&model, None, None, 100, 22);
    let (_, y) = baselines::ls_regression_data(&test, s, rho).unwrap();
    let res = gen.residuals(&test).unwrap();
    assert!(res.amax() < 1e-8 * y.amax());
    assert_eq!(gen.residual_dim(), s * 2);
}

#[test]
fn ls_baseline_matches_normal_equations() {
    let model = plant();
    let (s, rho) = (2, 4);
    let train = run(&model, Some(&noise()), None, 1000, 23);
    let gen = baseline_ls_output(&train, s, rho, 2).unwrap();
    let (z, y) = baselines::ls_regression_data(&train, s, rho).unwrap();
    let dim = z.nrows();
    let gram = &z * z.transpose() + DMatrix::identity(dim, dim) * gen.ridge;
    let oracle = gram.cholesky().unwrap().solve(&(&z * y.transpose())).transpose();
    assert!((&gen.phi - &oracle).amax() < 1e-8 * oracle.amax().max(1.0));
    assert!(baseline_ls_output(&train, s, 2, 2).is_err());
}

#[test]
fn dimension_comparison_counts() {
    let d = dimension_comparison(3, 4, 2, 2);
    assert_eq!(d, DimensionComparison { projection_dim: 12, ls_dim: 6 });
    assert!(d.projection_dim > d.ls_dim);
}

#[test]
fn calibration_statistic_is_centered() {
    let res = DMatrix::from_fn(2, 50, |i, j| ((i * 7 + j * 3) as f64).sin());
    let cal = ResidualCalibration::fit(&res, 0.05, DEFAULT_RIDGE).unwrap();
    assert!(cal.statistic(&cal.mean) == 0.0);
    assert!((cal.threshold - chi2_quantile(0.05, 2).unwrap()).abs() < 1e-12);
}

#[test]
fn kalman_innovation_detector_sanity() {
    let model = plant();
    let nm = noise();
    let k = kalman_gain(&model, &nm).unwrap();
    assert!(k.sigma_r.trace() > 0.0);
}
