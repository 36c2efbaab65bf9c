mod common;

use common::discrete_kalman;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use roughkit::filtering::{
    fit_candidate, kalman_bucy, penalty, robust_confidence_interval_from, robust_expectation_from, simulate_pair,
    CandidateFit, Coefficients, LinearGaussianModel, PenaltyConfig, PiecewiseCoefficients,
};
use roughkit::RoughPath;

fn scalar_model(alpha: f64, sigma: f64, c: f64, rho: f64, mu0: f64, s0: f64) -> LinearGaussianModel {
    LinearGaussianModel::scalar(Coefficients::scalar(alpha, sigma, c, rho), mu0, s0).unwrap()
}

fn planar_model(a: f64, rho: f64) -> LinearGaussianModel {
    let coeffs = Coefficients::new(
        DMatrix::from_row_slice(2, 2, &[-0.5, a, -a, -0.3]),
        DMatrix::from_row_slice(2, 2, &[0.8, 0.0, 0.2, 0.6]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.5]),
        DMatrix::from_row_slice(2, 1, &[rho, 0.0]),
    )
    .unwrap();
    LinearGaussianModel::new(PiecewiseCoefficients::constant(coeffs), DVector::from_vec(vec![0.1, -0.2]), DMatrix::identity(2, 2))
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn covariance_stays_positive_semidefinite(a in -1.0f64..1.0, rho in -0.9f64..0.9, seed in 0u64..1000) {
        let model = planar_model(a, rho);
        let (_, obs) = simulate_pair(&model, seed, 256, 2.0).unwrap();
        for s in kalman_bucy(&model, &obs).unwrap() {
            prop_assert!((&s.r - s.r.transpose()).amax() <= 1e-12);
            let eig = s.r.clone().symmetric_eigen().eigenvalues;
            prop_assert!(eig.min() >= -1e-10);
        }
    }

    #[test]
    fn interval_contains_the_best_fit(
        c in 0.5f64..2.0,
        k1 in 0.1f64..10.0,
        k2 in 1.0f64..3.0,
        seed in 0u64..1000,
    ) {
        let truth = scalar_model(-0.5, 1.0, c, 0.2, 0.0, 1.0);
        let (_, obs) = simulate_pair(&truth, seed, 256, 1.0).unwrap();
        let rp = RoughPath::canonical_lift(&obs);
        let cfg = PenaltyConfig::new(k1, k2).unwrap();
        let fits: Vec<CandidateFit> = [0.5, 1.0, 2.0]
            .iter()
            .map(|s| fit_candidate(&scalar_model(-0.5, 1.0, s * c, 0.2, 0.0, 1.0), &rp, &cfg, 1.0).unwrap())
            .collect();
        let (lo, hi) = robust_confidence_interval_from(&|x| x[0], &fits, &cfg).unwrap();
        let best = fits.iter().min_by(|a, b| a.penalty.total_cmp(&b.penalty)).unwrap();
        prop_assert!(lo <= best.q[0] + 1e-12 && best.q[0] <= hi + 1e-12);
        let hi_all = fits.iter().map(|f| f.q[0]).fold(f64::NEG_INFINITY, f64::max);
        let lo_all = fits.iter().map(|f| f.q[0]).fold(f64::INFINITY, f64::min);
        prop_assert!(lo >= lo_all - 1e-12 && hi <= hi_all + 1e-12);
    }
}

#[test]
fn static_riccati_closed_form() {
    let model = scalar_model(0.0, 0.0, 1.5, 0.0, 0.3, 2.0);
    let (_, obs) = simulate_pair(&model, 4, 4096, 1.0).unwrap();
    let states = kalman_bucy(&model, &obs).unwrap();
    for s in states.iter().step_by(256) {
        let exact = 2.0 / (1.0 + 2.0 * 1.5 * 1.5 * s.t);
        assert!((s.r[(0, 0)] - exact).abs() < 2e-3, "t={}: {} vs {exact}", s.t, s.r[(0, 0)]);
    }
}

#[test]
fn filter_tracks_the_discrete_predictor() {
    let model = scalar_model(-1.0, 1.0, 1.0, 0.3, 0.5, 1.0);
    let (_, obs) = simulate_pair(&model, 8, 2048, 1.0).unwrap();
    let dt = 1.0 / 2048.0;
    let dy: Vec<f64> = (0..2048).map(|k| obs.value(k + 1)[0] - obs.value(k)[0]).collect();
    let oracle = discrete_kalman(-1.0, 1.0, 1.0, 0.3, 0.5, 1.0, &dy, dt);
    let states = kalman_bucy(&model, &obs).unwrap();
    let gap = states.iter().zip(&oracle).map(|(s, o)| (s.q[0] - o).abs()).fold(0.0, f64::max);
    assert!(gap < 5e-3, "{gap}");
}

#[test]
fn wide_penalty_scale_spans_the_candidate_means() {
    let (_, obs) = simulate_pair(&scalar_model(-0.5, 1.0, 1.0, 0.0, 0.0, 1.0), 2, 256, 1.0).unwrap();
    let rp = RoughPath::canonical_lift(&obs);
    let cfg = PenaltyConfig::new(1e9, 1.0).unwrap();
    let fits: Vec<CandidateFit> = [0.5, 1.0, 2.0]
        .iter()
        .map(|c| fit_candidate(&scalar_model(-0.5, 1.0, *c, 0.0, 0.0, 1.0), &rp, &cfg, 1.0).unwrap())
        .collect();
    let (lo, hi) = robust_confidence_interval_from(&|x| x[0], &fits, &cfg).unwrap();
    let means: Vec<f64> = fits.iter().map(|f| f.q[0]).collect();
    let max = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = means.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((hi - max).abs() < 1e-6 && (lo - min).abs() < 1e-6);
}

#[test]
fn singleton_is_the_kalman_mean() {
    let model = scalar_model(-0.4, 1.0, 1.2, 0.2, 0.3, 0.8);
    let (_, obs) = simulate_pair(&model, 1, 512, 1.0).unwrap();
    let rp = RoughPath::canonical_lift(&obs);
    for k1 in [0.1, 1.0, 1e6] {
        let cfg = PenaltyConfig::new(k1, 1.5).unwrap();
        let fit = fit_candidate(&model, &rp, &cfg, 1.0).unwrap();
        let robust = robust_expectation_from(&|x| x[0], std::slice::from_ref(&fit), &cfg).unwrap();
        let kalman = kalman_bucy(&model, &obs).unwrap().last().unwrap().q[0];
        assert!((robust - kalman).abs() < 1e-12);
    }
}

#[test]
fn inadmissible_candidates_are_skipped() {
    let (_, obs) = simulate_pair(&scalar_model(0.0, 1.0, 1.0, 0.0, 0.0, 1.0), 3, 64, 1.0).unwrap();
    let cfg = PenaltyConfig::new(1.0, 1.0).unwrap();
    assert_eq!(penalty(&scalar_model(0.0, 1.0, 1.0, 1.5, 0.0, 1.0), &obs, &cfg).unwrap(), f64::INFINITY);
    let rp = RoughPath::canonical_lift(&obs);
    let bad = fit_candidate(&scalar_model(0.0, 1.0, 1.0, 1.5, 0.0, 1.0), &rp, &cfg, 1.0).unwrap();
    assert!(robust_expectation_from(&|x| x[0], &[bad], &cfg).is_err());
}
