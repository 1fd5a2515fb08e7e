mod common;

use common::{dataset, RegressionMoment};
use nalgebra::{DMatrix, DVector};
use twostep::data::{Dataset, Obs};
use twostep::error::Error;
use twostep::gmm::{
    check_jacobian, solve_gmm, GmmConfig, MeanMoment, MomentModel, SamplePoint, Weighting,
};

/// Over-identified: `m = (y_1 - e^θ, y_2 - e^θ)`.
struct ExpMoment;

impl MomentModel for ExpMoment {
    fn dim_theta(&self) -> usize {
        1
    }
    fn dim_moment(&self) -> usize {
        2
    }
    fn eval(&self, obs: Obs<'_>, _mu: f64, theta: &[f64], out: &mut [f64]) {
        out[0] = obs.y[0] - theta[0].exp();
        out[1] = obs.y[1] - theta[0].exp();
    }
    fn jac_theta(&self, _obs: Obs<'_>, _mu: f64, theta: &[f64], out: &mut [f64]) {
        out[0] = -theta[0].exp();
        out[1] = -theta[0].exp();
    }
    fn deriv_mu(&self, _obs: Obs<'_>, _mu: f64, _theta: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

fn objective(model: &dyn MomentModel, data: &Dataset, mu: &[f64], omega: &DMatrix<f64>, theta: &[f64]) -> f64 {
    let n = data.n();
    let mut g = DVector::zeros(model.dim_moment());
    let mut buf = vec![0.0; model.dim_moment()];
    for i in 0..n {
        model.eval(data.obs(i), mu[i], theta, &mut buf);
        for (a, b) in g.iter_mut().zip(&buf) {
            *a += b / n as f64;
        }
    }
    (g.transpose() * omega * &g)[(0, 0)]
}

fn positive_sample() -> Dataset {
    let d = dataset(21, 300, 3, 2, false);
    let y = d.y_matrix().map(|v| v.abs() + 0.5);
    Dataset::new(y, d.r().clone(), d.z().clone()).unwrap()
}

#[test]
fn matches_grid_search_oracle() {
    let data = positive_sample();
    let mu = vec![0.0; data.n()];
    let omega = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
    let cfg = GmmConfig {
        weight: Weighting::matrix(omega.clone()).unwrap(),
        ..GmmConfig::default()
    };
    let sol = solve_gmm(&ExpMoment, &data, &mu, &cfg).unwrap();
    assert!(sol.converged);

    // Coarse grid, then golden-section refinement around the best cell.
    let f = |t: f64| objective(&ExpMoment, &data, &mu, &omega, &[t]);
    let grid: Vec<f64> = (0..=4000).map(|i| -2.0 + i as f64 * 1e-3).collect();
    let best = grid.iter().copied().min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
    let (mut a, mut b) = (best - 1e-3, best + 1e-3);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let oracle = 0.5 * (a + b);
    assert!((sol.theta_hat[0] - oracle).abs() < 1e-7, "{} vs {oracle}", sol.theta_hat[0]);
    assert!(sol.objective_value <= f(oracle) + 1e-14);
}

#[test]
fn weight_scale_does_not_move_the_solution() {
    let data = positive_sample();
    let mu = vec![0.0; data.n()];
    let omega = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]);
    let solve = |w: DMatrix<f64>| {
        let cfg = GmmConfig {
            weight: Weighting::matrix(w).unwrap(),
            ..GmmConfig::default()
        };
        solve_gmm(&ExpMoment, &data, &mu, &cfg).unwrap().theta_hat[0]
    };
    let a = solve(omega.clone());
    let b = solve(omega * 1000.0);
    assert!((a - b).abs() < 1e-10);
}

#[test]
fn just_identified_ignores_the_weight_matrix() {
    let data = dataset(22, 250, 4, 1, false);
    let fit = twostep::firststep::fit_least_squares(&data).unwrap();
    let mu = fit.mu_hat.as_slice();
    let id = solve_gmm(&RegressionMoment, &data, mu, &GmmConfig::default()).unwrap();
    let cfg = GmmConfig {
        weight: Weighting::matrix(DMatrix::from_row_slice(2, 2, &[5.0, 1.0, 1.0, 0.4])).unwrap(),
        ..GmmConfig::default()
    };
    let other = solve_gmm(&RegressionMoment, &data, mu, &cfg).unwrap();
    assert!((id.theta_hat - other.theta_hat).amax() < 1e-9);
    assert!(id.objective_value < 1e-20);
}

#[test]
fn mean_moment_recovers_column_means() {
    let data = dataset(23, 120, 2, 3, false);
    let mu = vec![0.0; data.n()];
    let sol = solve_gmm(&MeanMoment { dim: 3 }, &data, &mu, &GmmConfig::default()).unwrap();
    let y = data.y_matrix();
    for j in 0..3 {
        assert!((sol.theta_hat[j] - y.column(j).mean()).abs() < 1e-12);
    }
}

#[test]
fn invalid_weight_matrices_are_rejected() {
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    assert!(Weighting::matrix(asym).is_err());
    let indef = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    assert!(Weighting::matrix(indef).is_err());
}

#[test]
fn dimension_mismatch_is_a_config_error() {
    let data = positive_sample();
    let mu = vec![0.0; data.n()];
    let cfg = GmmConfig {
        theta_init: Some(DVector::zeros(3)),
        ..GmmConfig::default()
    };
    assert!(matches!(solve_gmm(&ExpMoment, &data, &mu, &cfg), Err(Error::Config(_))));
}

#[test]
fn shipped_test_moments_have_consistent_derivatives() {
    let points: Vec<SamplePoint> = (0..200)
        .map(|i| {
            let t = i as f64 / 200.0;
            SamplePoint {
                y: vec![1.2 - t, 0.3 + t],
                r: t,
                mu: 0.1 + 0.8 * t,
                theta: vec![0.5 - t, 0.2 + t],
            }
        })
        .collect();
    let rep = check_jacobian(&RegressionMoment, &points);
    assert!(rep.passed, "{rep:?}");
    let mean_points: Vec<SamplePoint> = points
        .iter()
        .map(|p| SamplePoint {
            theta: p.theta.clone(),
            ..p.clone()
        })
        .collect();
    assert!(check_jacobian(&MeanMoment { dim: 2 }, &mean_points).passed);
}
