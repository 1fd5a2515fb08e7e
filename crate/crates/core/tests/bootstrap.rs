mod common;

use common::{dataset, hat_matrix, naive_var_star, RegressionMoment};
use nalgebra::DVector;
use twostep::bootstrap::{
    bootstrap_draw, bootstrap_statistic, draw_weights, empirical_quantile, wild_first_step,
    BootstrapOptions, WeightDistribution,
};
use twostep::data::Dataset;
use twostep::error::Error;
use twostep::firststep::{fit_least_squares, FirstStepFit};
use twostep::gmm::{GmmConfig, GmmStep, MeanMoment, ObsWeights, SecondStep};
use twostep::inv_sqrt_floored;
use twostep::jackknife::{jackknife_two_step, Functional, JackknifeResult, LinearFunctional};
use twostep::rng::Stream;

fn setup(step: &dyn SecondStep, data: &Dataset) -> (FirstStepFit, JackknifeResult) {
    let fit = fit_least_squares(data).unwrap();
    let th = step.solve(data, fit.mu_hat.as_slice(), ObsWeights::unit(), None).unwrap();
    let jk = jackknife_two_step(step, data, &fit, &th).unwrap();
    (fit, jk)
}

#[test]
fn shipped_laws_have_exact_moments() {
    for w in [WeightDistribution::Rademacher, WeightDistribution::Webb] {
        let m = w.moments();
        assert!((m.mean - 1.0).abs() < 1e-12, "{w}");
        assert!((m.variance - 1.0).abs() < 1e-12, "{w}");
        assert!(m.third_central.abs() < 1e-12, "{w}");
    }
}

#[test]
fn mammen_weights_are_rejected() {
    let s5 = 5f64.sqrt();
    let support = vec![
        (1.0 - (s5 - 1.0) / 2.0, (s5 + 1.0) / (2.0 * s5)),
        (1.0 + (s5 + 1.0) / 2.0, (s5 - 1.0) / (2.0 * s5)),
    ];
    let err = WeightDistribution::custom(support).unwrap_err();
    assert!(matches!(err, Error::InvalidDistribution { moment: "third central moment", .. }));
}

#[test]
fn custom_weights_parse_and_validate() {
    let w: WeightDistribution = "custom:0@0.5,2@0.5".parse().unwrap();
    assert_eq!(w.moments(), WeightDistribution::Rademacher.moments());
    assert!("custom:0@0.4,2@0.6".parse::<WeightDistribution>().is_err());
    assert!("gamma".parse::<WeightDistribution>().is_err());
}

#[test]
fn sampled_weights_follow_the_law() {
    let w = draw_weights(&WeightDistribution::Webb, 60_000, &Stream::new(4));
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    assert!((mean - 1.0).abs() < 0.02);
    assert!((var - 1.0).abs() < 0.03);
}

#[test]
fn wild_first_step_special_cases() {
    let data = dataset(41, 80, 6, 1, false);
    let fit = fit_least_squares(&data).unwrap();
    let n = data.n();
    let (r1, mu1) = wild_first_step(&fit, data.r(), &vec![1.0; n]).unwrap();
    assert_eq!(mu1, fit.mu_hat);
    assert_eq!(r1, fit.mu_hat);
    let (_, mu2) = wild_first_step(&fit, data.r(), &vec![2.0; n]).unwrap();
    assert!((mu2 - &fit.mu_hat).amax() < 1e-10);

    let omega = draw_weights(&WeightDistribution::Rademacher, n, &Stream::new(9));
    let (r_star, mu_star) = wild_first_step(&fit, data.r(), &omega).unwrap();
    let refit = hat_matrix(data.z()) * &r_star;
    assert!((mu_star - refit).amax() < 1e-10);
}

#[test]
fn unit_weights_reproduce_the_sample() {
    let data = dataset(42, 70, 5, 1, false);
    let step = GmmStep::new(&RegressionMoment, GmmConfig::default());
    let (fit, jk) = setup(&step, &data);
    let draw = bootstrap_draw(&step, &data, &fit, &jk.theta_hat, vec![1.0; data.n()]).unwrap();
    assert_eq!(draw.theta_star, jk.theta_hat);
    // With unit multipliers r* = μ̂, so the first step has nothing to delete
    // and only the second-step multiplier of ℓ drops.
    let mut loo = Vec::new();
    for ell in 0..data.n() {
        let th = step
            .solve(&data, fit.mu_hat.as_slice(), ObsWeights::unit().minus_one_at(ell), None)
            .unwrap();
        loo.push(th);
    }
    let nf = data.n() as f64;
    let dot = loo.iter().fold(DVector::zeros(2), |a, t| a + t) / nf;
    let bias = (&dot - &jk.theta_hat) * (nf - 1.0);
    assert!((draw.bias_star.clone() - bias).amax() < 1e-9);
    let (inv, _) = inv_sqrt_floored(&draw.var_star, 1e-12);
    let expected = -(inv * &draw.bias_star);
    assert!((draw.t_star - expected).amax() < 1e-9);
}

#[test]
fn translation_equivariance_of_the_mean() {
    let data = dataset(43, 60, 3, 1, false);
    let shifted = Dataset::new(data.y_matrix().add_scalar(10.0), data.r().clone(), data.z().clone()).unwrap();
    let model = MeanMoment { dim: 1 };
    let step = GmmStep::new(&model, GmmConfig::default());
    let (fa, ja) = setup(&step, &data);
    let (fb, jb) = setup(&step, &shifted);
    let omega = draw_weights(&WeightDistribution::Webb, data.n(), &Stream::new(1));
    let a = bootstrap_draw(&step, &data, &fa, &ja.theta_hat, omega.clone()).unwrap();
    let b = bootstrap_draw(&step, &shifted, &fb, &jb.theta_hat, omega).unwrap();
    assert!((b.theta_star[0] - a.theta_star[0] - 10.0).abs() < 1e-9);
    assert!((b.bias_star[0] - a.bias_star[0]).abs() < 1e-8);
    assert!((b.var_star[(0, 0)] - a.var_star[(0, 0)]).abs() < 1e-10);
    assert!((b.t_star[0] - a.t_star[0]).abs() < 1e-6);
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let data = dataset(44, 80, 6, 1, false);
    let step = GmmStep::new(&RegressionMoment, GmmConfig::default());
    let (fit, jk) = setup(&step, &data);
    let opts = BootstrapOptions {
        draws: 60,
        weights: WeightDistribution::Rademacher,
        seed: 17,
    };
    let phi = LinearFunctional::coordinate(2, 1);
    let json = |workers: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
        pool.install(|| {
            let run = bootstrap_statistic(&step, &data, &fit, &jk, &opts).unwrap();
            run.report(&[("slope", &phi as &dyn Functional)], 0.05).unwrap().to_json()
        })
    };
    let one = json(1);
    assert_eq!(one, json(4));
    assert_eq!(one, json(8));
}

#[test]
fn deleting_the_whole_weight_changes_the_variance() {
    let data = dataset(45, 120, 8, 1, false);
    let step = GmmStep::new(&RegressionMoment, GmmConfig::default());
    let (fit, jk) = setup(&step, &data);
    let omega = draw_weights(&WeightDistribution::Rademacher, data.n(), &Stream::new(3));
    let good = bootstrap_draw(&step, &data, &fit, &jk.theta_hat, omega.clone()).unwrap();
    let naive = naive_var_star(&step, &data, &fit, &jk.theta_hat, &omega);
    let rel = (naive[(1, 1)] - good.var_star[(1, 1)]).abs() / good.var_star[(1, 1)];
    assert!(rel > 0.05, "relative difference {rel}");
}

#[test]
fn too_few_draws_is_a_config_error() {
    let data = dataset(46, 40, 3, 1, false);
    let model = MeanMoment { dim: 1 };
    let step = GmmStep::new(&model, GmmConfig::default());
    let (fit, jk) = setup(&step, &data);
    let opts = BootstrapOptions {
        draws: 10,
        ..BootstrapOptions::default()
    };
    assert!(matches!(
        bootstrap_statistic(&step, &data, &fit, &jk, &opts),
        Err(Error::Config(_))
    ));
}

#[test]
fn studentized_draws_are_roughly_standard() {
    let data = dataset(47, 1000, 5, 1, false);
    let model = MeanMoment { dim: 1 };
    let step = GmmStep::new(&model, GmmConfig::default());
    let (fit, jk) = setup(&step, &data);
    let opts = BootstrapOptions {
        draws: 300,
        weights: WeightDistribution::Rademacher,
        seed: 5,
    };
    let run = bootstrap_statistic(&step, &data, &fit, &jk, &opts).unwrap();
    let t = run.scalar_draws(&LinearFunctional::coordinate(1, 0)).unwrap();
    let n = t.len() as f64;
    let mean = t.iter().sum::<f64>() / n;
    let var = t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 0.2, "mean {mean}");
    assert!((0.75..1.3).contains(&var), "variance {var}");
    let mut sorted = t.clone();
    sorted.sort_by(f64::total_cmp);
    let lo = empirical_quantile(&sorted, 0.025).unwrap();
    let hi = empirical_quantile(&sorted, 0.975).unwrap();
    assert!(lo < -1.4 && hi > 1.4);
}
