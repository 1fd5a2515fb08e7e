//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_chacha::ChaCha8Rng;
use twostep::data::{Dataset, Obs};
use twostep::gmm::MomentModel;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Intercept plus `k - 1` Gaussian columns. With `deficient`, the last two
/// columns are copies of linear combinations of earlier ones.
pub fn design<R: Rng>(rng: &mut R, n: usize, k: usize, deficient: bool) -> DMatrix<f64> {
    let mut z = DMatrix::from_fn(n, k, |_, _| normal(rng));
    z.column_mut(0).fill(1.0);
    if deficient && k >= 4 {
        let c = z.column(1) * 2.0 - z.column(2);
        z.set_column(k - 1, &c);
        let d = z.column(1).clone_owned();
        z.set_column(k - 2, &d);
    }
    z
}

/// Sample with outcome block `y` (`dim_y` columns), first-step response `r`
/// linear in `Z` plus noise.
pub fn dataset(seed: u64, n: usize, k: usize, dim_y: usize, deficient: bool) -> Dataset {
    let mut g = rng(seed);
    let z = design(&mut g, n, k, deficient);
    let beta = DVector::from_fn(k, |_, _| normal(&mut g) * 0.3);
    let r = &z * beta + DVector::from_fn(n, |_, _| normal(&mut g));
    let y = DMatrix::from_fn(n, dim_y, |i, j| 1.0 + 0.5 * r[i] * (j as f64 + 1.0) + normal(&mut g));
    Dataset::new(y, r, z).unwrap()
}

/// Explicit hat matrix via the SVD pseudo-inverse.
pub fn hat_matrix(z: &DMatrix<f64>) -> DMatrix<f64> {
    let pinv = z.clone().pseudo_inverse(1e-10).unwrap();
    z * pinv
}

/// Fitted values for all rows after refitting without row `ell`.
pub fn refit_without(z: &DMatrix<f64>, r: &DVector<f64>, ell: usize) -> DVector<f64> {
    let keep: Vec<usize> = (0..z.nrows()).filter(|&i| i != ell).collect();
    let zs = z.select_rows(&keep);
    let rs = r.select_rows(&keep);
    let beta = zs.pseudo_inverse(1e-10).unwrap() * rs;
    z * beta
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// `m = y_1 μ - θ`: a just-identified moment that depends on the first step.
pub struct ProductMoment;

impl MomentModel for ProductMoment {
    fn dim_theta(&self) -> usize {
        1
    }
    fn dim_moment(&self) -> usize {
        1
    }
    fn eval(&self, obs: Obs<'_>, mu: f64, theta: &[f64], out: &mut [f64]) {
        out[0] = obs.y[0] * mu - theta[0];
    }
    fn jac_theta(&self, _obs: Obs<'_>, _mu: f64, _theta: &[f64], out: &mut [f64]) {
        out[0] = -1.0;
    }
    fn deriv_mu(&self, obs: Obs<'_>, _mu: f64, _theta: &[f64], out: &mut [f64]) {
        out[0] = obs.y[0];
    }
    fn deriv_mu2(&self, _obs: Obs<'_>, _mu: f64, _theta: &[f64], out: &mut [f64]) -> bool {
        out[0] = 0.0;
        true
    }
}

/// `m = (y_1 - θ_1 - θ_2 μ) (1, μ)ᵀ`: least squares of `y_1` on the fitted value.
pub struct RegressionMoment;

impl MomentModel for RegressionMoment {
    fn dim_theta(&self) -> usize {
        2
    }
    fn dim_moment(&self) -> usize {
        2
    }
    fn eval(&self, obs: Obs<'_>, mu: f64, theta: &[f64], out: &mut [f64]) {
        let e = obs.y[0] - theta[0] - theta[1] * mu;
        out[0] = e;
        out[1] = e * mu;
    }
    fn jac_theta(&self, _obs: Obs<'_>, mu: f64, _theta: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&[-1.0, -mu, -mu, -mu * mu]);
    }
    fn deriv_mu(&self, obs: Obs<'_>, mu: f64, theta: &[f64], out: &mut [f64]) {
        let e = obs.y[0] - theta[0] - theta[1] * mu;
        out[0] = -theta[1];
        out[1] = e - theta[1] * mu;
    }
    fn deriv_mu2(&self, _obs: Obs<'_>, _mu: f64, theta: &[f64], out: &mut [f64]) -> bool {
        out[0] = 0.0;
        out[1] = -2.0 * theta[1];
        true
    }
}

/// `V̂*` when the jackknife under the bootstrap removes observation `ℓ`
/// entirely (multiplier set to zero) instead of lowering it by one. This is
/// the inconsistent variant; it exists only to show the difference.
pub fn naive_var_star(
    step: &dyn twostep::gmm::SecondStep,
    data: &Dataset,
    fit: &twostep::firststep::FirstStepFit,
    theta_hat: &DVector<f64>,
    omega: &[f64],
) -> DMatrix<f64> {
    use twostep::gmm::ObsWeights;
    let n = data.n();
    let (r_star, mu_star) = twostep::bootstrap::wild_first_step(fit, data.r(), omega).unwrap();
    let theta_star = step
        .solve(data, mu_star.as_slice(), ObsWeights::from_slice(omega), Some(theta_hat.as_slice()))
        .unwrap();
    let mut buf = vec![0.0; n];
    let mut loo = Vec::new();
    for ell in 0..n {
        if omega[ell] == 0.0 {
            continue;
        }
        fit.projector()
            .loo_fitted_into(mu_star.as_slice(), r_star.as_slice(), ell, &mut buf)
            .unwrap();
        let mut w = omega.to_vec();
        w[ell] = 0.0;
        let th = step
            .solve(data, &buf, ObsWeights::from_slice(&w), Some(theta_star.as_slice()))
            .unwrap();
        loo.push((omega[ell], th));
    }
    let total: f64 = omega.iter().sum();
    let d = theta_hat.len();
    let mut dot = DVector::zeros(d);
    for (wl, th) in &loo {
        dot.axpy(*wl, th, 1.0);
    }
    dot /= total;
    let mut v = DMatrix::zeros(d, d);
    for (wl, th) in &loo {
        let dev = th - &dot;
        v.ger(*wl, &dev, &dev, 1.0);
    }
    v * ((n as f64 - 1.0) / n as f64)
}
