//! Delete-one jackknife over the whole two-step pipeline.
//!
//! Each deletion reuses the full-sample projection: the first step is updated
//! with the closed-form leave-one-out correction and only the second step is
//! re-solved, warm-started at the full-sample estimate.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::firststep::FirstStepFit;
use crate::gmm::{ObsWeights, SecondStep};

#[derive(Clone, Debug)]
pub struct JackknifeResult {
    pub theta_hat: DVector<f64>,
    /// `(n - 1)(θ̂^(·) - θ̂)`.
    pub bias_hat: DVector<f64>,
    /// `(n - 1)/n Σ_ℓ (θ̂^(ℓ) - θ̂^(·))(θ̂^(ℓ) - θ̂^(·))ᵀ`.
    pub var_hat: DMatrix<f64>,
    /// Row `ℓ` is the estimate with observation `ℓ` deleted.
    pub theta_loo: DMatrix<f64>,
    pub theta_dot: DVector<f64>,
}

impl JackknifeResult {
    /// Assembles bias and variance from the leave-one-out rows, accumulating in row order.
    pub fn from_loo(theta_hat: DVector<f64>, theta_loo: DMatrix<f64>) -> Self {
        let (n, d) = theta_loo.shape();
        let nf = n as f64;
        let mut theta_dot = DVector::zeros(d);
        for l in 0..n {
            for j in 0..d {
                theta_dot[j] += theta_loo[(l, j)];
            }
        }
        theta_dot /= nf;
        let mut var_hat = DMatrix::zeros(d, d);
        let mut dev = DVector::zeros(d);
        for l in 0..n {
            for j in 0..d {
                dev[j] = theta_loo[(l, j)] - theta_dot[j];
            }
            var_hat.ger(1.0, &dev, &dev, 1.0);
        }
        var_hat *= (nf - 1.0) / nf;
        let bias_hat = (&theta_dot - &theta_hat) * (nf - 1.0);
        Self {
            theta_hat,
            bias_hat,
            var_hat,
            theta_loo,
            theta_dot,
        }
    }

    pub fn n(&self) -> usize {
        self.theta_loo.nrows()
    }

    pub fn corrected(&self) -> DVector<f64> {
        &self.theta_hat - &self.bias_hat
    }
}

/// Runs all `n` deletions in parallel and gathers them by index.
///
/// `theta_hat` must be the full-sample second-step estimate at `fit.mu_hat`.
/// Any failed deletion aborts the whole computation with the list of failures,
/// since dropping a deletion would break the `n - 1` scaling.
pub fn jackknife_two_step(
    step: &dyn SecondStep,
    data: &Dataset,
    fit: &FirstStepFit,
    theta_hat: &DVector<f64>,
) -> Result<JackknifeResult> {
    let n = data.n();
    let d = step.dim_theta();
    if fit.n() != n {
        return Err(Error::Shape(format!(
            "first-step fit has {} rows, sample has {n}",
            fit.n()
        )));
    }
    if theta_hat.len() != d {
        return Err(Error::Shape(format!(
            "theta_hat has {} entries, second step has {d}",
            theta_hat.len()
        )));
    }
    if n < d + 2 {
        return Err(Error::InvalidInput(format!(
            "jackknife needs n >= d_theta + 2, got n = {n}, d_theta = {d}"
        )));
    }
    let projector = fit.projector();
    let mu = fit.mu_hat.as_slice();
    let r = data.r().as_slice();

    let rows: Vec<Result<DVector<f64>>> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, ell| {
                projector.loo_fitted_into(mu, r, ell, buf)?;
                step.solve(
                    data,
                    buf,
                    ObsWeights::unit().minus_one_at(ell),
                    Some(theta_hat.as_slice()),
                )
            },
        )
        .collect();

    let failed: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter_map(|(l, r)| r.is_err().then_some(l))
        .collect();
    if !failed.is_empty() {
        return Err(Error::JackknifeFailed { failed });
    }
    let mut theta_loo = DMatrix::zeros(n, d);
    for (l, row) in rows.into_iter().enumerate() {
        let row = row.expect("failures handled above");
        theta_loo.row_mut(l).copy_from(&row.transpose());
    }
    Ok(JackknifeResult::from_loo(theta_hat.clone(), theta_loo))
}

/// A smooth scalar functional `φ(θ)` with its gradient.
pub trait Functional: Sync {
    fn dim(&self) -> usize;
    fn value(&self, theta: &[f64]) -> f64;
    fn gradient(&self, theta: &[f64], out: &mut [f64]);

    fn gradient_vec(&self, theta: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        self.gradient(theta, g.as_mut_slice());
        g
    }
}

/// `φ(θ) = aᵀθ`.
#[derive(Clone, Debug)]
pub struct LinearFunctional {
    pub coef: Vec<f64>,
}

impl LinearFunctional {
    /// The `j`-th coordinate of a `dim`-vector.
    pub fn coordinate(dim: usize, j: usize) -> Self {
        let mut coef = vec![0.0; dim];
        coef[j] = 1.0;
        Self { coef }
    }
}

impl Functional for LinearFunctional {
    fn dim(&self) -> usize {
        self.coef.len()
    }
    fn value(&self, theta: &[f64]) -> f64 {
        self.coef.iter().zip(theta).map(|(a, t)| a * t).sum()
    }
    fn gradient(&self, _theta: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.coef);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionMethod {
    /// `φ(θ̂ - B̂)`.
    PlugIn,
    /// `φ(θ̂) - φ̇(θ̂) B̂`, variance `φ̇ V̂ φ̇ᵀ`.
    Linearized,
    /// Jackknife applied to `φ(θ̂^(ℓ))` directly.
    Direct,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrectedValue {
    pub method: CorrectionMethod,
    /// `φ(θ̂)`.
    pub estimate: f64,
    /// Bias estimate for `φ(θ̂)`; `corrected = estimate - bias`.
    pub bias: f64,
    pub corrected: f64,
    pub variance: f64,
}

pub fn bias_correct_functional(
    jk: &JackknifeResult,
    phi: &dyn Functional,
    method: CorrectionMethod,
) -> Result<CorrectedValue> {
    let d = jk.theta_hat.len();
    if phi.dim() != d {
        return Err(Error::Shape(format!(
            "functional expects {} parameters, estimate has {d}",
            phi.dim()
        )));
    }
    let th = jk.theta_hat.as_slice();
    let estimate = phi.value(th);
    let grad = phi.gradient_vec(th);
    let delta_var = (grad.transpose() * &jk.var_hat * &grad)[(0, 0)];
    let (corrected, variance) = match method {
        CorrectionMethod::PlugIn => (phi.value(jk.corrected().as_slice()), delta_var),
        CorrectionMethod::Linearized => (estimate - grad.dot(&jk.bias_hat), delta_var),
        CorrectionMethod::Direct => {
            let n = jk.n();
            let nf = n as f64;
            let vals: Vec<f64> = (0..n)
                .map(|l| {
                    let row: Vec<f64> = jk.theta_loo.row(l).iter().copied().collect();
                    phi.value(&row)
                })
                .collect();
            let dot = vals.iter().sum::<f64>() / nf;
            let var = vals.iter().map(|v| (v - dot).powi(2)).sum::<f64>() * (nf - 1.0) / nf;
            (estimate - (nf - 1.0) * (dot - estimate), var)
        }
    };
    Ok(CorrectedValue {
        method,
        estimate,
        bias: estimate - corrected,
        corrected,
        variance,
    })
}
