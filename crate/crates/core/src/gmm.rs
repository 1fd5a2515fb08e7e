//! Second-step GMM: the moment-function interface, the weighted quadratic-form
//! objective and a Gauss-Newton solver.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::{Dataset, Obs};
use crate::error::{Error, Result};
use crate::linalg::min_eigenvalue;

/// Estimating equation `m(w, μ, θ)`.
///
/// Every callback writes into a caller-provided buffer and must be pure.
/// Jacobians are row-major `d_m x d_θ`.
pub trait MomentModel: Sync {
    fn dim_theta(&self) -> usize;
    fn dim_moment(&self) -> usize;
    fn eval(&self, obs: Obs<'_>, mu: f64, theta: &[f64], out: &mut [f64]);
    fn jac_theta(&self, obs: Obs<'_>, mu: f64, theta: &[f64], out: &mut [f64]);
    fn deriv_mu(&self, obs: Obs<'_>, mu: f64, theta: &[f64], out: &mut [f64]);

    /// Second derivative in `μ`. Returns `false` when the model does not provide it.
    fn deriv_mu2(&self, obs: Obs<'_>, mu: f64, theta: &[f64], out: &mut [f64]) -> bool {
        let _ = (obs, mu, theta, out);
        false
    }
}

/// `m(w, μ, θ) = y - θ`, one moment per outcome column.
#[derive(Clone, Copy, Debug)]
pub struct MeanMoment {
    pub dim: usize,
}

impl MomentModel for MeanMoment {
    fn dim_theta(&self) -> usize {
        self.dim
    }
    fn dim_moment(&self) -> usize {
        self.dim
    }
    fn eval(&self, obs: Obs<'_>, _mu: f64, theta: &[f64], out: &mut [f64]) {
        for j in 0..self.dim {
            out[j] = obs.y[j] - theta[j];
        }
    }
    fn jac_theta(&self, _obs: Obs<'_>, _mu: f64, _theta: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for j in 0..self.dim {
            out[j * self.dim + j] = -1.0;
        }
    }
    fn deriv_mu(&self, _obs: Obs<'_>, _mu: f64, _theta: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn deriv_mu2(&self, _obs: Obs<'_>, _mu: f64, _theta: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        true
    }
}

/// Per-observation multipliers on the moment contributions.
///
/// The multiplier for row `i` is `base_i - 1{i = dropped}` with `base_i = 1`
/// when no base vector is given, which covers the plain sample, the
/// delete-one jackknife, the multiplier bootstrap and the jackknife under it.
#[derive(Clone, Copy, Debug, Default)]
pub struct ObsWeights<'a> {
    base: Option<&'a [f64]>,
    dropped: Option<usize>,
}

impl<'a> ObsWeights<'a> {
    pub fn unit() -> Self {
        Self::default()
    }

    pub fn from_slice(w: &'a [f64]) -> Self {
        Self {
            base: Some(w),
            dropped: None,
        }
    }

    /// Same weights with the multiplier of row `ell` reduced by one.
    pub fn minus_one_at(self, ell: usize) -> Self {
        Self {
            dropped: Some(ell),
            ..self
        }
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        let b = self.base.map_or(1.0, |w| w[i]);
        if self.dropped == Some(i) {
            b - 1.0
        } else {
            b
        }
    }

    pub fn total(&self, n: usize) -> f64 {
        let base: f64 = self.base.map_or(n as f64, |w| w.iter().sum());
        base - if self.dropped.is_some() { 1.0 } else { 0.0 }
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if let Some(w) = self.base {
            if w.len() != n {
                return Err(Error::Shape(format!(
                    "weight vector has {} entries, sample has {n}",
                    w.len()
                )));
            }
        }
        if let Some(d) = self.dropped {
            if d >= n {
                return Err(Error::IndexOutOfRange { index: d, len: n });
            }
        }
        Ok(())
    }
}

/// Weight matrix `Ω_n` of the quadratic form.
#[derive(Clone, Debug, Default)]
pub enum Weighting {
    #[default]
    Identity,
    Matrix(DMatrix<f64>),
}

impl Weighting {
    /// Validates symmetry and positive semi-definiteness.
    pub fn matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Config(format!(
                "weight matrix is {}x{}, not square",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("weight matrix has non-finite entries".into()));
        }
        let scale = m.amax().max(1.0);
        if (&m - m.transpose()).amax() > 1e-12 * scale {
            return Err(Error::Config("weight matrix is not symmetric".into()));
        }
        let lmin = min_eigenvalue(&m);
        if lmin < -1e-10 {
            return Err(Error::Config(format!(
                "weight matrix is not positive semi-definite (eigenvalue {lmin:e})"
            )));
        }
        Ok(Weighting::Matrix(m))
    }

    pub fn to_matrix(&self, dim: usize) -> DMatrix<f64> {
        match self {
            Weighting::Identity => DMatrix::identity(dim, dim),
            Weighting::Matrix(m) => m.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmmConfig {
    pub weight: Weighting,
    /// Starting value; the zero vector when absent.
    pub theta_init: Option<DVector<f64>>,
    pub max_iter: usize,
    /// Stop when `|∇Q| <= grad_tol * (1 + |θ|)`.
    pub grad_tol: f64,
    /// A Gauss-Newton step shorter than `step_tol * (1 + |θ|)` that can no
    /// longer decrease the objective also counts as converged.
    pub step_tol: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            weight: Weighting::Identity,
            theta_init: None,
            max_iter: 200,
            grad_tol: 1e-10,
            step_tol: 1e-12,
        }
    }
}

impl GmmConfig {
    pub fn validate(&self, model: &dyn MomentModel) -> Result<()> {
        let (dm, dt) = (model.dim_moment(), model.dim_theta());
        if dt == 0 || dm < dt {
            return Err(Error::Config(format!(
                "need d_m >= d_theta >= 1, got d_m = {dm}, d_theta = {dt}"
            )));
        }
        if let Weighting::Matrix(m) = &self.weight {
            if m.nrows() != dm {
                return Err(Error::Config(format!(
                    "weight matrix is {0}x{0}, model has {dm} moments",
                    m.nrows()
                )));
            }
        }
        if let Some(t) = &self.theta_init {
            if t.len() != dt {
                return Err(Error::Config(format!(
                    "theta_init has {} entries, model has {dt} parameters",
                    t.len()
                )));
            }
        }
        if self.max_iter == 0 || !(self.grad_tol > 0.0) || !(self.step_tol > 0.0) {
            return Err(Error::Config("max_iter, grad_tol and step_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GmmSolution {
    pub theta_hat: DVector<f64>,
    /// `g(θ̂)ᵀ Ω g(θ̂)` with `g` the weighted average moment.
    pub objective_value: f64,
    pub moment_avg: DVector<f64>,
    pub m_hat: DMatrix<f64>,
    /// `-(M̂ᵀΩM̂)⁻¹ M̂ᵀΩ`.
    pub sigma_hat: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Averaged moment `g(θ) = (1/n) Σ w_i m_i` and, optionally, its Jacobian.
fn averaged(
    model: &dyn MomentModel,
    data: &Dataset,
    mu: &[f64],
    w: ObsWeights<'_>,
    theta: &[f64],
    jac: Option<&mut DMatrix<f64>>,
) -> DVector<f64> {
    let (dm, dt) = (model.dim_moment(), model.dim_theta());
    let n = data.n();
    let mut g = DVector::zeros(dm);
    let mut buf = vec![0.0; dm];
    let mut jbuf = vec![0.0; dm * dt];
    let mut jac = jac;
    if let Some(j) = jac.as_deref_mut() {
        j.fill(0.0);
    }
    for i in 0..n {
        let wi = w.get(i);
        if wi == 0.0 {
            continue;
        }
        let obs = data.obs(i);
        model.eval(obs, mu[i], theta, &mut buf);
        for (gk, b) in g.iter_mut().zip(&buf) {
            *gk += wi * b;
        }
        if let Some(j) = jac.as_deref_mut() {
            model.jac_theta(obs, mu[i], theta, &mut jbuf);
            for r in 0..dm {
                for c in 0..dt {
                    j[(r, c)] += wi * jbuf[r * dt + c];
                }
            }
        }
    }
    let inv = 1.0 / n as f64;
    if let Some(j) = jac {
        *j *= inv;
    }
    g * inv
}

pub fn solve_gmm(
    model: &dyn MomentModel,
    data: &Dataset,
    mu: &[f64],
    config: &GmmConfig,
) -> Result<GmmSolution> {
    solve_gmm_weighted(model, data, mu, ObsWeights::unit(), config)
}

/// Minimizes `|Ω^{1/2} Σ_i w_i m(w_i, μ_i, θ)|` by Gauss-Newton with Armijo backtracking.
pub fn solve_gmm_weighted(
    model: &dyn MomentModel,
    data: &Dataset,
    mu: &[f64],
    weights: ObsWeights<'_>,
    config: &GmmConfig,
) -> Result<GmmSolution> {
    config.validate(model)?;
    let n = data.n();
    if mu.len() != n {
        return Err(Error::Shape(format!("mu has {} entries, sample has {n}", mu.len())));
    }
    weights.check_len(n)?;
    let (dm, dt) = (model.dim_moment(), model.dim_theta());
    let omega = config.weight.to_matrix(dm);
    let w_half = weight_root(&omega);

    let mut theta = config
        .theta_init
        .clone()
        .unwrap_or_else(|| DVector::zeros(dt));
    let mut jac = DMatrix::zeros(dm, dt);
    let mut g = averaged(model, data, mu, weights, theta.as_slice(), Some(&mut jac));
    let mut q = g.dot(&(&omega * &g));
    let mut converged = false;
    let mut iterations = 0;
    let mut grad = jac.transpose() * (&omega * &g);

    while iterations < config.max_iter {
        let scale = 1.0 + theta.norm();
        if !grad.iter().all(|v| v.is_finite()) || !q.is_finite() {
            break;
        }
        if grad.norm() <= config.grad_tol * scale {
            converged = true;
            break;
        }
        iterations += 1;

        // Least-squares step on Ω^{1/2}(g + J d) by QR, which keeps the
        // conditioning of J instead of squaring it.
        let a = &w_half * &jac;
        let qr = a.qr();
        let rhs = -(qr.q().transpose() * (&w_half * &g));
        let mut step = qr
            .r()
            .solve_upper_triangular(&rhs)
            .filter(|d| d.iter().all(|v| v.is_finite()) && d.dot(&grad) < 0.0)
            .unwrap_or_else(|| -&grad);
        let gauss_newton = step.dot(&grad) < 0.0 && step != -&grad;
        // Steepest descent has no natural length; start it at unit norm.
        if !gauss_newton && step.norm() > 0.0 {
            step /= step.norm().max(1.0);
        }
        let slope = 2.0 * grad.dot(&step);
        let roundoff = 8.0 * f64::EPSILON * q.abs();

        let mut t = 1.0;
        let mut accepted = None;
        loop {
            let cand = &theta + &step * t;
            let gc = averaged(model, data, mu, weights, cand.as_slice(), None);
            let qc = gc.dot(&(&omega * &gc));
            let armijo = qc <= q + 1e-4 * t * slope;
            let at_floor = -slope * t <= roundoff && qc <= q;
            if qc.is_finite() && (armijo || at_floor) {
                accepted = Some((cand, qc));
                break;
            }
            t *= 0.5;
            if t * step.norm() <= config.step_tol * scale {
                break;
            }
        }
        match accepted {
            Some((cand, qc)) => {
                let moved = (&cand - &theta).norm();
                theta = cand;
                q = qc;
                g = averaged(model, data, mu, weights, theta.as_slice(), Some(&mut jac));
                grad = jac.transpose() * (&omega * &g);
                if gauss_newton && moved <= config.step_tol * (1.0 + theta.norm()) {
                    converged = true;
                    break;
                }
            }
            None => {
                converged = gauss_newton && step.norm() <= config.step_tol * scale;
                break;
            }
        }
    }

    let grad_norm = grad.norm();
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            grad_norm,
            theta: theta.iter().copied().collect(),
        });
    }
    let sigma_hat = sandwich_factor(&jac, &omega)?;
    Ok(GmmSolution {
        theta_hat: theta,
        objective_value: q,
        moment_avg: g,
        m_hat: jac,
        sigma_hat,
        converged,
        iterations,
        grad_norm,
    })
}

/// `W` with `WᵀW = Ω`.
fn weight_root(omega: &DMatrix<f64>) -> DMatrix<f64> {
    match omega.clone().cholesky() {
        Some(c) => c.l().transpose(),
        None => {
            let eig = omega.clone().symmetric_eigen();
            let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
        }
    }
}

/// `-(MᵀΩM)⁻¹ MᵀΩ`.
pub fn sandwich_factor(m: &DMatrix<f64>, omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mt_o = m.transpose() * omega;
    let gram = &mt_o * m;
    let lmin = min_eigenvalue(&gram);
    let lmax = gram.amax();
    if !(lmin > 1e-13 * lmax.max(f64::MIN_POSITIVE)) {
        return Err(Error::RankDeficient(format!(
            "M'ΩM is singular at the solution (smallest eigenvalue {lmin:e})"
        )));
    }
    let inv = gram
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("M'ΩM is not positive definite".into()))?
        .inverse();
    Ok(-(inv * mt_o))
}

/// A second-step solver: `θ` from fitted first-step values and observation multipliers.
pub trait SecondStep: Sync {
    fn dim_theta(&self) -> usize;
    fn solve(
        &self,
        data: &Dataset,
        mu: &[f64],
        weights: ObsWeights<'_>,
        start: Option<&[f64]>,
    ) -> Result<DVector<f64>>;
}

/// Generic Gauss-Newton second step for any [`MomentModel`].
pub struct GmmStep<'a> {
    pub model: &'a dyn MomentModel,
    pub config: GmmConfig,
}

impl<'a> GmmStep<'a> {
    pub fn new(model: &'a dyn MomentModel, config: GmmConfig) -> Self {
        Self { model, config }
    }
}

impl SecondStep for GmmStep<'_> {
    fn dim_theta(&self) -> usize {
        self.model.dim_theta()
    }

    fn solve(
        &self,
        data: &Dataset,
        mu: &[f64],
        weights: ObsWeights<'_>,
        start: Option<&[f64]>,
    ) -> Result<DVector<f64>> {
        let sol = match start {
            Some(s) => {
                let cfg = GmmConfig {
                    theta_init: Some(DVector::from_column_slice(s)),
                    step_tol: self.config.step_tol * 1e-2,
                    ..self.config.clone()
                };
                solve_gmm_weighted(self.model, data, mu, weights, &cfg)?
            }
            None => solve_gmm_weighted(self.model, data, mu, weights, &self.config)?,
        };
        Ok(sol.theta_hat)
    }
}

/// An evaluation point for [`check_jacobian`].
#[derive(Clone, Debug)]
pub struct SamplePoint {
    pub y: Vec<f64>,
    pub r: f64,
    pub mu: f64,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JacobianMismatch {
    pub point: usize,
    pub derivative: &'static str,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct JacobianReport {
    pub points: usize,
    pub max_rel_theta: f64,
    pub max_rel_mu: f64,
    /// `None` when the model does not supply a second `μ` derivative.
    pub max_rel_mu2: Option<f64>,
    pub worst: Option<JacobianMismatch>,
    pub tolerance: f64,
    pub passed: bool,
}

pub const JACOBIAN_TOL: f64 = 1e-6;

/// `1e-6 * (1 + |x|)` rounded down to a power of two, so `x ± h` carries no
/// representation error of its own.
fn fd_step(x: f64) -> f64 {
    let h = 1e-6 * (1.0 + x.abs());
    2f64.powi(h.log2().floor() as i32)
}

/// Compares analytic derivatives against central finite differences with
/// step about `1e-6 * (1 + |x|)`; deviations are `|a - f| / max(1, |f|)`.
pub fn check_jacobian(model: &dyn MomentModel, points: &[SamplePoint]) -> JacobianReport {
    let (dm, dt) = (model.dim_moment(), model.dim_theta());
    let mut max_t: f64 = 0.0;
    let mut max_m: f64 = 0.0;
    let mut max_m2: Option<f64> = None;
    let mut worst: Option<(f64, JacobianMismatch)> = None;
    let record = |dev: f64, m: JacobianMismatch, worst: &mut Option<(f64, JacobianMismatch)>| {
        if worst.as_ref().is_none_or(|(d, _)| dev > *d) {
            *worst = Some((dev, m));
        }
    };
    let rel = |a: f64, f: f64| (a - f).abs() / f.abs().max(1.0);

    let mut jac = vec![0.0; dm * dt];
    let mut dmu = vec![0.0; dm];
    let mut dmu2 = vec![0.0; dm];
    let mut plus = vec![0.0; dm];
    let mut minus = vec![0.0; dm];
    for (p, pt) in points.iter().enumerate() {
        let obs = Obs {
            index: p,
            y: &pt.y,
            r: pt.r,
        };
        model.jac_theta(obs, pt.mu, &pt.theta, &mut jac);
        let mut th = pt.theta.clone();
        for c in 0..dt {
            let h = fd_step(pt.theta[c]);
            th[c] = pt.theta[c] + h;
            model.eval(obs, pt.mu, &th, &mut plus);
            th[c] = pt.theta[c] - h;
            model.eval(obs, pt.mu, &th, &mut minus);
            th[c] = pt.theta[c];
            for r in 0..dm {
                let f = (plus[r] - minus[r]) / (2.0 * h);
                let a = jac[r * dt + c];
                let dev = rel(a, f);
                max_t = max_t.max(dev);
                record(
                    dev,
                    JacobianMismatch {
                        point: p,
                        derivative: "jac_theta",
                        row: r,
                        col: c,
                        analytic: a,
                        numeric: f,
                    },
                    &mut worst,
                );
            }
        }

        let h = fd_step(pt.mu);
        model.deriv_mu(obs, pt.mu, &pt.theta, &mut dmu);
        model.eval(obs, pt.mu + h, &pt.theta, &mut plus);
        model.eval(obs, pt.mu - h, &pt.theta, &mut minus);
        for r in 0..dm {
            let f = (plus[r] - minus[r]) / (2.0 * h);
            let dev = rel(dmu[r], f);
            max_m = max_m.max(dev);
            record(
                dev,
                JacobianMismatch {
                    point: p,
                    derivative: "deriv_mu",
                    row: r,
                    col: 0,
                    analytic: dmu[r],
                    numeric: f,
                },
                &mut worst,
            );
        }

        if model.deriv_mu2(obs, pt.mu, &pt.theta, &mut dmu2) {
            model.deriv_mu(obs, pt.mu + h, &pt.theta, &mut plus);
            model.deriv_mu(obs, pt.mu - h, &pt.theta, &mut minus);
            let cur = max_m2.get_or_insert(0.0);
            for r in 0..dm {
                let f = (plus[r] - minus[r]) / (2.0 * h);
                let dev = rel(dmu2[r], f);
                *cur = cur.max(dev);
                record(
                    dev,
                    JacobianMismatch {
                        point: p,
                        derivative: "deriv_mu2",
                        row: r,
                        col: 0,
                        analytic: dmu2[r],
                        numeric: f,
                    },
                    &mut worst,
                );
            }
        }
    }
    let overall = max_t.max(max_m).max(max_m2.unwrap_or(0.0));
    JacobianReport {
        points: points.len(),
        max_rel_theta: max_t,
        max_rel_mu: max_m,
        max_rel_mu2: max_m2,
        worst: worst.map(|(_, m)| m),
        tolerance: JACOBIAN_TOL,
        passed: overall <= JACOBIAN_TOL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(y: &[f64]) -> Dataset {
        let n = y.len();
        Dataset::new(
            DMatrix::from_column_slice(n, 1, y),
            DVector::zeros(n),
            DMatrix::from_element(n, 1, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn mean_moment_gives_sample_mean() {
        let y = [2.0, 5.0, -1.0, 4.5];
        let data = sample(&y);
        let sol = solve_gmm(&MeanMoment { dim: 1 }, &data, &[0.0; 4], &GmmConfig::default()).unwrap();
        assert!((sol.theta_hat[0] - 2.625).abs() < 1e-14);
        assert!(sol.moment_avg.norm() <= 1e-10);
        assert!((sol.sigma_hat[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn weights_reweight_the_mean() {
        let y = [1.0, 2.0, 3.0];
        let data = sample(&y);
        let w = [2.0, 0.0, 1.0];
        let sol = solve_gmm_weighted(
            &MeanMoment { dim: 1 },
            &data,
            &[0.0; 3],
            ObsWeights::from_slice(&w),
            &GmmConfig::default(),
        )
        .unwrap();
        assert!((sol.theta_hat[0] - 5.0 / 3.0).abs() < 1e-14);
        let drop = ObsWeights::unit().minus_one_at(0);
        assert_eq!(drop.get(0), 0.0);
        assert_eq!(drop.total(3), 2.0);
    }

    #[test]
    fn rejects_indefinite_weight() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        assert!(Weighting::matrix(m).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(Weighting::matrix(asym).is_err());
    }

    #[test]
    fn mean_jacobian_is_exact() {
        let pts: Vec<_> = (0..10)
            .map(|i| SamplePoint {
                y: vec![0.37 * i as f64 - 1.5],
                r: 0.0,
                mu: 0.3,
                theta: vec![0.1 * i as f64],
            })
            .collect();
        let rep = check_jacobian(&MeanMoment { dim: 1 }, &pts);
        assert!(rep.passed);
        assert!(rep.max_rel_theta <= 1e-10);
    }
}
