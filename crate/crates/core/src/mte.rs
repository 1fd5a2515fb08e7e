//! Marginal treatment effects.
//!
//! The propensity score is a linear probability model of `T` on `Z`. The
//! outcome regression `e(x, a, θ)` is a known parametric function of the
//! covariates `x` and the propensity `a`, and the MTE is `τ(a|x) = ∂e/∂a`.
//!
//! Dataset layout: the outcome block is `[Y, X_1, ..., X_dx]`, the first-step
//! response is `T`, and `Z` carries the instruments including an intercept.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bootstrap::{
    bootstrap_statistic, normal_interval, BootstrapOptions, BootstrapRun, InferenceReport, Interval,
};
use crate::data::{Dataset, Obs};
use crate::error::{Error, Result};
use crate::firststep::{fit_least_squares, BalanceDiagnostics, FirstStepFit};
use crate::gmm::{GmmConfig, GmmStep, MomentModel, ObsWeights, SecondStep};
use crate::jackknife::{jackknife_two_step, Functional, JackknifeResult};

/// Outcome regression `e(x, a, θ)` and the derivatives the estimator and the
/// oracle need.
pub trait OutcomeSpec: Sync {
    fn dim_theta(&self) -> usize;
    fn dim_x(&self) -> usize;
    fn value(&self, x: &[f64], a: f64, theta: &[f64]) -> f64;
    /// `∂e/∂θ`.
    fn grad_theta(&self, x: &[f64], a: f64, theta: &[f64], out: &mut [f64]);
    /// `∂²e/∂θ∂θᵀ`, row-major. Linear specs leave the default zero.
    fn hess_theta(&self, x: &[f64], a: f64, theta: &[f64], out: &mut [f64]) {
        let _ = (x, a, theta);
        out.fill(0.0);
    }
    /// `∂e/∂a`, the MTE.
    fn d_a(&self, x: &[f64], a: f64, theta: &[f64]) -> f64;
    /// `∂²e/∂a²`.
    fn d_aa(&self, x: &[f64], a: f64, theta: &[f64]) -> f64;
    /// `∂²e/∂a∂θ`.
    fn cross(&self, x: &[f64], a: f64, theta: &[f64], out: &mut [f64]);
    /// `∂³e/∂a²∂θ`.
    fn cross_aa(&self, x: &[f64], a: f64, theta: &[f64], out: &mut [f64]);
    /// `e` is linear in `θ`, so the second step is ordinary least squares.
    fn is_linear(&self) -> bool;
    /// Starting value for the iterative solver when the spec is nonlinear.
    fn initial_theta(&self) -> Vec<f64> {
        vec![0.0; self.dim_theta()]
    }
}

/// `e(x, a, θ) = Σ_{p=0..q} a^p (θ_{p,0} + Σ_j θ_{p,j} x_j)`.
///
/// Parameters are ordered by power, then by covariate with the constant first,
/// so with no covariates and `q = 2` this is `θ₁ + θ₂ a + θ₃ a²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolynomialSpec {
    pub degree: usize,
    pub n_covariates: usize,
}

impl Default for PolynomialSpec {
    fn default() -> Self {
        Self {
            degree: 2,
            n_covariates: 0,
        }
    }
}

impl PolynomialSpec {
    pub fn quadratic() -> Self {
        Self::default()
    }

    /// Fills `out` with `c_p(a) * x_j` where `c_p` is the `order`-th derivative of `a^p`.
    #[inline]
    fn fill(&self, x: &[f64], a: f64, order: u32, out: &mut [f64]) {
        let w = 1 + self.n_covariates;
        for p in 0..=self.degree {
            let c = poly_deriv(p as u32, order, a);
            let row = &mut out[p * w..(p + 1) * w];
            row[0] = c;
            for (slot, xj) in row[1..].iter_mut().zip(x) {
                *slot = c * xj;
            }
        }
    }

    fn combine(&self, x: &[f64], a: f64, order: u32, theta: &[f64]) -> f64 {
        let w = 1 + self.n_covariates;
        let mut s = 0.0;
        for p in 0..=self.degree {
            let c = poly_deriv(p as u32, order, a);
            if c == 0.0 {
                continue;
            }
            let row = &theta[p * w..(p + 1) * w];
            let mut lin = row[0];
            for (t, xj) in row[1..].iter().zip(x) {
                lin += t * xj;
            }
            s += c * lin;
        }
        s
    }
}

/// `d^order/da^order a^p`.
#[inline]
fn poly_deriv(p: u32, order: u32, a: f64) -> f64 {
    if order > p {
        return 0.0;
    }
    let mut coef = 1.0;
    for m in 0..order {
        coef *= (p - m) as f64;
    }
    coef * a.powi((p - order) as i32)
}

impl OutcomeSpec for PolynomialSpec {
    fn dim_theta(&self) -> usize {
        (self.degree + 1) * (1 + self.n_covariates)
    }
    fn dim_x(&self) -> usize {
        self.n_covariates
    }
    fn value(&self, x: &[f64], a: f64, theta: &[f64]) -> f64 {
        self.combine(x, a, 0, theta)
    }
    fn grad_theta(&self, x: &[f64], a: f64, _theta: &[f64], out: &mut [f64]) {
        self.fill(x, a, 0, out);
    }
    fn d_a(&self, x: &[f64], a: f64, theta: &[f64]) -> f64 {
        self.combine(x, a, 1, theta)
    }
    fn d_aa(&self, x: &[f64], a: f64, theta: &[f64]) -> f64 {
        self.combine(x, a, 2, theta)
    }
    fn cross(&self, x: &[f64], a: f64, _theta: &[f64], out: &mut [f64]) {
        self.fill(x, a, 1, out);
    }
    fn cross_aa(&self, x: &[f64], a: f64, _theta: &[f64], out: &mut [f64]) {
        self.fill(x, a, 2, out);
    }
    fn is_linear(&self) -> bool {
        true
    }
}

/// Least-squares moment `m = ∂e/∂θ (Y - e)` with `μ` playing the role of `a`.
pub struct MteMoment<'a, S: OutcomeSpec> {
    pub spec: &'a S,
}

impl<'a, S: OutcomeSpec> MteMoment<'a, S> {
    pub fn new(spec: &'a S) -> Self {
        Self { spec }
    }
}

fn split_obs<'a>(obs: &Obs<'a>) -> (f64, &'a [f64]) {
    (obs.y[0], &obs.y[1..])
}

impl<S: OutcomeSpec> MomentModel for MteMoment<'_, S> {
    fn dim_theta(&self) -> usize {
        self.spec.dim_theta()
    }
    fn dim_moment(&self) -> usize {
        self.spec.dim_theta()
    }
    fn eval(&self, obs: Obs<'_>, mu: f64, theta: &[f64], out: &mut [f64]) {
        let (y, x) = split_obs(&obs);
        let resid = y - self.spec.value(x, mu, theta);
        self.spec.grad_theta(x, mu, theta, out);
        for v in out.iter_mut() {
            *v *= resid;
        }
    }
    fn jac_theta(&self, obs: Obs<'_>, mu: f64, theta: &[f64], out: &mut [f64]) {
        let (y, x) = split_obs(&obs);
        let d = self.spec.dim_theta();
        let resid = y - self.spec.value(x, mu, theta);
        let mut g = vec![0.0; d];
        self.spec.grad_theta(x, mu, theta, &mut g);
        self.spec.hess_theta(x, mu, theta, out);
        for r in 0..d {
            for c in 0..d {
                out[r * d + c] = out[r * d + c] * resid - g[r] * g[c];
            }
        }
    }
    fn deriv_mu(&self, obs: Obs<'_>, mu: f64, theta: &[f64], out: &mut [f64]) {
        let (y, x) = split_obs(&obs);
        let d = self.spec.dim_theta();
        let resid = y - self.spec.value(x, mu, theta);
        let ea = self.spec.d_a(x, mu, theta);
        let mut g = vec![0.0; d];
        self.spec.grad_theta(x, mu, theta, &mut g);
        self.spec.cross(x, mu, theta, out);
        for (o, gj) in out.iter_mut().zip(&g) {
            *o = *o * resid - gj * ea;
        }
    }
    fn deriv_mu2(&self, obs: Obs<'_>, mu: f64, theta: &[f64], out: &mut [f64]) -> bool {
        let (y, x) = split_obs(&obs);
        let d = self.spec.dim_theta();
        let resid = y - self.spec.value(x, mu, theta);
        let ea = self.spec.d_a(x, mu, theta);
        let eaa = self.spec.d_aa(x, mu, theta);
        let mut g = vec![0.0; d];
        let mut ga = vec![0.0; d];
        self.spec.grad_theta(x, mu, theta, &mut g);
        self.spec.cross(x, mu, theta, &mut ga);
        self.spec.cross_aa(x, mu, theta, out);
        for j in 0..d {
            out[j] = out[j] * resid - 2.0 * ga[j] * ea - g[j] * eaa;
        }
        true
    }
}

/// Closed-form weighted least squares of `Y` on `∂e/∂θ` for specs linear in `θ`.
pub struct LinearOutcomeStep<'a, S: OutcomeSpec> {
    pub spec: &'a S,
    /// Clamp fitted propensities into `[0, 1]` before evaluating the basis.
    pub clamp: bool,
}

impl<'a, S: OutcomeSpec> LinearOutcomeStep<'a, S> {
    pub fn new(spec: &'a S) -> Self {
        Self { spec, clamp: false }
    }
}

impl<S: OutcomeSpec> SecondStep for LinearOutcomeStep<'_, S> {
    fn dim_theta(&self) -> usize {
        self.spec.dim_theta()
    }

    fn solve(
        &self,
        data: &Dataset,
        mu: &[f64],
        weights: ObsWeights<'_>,
        _start: Option<&[f64]>,
    ) -> Result<DVector<f64>> {
        let n = data.n();
        if mu.len() != n {
            return Err(Error::Shape(format!("mu has {} entries, sample has {n}", mu.len())));
        }
        weights.check_len(n)?;
        let d = self.spec.dim_theta();
        let zeros = vec![0.0; d];
        let mut b = vec![0.0; d];
        let mut xtx = vec![0.0; d * d];
        let mut xty = vec![0.0; d];
        for i in 0..n {
            let w = weights.get(i);
            if w == 0.0 {
                continue;
            }
            let row = data.y_row(i);
            let a = if self.clamp { mu[i].clamp(0.0, 1.0) } else { mu[i] };
            self.spec.grad_theta(&row[1..], a, &zeros, &mut b);
            let wy = w * row[0];
            for r in 0..d {
                let wb = w * b[r];
                xty[r] += wy * b[r];
                for c in r..d {
                    xtx[r * d + c] += wb * b[c];
                }
            }
        }
        for r in 0..d {
            for c in 0..r {
                xtx[r * d + c] = xtx[c * d + r];
            }
        }
        let gram = DMatrix::from_row_slice(d, d, &xtx);
        let rhs = DVector::from_vec(xty);
        let theta = gram
            .lu()
            .solve(&rhs)
            .filter(|t| t.iter().all(|v| v.is_finite()))
            .ok_or_else(|| {
                Error::RankDeficient("second-step normal equations are singular".into())
            })?;
        Ok(theta)
    }
}

/// `τ(a|x)` as a functional of `θ`.
pub struct TauFunctional<'a, S: OutcomeSpec> {
    pub spec: &'a S,
    pub x: Vec<f64>,
    pub a: f64,
}

impl<S: OutcomeSpec> Functional for TauFunctional<'_, S> {
    fn dim(&self) -> usize {
        self.spec.dim_theta()
    }
    fn value(&self, theta: &[f64]) -> f64 {
        self.spec.d_a(&self.x, self.a, theta)
    }
    fn gradient(&self, theta: &[f64], out: &mut [f64]) {
        self.spec.cross(&self.x, self.a, theta, out);
    }
}

/// Evaluation grid `{0.01, ..., 0.99}`.
pub fn default_grid() -> Vec<f64> {
    (1..100).map(|i| i as f64 / 100.0).collect()
}

#[derive(Clone, Debug)]
pub struct MteOptions {
    pub grid: Vec<f64>,
    /// Covariate values at which `τ(a|x)` is reported; the sample mean when absent.
    pub x_eval: Option<Vec<f64>>,
    pub alpha: f64,
    /// `None` gives normal-approximation intervals from the jackknife variance.
    pub bootstrap: Option<BootstrapOptions>,
    pub clamp: bool,
    /// Solver settings for specs that are not linear in `θ`.
    pub gmm: GmmConfig,
}

impl Default for MteOptions {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            x_eval: None,
            alpha: 0.05,
            bootstrap: Some(BootstrapOptions::default()),
            clamp: false,
            gmm: GmmConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MtePoint {
    pub a: f64,
    pub tau_hat: f64,
    pub tau_bc: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Clone, Debug)]
pub struct MteEstimate {
    pub theta_hat: DVector<f64>,
    pub propensity: FirstStepFit,
    /// Fitted propensities outside `[0, 1]`.
    pub propensity_outside: usize,
    pub balance: BalanceDiagnostics,
    pub x_eval: Vec<f64>,
    pub points: Vec<MtePoint>,
    /// Trapezoid average of `τ̂` over the grid, uncorrected and corrected.
    pub ate_hat: f64,
    pub ate_bc: f64,
    pub jackknife: JackknifeResult,
    pub bootstrap: Option<BootstrapRun>,
    pub report: InferenceReport,
}

pub fn validate_mte_data(data: &Dataset, dim_x: usize) -> Result<()> {
    if data.dim_y() != 1 + dim_x {
        return Err(Error::Shape(format!(
            "outcome block needs Y plus {dim_x} covariates, has {} columns",
            data.dim_y()
        )));
    }
    if let Some(i) = data.r().iter().position(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::InvalidInput(format!(
            "treatment must be 0 or 1, row {} has {}",
            i + 1,
            data.r()[i]
        )));
    }
    let z = data.z();
    let has_intercept = (0..z.ncols()).any(|j| {
        let c = z.column(j);
        c[0] != 0.0 && c.iter().all(|&v| v == c[0])
    });
    if !has_intercept {
        return Err(Error::InvalidInput(
            "first-step covariates need an intercept column".into(),
        ));
    }
    Ok(())
}

fn trapezoid_mean(grid: &[f64], vals: &[f64]) -> f64 {
    if grid.len() == 1 {
        return vals[0];
    }
    let mut area = 0.0;
    for w in 0..grid.len() - 1 {
        area += 0.5 * (vals[w] + vals[w + 1]) * (grid[w + 1] - grid[w]);
    }
    area / (grid[grid.len() - 1] - grid[0])
}

/// Picks the closed-form step for linear specs and Gauss-Newton otherwise.
pub fn second_step_for<'a, S: OutcomeSpec>(
    spec: &'a S,
    moment: &'a MteMoment<'a, S>,
    options: &MteOptions,
) -> Box<dyn SecondStep + 'a> {
    if spec.is_linear() {
        Box::new(LinearOutcomeStep {
            spec,
            clamp: options.clamp,
        })
    } else {
        let mut cfg = options.gmm.clone();
        if cfg.theta_init.is_none() {
            cfg.theta_init = Some(DVector::from_vec(spec.initial_theta()));
        }
        Box::new(GmmStep::new(moment, cfg))
    }
}

pub fn estimate_mte<S: OutcomeSpec>(
    data: &Dataset,
    spec: &S,
    options: &MteOptions,
) -> Result<MteEstimate> {
    validate_mte_data(data, spec.dim_x())?;
    if options.grid.is_empty()
        || options.grid.iter().any(|a| !a.is_finite())
        || options.grid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::Config("grid must be finite and strictly increasing".into()));
    }
    if !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", options.alpha)));
    }
    let x_eval = match &options.x_eval {
        Some(x) if x.len() == spec.dim_x() => x.clone(),
        Some(x) => {
            return Err(Error::Config(format!(
                "x_eval has {} entries, spec has {} covariates",
                x.len(),
                spec.dim_x()
            )))
        }
        None => (0..spec.dim_x())
            .map(|j| (0..data.n()).map(|i| data.y_row(i)[1 + j]).sum::<f64>() / data.n() as f64)
            .collect(),
    };

    let fit = fit_least_squares(data)?;
    let propensity_outside = fit.mu_hat.iter().filter(|&&p| !(0.0..=1.0).contains(&p)).count();
    let balance = fit.design_balance();
    let moment = MteMoment::new(spec);
    let step = second_step_for(spec, &moment, options);
    let theta_hat = step.solve(data, fit.mu_hat.as_slice(), ObsWeights::unit(), None)?;
    let jk = jackknife_two_step(step.as_ref(), data, &fit, &theta_hat)?;

    let taus: Vec<TauFunctional<'_, S>> = options
        .grid
        .iter()
        .map(|&a| TauFunctional {
            spec,
            x: x_eval.clone(),
            a,
        })
        .collect();
    let names: Vec<String> = options.grid.iter().map(|a| format!("tau({a})")).collect();

    let (bootstrap, report, intervals) = match &options.bootstrap {
        Some(bo) => {
            let run = bootstrap_statistic(step.as_ref(), data, &fit, &jk, bo)?;
            let fns: Vec<(&str, &dyn Functional)> = names
                .iter()
                .zip(&taus)
                .map(|(n, t)| (n.as_str(), t as &dyn Functional))
                .collect();
            let report = run.report(&fns, options.alpha)?;
            let ivs = report.intervals.clone();
            (Some(run), report, ivs)
        }
        None => {
            let mut report = InferenceReport::from_jackknife(&jk);
            let ivs = names
                .iter()
                .zip(&taus)
                .map(|(n, t)| normal_interval(&jk, n, t, options.alpha))
                .collect::<Result<Vec<Interval>>>()?;
            report.intervals = ivs.clone();
            (None, report, ivs)
        }
    };

    let points: Vec<MtePoint> = options
        .grid
        .iter()
        .zip(&intervals)
        .map(|(&a, iv)| MtePoint {
            a,
            tau_hat: iv.estimate,
            tau_bc: iv.corrected,
            se: iv.se,
            ci_lo: iv.lower,
            ci_hi: iv.upper,
        })
        .collect();
    let raw: Vec<f64> = points.iter().map(|p| p.tau_hat).collect();
    let bc: Vec<f64> = points.iter().map(|p| p.tau_bc).collect();
    Ok(MteEstimate {
        theta_hat,
        propensity_outside,
        balance,
        x_eval,
        ate_hat: trapezoid_mean(&options.grid, &raw),
        ate_bc: trapezoid_mean(&options.grid, &bc),
        points,
        jackknife: jk,
        bootstrap,
        report,
        propensity: fit,
    })
}

/// Population quantities the bias oracle needs, indexed by observation.
pub trait MteTruth: Sync {
    /// True propensity `P_i`.
    fn propensity(&self, i: usize) -> f64;
    /// `τ(a|X_i)`.
    fn tau(&self, i: usize, a: f64) -> f64;
    /// `∂τ(a|X_i)/∂a`.
    fn dtau(&self, i: usize, a: f64) -> f64;
    /// `E[T_i Y_i(1) | Z_i]`.
    fn treated_outcome_mean(&self, i: usize) -> f64;
    /// `E[(1 - T_i) Y_i(0) | Z_i]`.
    fn untreated_outcome_mean(&self, i: usize) -> f64;
}

/// Coefficient in front of the curvature term of `B_i`.
///
/// Expanding `½ E[m̈ | Z]` for the least-squares moment with a correctly
/// specified outcome regression gives `-(∂²e/∂a∂θ τ + ½ ∂e/∂θ ∂τ/∂a)`, which
/// is `Derived`. `PlusHalf` puts `+½` in front of the same bracket and is
/// kept for comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurvatureCoefficient {
    #[default]
    Derived,
    PlusHalf,
}

impl CurvatureCoefficient {
    pub fn factor(self) -> f64 {
        match self {
            CurvatureCoefficient::Derived => -1.0,
            CurvatureCoefficient::PlusHalf => 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OracleTerms {
    /// Row `i` is `B_i`.
    pub b: DMatrix<f64>,
    /// Row `i` is `Ψ_i` (realized, using the observed `Y_i` and `T_i`).
    pub psi: DMatrix<f64>,
    /// `(E_n[∂e/∂θ ∂e/∂θᵀ])⁻¹` at the true propensities.
    pub sigma0: DMatrix<f64>,
    /// `Σ₀ (1/n) Σ_i B_i`.
    pub bias: DVector<f64>,
    /// `(1/n) Σ₀ ((1/n) Σ_i Ψ_i Ψ_iᵀ) Σ₀`.
    pub variance: DMatrix<f64>,
    pub coefficient: CurvatureCoefficient,
}

impl OracleTerms {
    /// Bias and variance of `φ(θ̂)` by the delta method.
    pub fn functional(&self, phi: &dyn Functional, theta0: &[f64]) -> (f64, f64) {
        let g = phi.gradient_vec(theta0);
        (g.dot(&self.bias), (g.transpose() * &self.variance * &g)[(0, 0)])
    }
}

/// Theoretical bias and variance of `θ̂` for a known data-generating process.
///
/// `theta0` is the pseudo-true parameter; hat-matrix entries come from `fit`.
pub fn oracle_bias_variance<S: OutcomeSpec>(
    spec: &S,
    data: &Dataset,
    fit: &FirstStepFit,
    truth: &dyn MteTruth,
    theta0: &[f64],
    coefficient: CurvatureCoefficient,
) -> Result<OracleTerms> {
    let n = data.n();
    let d = spec.dim_theta();
    validate_mte_data(data, spec.dim_x())?;
    if theta0.len() != d {
        return Err(Error::Shape(format!(
            "theta0 has {} entries, spec has {d}",
            theta0.len()
        )));
    }
    if fit.n() != n {
        return Err(Error::Shape("first-step fit does not match the sample".into()));
    }
    let p: Vec<f64> = (0..n).map(|i| truth.propensity(i)).collect();
    let mut g = DMatrix::zeros(n, d);
    let mut ga = DMatrix::zeros(n, d);
    let mut buf = vec![0.0; d];
    let mut tau = vec![0.0; n];
    for i in 0..n {
        let x = &data.y_row(i)[1..];
        spec.grad_theta(x, p[i], theta0, &mut buf);
        g.row_mut(i).copy_from_slice(&buf);
        spec.cross(x, p[i], theta0, &mut buf);
        ga.row_mut(i).copy_from_slice(&buf);
        tau[i] = truth.tau(i, p[i]);
    }

    // Π (∂e/∂θ τ), one column per parameter.
    let projector = fit.projector();
    let mut proj_gt = DMatrix::zeros(n, d);
    for c in 0..d {
        let v = DVector::from_fn(n, |i, _| g[(i, c)] * tau[i]);
        proj_gt.set_column(c, &projector.project(&v));
    }

    let var_r: Vec<f64> = p.iter().map(|&pj| pj * (1.0 - pj)).collect();
    let lev = fit.leverage();
    let factor = coefficient.factor();
    let mut b = DMatrix::zeros(n, d);
    let mut psi = DMatrix::zeros(n, d);
    let mut col = vec![0.0; n];
    for i in 0..n {
        let x = &data.y_row(i)[1..];
        let y = data.y_row(i)[0];
        let t = data.r()[i];
        let selection = (1.0 - p[i]) * truth.treated_outcome_mean(i)
            - p[i] * truth.untreated_outcome_mean(i);
        projector.hat_column_into(i, &mut col);
        let spread: f64 = col.iter().zip(&var_r).map(|(pij, v)| v * pij * pij).sum();
        let dtau = truth.dtau(i, p[i]);
        let resid = y - spec.value(x, p[i], theta0);
        for c in 0..d {
            let curv = ga[(i, c)] * tau[i] + 0.5 * g[(i, c)] * dtau;
            b[(i, c)] = ga[(i, c)] * selection * lev[i] + factor * curv * spread;
            psi[(i, c)] = g[(i, c)] * resid - proj_gt[(i, c)] * (t - p[i]);
        }
    }

    let nf = n as f64;
    let gram = g.transpose() * &g / nf;
    let sigma0 = gram
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("outcome regressors are collinear at the true propensity".into()))?
        .inverse();
    let b_bar = b.row_sum().transpose() / nf;
    let bias = &sigma0 * b_bar;
    let meat = psi.transpose() * &psi / nf;
    let variance = &sigma0 * meat * &sigma0 / nf;
    Ok(OracleTerms {
        b,
        psi,
        sigma0,
        bias,
        variance,
        coefficient,
    })
}
