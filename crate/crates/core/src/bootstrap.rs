//! Wild first-step, multiplier second-step bootstrap of the bias-corrected
//! Studentized statistic, and percentile-t intervals.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::firststep::FirstStepFit;
use crate::gmm::{ObsWeights, SecondStep};
use crate::jackknife::{Functional, JackknifeResult};
use crate::linalg::inv_sqrt_floored;
use crate::rng::Stream;

/// Version tag written into every serialized [`InferenceReport`].
pub const REPORT_VERSION: u32 = 1;

/// Relative eigenvalue floor for `V̂*^{-1/2}`.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Share of failed draws above which a run is rejected.
pub const MAX_FAILURE_SHARE: f64 = 0.01;

const MOMENT_TOL: f64 = 1e-12;

/// Law of the multipliers `ω*`.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightDistribution {
    /// `1 ± 1` with equal probability.
    Rademacher,
    /// `1 ± sqrt(3/2)`, `1 ± 1`, `1 ± sqrt(1/2)`, each with probability 1/6.
    Webb,
    /// Validated `(value, probability)` support.
    Custom(Vec<(f64, f64)>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightMoments {
    pub mean: f64,
    pub variance: f64,
    pub third_central: f64,
    pub fourth_central: f64,
}

fn webb_support() -> Vec<(f64, f64)> {
    let a = 1.5f64.sqrt();
    let c = 0.5f64.sqrt();
    [1.0 - a, 0.0, 1.0 - c, 1.0 + c, 2.0, 1.0 + a]
        .into_iter()
        .map(|v| (v, 1.0 / 6.0))
        .collect()
}

impl WeightDistribution {
    /// Builds a custom law after checking mean 1, variance 1 and zero third central moment.
    pub fn custom(support: Vec<(f64, f64)>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidWeight("empty support".into()));
        }
        if support
            .iter()
            .any(|&(v, p)| !v.is_finite() || !p.is_finite() || p < 0.0)
        {
            return Err(Error::InvalidWeight(
                "support values must be finite and probabilities non-negative".into(),
            ));
        }
        let total: f64 = support.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > MOMENT_TOL {
            return Err(Error::InvalidDistribution {
                moment: "total probability",
                value: total,
                expected: 1.0,
            });
        }
        let m = moments_of(&support);
        for (name, value, expected) in [
            ("mean", m.mean, 1.0),
            ("variance", m.variance, 1.0),
            ("third central moment", m.third_central, 0.0),
        ] {
            if (value - expected).abs() > MOMENT_TOL {
                return Err(Error::InvalidDistribution {
                    moment: name,
                    value,
                    expected,
                });
            }
        }
        Ok(WeightDistribution::Custom(support))
    }

    pub fn support(&self) -> Vec<(f64, f64)> {
        match self {
            WeightDistribution::Rademacher => vec![(0.0, 0.5), (2.0, 0.5)],
            WeightDistribution::Webb => webb_support(),
            WeightDistribution::Custom(s) => s.clone(),
        }
    }

    pub fn moments(&self) -> WeightMoments {
        moments_of(&self.support())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            WeightDistribution::Rademacher => {
                if rng.gen::<bool>() {
                    2.0
                } else {
                    0.0
                }
            }
            WeightDistribution::Webb => {
                let s = webb_support();
                s[rng.gen_range(0..6)].0
            }
            WeightDistribution::Custom(s) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for &(v, p) in s {
                    acc += p;
                    if u < acc {
                        return v;
                    }
                }
                s.last().expect("validated non-empty").0
            }
        }
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

fn moments_of(support: &[(f64, f64)]) -> WeightMoments {
    let mean: f64 = support.iter().map(|&(v, p)| p * v).sum();
    let central = |k: i32| support.iter().map(|&(v, p)| p * (v - mean).powi(k)).sum::<f64>();
    WeightMoments {
        mean,
        variance: central(2),
        third_central: central(3),
        fourth_central: central(4),
    }
}

impl fmt::Display for WeightDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightDistribution::Rademacher => write!(f, "rademacher"),
            WeightDistribution::Webb => write!(f, "webb"),
            WeightDistribution::Custom(s) => {
                write!(f, "custom:")?;
                for (i, (v, p)) in s.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}@{p}")?;
                }
                Ok(())
            }
        }
    }
}

/// Parses `rademacher`, `webb`, or `custom:v1@p1,v2@p2,...`.
impl FromStr for WeightDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "rademacher" => return Ok(WeightDistribution::Rademacher),
            "webb" | "webb6" => return Ok(WeightDistribution::Webb),
            _ => {}
        }
        let body = s
            .strip_prefix("custom:")
            .ok_or_else(|| Error::Config(format!("unknown weight distribution '{s}'")))?;
        let mut support = Vec::new();
        for item in body.split(',') {
            let (v, p) = item
                .split_once('@')
                .ok_or_else(|| Error::Config(format!("expected value@probability, got '{item}'")))?;
            let parse = |x: &str| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("cannot parse '{x}' in weight support")))
            };
            support.push((parse(v)?, parse(p)?));
        }
        WeightDistribution::custom(support)
    }
}

/// `n` i.i.d. multipliers from `stream`.
pub fn draw_weights(dist: &WeightDistribution, n: usize, stream: &Stream) -> Vec<f64> {
    let mut rng = stream.rng();
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

/// Wild first step: `r*_i = μ̂_i + (ω_i - 1)(r_i - μ̂_i)` and `μ̂* = Π r*`.
///
/// `μ̂*` is formed as `μ̂ + Π((ω - 1)(r - μ̂))` with the stored factorization,
/// which is the same projection and makes unit weights reproduce `μ̂` exactly.
pub fn wild_first_step(
    fit: &FirstStepFit,
    r: &DVector<f64>,
    omega: &[f64],
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = fit.n();
    if r.len() != n || omega.len() != n {
        return Err(Error::Shape(format!(
            "wild bootstrap needs {n} responses and weights, got {} and {}",
            r.len(),
            omega.len()
        )));
    }
    let e = DVector::from_fn(n, |i, _| (omega[i] - 1.0) * (r[i] - fit.mu_hat[i]));
    let r_star = &fit.mu_hat + &e;
    let mu_star = &fit.mu_hat + fit.projector().project(&e);
    Ok((r_star, mu_star))
}

/// One bootstrap replicate of the bias-corrected Studentized statistic.
#[derive(Clone, Debug)]
pub struct BootstrapDraw {
    pub theta_star: DVector<f64>,
    pub bias_star: DVector<f64>,
    pub var_star: DMatrix<f64>,
    /// `V̂*^{-1/2}(θ̂* - θ̂ - B̂*)`.
    pub t_star: DVector<f64>,
    pub weights: Vec<f64>,
    /// Some eigenvalue of `V̂*` hit the floor.
    pub floored: bool,
}

/// Bootstrap replicate for a given weight vector.
///
/// The jackknife under the bootstrap deletes `ℓ` from the wild first step and
/// lowers its second-step multiplier by one. Deletions with `ω_ℓ = 0` carry no
/// weight in `B̂*` or `V̂*` and are skipped. The centre `θ̂*^(·)` is the
/// `ω`-weighted mean of the deletions, normalized by `Σ ω_ℓ`.
pub fn bootstrap_draw(
    step: &dyn SecondStep,
    data: &Dataset,
    fit: &FirstStepFit,
    theta_hat: &DVector<f64>,
    omega: Vec<f64>,
) -> Result<BootstrapDraw> {
    let n = data.n();
    let d = step.dim_theta();
    let (r_star, mu_star) = wild_first_step(fit, data.r(), &omega)?;
    let w = ObsWeights::from_slice(&omega);
    let theta_star = step.solve(data, mu_star.as_slice(), w, Some(theta_hat.as_slice()))?;

    let total: f64 = omega.iter().sum();
    if !(total.abs() > 0.5) {
        return Err(Error::InvalidWeight(format!(
            "bootstrap weights sum to {total}"
        )));
    }
    let projector = fit.projector();
    let mut buf = vec![0.0; n];
    let mut loo: Vec<(f64, DVector<f64>)> = Vec::with_capacity(n);
    for ell in 0..n {
        if omega[ell] == 0.0 {
            continue;
        }
        projector.loo_fitted_into(mu_star.as_slice(), r_star.as_slice(), ell, &mut buf)?;
        let th = step.solve(data, &buf, w.minus_one_at(ell), Some(theta_star.as_slice()))?;
        loo.push((omega[ell], th));
    }

    let nf = n as f64;
    let mut dot = DVector::zeros(d);
    for (wl, th) in &loo {
        dot.axpy(*wl, th, 1.0);
    }
    dot /= total;
    let bias_star = (&dot - &theta_star) * (nf - 1.0);
    let mut var_star = DMatrix::zeros(d, d);
    for (wl, th) in &loo {
        let dev = th - &dot;
        var_star.ger(*wl, &dev, &dev, 1.0);
    }
    var_star *= (nf - 1.0) / nf;

    let (inv_sqrt, floored) = inv_sqrt_floored(&var_star, EIGEN_FLOOR);
    let t_star = inv_sqrt * (&theta_star - theta_hat - &bias_star);
    Ok(BootstrapDraw {
        theta_star,
        bias_star,
        var_star,
        t_star,
        weights: omega,
        floored,
    })
}

#[derive(Clone, Debug)]
pub struct BootstrapOptions {
    pub draws: usize,
    pub weights: WeightDistribution,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            draws: 500,
            weights: WeightDistribution::Rademacher,
            seed: 0,
        }
    }
}

/// Minimum number of draws accepted by [`bootstrap_statistic`].
pub const MIN_DRAWS: usize = 50;

/// Completed bootstrap run: the full-sample jackknife plus all successful draws.
#[derive(Clone, Debug)]
pub struct BootstrapRun {
    pub jackknife: JackknifeResult,
    /// Successful draws, in draw-index order.
    pub draws: Vec<BootstrapDraw>,
    pub requested: usize,
    pub failures: usize,
    pub floored: usize,
    pub seed: Option<u64>,
    pub weights: String,
}

/// Runs `options.draws` replicates with weights from `Stream::new(seed)`.
///
/// Draw `b` always uses the stream `seed / "bootstrap" / b`, so results do not
/// depend on how draws are scheduled across workers.
pub fn bootstrap_statistic(
    step: &dyn SecondStep,
    data: &Dataset,
    fit: &FirstStepFit,
    jk: &JackknifeResult,
    options: &BootstrapOptions,
) -> Result<BootstrapRun> {
    if options.draws < MIN_DRAWS {
        return Err(Error::Config(format!(
            "need at least {MIN_DRAWS} bootstrap draws, got {}",
            options.draws
        )));
    }
    let root = Stream::new(options.seed).domain("bootstrap");
    let n = data.n();
    let weights: Vec<Vec<f64>> = (0..options.draws)
        .map(|b| draw_weights(&options.weights, n, &root.child(b as u64)))
        .collect();
    let mut run = bootstrap_with_weights(step, data, fit, jk, weights)?;
    run.seed = Some(options.seed);
    run.weights = options.weights.name();
    Ok(run)
}

/// Runs one replicate per supplied weight vector.
pub fn bootstrap_with_weights(
    step: &dyn SecondStep,
    data: &Dataset,
    fit: &FirstStepFit,
    jk: &JackknifeResult,
    weights: Vec<Vec<f64>>,
) -> Result<BootstrapRun> {
    let requested = weights.len();
    if requested == 0 {
        return Err(Error::Config("no bootstrap draws requested".into()));
    }
    let results: Vec<Result<BootstrapDraw>> = weights
        .into_par_iter()
        .map(|w| bootstrap_draw(step, data, fit, &jk.theta_hat, w))
        .collect();
    let mut draws = Vec::with_capacity(requested);
    let mut failures = 0;
    for r in results {
        match r {
            Ok(d) => draws.push(d),
            Err(_) => failures += 1,
        }
    }
    if failures as f64 > MAX_FAILURE_SHARE * requested as f64 {
        return Err(Error::BootstrapFailed {
            failed: failures,
            total: requested,
        });
    }
    let floored = draws.iter().filter(|d| d.floored).count();
    Ok(BootstrapRun {
        jackknife: jk.clone(),
        draws,
        requested,
        failures,
        floored,
        seed: None,
        weights: "supplied".into(),
    })
}

/// `inf{t : F̂(t) >= α}` over sorted draws.
pub fn empirical_quantile(sorted: &[f64], alpha: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::InvalidInput("no bootstrap draws".into()));
    }
    let b = sorted.len();
    let bf = b as f64;
    let mut j = ((alpha * bf).ceil() as usize).clamp(1, b);
    while j > 1 && (j - 1) as f64 / bf >= alpha {
        j -= 1;
    }
    while j < b && (j as f64) / bf < alpha {
        j += 1;
    }
    Ok(sorted[j - 1])
}

/// Percentile-t bounds `[c - q_{1-α/2} s, c - q_{α/2} s]` from scalar draws.
///
/// Returns `(lower, upper, q_{α/2}, q_{1-α/2})`.
pub fn percentile_t_bounds(
    center: f64,
    se: f64,
    draws: &[f64],
    alpha: f64,
) -> Result<(f64, f64, f64, f64)> {
    check_alpha(alpha)?;
    let mut sorted: Vec<f64> = draws.to_vec();
    if sorted.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("bootstrap draws contain NaN".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let q_lo = empirical_quantile(&sorted, alpha / 2.0)?;
    let q_hi = empirical_quantile(&sorted, 1.0 - alpha / 2.0)?;
    Ok((center - q_hi * se, center - q_lo * se, q_lo, q_hi))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub functional: String,
    /// `percentile-t` or `normal`.
    pub method: String,
    pub alpha: f64,
    /// `φ(θ̂)`.
    pub estimate: f64,
    /// Linearized bias `φ̇ B̂`.
    pub bias: f64,
    pub corrected: f64,
    /// `sqrt(φ̇ V̂ φ̇ᵀ)`.
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantilePair {
    pub functional: String,
    pub alpha: f64,
    /// `q̂_{α/2}`.
    pub lower: f64,
    /// `q̂_{1-α/2}`.
    pub upper: f64,
}

fn delta_parts(jk: &JackknifeResult, phi: &dyn Functional) -> Result<(f64, f64, f64)> {
    let d = jk.theta_hat.len();
    if phi.dim() != d {
        return Err(Error::Shape(format!(
            "functional expects {} parameters, estimate has {d}",
            phi.dim()
        )));
    }
    let th = jk.theta_hat.as_slice();
    let g = phi.gradient_vec(th);
    let var = (g.transpose() * &jk.var_hat * &g)[(0, 0)];
    Ok((phi.value(th), g.dot(&jk.bias_hat), var.max(0.0).sqrt()))
}

impl BootstrapRun {
    /// Studentized draws for the scalar functional `φ`:
    /// `(φ(θ̂*) - φ(θ̂) - φ̇(θ̂*) B̂*) / sqrt(φ̇(θ̂*) V̂* φ̇(θ̂*)ᵀ)`.
    pub fn scalar_draws(&self, phi: &dyn Functional) -> Result<Vec<f64>> {
        let d = self.jackknife.theta_hat.len();
        if phi.dim() != d {
            return Err(Error::Shape(format!(
                "functional expects {} parameters, estimate has {d}",
                phi.dim()
            )));
        }
        let base = phi.value(self.jackknife.theta_hat.as_slice());
        Ok(self
            .draws
            .iter()
            .map(|dr| {
                let th = dr.theta_star.as_slice();
                let g = phi.gradient_vec(th);
                let var = (g.transpose() * &dr.var_star * &g)[(0, 0)];
                let floor = EIGEN_FLOOR * dr.var_star.trace().abs() * g.norm_squared();
                let s = var.max(floor).max(f64::MIN_POSITIVE).sqrt();
                (phi.value(th) - base - g.dot(&dr.bias_star)) / s
            })
            .collect())
    }

    pub fn percentile_t_interval(
        &self,
        name: &str,
        phi: &dyn Functional,
        alpha: f64,
    ) -> Result<(Interval, QuantilePair)> {
        let (estimate, bias, se) = delta_parts(&self.jackknife, phi)?;
        let draws = self.scalar_draws(phi)?;
        let corrected = estimate - bias;
        let (lower, upper, q_lo, q_hi) = percentile_t_bounds(corrected, se, &draws, alpha)?;
        Ok((
            Interval {
                functional: name.to_string(),
                method: "percentile-t".into(),
                alpha,
                estimate,
                bias,
                corrected,
                se,
                lower,
                upper,
            },
            QuantilePair {
                functional: name.to_string(),
                alpha,
                lower: q_lo,
                upper: q_hi,
            },
        ))
    }

    /// Report with one percentile-t interval per named functional.
    pub fn report(
        &self,
        functionals: &[(&str, &dyn Functional)],
        alpha: f64,
    ) -> Result<InferenceReport> {
        let mut report = InferenceReport::from_jackknife(&self.jackknife);
        report.t_draws = self
            .draws
            .iter()
            .map(|d| d.t_star.iter().copied().collect())
            .collect();
        for (name, phi) in functionals {
            let (iv, q) = self.percentile_t_interval(name, *phi, alpha)?;
            report.intervals.push(iv);
            report.quantiles.push(q);
        }
        report.seed = self.seed;
        report.n_draws = self.requested;
        report.failures = self.failures;
        report.floored = self.floored;
        report.weights = Some(self.weights.clone());
        Ok(report)
    }
}

/// Normal-approximation interval `φ̂ - B̂_φ ± z_{1-α/2} sqrt(V̂_φ)`.
pub fn normal_interval(
    jk: &JackknifeResult,
    name: &str,
    phi: &dyn Functional,
    alpha: f64,
) -> Result<Interval> {
    check_alpha(alpha)?;
    let (estimate, bias, se) = delta_parts(jk, phi)?;
    let z = normal_quantile(1.0 - alpha / 2.0);
    let corrected = estimate - bias;
    Ok(Interval {
        functional: name.to_string(),
        method: "normal".into(),
        alpha,
        estimate,
        bias,
        corrected,
        se,
        lower: corrected - z * se,
        upper: corrected + z * se,
    })
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Serialized inference summary. Field names are fixed; `version` tracks the schema.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InferenceReport {
    pub version: u32,
    pub theta_hat: Vec<f64>,
    pub bias_hat: Vec<f64>,
    pub var_hat: Vec<Vec<f64>>,
    pub t_draws: Vec<Vec<f64>>,
    pub quantiles: Vec<QuantilePair>,
    pub intervals: Vec<Interval>,
    pub seed: Option<u64>,
    pub n_draws: usize,
    pub failures: usize,
    pub floored: usize,
    pub weights: Option<String>,
}

impl InferenceReport {
    /// Jackknife-only report with no draws.
    pub fn from_jackknife(jk: &JackknifeResult) -> Self {
        let d = jk.theta_hat.len();
        Self {
            version: REPORT_VERSION,
            theta_hat: jk.theta_hat.iter().copied().collect(),
            bias_hat: jk.bias_hat.iter().copied().collect(),
            var_hat: (0..d)
                .map(|i| (0..d).map(|j| jk.var_hat[(i, j)]).collect())
                .collect(),
            t_draws: Vec::new(),
            quantiles: Vec::new(),
            intervals: Vec::new(),
            seed: None,
            n_draws: 0,
            failures: 0,
            floored: 0,
            weights: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are always serializable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_uses_inf_definition() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(empirical_quantile(&s, 0.5).unwrap(), 2.0);
        assert_eq!(empirical_quantile(&s, 0.25).unwrap(), 1.0);
        assert_eq!(empirical_quantile(&s, 0.26).unwrap(), 2.0);
        assert_eq!(empirical_quantile(&s, 1.0).unwrap(), 4.0);
        assert_eq!(empirical_quantile(&s, 1e-9).unwrap(), 1.0);
        assert!(empirical_quantile(&[], 0.5).is_err());
    }

    #[test]
    fn constant_draws_give_point_interval() {
        let (lo, hi, _, _) = percentile_t_bounds(1.0, 0.5, &[0.4; 20], 0.05).unwrap();
        assert_eq!(lo, hi);
        assert!((lo - (1.0 - 0.4 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn symmetric_draws_center_the_interval() {
        let draws: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { -1.3 } else { 1.3 }).collect();
        let (lo, hi, _, _) = percentile_t_bounds(2.0, 0.1, &draws, 0.1).unwrap();
        assert!(((lo + hi) / 2.0 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn parses_distributions() {
        assert_eq!("Rademacher".parse::<WeightDistribution>().unwrap(), WeightDistribution::Rademacher);
        assert_eq!("webb".parse::<WeightDistribution>().unwrap(), WeightDistribution::Webb);
        let d: WeightDistribution = "custom:0@0.5,2@0.5".parse().unwrap();
        assert_eq!(d.moments().variance, 1.0);
        assert!("custom:0@0.5".parse::<WeightDistribution>().is_err());
        assert!("gamma".parse::<WeightDistribution>().is_err());
    }

    #[test]
    fn custom_sampler_hits_support() {
        let d = WeightDistribution::Webb;
        let w = draw_weights(&d, 600, &Stream::new(3));
        let support = d.support();
        assert!(w.iter().all(|x| support.iter().any(|(v, _)| v == x)));
        for &(v, _) in &support {
            assert!(w.contains(&v));
        }
    }

    #[test]
    fn normal_quantile_is_standard() {
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-12);
    }
}
