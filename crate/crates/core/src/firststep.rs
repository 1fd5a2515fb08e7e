//! Least-squares first step.
//!
//! The fit keeps a thin orthonormal basis `Q` (n x rank) of the column space of
//! `Z`, so the projection `Π = Q Qᵀ` never has to be formed: a hat-matrix
//! column costs O(n·rank), leverages are squared row norms of `Q`, and any
//! response can be re-projected without refactorizing. Rank-deficient designs
//! are handled by the pivoted factorization; the projection does not depend on
//! which generalized inverse of `ZᵀZ` is used.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{MinNormSolver, PivotedQr};

/// Deleting observation `ℓ` is refused when `1 - π_ℓℓ` is at or below this.
pub const LEVERAGE_TOL: f64 = 1e-10;

/// Advisory threshold on `k / sqrt(n)`.
pub const K_RATIO_WARNING: f64 = 0.3;

/// Projection onto the column space of `Z`, with an optional dense cache of `Π`.
#[derive(Clone, Debug)]
pub struct Projector {
    q: DMatrix<f64>,
    leverage: DVector<f64>,
    perm: Vec<usize>,
    solver: MinNormSolver,
    k: usize,
    hat: Option<DMatrix<f64>>,
}

impl Projector {
    pub fn new(z: &DMatrix<f64>) -> Self {
        let qr = PivotedQr::new(z);
        let q = qr.thin_q();
        let leverage = DVector::from_fn(q.nrows(), |i, _| {
            q.row(i).iter().map(|v| v * v).sum::<f64>()
        });
        Self {
            solver: MinNormSolver::new(qr.r_top()),
            perm: qr.perm().to_vec(),
            leverage,
            q,
            k: z.ncols(),
            hat: None,
        }
    }

    /// Materializes `Π` (n² memory) so hat columns become O(n) reads.
    pub fn with_hat_cache(mut self) -> Self {
        if self.hat.is_none() {
            self.hat = Some(&self.q * self.q.transpose());
        }
        self
    }

    pub fn has_hat_cache(&self) -> bool {
        self.hat.is_some()
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rank(&self) -> usize {
        self.q.ncols()
    }

    pub fn leverage(&self) -> &DVector<f64> {
        &self.leverage
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// `Π v`.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.q * (self.q.transpose() * v)
    }

    /// Minimum-norm least-squares coefficients of `v` on `Z`.
    pub fn coefficients(&self, v: &DVector<f64>) -> DVector<f64> {
        let c = self.q.transpose() * v;
        let bp = self.solver.solve(&c);
        let mut beta = DVector::zeros(self.k);
        for (j, &orig) in self.perm.iter().enumerate() {
            beta[orig] = bp[j];
        }
        beta
    }

    /// Column `ℓ` of `Π`.
    pub fn hat_column(&self, ell: usize) -> Result<DVector<f64>> {
        self.check_index(ell)?;
        let mut out = vec![0.0; self.n()];
        self.hat_column_into(ell, &mut out);
        Ok(DVector::from_vec(out))
    }

    pub(crate) fn check_index(&self, ell: usize) -> Result<()> {
        if ell >= self.n() {
            return Err(Error::IndexOutOfRange {
                index: ell,
                len: self.n(),
            });
        }
        Ok(())
    }

    pub(crate) fn hat_column_into(&self, ell: usize, out: &mut [f64]) {
        if let Some(hat) = &self.hat {
            out.copy_from_slice(hat.column(ell).as_slice());
            return;
        }
        let n = self.n();
        out.fill(0.0);
        let qs = self.q.as_slice();
        for c in 0..self.rank() {
            let coef = qs[c * n + ell];
            if coef == 0.0 {
                continue;
            }
            for (o, qv) in out.iter_mut().zip(&qs[c * n..(c + 1) * n]) {
                *o += coef * qv;
            }
        }
    }

    /// Borrowed cached column, when the dense cache exists.
    pub(crate) fn cached_column(&self, ell: usize) -> Option<&[f64]> {
        self.hat
            .as_ref()
            .map(|h| &h.as_slice()[ell * h.nrows()..(ell + 1) * h.nrows()])
    }

    /// Fitted values after deleting observation `ℓ`, written into `out`:
    /// `mu_i + (mu_ℓ - r_ℓ) / (1 - π_ℓℓ) * π_iℓ` for every row `i`.
    ///
    /// `mu` must be the projection of `r`.
    pub fn loo_fitted_into(
        &self,
        mu: &[f64],
        r: &[f64],
        ell: usize,
        out: &mut [f64],
    ) -> Result<()> {
        self.check_index(ell)?;
        let gap = 1.0 - self.leverage[ell];
        if gap <= LEVERAGE_TOL {
            return Err(Error::DeletionSingular {
                index: ell,
                leverage: self.leverage[ell],
            });
        }
        let c = (mu[ell] - r[ell]) / gap;
        match self.cached_column(ell) {
            Some(col) => {
                for ((o, m), p) in out.iter_mut().zip(mu).zip(col) {
                    *o = m + c * p;
                }
            }
            None => {
                self.hat_column_into(ell, out);
                for (o, m) in out.iter_mut().zip(mu) {
                    *o = m + c * *o;
                }
            }
        }
        Ok(())
    }
}

/// First-step least-squares fit of `r` on `Z`.
#[derive(Clone, Debug)]
pub struct FirstStepFit {
    pub beta_hat: DVector<f64>,
    pub mu_hat: DVector<f64>,
    projector: Arc<Projector>,
}

impl FirstStepFit {
    pub fn from_projector(projector: Arc<Projector>, r: &DVector<f64>) -> Self {
        let mu_hat = projector.project(r);
        let beta_hat = projector.coefficients(r);
        Self {
            beta_hat,
            mu_hat,
            projector,
        }
    }

    pub fn projector(&self) -> &Arc<Projector> {
        &self.projector
    }

    pub fn leverage(&self) -> &DVector<f64> {
        self.projector.leverage()
    }

    pub fn rank(&self) -> usize {
        self.projector.rank()
    }

    pub fn n(&self) -> usize {
        self.projector.n()
    }

    pub fn hat_column(&self, ell: usize) -> Result<DVector<f64>> {
        self.projector.hat_column(ell)
    }

    /// Leave-`ℓ`-out fitted values at all n covariate rows, including row `ℓ`.
    pub fn loo_mu(&self, r: &DVector<f64>, ell: usize) -> Result<DVector<f64>> {
        if r.len() != self.n() {
            return Err(Error::Shape(format!(
                "response has {} entries, fit has {}",
                r.len(),
                self.n()
            )));
        }
        let mut out = vec![0.0; self.n()];
        self.projector
            .loo_fitted_into(self.mu_hat.as_slice(), r.as_slice(), ell, &mut out)?;
        Ok(DVector::from_vec(out))
    }

    pub fn design_balance(&self) -> BalanceDiagnostics {
        design_balance(self)
    }
}

/// Least-squares fit of `data.r` on `data.z`.
pub fn fit_least_squares(data: &Dataset) -> Result<FirstStepFit> {
    let projector = Arc::new(Projector::new(data.z()));
    Ok(FirstStepFit::from_projector(projector, data.r()))
}

/// As [`fit_least_squares`], also caching the dense projection matrix.
pub fn fit_least_squares_cached(data: &Dataset) -> Result<FirstStepFit> {
    let projector = Arc::new(Projector::new(data.z()).with_hat_cache());
    Ok(FirstStepFit::from_projector(projector, data.r()))
}

/// Design-balance aggregates of the leverage vector.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BalanceDiagnostics {
    pub n: usize,
    pub k: usize,
    pub rank: usize,
    pub sum_leverage: f64,
    pub sum_sq_leverage: f64,
    pub max_leverage: f64,
    /// `max_i 1/(1 - π_ii)`; infinite when some leverage is numerically one.
    #[serde(serialize_with = "ser_inv_gap")]
    pub max_inv_gap: f64,
    pub k_ratio: f64,
    /// Some observation cannot be deleted (leverage one within tolerance).
    pub deletion_singular: bool,
    /// `k / sqrt(n)` at or above the advisory threshold.
    pub many_covariates: bool,
    /// More covariates than observations.
    pub overparameterized: bool,
}

fn ser_inv_gap<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

pub fn design_balance(fit: &FirstStepFit) -> BalanceDiagnostics {
    let lev = fit.leverage();
    let n = lev.len();
    let k = fit.projector.k();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut max_lev = f64::NEG_INFINITY;
    let mut min_gap = f64::INFINITY;
    for &p in lev.iter() {
        sum += p;
        sum_sq += p * p;
        max_lev = max_lev.max(p);
        min_gap = min_gap.min(1.0 - p);
    }
    let singular = min_gap <= LEVERAGE_TOL;
    let k_ratio = k as f64 / (n as f64).sqrt();
    BalanceDiagnostics {
        n,
        k,
        rank: fit.rank(),
        sum_leverage: sum,
        sum_sq_leverage: sum_sq,
        max_leverage: max_lev,
        max_inv_gap: if singular { f64::INFINITY } else { 1.0 / min_gap },
        k_ratio,
        deletion_singular: singular,
        many_covariates: k_ratio >= K_RATIO_WARNING,
        overparameterized: k > n,
    }
}
