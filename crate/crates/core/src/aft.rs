//! Censored log-normal accelerated failure time regression.
//!
//! Durations follow `log(t) = x'beta + sigma * e` with standard normal `e`.
//! With `u = (log t - x'beta) / (sqrt(2) * sigma)` the log-likelihood is
//!
//! ```text
//! l(beta, sigma) = sum_U [ -log(t * sqrt(2 pi sigma^2)) - u^2 ]
//!                + sum_C log(erfc(u) / 2)
//! ```
//!
//! where `U` holds the observed durations and `C` the censored ones, for
//! which only a lower bound `t` is known.
//!
//! Gradient, with `lambda(u) = 2 exp(-u^2) / (sqrt(pi) erfc(u))`:
//!
//! ```text
//! dl/dbeta_j = sum_U 2 u x_j / (sqrt(2) sigma) + sum_C lambda(u) x_j / (sqrt(2) sigma)
//! dl/dsigma  = sum_U (2 u^2 - 1) / sigma       + sum_C lambda(u) u / sigma
//! ```
//!
//! The censored `dl/dsigma` term is positive: raising `sigma` at fixed
//! `u > 0` fattens the upper tail and increases the survival probability.
//! The finite-difference tests pin this sign.
//!
//! Censored terms go through [`log_erfc`] and [`erfc_ratio`], which stay
//! accurate far into both tails.

use std::f64::consts::{LN_2, PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::covariates::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg::{ols, pearson, spd_inverse};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
/// Above this `erfc` is evaluated through its asymptotic expansion.
const ERFC_ASYMPTOTIC_FROM: f64 = 25.0;

/// `ln(erfc(u))` without underflow for large `u`.
pub fn log_erfc(u: f64) -> f64 {
    if u < ERFC_ASYMPTOTIC_FROM {
        erfc(u).ln()
    } else {
        -u * u - (u * PI.sqrt()).ln() + asymptotic_series(u).ln()
    }
}

/// `2 exp(-u^2) / (sqrt(pi) erfc(u))`, the derivative of `-ln(erfc(u))`.
pub fn erfc_ratio(u: f64) -> f64 {
    if u < ERFC_ASYMPTOTIC_FROM {
        2.0 * (-u * u).exp() / (PI.sqrt() * erfc(u))
    } else {
        // erfc(u) = exp(-u^2) / (u sqrt(pi)) * series
        2.0 * u / asymptotic_series(u)
    }
}

/// `1 - 1/(2u^2) + 3/(2u^2)^2 - 15/(2u^2)^3 + ...`, truncated once terms
/// stop shrinking or fall below machine precision.
fn asymptotic_series(u: f64) -> f64 {
    let x = 1.0 / (2.0 * u * u);
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..40 {
        let next = -term * (2 * n - 1) as f64 * x;
        if next.abs() >= term.abs() || next.abs() < 1e-17 {
            break;
        }
        term = next;
        sum += term;
    }
    sum
}

/// Regression inputs: design with a leading intercept column, log observed
/// durations and censoring flags.
#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalData {
    x: DMatrix<f64>,
    y: DVector<f64>,
    censored: Vec<bool>,
}

impl SurvivalData {
    /// `x` must already contain the intercept column.
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, censored: Vec<bool>) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 {
            return Err(Error::NoEpisodes);
        }
        if y.len() != n || censored.len() != n {
            return Err(Error::InvalidData("row count mismatch".into()));
        }
        if n < p + 1 {
            return Err(Error::TooFewRows { rows: n, required: p + 1 });
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite value".into()));
        }
        if censored.iter().all(|c| *c) {
            return Err(Error::InvalidData("every row is censored".into()));
        }
        Ok(SurvivalData {
            x,
            y: DVector::from_vec(y),
            censored,
        })
    }

    /// Prepends the intercept column to `covariates`.
    pub fn with_intercept(covariates: &DMatrix<f64>, y: Vec<f64>, censored: Vec<bool>) -> Result<Self> {
        let n = covariates.nrows();
        let x = DMatrix::from_fn(n, covariates.ncols() + 1, |i, j| {
            if j == 0 {
                1.0
            } else {
                covariates[(i, j - 1)]
            }
        });
        Self::new(x, y, censored)
    }

    /// Selected design columns plus an intercept.
    pub fn from_design(m: &DesignMatrix, cols: &[usize]) -> Result<Self> {
        let sub = m.x.select_columns(cols);
        Self::with_intercept(&sub, m.response.clone(), m.censored.clone())
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Number of coefficients including the intercept.
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn censored(&self) -> &[bool] {
        &self.censored
    }

    pub fn uncensored_count(&self) -> usize {
        self.censored.iter().filter(|c| !**c).count()
    }

    fn uncensored_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.censored[i]).collect()
    }

    fn check(&self, beta: &[f64], sigma: f64) -> Result<()> {
        if !(sigma > 0.0) {
            return Err(Error::NonPositiveSigma(sigma));
        }
        if beta.len() != self.p() {
            return Err(Error::InvalidData(format!(
                "expected {} coefficients, got {}",
                self.p(),
                beta.len()
            )));
        }
        Ok(())
    }

    fn linear_predictor(&self, beta: &[f64]) -> DVector<f64> {
        &self.x * DVector::from_column_slice(beta)
    }
}

pub fn log_likelihood(beta: &[f64], sigma: f64, data: &SurvivalData) -> Result<f64> {
    data.check(beta, sigma)?;
    let mu = data.linear_predictor(beta);
    let ln_sigma = sigma.ln();
    let mut l = 0.0;
    for i in 0..data.n() {
        let z = (data.y[i] - mu[i]) / sigma;
        if data.censored[i] {
            l += log_erfc(z / SQRT_2) - LN_2;
        } else {
            l += -data.y[i] - ln_sigma - HALF_LN_2PI - 0.5 * z * z;
        }
    }
    Ok(l)
}

/// Analytic gradient with respect to `(beta, sigma)`.
pub fn gradient(beta: &[f64], sigma: f64, data: &SurvivalData) -> Result<(DVector<f64>, f64)> {
    data.check(beta, sigma)?;
    let mu = data.linear_predictor(beta);
    let mut w = DVector::zeros(data.n());
    let mut g_sigma = 0.0;
    for i in 0..data.n() {
        let z = (data.y[i] - mu[i]) / sigma;
        if data.censored[i] {
            let u = z / SQRT_2;
            let lam = erfc_ratio(u);
            w[i] = lam / (SQRT_2 * sigma);
            g_sigma += lam * u / sigma;
        } else {
            w[i] = z / sigma;
            g_sigma += (z * z - 1.0) / sigma;
        }
    }
    Ok((data.x.tr_mul(&w), g_sigma))
}

/// `P(T > t | x)` for a duration `t > 0` in the response's units. `x` is a
/// full design row, intercept included.
pub fn survival_function(t: f64, x: &[f64], beta: &[f64], sigma: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveT(t));
    }
    if !(sigma > 0.0) {
        return Err(Error::NonPositiveSigma(sigma));
    }
    let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
    let u = (t.ln() - eta) / (SQRT_2 * sigma);
    Ok(0.5 * erfc(u))
}

/// `R^2 - (1 - R^2) k / (n - k - 1)`, algebraically the usual
/// `1 - (1 - R^2)(n - 1)/(n - k - 1)` but exact at `k = 0` and `R^2 = 1`.
pub fn adjusted_r_squared(r2: f64, n: usize, k: usize) -> Result<f64> {
    if n <= k + 1 {
        return Err(Error::DegenerateDof { n, k });
    }
    Ok(r2 - (1.0 - r2) * k as f64 / (n - k - 1) as f64)
}

/// Squared correlation between `y` and `x'beta` over the uncensored rows.
/// Zero when either side has no variation.
pub fn r_squared(beta: &[f64], data: &SurvivalData) -> f64 {
    let rows = data.uncensored_rows();
    if rows.len() < 2 {
        return 0.0;
    }
    let mu = data.linear_predictor(beta);
    let y: Vec<f64> = rows.iter().map(|&i| data.y[i]).collect();
    let fitted: Vec<f64> = rows.iter().map(|&i| mu[i]).collect();
    pearson(&y, &fitted).map_or(0.0, |r| r * r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Intercept first.
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub loglik: f64,
    /// `None` when the negative Hessian could not be inverted.
    #[serde(rename = "se")]
    pub std_errors: Option<Vec<f64>>,
    /// Wald test at 5% per covariate, intercept excluded.
    pub significant: Vec<bool>,
    pub r2: f64,
    pub adj_r2: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip)]
    pub gradient_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Max-norm of the `(beta, sigma)` gradient at convergence.
    pub grad_tol: f64,
    /// Looser bound accepted when the line search can no longer move.
    pub stalled_grad_tol: f64,
    pub alpha: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            grad_tol: 1e-8,
            stalled_grad_tol: 1e-5,
            alpha: 0.05,
        }
    }
}

/// Starting point for [`fit_mle`].
#[derive(Clone, Debug, PartialEq)]
pub struct Init {
    pub beta: Vec<f64>,
    pub sigma: f64,
}

/// OLS on the uncensored rows, with the residual standard deviation floored
/// at 1e-3. Falls back to an intercept-only start when that system is
/// singular.
pub fn default_init(data: &SurvivalData) -> Init {
    let rows = data.uncensored_rows();
    let xu = data.x.select_rows(&rows);
    let yu = DVector::from_iterator(rows.len(), rows.iter().map(|&i| data.y[i]));
    match ols(&xu, &yu) {
        Ok(b) => {
            let resid = &yu - &xu * &b;
            let sigma = (resid.norm_squared() / rows.len() as f64).sqrt().max(1e-3);
            Init {
                beta: b.iter().copied().collect(),
                sigma,
            }
        }
        Err(_) => {
            let m = yu.mean();
            let sd = (yu.iter().map(|v| (v - m).powi(2)).sum::<f64>() / rows.len() as f64).sqrt();
            let mut beta = vec![0.0; data.p()];
            beta[0] = m;
            Init {
                beta,
                sigma: sd.max(1e-3),
            }
        }
    }
}

/// Parameters are `theta = (beta, ln sigma)`.
struct Objective<'a> {
    data: &'a SurvivalData,
}

impl Objective<'_> {
    fn split(theta: &DVector<f64>) -> (Vec<f64>, f64) {
        let p = theta.len() - 1;
        (theta.rows(0, p).iter().copied().collect(), theta[p].exp())
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        let (beta, sigma) = Self::split(theta);
        match log_likelihood(&beta, sigma, self.data) {
            Ok(v) if v.is_finite() => v,
            _ => f64::NEG_INFINITY,
        }
    }

    /// Returns the gradient in `theta` and the max-norm of the gradient in
    /// `(beta, sigma)`.
    fn grad(&self, theta: &DVector<f64>) -> (DVector<f64>, f64) {
        let (beta, sigma) = Self::split(theta);
        let (gb, gs) = gradient(&beta, sigma, self.data).expect("sigma = exp(.) > 0");
        let p = gb.len();
        let norm = gb.iter().fold(gs.abs(), |m, v| m.max(v.abs()));
        let mut g = DVector::zeros(p + 1);
        g.rows_mut(0, p).copy_from(&gb);
        g[p] = gs * sigma;
        (g, norm)
    }

    /// Symmetrized central differences of the analytic gradient.
    fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let d = theta.len();
        let mut h = DMatrix::zeros(d, d);
        for j in 0..d {
            let step = 1e-5 * theta[j].abs().max(1.0);
            let mut up = theta.clone();
            up[j] += step;
            let mut down = theta.clone();
            down[j] -= step;
            let col = (self.grad(&up).0 - self.grad(&down).0) / (2.0 * step);
            h.set_column(j, &col);
        }
        (&h + h.transpose()) * 0.5
    }
}

/// Maximizes the censored log-likelihood with damped Newton steps.
///
/// Newton directions come from a finite-difference Hessian of the analytic
/// gradient; when that direction is not an ascent direction the step falls
/// back to the gradient. Each step backtracks until the Armijo condition
/// holds. Standard errors come from the inverse negative Hessian at the
/// optimum.
pub fn fit_mle(data: &SurvivalData, init: Option<Init>, opts: FitOptions) -> Result<FitResult> {
    let init = init.unwrap_or_else(|| default_init(data));
    data.check(&init.beta, init.sigma)?;
    let obj = Objective { data };
    let p = data.p();
    let mut theta = DVector::zeros(p + 1);
    theta.rows_mut(0, p).copy_from_slice(&init.beta);
    theta[p] = init.sigma.ln();

    let mut value = obj.value(&theta);
    if !value.is_finite() {
        return Err(Error::InvalidData("log-likelihood is not finite at the start".into()));
    }
    let mut converged = false;
    let mut iterations = 0;
    let (mut g, mut gnorm) = obj.grad(&theta);
    while iterations < opts.max_iterations {
        if gnorm <= opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let neg_h = -obj.hessian(&theta);
        let mut dir = neg_h
            .clone()
            .cholesky()
            .map(|c| c.solve(&g))
            .filter(|d| d.dot(&g) > 0.0 && d.iter().all(|v| v.is_finite()))
            .unwrap_or_else(|| g.clone());
        // keep a raw gradient step from jumping across the parameter space
        let len = dir.norm();
        if len > 10.0 {
            dir *= 10.0 / len;
        }
        let slope = g.dot(&dir);
        // below this the change in a sum of n log terms is rounding noise
        let noise = 1e-13 * (1.0 + value.abs());
        let mut step = 1.0;
        let mut moved = false;
        while step * len > 1e-16 * (1.0 + theta.norm()) {
            let trial = &theta + &dir * step;
            let v = obj.value(&trial);
            if v >= value + 1e-4 * step * slope {
                theta = trial;
                value = v;
                moved = true;
                break;
            }
            if step * slope <= noise && v.is_finite() && obj.grad(&trial).1 < gnorm {
                theta = trial;
                value = v;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if moved {
            (g, gnorm) = obj.grad(&theta);
        } else {
            converged = gnorm <= opts.stalled_grad_tol;
            break;
        }
    }
    if !converged && gnorm <= opts.grad_tol {
        converged = true;
    }

    let (beta, sigma) = Objective::split(&theta);
    let std_errors = spd_inverse(&(-obj.hessian(&theta)))
        .map(|cov| (0..p).map(|j| cov[(j, j)].sqrt()).collect::<Vec<_>>())
        .filter(|se| se.iter().all(|v| v.is_finite() && *v > 0.0));
    let r2 = r_squared(&beta, data);
    let k = p - 1;
    let mut fit = FitResult {
        beta,
        sigma,
        loglik: value,
        std_errors,
        significant: Vec::new(),
        r2,
        adj_r2: adjusted_r_squared(r2, data.uncensored_count(), k).ok(),
        converged,
        iterations,
        gradient_norm: gnorm,
    };
    if fit.std_errors.is_some() {
        fit.significant = wald_significance(&fit, opts.alpha)?;
    }
    Ok(fit)
}

/// Two-sided Wald test per covariate: `|beta_j / se_j| > z_{1 - alpha/2}`.
/// The intercept is not reported.
pub fn wald_significance(fit: &FitResult, alpha: f64) -> Result<Vec<bool>> {
    let se = fit.std_errors.as_ref().ok_or(Error::MissingStdErrors)?;
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    Ok(fit
        .beta
        .iter()
        .zip(se)
        .skip(1)
        .map(|(b, s)| (b / s).abs() > z)
        .collect())
}
