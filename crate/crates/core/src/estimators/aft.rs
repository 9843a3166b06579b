//! Weibull accelerated-failure-time outcome model.
//!
//! `log T = x'theta + sigma W` with `W` standard minimum extreme value. The
//! design is `[1, treated, features...]`; feature columns that never vary
//! are dropped before fitting.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::{gamma, gamma_lr};

use super::propensity::solve_spd;
use crate::error::{Error, Result};

/// Survival times below this are floored before taking logs.
pub const TIME_FLOOR: f64 = 0.5;
pub const MIN_EVENTS: usize = 10;
const MAX_ITER: usize = 200;
const GRAD_TOL: f64 = 1e-6;

/// Fitting data in the AFT parameterization, exposed so the likelihood and
/// its derivatives can be checked directly.
#[derive(Debug, Clone)]
pub struct AftData {
    /// `n x p` design, intercept and treatment first.
    pub design: DMatrix<f64>,
    pub log_times: Vec<f64>,
    pub events: Vec<bool>,
}

impl AftData {
    pub fn new(design: DMatrix<f64>, times: &[f64], events: &[bool]) -> Self {
        let log_times = times.iter().map(|&t| t.max(TIME_FLOOR).ln()).collect();
        Self { design, log_times, events: events.to_vec() }
    }

    pub fn n_params(&self) -> usize {
        self.design.ncols() + 1
    }

    /// Log-likelihood (up to a constant); `params = [theta..., log sigma]`.
    pub fn log_likelihood(&self, params: &[f64]) -> f64 {
        let p = self.design.ncols();
        let s = params[p];
        let sigma = s.exp();
        let mut ll = 0.0;
        for i in 0..self.design.nrows() {
            let eta: f64 = (0..p).map(|j| self.design[(i, j)] * params[j]).sum();
            let z = (self.log_times[i] - eta) / sigma;
            if self.events[i] {
                ll += z - s;
            }
            ll -= z.exp();
        }
        ll
    }

    /// Gradient and Hessian of [`Self::log_likelihood`].
    pub fn derivatives(&self, params: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.design.ncols();
        let sigma = params[p].exp();
        let mut g = DVector::zeros(p + 1);
        let mut h = DMatrix::zeros(p + 1, p + 1);
        for i in 0..self.design.nrows() {
            let x = self.design.row(i);
            let eta: f64 = (0..p).map(|j| x[j] * params[j]).sum();
            let z = (self.log_times[i] - eta) / sigma;
            let ez = z.exp();
            let d = if self.events[i] { 1.0 } else { 0.0 };
            let a = (ez - d) / sigma;
            let hts = -(z * ez + ez - d) / sigma;
            let htt = -ez / (sigma * sigma);
            for j in 0..p {
                if x[j] == 0.0 {
                    continue;
                }
                g[j] += a * x[j];
                h[(j, p)] += hts * x[j];
                for k in j..p {
                    h[(j, k)] += htt * x[j] * x[k];
                }
            }
            g[p] += -d + z * (ez - d);
            h[(p, p)] += -z * (ez - d) - z * z * ez;
        }
        for j in 0..=p {
            for k in 0..j {
                h[(j, k)] = h[(k, j)];
            }
        }
        (g, h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeibullAft {
    /// Coefficients for `[1, treated, kept features...]`.
    pub theta: Vec<f64>,
    pub log_sigma: f64,
    /// Indices of the feature columns kept in the design.
    pub kept_features: Vec<usize>,
    /// Inverse observed information over `[theta..., log sigma]`.
    pub covariance: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_max_norm: f64,
}

impl WeibullAft {
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.theta.clone();
        p.push(self.log_sigma);
        p
    }

    /// Linear predictor for a patient with raw feature row `x`, with the
    /// treatment indicator set to `treated`.
    pub fn linear_predictor(&self, params: &[f64], treated: bool, x: &[f64]) -> f64 {
        let mut eta = params[0] + if treated { params[1] } else { 0.0 };
        for (k, &j) in self.kept_features.iter().enumerate() {
            eta += params[k + 2] * x[j];
        }
        eta
    }

    pub fn survival(&self, t: f64, treated: bool, x: &[f64]) -> f64 {
        let params = self.params();
        let eta = self.linear_predictor(&params, treated, x);
        (-((t.ln() - eta) / self.log_sigma.exp()).exp()).exp()
    }

    pub fn rmst(&self, tau: f64, treated: bool, x: &[f64]) -> f64 {
        let params = self.params();
        weibull_rmst(self.linear_predictor(&params, treated, x), self.log_sigma.exp(), tau)
    }

    /// Mean over rows of the predicted RMST difference (treated minus
    /// untreated) at `tau`, with a delta-method standard error.
    pub fn rmst_difference(&self, features: &DMatrix<f64>, tau: f64) -> (f64, f64) {
        let rows: Vec<Vec<f64>> = (0..features.nrows()).map(|i| features.row(i).iter().copied().collect()).collect();
        let mean_diff = |params: &[f64]| {
            let sigma = params[params.len() - 1].exp();
            let total: f64 = rows
                .iter()
                .map(|x| {
                    weibull_rmst(self.linear_predictor(params, true, x), sigma, tau)
                        - weibull_rmst(self.linear_predictor(params, false, x), sigma, tau)
                })
                .sum();
            total / rows.len() as f64
        };
        let params = self.params();
        let point = mean_diff(&params);
        let mut grad = DVector::zeros(params.len());
        for j in 0..params.len() {
            let h = 1e-5 * params[j].abs().max(1.0);
            let mut up = params.clone();
            let mut dn = params.clone();
            up[j] += h;
            dn[j] -= h;
            grad[j] = (mean_diff(&up) - mean_diff(&dn)) / (2.0 * h);
        }
        let var = (grad.transpose() * &self.covariance * &grad)[(0, 0)];
        (point, var.max(0.0).sqrt())
    }
}

/// `int_0^tau exp(-(t / lambda)^k) dt` with `lambda = e^eta`, `k = 1 / sigma`.
pub fn weibull_rmst(eta: f64, sigma: f64, tau: f64) -> f64 {
    let lambda = eta.exp();
    let u = (tau / lambda).powf(1.0 / sigma);
    if u == 0.0 {
        return 0.0;
    }
    if !u.is_finite() {
        return lambda * gamma(1.0 + sigma);
    }
    lambda * gamma(1.0 + sigma) * gamma_lr(sigma, u)
}

fn varying_columns(features: &DMatrix<f64>) -> Vec<usize> {
    (0..features.ncols())
        .filter(|&j| {
            let col = features.column(j);
            col.iter().any(|&v| v != col[0])
        })
        .collect()
}

pub fn aft_fit(features: &DMatrix<f64>, treated: &[bool], times: &[f64], events: &[bool]) -> Result<WeibullAft> {
    let n = times.len();
    if features.nrows() != n || treated.len() != n || events.len() != n {
        return Err(Error::Invalid("AFT inputs differ in length".into()));
    }
    let n_events = events.iter().filter(|&&e| e).count();
    if n_events < MIN_EVENTS {
        return Err(Error::Invalid(format!("AFT needs at least {MIN_EVENTS} events, got {n_events}")));
    }
    let kept = varying_columns(features);
    let p = kept.len() + 2;
    let design = DMatrix::from_fn(n, p, |i, j| match j {
        0 => 1.0,
        1 => f64::from(u8::from(treated[i])),
        _ => features[(i, kept[j - 2])],
    });
    let data = AftData::new(design, times, events);

    let mut params = vec![0.0; p + 1];
    let exposure: f64 = times.iter().map(|t| t.max(TIME_FLOOR)).sum();
    params[0] = (exposure / n_events as f64).ln();

    let mut current = data.log_likelihood(&params);
    let mut lambda = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    let (mut g, mut h) = data.derivatives(&params);
    while iterations < MAX_ITER {
        if g.amax() < GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = false;
        for _ in 0..40 {
            let mut neg_h = -&h;
            for j in 0..=p {
                neg_h[(j, j)] += lambda;
            }
            let step = match neg_h.cholesky() {
                Some(ch) => ch.solve(&g),
                None => {
                    lambda = if lambda == 0.0 { 1e-6 * h.diagonal().amax().max(1.0) } else { lambda * 10.0 };
                    continue;
                }
            };
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let value = data.log_likelihood(&trial);
            if value.is_finite() && value >= current - 1e-12 * current.abs() {
                params = trial;
                current = value;
                lambda /= 10.0;
                if lambda < 1e-12 {
                    lambda = 0.0;
                }
                accepted = true;
                break;
            }
            lambda = if lambda == 0.0 { 1e-6 * h.diagonal().amax().max(1.0) } else { lambda * 10.0 };
        }
        if !accepted {
            break;
        }
        (g, h) = data.derivatives(&params);
    }
    let gradient_max_norm = g.amax();

    let info = -&h;
    let mut covariance = DMatrix::zeros(p + 1, p + 1);
    for j in 0..=p {
        let mut e = DVector::zeros(p + 1);
        e[j] = 1.0;
        covariance.set_column(j, &solve_spd(info.clone(), &e)?);
    }
    let log_sigma = params[p];
    params.truncate(p);
    Ok(WeibullAft {
        theta: params,
        log_sigma,
        kept_features: kept,
        covariance,
        converged,
        iterations,
        gradient_max_norm,
    })
}
