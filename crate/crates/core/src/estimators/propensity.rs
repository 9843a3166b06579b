//! Ridge-penalized logistic propensity model fitted by IRLS.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const SCORE_CLIP: f64 = 1e-6;
const MAX_ITER: usize = 100;
const TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct PropensityFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// `P(drug A | x)`, clipped to `[1e-6, 1 - 1e-6]`.
    pub scores: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Penalized log-likelihood `sum[y eta - log(1 + e^eta)] - ridge/2 |coef|^2`;
/// the intercept is unpenalized.
pub fn penalized_log_likelihood(
    x: &DMatrix<f64>,
    treated: &[bool],
    ridge: f64,
    intercept: f64,
    coefficients: &[f64],
) -> f64 {
    let mut ll = 0.0;
    for i in 0..x.nrows() {
        let eta = intercept + (0..x.ncols()).map(|j| x[(i, j)] * coefficients[j]).sum::<f64>();
        ll += if treated[i] { eta } else { 0.0 } - softplus(eta);
    }
    ll - 0.5 * ridge * coefficients.iter().map(|b| b * b).sum::<f64>()
}

pub fn fit_logistic(x: &DMatrix<f64>, treated: &[bool], ridge: f64) -> Result<PropensityFit> {
    let (n, p) = x.shape();
    if treated.len() != n {
        return Err(Error::Invalid("feature rows and labels differ in length".into()));
    }
    let n_treated = treated.iter().filter(|&&t| t).count();
    if n_treated == 0 || n_treated == n {
        return Err(Error::Invalid("propensity model needs at least one row per arm".into()));
    }
    if !(ridge >= 0.0) {
        return Err(Error::Invalid(format!("ridge must be non-negative, got {ridge}")));
    }

    let dim = p + 1;
    // theta[0] is the intercept
    let mut theta = DVector::<f64>::zeros(dim);
    let objective = |theta: &DVector<f64>| {
        penalized_log_likelihood(x, treated, ridge, theta[0], &theta.as_slice()[1..])
    };
    let mut current = objective(&theta);
    let mut converged = false;
    let mut iterations = 0;
    let mut row = vec![0.0; dim];

    while iterations < MAX_ITER {
        iterations += 1;
        let mut grad = DVector::<f64>::zeros(dim);
        let mut hess = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..n {
            row[0] = 1.0;
            for j in 0..p {
                row[j + 1] = x[(i, j)];
            }
            let eta: f64 = row.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
            let mu = sigmoid(eta);
            let resid = if treated[i] { 1.0 } else { 0.0 } - mu;
            let w = mu * (1.0 - mu);
            for a in 0..dim {
                grad[a] += row[a] * resid;
                let wa = w * row[a];
                if wa != 0.0 {
                    for b in a..dim {
                        hess[(a, b)] += wa * row[b];
                    }
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        for j in 1..dim {
            grad[j] -= ridge * theta[j];
            hess[(j, j)] += ridge;
        }

        let step = solve_spd(hess, &grad)?;
        let mut t = 1.0;
        let mut next = &theta + &step * t;
        let mut value = objective(&next);
        while !(value >= current - 1e-12 * current.abs().max(1.0)) && t > 1e-10 {
            t *= 0.5;
            next = &theta + &step * t;
            value = objective(&next);
        }
        let change = (&step * t).amax();
        theta = next;
        current = value;
        if change < TOL {
            converged = true;
            break;
        }
    }

    let scores = (0..n)
        .map(|i| {
            let eta = theta[0] + (0..p).map(|j| x[(i, j)] * theta[j + 1]).sum::<f64>();
            sigmoid(eta).clamp(SCORE_CLIP, 1.0 - SCORE_CLIP)
        })
        .collect();
    Ok(PropensityFit {
        intercept: theta[0],
        coefficients: theta.as_slice()[1..].to_vec(),
        scores,
        converged,
        iterations,
    })
}

/// Solve `H x = g` for a symmetric positive (semi)definite `H`, adding a
/// small ridge to the diagonal when the factorization fails.
pub(crate) fn solve_spd(mut h: DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = (0..h.nrows()).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut jitter = 0.0;
    for _ in 0..12 {
        if let Some(ch) = h.clone().cholesky() {
            return Ok(ch.solve(g));
        }
        let add = if jitter == 0.0 { scale * 1e-12 } else { jitter * 9.0 };
        for i in 0..h.nrows() {
            h[(i, i)] += add;
        }
        jitter += add;
    }
    Err(Error::Invalid("Newton system is not positive definite".into()))
}
