//! Weighted Cox proportional-hazards fit with a single binary covariate
//! (treatment), Breslow handling of ties.

const MAX_ITER: usize = 50;
const TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit {
    /// Log hazard ratio of the treated arm. `+inf` / `-inf` when only one arm
    /// has events, NaN when there are none.
    pub beta: f64,
    /// `1 / sqrt(information)`.
    pub std_error_model: f64,
    /// Sandwich standard error built from weighted score residuals.
    pub std_error_robust: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Score at the returned `beta`.
    pub score: f64,
}

/// Rows grouped by distinct time in descending order.
struct Groups {
    /// (time, row indices) with times descending
    groups: Vec<(f64, Vec<usize>)>,
}

impl Groups {
    fn new(times: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&i, &j| times[j].total_cmp(&times[i]).then(i.cmp(&j)));
        let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
        for i in order {
            match groups.last_mut() {
                Some((t, rows)) if *t == times[i] => rows.push(i),
                _ => groups.push((times[i], vec![i])),
            }
        }
        Self { groups }
    }
}

struct Eval {
    loglik: f64,
    score: f64,
    info: f64,
}

fn evaluate(groups: &Groups, events: &[bool], z: &[bool], w: &dyn Fn(usize) -> f64, beta: f64) -> Eval {
    let eb = beta.exp();
    let (mut s0, mut s1) = (0.0, 0.0);
    let mut out = Eval { loglik: 0.0, score: 0.0, info: 0.0 };
    for (_, rows) in &groups.groups {
        let (mut d, mut dz) = (0.0, 0.0);
        for &i in rows {
            let wi = w(i);
            let r = if z[i] { wi * eb } else { wi };
            s0 += r;
            if z[i] {
                s1 += r;
            }
            if events[i] {
                d += wi;
                if z[i] {
                    dz += wi;
                }
            }
        }
        if d > 0.0 {
            let zbar = s1 / s0;
            out.loglik += dz * beta - d * s0.ln();
            out.score += dz - d * zbar;
            out.info += d * zbar * (1.0 - zbar);
        }
    }
    out
}

/// Breslow partial log-likelihood at `beta`.
pub fn partial_log_likelihood(
    times: &[f64],
    events: &[bool],
    treated: &[bool],
    weights: Option<&[f64]>,
    beta: f64,
) -> f64 {
    let groups = Groups::new(times);
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    evaluate(&groups, events, treated, &w, beta).loglik
}

pub fn cox_fit(times: &[f64], events: &[bool], treated: &[bool], weights: Option<&[f64]>) -> CoxFit {
    let n = times.len();
    assert!(events.len() == n && treated.len() == n);
    if let Some(w) = weights {
        assert_eq!(w.len(), n);
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);

    let (mut ev_a, mut ev_b) = (0.0, 0.0);
    for i in 0..n {
        if events[i] {
            if treated[i] {
                ev_a += w(i);
            } else {
                ev_b += w(i);
            }
        }
    }
    if !(ev_a > 0.0 && ev_b > 0.0) {
        let beta = match (ev_a > 0.0, ev_b > 0.0) {
            (true, false) => f64::INFINITY,
            (false, true) => f64::NEG_INFINITY,
            _ => f64::NAN,
        };
        return CoxFit {
            beta,
            std_error_model: f64::NAN,
            std_error_robust: f64::NAN,
            converged: false,
            iterations: 0,
            score: f64::NAN,
        };
    }

    let groups = Groups::new(times);
    let mut beta = 0.0;
    let mut cur = evaluate(&groups, events, treated, &w, beta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        if !(cur.info > 0.0) {
            break;
        }
        let step = cur.score / cur.info;
        let mut t = 1.0;
        let mut next = evaluate(&groups, events, treated, &w, beta + step);
        while !(next.loglik >= cur.loglik - 1e-12 * cur.loglik.abs().max(1.0)) && t > 1e-10 {
            t *= 0.5;
            next = evaluate(&groups, events, treated, &w, beta + t * step);
        }
        beta += t * step;
        cur = next;
        if (t * step).abs() < TOL {
            converged = true;
            break;
        }
    }

    let std_error_model = 1.0 / cur.info.sqrt();
    let std_error_robust = robust_se(&groups, events, treated, &w, beta, cur.info);
    CoxFit {
        beta,
        std_error_model,
        std_error_robust,
        converged: converged && beta.is_finite(),
        iterations,
        score: cur.score,
    }
}

fn robust_se(groups: &Groups, events: &[bool], z: &[bool], w: &dyn Fn(usize) -> f64, beta: f64, info: f64) -> f64 {
    let eb = beta.exp();
    // risk-set sums per distinct time, still descending
    let mut per_time = Vec::with_capacity(groups.groups.len());
    let (mut s0, mut s1) = (0.0, 0.0);
    for (_, rows) in &groups.groups {
        let mut d = 0.0;
        for &i in rows {
            let wi = w(i);
            let r = if z[i] { wi * eb } else { wi };
            s0 += r;
            if z[i] {
                s1 += r;
            }
            if events[i] {
                d += wi;
            }
        }
        per_time.push((s1 / s0, d / s0));
    }
    // walk ascending, accumulating the hazard and the zbar-weighted hazard
    let (mut cum_h, mut cum_zh) = (0.0, 0.0);
    let mut meat = 0.0;
    for (g, (_, rows)) in groups.groups.iter().enumerate().rev() {
        let (zbar, dh) = per_time[g];
        cum_h += dh;
        cum_zh += zbar * dh;
        for &i in rows {
            let zi = if z[i] { 1.0 } else { 0.0 };
            let risk = if z[i] { eb } else { 1.0 };
            let mut resid = -risk * (zi * cum_h - cum_zh);
            if events[i] {
                resid += zi - zbar;
            }
            let wi = w(i);
            meat += wi * wi * resid * resid;
        }
    }
    meat.sqrt() / info
}
