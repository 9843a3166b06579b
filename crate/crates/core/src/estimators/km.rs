//! Weighted Kaplan-Meier curves and restricted mean survival time.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    /// `(time, survival)` steps, starting at `(0, 1)`; survival holds its
    /// value until the next knot.
    pub knots: Vec<(f64, f64)>,
}

impl SurvivalCurve {
    /// Right-continuous value at `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        let i = self.knots.partition_point(|&(k, _)| k <= t);
        if i == 0 {
            1.0
        } else {
            self.knots[i - 1].1
        }
    }

    /// Left limit at `t`.
    pub fn value_before(&self, t: f64) -> f64 {
        let i = self.knots.partition_point(|&(k, _)| k < t);
        if i == 0 {
            1.0
        } else {
            self.knots[i - 1].1
        }
    }

    /// Area under the step function on `[0, tau]`. Past the last knot the
    /// curve is carried forward.
    pub fn rmst(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Invalid(format!("restriction time must be positive, got {tau}")));
        }
        let mut area = 0.0;
        for (i, &(t, s)) in self.knots.iter().enumerate() {
            if t >= tau {
                break;
            }
            let end = self.knots.get(i + 1).map_or(tau, |k| k.0.min(tau));
            area += s * (end - t);
        }
        Ok(area)
    }
}

pub fn km_curve(times: &[f64], events: &[bool], weights: Option<&[f64]>) -> SurvivalCurve {
    assert_eq!(times.len(), events.len());
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&i, &j| times[i].total_cmp(&times[j]));
    let mut at_risk: f64 = (0..times.len()).map(w).sum();
    let mut knots = vec![(0.0, 1.0)];
    let mut s = 1.0;
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let (mut d, mut leaving) = (0.0, 0.0);
        while k < order.len() && times[order[k]] == t {
            let i = order[k];
            leaving += w(i);
            if events[i] {
                d += w(i);
            }
            k += 1;
        }
        if d > 0.0 && at_risk > 0.0 {
            s *= 1.0 - d / at_risk;
            knots.push((t, s));
        }
        at_risk -= leaving;
    }
    SurvivalCurve { knots }
}

/// RMST on `[0, tau]` with a Greenwood-type standard error. Weights are
/// rescaled to sum to the Kish effective sample size before the variance is
/// computed, so the error does not depend on the weight scale.
pub fn rmst_with_se(times: &[f64], events: &[bool], weights: Option<&[f64]>, tau: f64) -> Result<(f64, f64)> {
    let curve = km_curve(times, events, weights);
    let point = curve.rmst(tau)?;
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let (sum, sum_sq) = (0..times.len()).fold((0.0, 0.0), |(s, q), i| (s + w(i), q + w(i) * w(i)));
    if sum <= 0.0 {
        return Err(Error::Invalid("weights sum to zero".into()));
    }
    let scale = sum / sum_sq;

    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&i, &j| times[i].total_cmp(&times[j]));
    let mut at_risk = sum * scale;
    let mut var = 0.0;
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let (mut d, mut leaving) = (0.0, 0.0);
        while k < order.len() && times[order[k]] == t {
            let i = order[k];
            leaving += w(i) * scale;
            if events[i] {
                d += w(i) * scale;
            }
            k += 1;
        }
        if t > tau {
            break;
        }
        if d > 0.0 && at_risk - d > 1e-12 {
            let tail = point - curve.rmst(t).unwrap_or(0.0).min(point);
            var += tail * tail * d / (at_risk * (at_risk - d));
        }
        at_risk -= leaving;
    }
    Ok((point, var.sqrt()))
}

/// Nearest-rank quantile of the event times (rank `ceil(q n)`), or `None`
/// when there are no events.
pub fn restriction_horizon(times: &[f64], events: &[bool], q: f64) -> Option<f64> {
    let mut ev: Vec<f64> = times.iter().zip(events).filter(|(_, &e)| e).map(|(&t, _)| t).collect();
    if ev.is_empty() {
        return None;
    }
    ev.sort_by(f64::total_cmp);
    let rank = ((q * ev.len() as f64).ceil() as usize).clamp(1, ev.len());
    Some(ev[rank - 1])
}
