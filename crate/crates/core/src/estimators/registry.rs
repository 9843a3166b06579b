//! Runs every registered method on one cohort.

use serde::{Deserialize, Serialize};

use super::aft::aft_fit;
use super::aipw::rmst_aipw;
use super::cox::cox_fit;
use super::km::{restriction_horizon, rmst_with_se};
use super::matching::{match_pairs, MatchedPair};
use super::propensity::{fit_logistic, PropensityFit};
use super::weights::{weights, WeightMode, DEFAULT_IPW_CAP};
use super::{EffectEstimate, MethodId};
use crate::cohort::Cohort;
use crate::io::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub ridge: f64,
    pub caliper_sd: f64,
    pub ipw_cap: f64,
    /// Quantile of pooled event times used as the RMST horizon.
    pub rmst_quantile: f64,
    pub methods: Vec<MethodId>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            ridge: 1e-4,
            caliper_sd: 0.2,
            ipw_cap: DEFAULT_IPW_CAP,
            rmst_quantile: 0.8,
            methods: MethodId::MAIN.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    /// RMST horizon in days, absent when the cohort has no events.
    pub tau: Option<f64>,
    pub propensity_converged: Option<bool>,
    pub estimates: Vec<EffectEstimate>,
}

/// Per-row AFT predictions `(m1, m0)` at tau, the regression estimate,
/// its standard error and convergence.
type AftParts = (Vec<f64>, Vec<f64>, f64, f64, bool);

struct Shared<'a> {
    cohort: &'a Cohort,
    config: &'a EstimatorConfig,
    seed: u64,
    times: Vec<f64>,
    events: Vec<bool>,
    treated: Vec<bool>,
    tau: Option<f64>,
    propensity: Option<Result<PropensityFit, String>>,
    pairs: Option<Result<Vec<MatchedPair>, String>>,
    aft: Option<Result<AftParts, String>>,
}

impl<'a> Shared<'a> {
    fn scores(&mut self) -> Result<Vec<f64>, String> {
        if self.propensity.is_none() {
            let x = self.cohort.feature_matrix();
            self.propensity = Some(fit_logistic(&x, &self.treated, self.config.ridge).map_err(|e| e.to_string()));
        }
        self.propensity.as_ref().unwrap().as_ref().map(|ps| ps.scores.clone()).map_err(Clone::clone)
    }

    fn pairs(&mut self) -> Result<Vec<MatchedPair>, String> {
        if self.pairs.is_none() {
            let caliper = self.config.caliper_sd;
            let seed = derive_seed(self.seed, "match");
            let r = self
                .scores()
                .and_then(|ps| match_pairs(&ps, &self.treated, caliper, seed).map_err(|e| e.to_string()));
            self.pairs = Some(r);
        }
        self.pairs.clone().unwrap()
    }

    fn tau(&self) -> Result<f64, String> {
        self.tau.ok_or_else(|| "no events to set the RMST horizon".to_string())
    }

    fn aft(&mut self) -> Result<AftParts, String> {
        if self.aft.is_none() {
            let r = self.tau().and_then(|tau| {
                let x = self.cohort.feature_matrix();
                let model = aft_fit(&x, &self.treated, &self.times, &self.events).map_err(|e| e.to_string())?;
                let rows: Vec<&[f64]> = self.cohort.rows.iter().map(|r| r.features.as_slice()).collect();
                let m1 = rows.iter().map(|x| model.rmst(tau, true, x)).collect();
                let m0 = rows.iter().map(|x| model.rmst(tau, false, x)).collect();
                let (point, se) = model.rmst_difference(&x, tau);
                Ok((m1, m0, point, se, model.converged))
            });
            self.aft = Some(r);
        }
        self.aft.clone().unwrap()
    }
}

fn subset<T: Copy>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i]).collect()
}

fn rmst_difference(
    times: &[f64],
    events: &[bool],
    treated: &[bool],
    weights: Option<&[f64]>,
    tau: f64,
) -> Result<(f64, f64), String> {
    let arm = |a: bool| -> Result<(f64, f64), String> {
        let idx: Vec<usize> = (0..times.len()).filter(|&i| treated[i] == a).collect();
        if idx.is_empty() {
            return Err("empty arm".into());
        }
        let w = weights.map(|w| subset(w, &idx));
        rmst_with_se(&subset(times, &idx), &subset(events, &idx), w.as_deref(), tau).map_err(|e| e.to_string())
    };
    let (ra, sa) = arm(true)?;
    let (rb, sb) = arm(false)?;
    Ok((ra - rb, (sa * sa + sb * sb).sqrt()))
}

fn cox_estimate(method: MethodId, times: &[f64], events: &[bool], treated: &[bool], w: Option<&[f64]>) -> EffectEstimate {
    let fit = cox_fit(times, events, treated, w);
    let (std_error, model_std_error) = if w.is_some() {
        (fit.std_error_robust, Some(fit.std_error_model))
    } else {
        (fit.std_error_model, Some(fit.std_error_robust))
    };
    EffectEstimate {
        method_id: method,
        scale: method.scale(),
        point: fit.beta,
        std_error,
        model_std_error,
        converged: fit.converged,
        n_used: times.len(),
        note: (!fit.beta.is_finite()).then(|| "an arm has no events".to_string()),
    }
}

fn rmst_estimate(method: MethodId, n_used: usize, r: Result<(f64, f64), String>) -> EffectEstimate {
    match r {
        Ok((point, se)) => EffectEstimate {
            method_id: method,
            scale: method.scale(),
            point,
            std_error: se,
            model_std_error: None,
            converged: point.is_finite(),
            n_used,
            note: None,
        },
        Err(e) => EffectEstimate::failed(method, n_used, e),
    }
}

fn run_one(s: &mut Shared<'_>, method: MethodId) -> EffectEstimate {
    let n = s.times.len();
    match method {
        MethodId::UnadjustedCox => cox_estimate(method, &s.times, &s.events, &s.treated, None),
        MethodId::PsmCox | MethodId::PsmKm => {
            let pairs = match s.pairs() {
                Ok(p) => p,
                Err(e) => return EffectEstimate::failed(method, 0, e),
            };
            let idx: Vec<usize> = pairs.iter().flat_map(|p| [p.treated, p.control]).collect();
            let (t, e, z) = (subset(&s.times, &idx), subset(&s.events, &idx), subset(&s.treated, &idx));
            if method == MethodId::PsmCox {
                cox_estimate(method, &t, &e, &z, None)
            } else {
                let r = s.tau().and_then(|tau| rmst_difference(&t, &e, &z, None, tau));
                rmst_estimate(method, idx.len(), r)
            }
        }
        MethodId::IpwOverlapCox | MethodId::IpwStandardCox | MethodId::IpwOverlapKm => {
            let cap = s.config.ipw_cap;
            let ps = match s.scores() {
                Ok(ps) => ps,
                Err(e) => return EffectEstimate::failed(method, 0, e),
            };
            let mode = if method == MethodId::IpwStandardCox { WeightMode::Standard } else { WeightMode::Overlap };
            let w = weights(&ps, &s.treated, mode, cap);
            let mut est = if method == MethodId::IpwOverlapKm {
                let r = s.tau().and_then(|tau| rmst_difference(&s.times, &s.events, &s.treated, Some(&w.values), tau));
                rmst_estimate(method, n, r)
            } else {
                cox_estimate(method, &s.times, &s.events, &s.treated, Some(&w.values))
            };
            if w.n_capped > 0 {
                est.note = Some(format!("{} weights capped at {cap}", w.n_capped));
            }
            est
        }
        MethodId::UnadjustedKm => {
            let r = s.tau().and_then(|tau| rmst_difference(&s.times, &s.events, &s.treated, None, tau));
            rmst_estimate(method, n, r)
        }
        MethodId::AftRegression => match s.aft() {
            Ok((_, _, point, se, converged)) => {
                let mut est = rmst_estimate(method, n, Ok((point, se)));
                est.converged &= converged;
                if !converged {
                    est.note = Some("AFT fit did not converge".into());
                }
                est
            }
            Err(e) => EffectEstimate::failed(method, n, e),
        },
        MethodId::Aipw => {
            let (m1, m0, _, _, converged) = match s.aft() {
                Ok(a) => a,
                Err(e) => return EffectEstimate::failed(method, n, e),
            };
            let tau = s.tau;
            let ps = match s.scores() {
                Ok(ps) => ps,
                Err(e) => return EffectEstimate::failed(method, n, e),
            };
            let r = rmst_aipw(&s.times, &s.events, &s.treated, &ps, &m1, &m0, tau.unwrap_or(f64::NAN));
            match r {
                Ok(a) => {
                    let mut est = rmst_estimate(method, n, Ok((a.estimate, a.std_error)));
                    est.converged &= converged;
                    if a.n_capped > 0 {
                        est.note = Some(format!("{} censoring weights capped", a.n_capped));
                    }
                    est
                }
                Err(e) => EffectEstimate::failed(method, n, e.to_string()),
            }
        }
    }
}

/// Every method in `config.methods` on `cohort`. Failures are recorded in
/// the returned estimates rather than aborting.
pub fn run_all_methods(cohort: &Cohort, config: &EstimatorConfig, seed: u64) -> MethodRun {
    let times = cohort.times();
    let events = cohort.events();
    let tau = restriction_horizon(&times, &events, config.rmst_quantile);
    let mut shared = Shared {
        cohort,
        config,
        seed,
        treated: cohort.treatment(),
        times,
        events,
        tau,
        propensity: None,
        pairs: None,
        aft: None,
    };
    let mut estimates: Vec<EffectEstimate> = config.methods.iter().map(|&m| run_one(&mut shared, m)).collect();
    let propensity_converged = match &shared.propensity {
        Some(Ok(ps)) => Some(ps.converged),
        _ => None,
    };
    if propensity_converged == Some(false) {
        for e in &mut estimates {
            if matches!(
                e.method_id,
                MethodId::PsmCox | MethodId::PsmKm | MethodId::IpwOverlapCox | MethodId::IpwStandardCox | MethodId::IpwOverlapKm | MethodId::Aipw
            ) {
                let note = e.note.take().map_or(String::new(), |n| format!("; {n}"));
                e.note = Some(format!("propensity model did not converge{note}"));
            }
        }
    }
    MethodRun { tau, propensity_converged, estimates }
}
