//! Seeded generators for patient databases with known confounding and known
//! effects, and for trial dumps with planted odds ratios.
//!
//! Covariates are standard normals (exported as dense features) followed by
//! Bernoulli indicators (emitted as pre-index diagnosis codes `COV<j>`).
//! Uninformative procedure codes `NOISE<j>` are sprinkled before the index
//! day. Treatment follows a logistic model and each outcome has a
//! proportional-hazards Weibull event time.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{CodeKind, DenseRow, Event, PatientStream};
use crate::error::{Error, Result};
use crate::estimators::cox::cox_fit;
use crate::estimators::km::restriction_horizon;
use crate::ingest::{OutcomeCount, RawArm};
use crate::io::{self, derive_seed, derive_seed_index, sha256_hex};

const BLOCK: usize = 4096;

fn default_n_dense() -> usize {
    2
}
fn default_prevalence() -> f64 {
    0.3
}
fn default_n_noise() -> usize {
    5
}
fn default_noise_rate() -> f64 {
    2.0
}
fn default_shape() -> f64 {
    1.0
}
fn default_lookback() -> i64 {
    365
}
fn default_oracle() -> usize {
    1_000_000
}
fn default_quantile() -> f64 {
    0.8
}
fn default_horizon() -> f64 {
    3650.0
}
fn default_trials() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Standard-normal covariates, exported only through the dense file.
    #[serde(default = "default_n_dense")]
    pub n_dense: usize,
    /// Bernoulli covariates, visible as pre-index diagnosis codes.
    #[serde(default)]
    pub n_binary: usize,
    #[serde(default = "default_prevalence")]
    pub binary_prevalence: f64,
    #[serde(default = "default_n_noise")]
    pub n_noise_codes: usize,
    /// Mean number of noise events per patient.
    #[serde(default = "default_noise_rate")]
    pub noise_rate: f64,
    /// Per-day Weibull scale `lambda0` in `H(t) = lambda0 t^k exp(lp)`.
    pub baseline_hazard: f64,
    #[serde(default = "default_shape")]
    pub weibull_shape: f64,
    #[serde(default)]
    pub censoring: Censoring,
    /// Days of history before the index claim.
    #[serde(default = "default_lookback")]
    pub lookback_days: i64,
    /// Counterfactual draws for the ground truth; 0 skips the marginal oracle.
    #[serde(default = "default_oracle")]
    pub oracle_size: usize,
    #[serde(default = "default_quantile")]
    pub rmst_quantile: f64,
    pub pairs: Vec<PairConfig>,
}

/// Censoring time is the minimum of the configured mechanisms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Censoring {
    /// Exponential dropout rate per day; 0 disables it.
    #[serde(default)]
    pub rate: f64,
    /// Uniform dropout on `[0, uniform_max]` days.
    #[serde(default)]
    pub uniform_max: Option<f64>,
    /// Administrative end of follow-up in days.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
}

impl Default for Censoring {
    fn default() -> Self {
        Self { rate: 0.0, uniform_max: None, horizon: default_horizon() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    pub drug_a: String,
    pub drug_b: String,
    pub n_patients: usize,
    #[serde(default)]
    pub treatment_intercept: f64,
    /// Treatment log-odds coefficients over `[dense..., binary...]`; empty
    /// means no confounding.
    #[serde(default)]
    pub gamma: Vec<f64>,
    pub outcomes: Vec<OutcomeConfig>,
    #[serde(default)]
    pub trial: Option<TrialConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeConfig {
    pub code: String,
    /// Conditional log hazard ratio of drug A.
    pub log_hr: f64,
    /// Covariate log hazard ratios; empty means none.
    #[serde(default)]
    pub eta: Vec<f64>,
    #[serde(default)]
    pub baseline_hazard: Option<f64>,
    /// Event probabilities `[p_a, p_b]` for the planted trials.
    #[serde(default)]
    pub trial_rates: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    pub n_per_arm: u64,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    /// Use `round(p n)` events instead of binomial draws.
    #[serde(default)]
    pub fixed_counts: bool,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::format("scenario", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn n_covariates(&self) -> usize {
        self.n_dense + self.n_binary
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::format("scenario", m));
        if !(self.baseline_hazard > 0.0 && self.baseline_hazard.is_finite()) {
            return bad("baseline_hazard must be positive".into());
        }
        if !(self.weibull_shape > 0.0 && self.weibull_shape.is_finite()) {
            return bad("weibull_shape must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.binary_prevalence) {
            return bad("binary_prevalence must lie in [0, 1]".into());
        }
        if !(self.noise_rate >= 0.0) || self.lookback_days < 1 {
            return bad("noise_rate must be non-negative and lookback_days at least 1".into());
        }
        let c = &self.censoring;
        if !(c.rate >= 0.0) || !(c.horizon > 0.0) || c.uniform_max.is_some_and(|m| !(m > 0.0)) {
            return bad("censoring parameters must be positive".into());
        }
        if !(self.rmst_quantile > 0.0 && self.rmst_quantile <= 1.0) {
            return bad("rmst_quantile must lie in (0, 1]".into());
        }
        if self.pairs.is_empty() {
            return bad("at least one pair is required".into());
        }
        let p = self.n_covariates();
        let mut drugs = BTreeSet::new();
        for pair in &self.pairs {
            if pair.drug_a == pair.drug_b || pair.drug_a.is_empty() || pair.drug_b.is_empty() {
                return bad(format!("pair {}/{} needs two distinct drug codes", pair.drug_a, pair.drug_b));
            }
            if !drugs.insert(pair.drug_a.clone()) || !drugs.insert(pair.drug_b.clone()) {
                return bad(format!("drug codes may appear in only one pair ({}/{})", pair.drug_a, pair.drug_b));
            }
            if !pair.gamma.is_empty() && pair.gamma.len() != p {
                return bad(format!("gamma needs {p} entries"));
            }
            if pair.n_patients == 0 || pair.outcomes.is_empty() {
                return bad("each pair needs patients and at least one outcome".into());
            }
            if let Some(t) = &pair.trial {
                if t.n_trials == 0 || t.n_per_arm < t.n_trials as u64 {
                    return bad("trial arms must hold at least one participant per trial".into());
                }
            }
            let mut codes = BTreeSet::new();
            for o in &pair.outcomes {
                if !o.eta.is_empty() && o.eta.len() != p {
                    return bad(format!("eta for {} needs {p} entries", o.code));
                }
                if o.code.is_empty() || !codes.insert(o.code.clone()) {
                    return bad(format!("outcome codes within a pair must be distinct and non-empty ({})", o.code));
                }
                if o.baseline_hazard.is_some_and(|h| !(h > 0.0 && h.is_finite())) {
                    return bad(format!("baseline_hazard for {} must be positive", o.code));
                }
                if ["COV", "NOISE"].iter().any(|c| c.starts_with(o.code.as_str()) || o.code.starts_with(c)) {
                    return bad(format!("outcome code {} collides with generated covariate codes", o.code));
                }
                if let Some([a, b]) = o.trial_rates {
                    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
                        return bad(format!("trial rates for {} must lie in [0, 1]", o.code));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One simulated patient before encoding as an event stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPatient {
    pub covariates: Vec<f64>,
    /// True propensity of drug A.
    pub propensity: f64,
    pub treated: bool,
    /// Continuous latent event time per outcome, in days.
    pub event_times: Vec<f64>,
    /// Continuous censoring time in days.
    pub censor_time: f64,
    /// `(day, noise code index)` pre-index noise events.
    pub noise: Vec<(i64, usize)>,
    /// Day of each present binary covariate's diagnosis, `None` if absent.
    pub binary_days: Vec<Option<i64>>,
}

impl SimPatient {
    /// Observed `(days, event)` for outcome `k`.
    pub fn observed(&self, k: usize) -> (f64, bool) {
        let t = self.event_times[k];
        if t <= self.censor_time {
            (t.floor(), true)
        } else {
            (self.censor_time.floor(), false)
        }
    }
}

fn dot(a: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(a, b)| a * b).sum()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn weibull_time(rng: &mut ChaCha8Rng, lambda0: f64, shape: f64, lp: f64) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    (-u.ln() / (lambda0 * lp.exp())).powf(1.0 / shape)
}

fn draw_covariates(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = Vec::with_capacity(cfg.n_covariates());
    for _ in 0..cfg.n_dense {
        x.push(rng.sample::<f64, _>(StandardNormal));
    }
    for _ in 0..cfg.n_binary {
        x.push(f64::from(u8::from(rng.random_bool(cfg.binary_prevalence))));
    }
    x
}

fn draw_censoring(c: &Censoring, rng: &mut ChaCha8Rng) -> f64 {
    let mut t = c.horizon;
    if c.rate > 0.0 {
        let u: f64 = 1.0 - rng.random::<f64>();
        t = t.min(-u.ln() / c.rate);
    }
    if let Some(m) = c.uniform_max {
        t = t.min(rng.random::<f64>() * m);
    }
    t
}

fn linear(coefs: &[f64], x: &[f64]) -> f64 {
    if coefs.is_empty() {
        0.0
    } else {
        dot(coefs, x)
    }
}

/// Factual sample for pair `pair`, generated in fixed-size blocks with
/// independent seeds so the result does not depend on thread count.
pub fn simulate_pair(cfg: &ScenarioConfig, pair: usize, seed: u64) -> Result<Vec<SimPatient>> {
    cfg.validate()?;
    let pc = cfg.pairs.get(pair).ok_or_else(|| Error::Invalid(format!("no pair {pair}")))?;
    let root = derive_seed(seed, &format!("pair:{}:{}", pc.drug_a, pc.drug_b));
    let noise_dist = if cfg.n_noise_codes > 0 && cfg.noise_rate > 0.0 {
        Some(Poisson::new(cfg.noise_rate).map_err(|e| Error::Invalid(e.to_string()))?)
    } else {
        None
    };
    let n_blocks = pc.n_patients.div_ceil(BLOCK);
    let blocks: Vec<Vec<SimPatient>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed_index(root, b as u64));
            let len = BLOCK.min(pc.n_patients - b * BLOCK);
            (0..len)
                .map(|_| {
                    let x = draw_covariates(cfg, &mut rng);
                    let e = sigmoid(pc.treatment_intercept + linear(&pc.gamma, &x));
                    let treated = rng.random::<f64>() < e;
                    let event_times = pc
                        .outcomes
                        .iter()
                        .map(|o| {
                            let lp = if treated { o.log_hr } else { 0.0 } + linear(&o.eta, &x);
                            let l0 = o.baseline_hazard.unwrap_or(cfg.baseline_hazard);
                            weibull_time(&mut rng, l0, cfg.weibull_shape, lp)
                        })
                        .collect();
                    let censor_time = draw_censoring(&cfg.censoring, &mut rng);
                    let binary_days = x[cfg.n_dense..]
                        .iter()
                        .map(|&v| {
                            let day = rng.random_range(0..cfg.lookback_days);
                            (v > 0.5).then_some(day)
                        })
                        .collect();
                    let mut noise = Vec::new();
                    if let Some(d) = &noise_dist {
                        let count = d.sample(&mut rng) as usize;
                        for _ in 0..count {
                            noise.push((rng.random_range(0..cfg.lookback_days), rng.random_range(0..cfg.n_noise_codes)));
                        }
                    }
                    SimPatient { covariates: x, propensity: e, treated, event_times, censor_time, noise, binary_days }
                })
                .collect()
        })
        .collect();
    let patients: Vec<SimPatient> = blocks.into_iter().flatten().collect();
    let n_a = patients.iter().filter(|p| p.treated).count();
    if n_a == 0 || n_a == patients.len() {
        return Err(Error::Invalid(format!(
            "pair {}/{} generated a single arm; adjust the treatment model",
            pc.drug_a, pc.drug_b
        )));
    }
    Ok(patients)
}

pub fn patient_id(pair: usize, i: usize) -> String {
    format!("p{pair:02}-{i:07}")
}

/// Encode a simulated patient as an event stream.
pub fn to_stream(cfg: &ScenarioConfig, pair: usize, i: usize, p: &SimPatient) -> PatientStream {
    let pc = &cfg.pairs[pair];
    let index = cfg.lookback_days;
    let mut events = Vec::new();
    for (j, d) in p.binary_days.iter().enumerate() {
        if let Some(day) = d {
            events.push(Event { day: *day, kind: CodeKind::Diagnosis, code: format!("COV{}", j + 1) });
        }
    }
    for &(day, j) in &p.noise {
        events.push(Event { day, kind: CodeKind::Procedure, code: format!("NOISE{}", j + 1) });
    }
    let drug = if p.treated { &pc.drug_a } else { &pc.drug_b };
    events.push(Event { day: index, kind: CodeKind::DrugClaim, code: drug.clone() });
    for (k, o) in pc.outcomes.iter().enumerate() {
        let (t, event) = p.observed(k);
        if event {
            events.push(Event { day: index + t as i64, kind: CodeKind::Diagnosis, code: o.code.clone() });
        }
    }
    events.sort_by(|a, b| (a.day, a.kind, &a.code).cmp(&(b.day, b.kind, &b.code)));
    PatientStream {
        patient_id: patient_id(pair, i),
        observation_start: 0,
        observation_end: index + p.censor_time.floor() as i64,
        events,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub drug_a: String,
    pub drug_b: String,
    pub outcome: String,
    pub conditional_log_hr: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub n_events: usize,
    /// Whole-population marginal log-HR from counterfactual arms.
    #[serde(with = "io::float::option", default, skip_serializing_if = "Option::is_none")]
    pub marginal_log_hr: Option<f64>,
    #[serde(with = "io::float::option", default, skip_serializing_if = "Option::is_none")]
    pub marginal_log_hr_se: Option<f64>,
    /// Marginal log-HR in the overlap population, weights `e (1 - e)`.
    #[serde(with = "io::float::option", default, skip_serializing_if = "Option::is_none")]
    pub overlap_log_hr: Option<f64>,
    #[serde(with = "io::float::option", default, skip_serializing_if = "Option::is_none")]
    pub overlap_log_hr_se: Option<f64>,
    /// RMST horizon, from the factual sample's pooled event times.
    #[serde(with = "io::float::option", default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(with = "io::float::option", default, skip_serializing_if = "Option::is_none")]
    pub rmst_difference: Option<f64>,
    #[serde(with = "io::float::option", default, skip_serializing_if = "Option::is_none")]
    pub rmst_difference_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub tool: String,
    pub seed: u64,
    pub scenario_sha256: String,
    pub oracle_size: usize,
    pub entries: Vec<TruthEntry>,
}

impl GroundTruth {
    pub fn entry(&self, drug_a: &str, drug_b: &str, outcome: &str) -> Option<&TruthEntry> {
        self.entries
            .iter()
            .find(|e| e.drug_a == drug_a && e.drug_b == drug_b && e.outcome == outcome)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValues {
    pub marginal_log_hr: f64,
    pub marginal_log_hr_se: f64,
    pub overlap_log_hr: f64,
    pub overlap_log_hr_se: f64,
    pub rmst_difference: Option<f64>,
    pub rmst_difference_se: Option<f64>,
}

/// Counterfactual Monte Carlo for outcome `k` of pair `pair`: each draw gets
/// both potential event times (common random numbers) and one shared
/// censoring time.
pub fn oracle(cfg: &ScenarioConfig, pair: usize, k: usize, size: usize, tau: Option<f64>, seed: u64) -> Result<OracleValues> {
    let pc = &cfg.pairs[pair];
    let o = &pc.outcomes[k];
    if size == 0 {
        return Err(Error::Invalid("oracle size must be positive".into()));
    }
    let root = derive_seed(seed, &format!("oracle:{}:{}:{}", pc.drug_a, pc.drug_b, o.code));
    let l0 = o.baseline_hazard.unwrap_or(cfg.baseline_hazard);
    let n_blocks = size.div_ceil(BLOCK);
    // (t1, t0, censor, overlap weight)
    let draws: Vec<(f64, f64, f64, f64)> = (0..n_blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed_index(root, b as u64));
            let len = BLOCK.min(size - b * BLOCK);
            (0..len)
                .map(|_| {
                    let x = draw_covariates(cfg, &mut rng);
                    let e = sigmoid(pc.treatment_intercept + linear(&pc.gamma, &x));
                    let lp = linear(&o.eta, &x);
                    let u: f64 = 1.0 - rng.random::<f64>();
                    let base = -u.ln() / l0;
                    let t1 = (base / (lp + o.log_hr).exp()).powf(1.0 / cfg.weibull_shape);
                    let t0 = (base / lp.exp()).powf(1.0 / cfg.weibull_shape);
                    let c = draw_censoring(&cfg.censoring, &mut rng);
                    (t1, t0, c, e * (1.0 - e))
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let n = draws.len();
    let mut times = Vec::with_capacity(2 * n);
    let mut events = Vec::with_capacity(2 * n);
    let mut treated = Vec::with_capacity(2 * n);
    let mut w = Vec::with_capacity(2 * n);
    for &(t1, t0, c, ow) in &draws {
        for (t, z) in [(t1, true), (t0, false)] {
            let ev = t <= c;
            times.push(if ev { t.floor() } else { c.floor() });
            events.push(ev);
            treated.push(z);
            w.push(ow);
        }
    }
    let marginal = cox_fit(&times, &events, &treated, None);
    let overlap = cox_fit(&times, &events, &treated, Some(&w));

    let (rmst_difference, rmst_difference_se) = match tau {
        Some(tau) => {
            let d: Vec<f64> = draws.iter().map(|&(t1, t0, _, _)| t1.floor().min(tau) - t0.floor().min(tau)).collect();
            let mean = d.iter().sum::<f64>() / n as f64;
            let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
            (Some(mean), Some((var / n as f64).sqrt()))
        }
        None => (None, None),
    };
    Ok(OracleValues {
        marginal_log_hr: marginal.beta,
        marginal_log_hr_se: marginal.std_error_model,
        overlap_log_hr: overlap.beta,
        overlap_log_hr_se: overlap.std_error_robust,
        rmst_difference,
        rmst_difference_se,
    })
}

#[derive(Debug, Clone)]
pub struct ClaimsOutput {
    pub patients: Vec<PatientStream>,
    pub dense: Vec<DenseRow>,
    pub truth: GroundTruth,
}

/// Patient database, dense covariates and ground truth for a scenario.
pub fn gen_claims(cfg: &ScenarioConfig, seed: u64) -> Result<ClaimsOutput> {
    cfg.validate()?;
    let scenario_sha256 = sha256_hex(serde_json::to_string(cfg).expect("config serializes").as_bytes());
    let mut patients = Vec::new();
    let mut dense = Vec::new();
    let mut entries = Vec::new();
    for (pi, pc) in cfg.pairs.iter().enumerate() {
        let sample = simulate_pair(cfg, pi, seed)?;
        for (i, p) in sample.iter().enumerate() {
            patients.push(to_stream(cfg, pi, i, p));
            if cfg.n_dense > 0 {
                dense.push(DenseRow { patient_id: patient_id(pi, i), values: p.covariates[..cfg.n_dense].to_vec() });
            }
        }
        let n_a = sample.iter().filter(|p| p.treated).count();
        for (k, o) in pc.outcomes.iter().enumerate() {
            let (times, events): (Vec<f64>, Vec<bool>) = sample.iter().map(|p| p.observed(k)).unzip();
            let tau = restriction_horizon(&times, &events, cfg.rmst_quantile);
            let mut entry = TruthEntry {
                drug_a: pc.drug_a.clone(),
                drug_b: pc.drug_b.clone(),
                outcome: o.code.clone(),
                conditional_log_hr: o.log_hr,
                n_a,
                n_b: sample.len() - n_a,
                n_events: events.iter().filter(|&&e| e).count(),
                marginal_log_hr: None,
                marginal_log_hr_se: None,
                overlap_log_hr: None,
                overlap_log_hr_se: None,
                tau,
                rmst_difference: None,
                rmst_difference_se: None,
            };
            if cfg.oracle_size > 0 {
                let v = oracle(cfg, pi, k, cfg.oracle_size, tau, seed)?;
                entry.marginal_log_hr = Some(v.marginal_log_hr);
                entry.marginal_log_hr_se = Some(v.marginal_log_hr_se);
                entry.overlap_log_hr = Some(v.overlap_log_hr);
                entry.overlap_log_hr_se = Some(v.overlap_log_hr_se);
                entry.rmst_difference = v.rmst_difference;
                entry.rmst_difference_se = v.rmst_difference_se;
            }
            entries.push(entry);
        }
    }
    Ok(ClaimsOutput {
        patients,
        dense,
        truth: GroundTruth { tool: io::TOOL_VERSION.to_string(), seed, scenario_sha256, oracle_size: cfg.oracle_size, entries },
    })
}

/// One drug pair's planted trials; every outcome is reported by every trial.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedPair {
    pub drug_a_text: String,
    pub drug_b_text: String,
    pub n_a: u64,
    pub n_b: u64,
    /// The comparison is split as evenly as possible across this many trials.
    pub n_trials: usize,
    pub fixed_counts: bool,
    /// `(term, p_a, p_b)`
    pub outcomes: Vec<(String, f64, f64)>,
}

fn split(total: u64, parts: usize) -> Vec<u64> {
    let parts = parts as u64;
    (0..parts).map(|i| total / parts + u64::from(i < total % parts)).collect()
}

/// Trial-dump arms with binomially sampled (or fixed) event counts.
pub fn gen_trial_dump(planted: &[PlantedPair], seed: u64) -> Result<Vec<RawArm>> {
    let mut arms = Vec::new();
    let mut trial_no = 0usize;
    for (pi, pp) in planted.iter().enumerate() {
        if pp.n_trials == 0 {
            return Err(Error::Invalid("n_trials must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed_index(derive_seed(seed, "trials"), pi as u64));
        let sizes = [split(pp.n_a, pp.n_trials), split(pp.n_b, pp.n_trials)];
        let mut counts: Vec<[Vec<u64>; 2]> = Vec::new();
        for (term, pa, pb) in &pp.outcomes {
            let mut per_arm = [Vec::new(), Vec::new()];
            for (arm, (&p, n)) in [*pa, *pb].iter().zip([pp.n_a, pp.n_b]).enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Invalid(format!("event probability for {term} outside [0, 1]")));
                }
                per_arm[arm] = if pp.fixed_counts {
                    split((p * n as f64).round() as u64, pp.n_trials)
                } else {
                    sizes[arm]
                        .iter()
                        .map(|&m| Binomial::new(m, p).map(|b| b.sample(&mut rng)))
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::Invalid(e.to_string()))?
                };
            }
            counts.push(per_arm);
        }
        for t in 0..pp.n_trials {
            trial_no += 1;
            let trial_id = format!("SYN{trial_no:05}");
            for (arm, text) in [&pp.drug_a_text, &pp.drug_b_text].into_iter().enumerate() {
                arms.push(RawArm {
                    trial_id: trial_id.clone(),
                    arm_id: ["A", "B"][arm].to_string(),
                    arm_name: text.clone(),
                    drug_text: text.clone(),
                    participant_count: sizes[arm][t],
                    outcome_events: pp
                        .outcomes
                        .iter()
                        .zip(&counts)
                        .map(|((term, _, _), c)| OutcomeCount { term: term.clone(), count: c[arm][t] })
                        .collect(),
                });
            }
        }
    }
    Ok(arms)
}

pub fn dump_to_jsonl(arms: &[RawArm]) -> String {
    let mut out = String::new();
    for a in arms {
        out.push_str(&serde_json::to_string(a).expect("arm serializes"));
        out.push('\n');
    }
    out
}

/// Text used for `drug` in generated trial arms.
pub fn drug_text(code: &str) -> String {
    format!("{} tablet", code.to_lowercase())
}

/// Adverse-event term used for `outcome` in generated trial arms.
pub fn outcome_term(code: &str) -> String {
    format!("pt_{code}")
}

#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub arms: Vec<RawArm>,
    pub drug_dictionary: String,
    pub outcome_dictionary: String,
}

/// Planted trials for every pair with a `trial` block, plus dictionaries
/// mapping the generated texts back to the scenario's codes.
pub fn gen_scenario_trials(cfg: &ScenarioConfig, seed: u64) -> Result<TrialOutput> {
    let mut planted = Vec::new();
    let mut drug_dictionary = String::from("text_pattern\tingredient_id\tmatch_score\n");
    let mut outcome_dictionary = String::from("source_term_code\ttarget_outcome_code\n");
    for pc in &cfg.pairs {
        for d in [&pc.drug_a, &pc.drug_b] {
            let _ = writeln!(drug_dictionary, "{}\t{d}\t100", d.to_lowercase());
        }
        for o in &pc.outcomes {
            let _ = writeln!(outcome_dictionary, "{}\t{}", outcome_term(&o.code), o.code);
        }
        let Some(t) = &pc.trial else { continue };
        let outcomes: Vec<(String, f64, f64)> = pc
            .outcomes
            .iter()
            .filter_map(|o| o.trial_rates.map(|[a, b]| (outcome_term(&o.code), a, b)))
            .collect();
        if outcomes.is_empty() {
            continue;
        }
        planted.push(PlantedPair {
            drug_a_text: drug_text(&pc.drug_a),
            drug_b_text: drug_text(&pc.drug_b),
            n_a: t.n_per_arm,
            n_b: t.n_per_arm,
            n_trials: t.n_trials,
            fixed_counts: t.fixed_counts,
            outcomes,
        });
    }
    Ok(TrialOutput { arms: gen_trial_dump(&planted, seed)?, drug_dictionary, outcome_dictionary })
}
