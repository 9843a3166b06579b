//! Observational-study estimators: propensity models, matching, weighting,
//! Cox hazard ratios, Kaplan-Meier RMST, a Weibull AFT outcome model and an
//! augmented IPW estimator, plus the registry that runs them per cohort.

pub mod aft;
pub mod aipw;
pub mod cox;
pub mod km;
pub mod matching;
pub mod propensity;
pub mod registry;
pub mod weights;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::io;

pub use aft::{aft_fit, WeibullAft};
pub use aipw::rmst_aipw;
pub use cox::{cox_fit, CoxFit};
pub use km::{km_curve, restriction_horizon, SurvivalCurve};
pub use matching::{match_pairs, MatchedPair};
pub use propensity::{fit_logistic, PropensityFit};
pub use registry::{run_all_methods, EstimatorConfig};
pub use weights::{weights, WeightMode, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    LogHazardRatio,
    RmstDifferenceDays,
}

/// The fixed method registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodId {
    UnadjustedCox,
    PsmCox,
    IpwOverlapCox,
    IpwStandardCox,
    UnadjustedKm,
    PsmKm,
    AftRegression,
    Aipw,
    IpwOverlapKm,
}

impl MethodId {
    pub const ALL: [MethodId; 9] = [
        MethodId::UnadjustedCox,
        MethodId::PsmCox,
        MethodId::IpwOverlapCox,
        MethodId::IpwStandardCox,
        MethodId::UnadjustedKm,
        MethodId::PsmKm,
        MethodId::AftRegression,
        MethodId::Aipw,
        MethodId::IpwOverlapKm,
    ];

    /// Everything except the standard-IPW ablation arm.
    pub const MAIN: [MethodId; 8] = [
        MethodId::UnadjustedCox,
        MethodId::PsmCox,
        MethodId::IpwOverlapCox,
        MethodId::UnadjustedKm,
        MethodId::PsmKm,
        MethodId::AftRegression,
        MethodId::Aipw,
        MethodId::IpwOverlapKm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::UnadjustedCox => "unadjusted_cox",
            MethodId::PsmCox => "psm_cox",
            MethodId::IpwOverlapCox => "ipw_overlap_cox",
            MethodId::IpwStandardCox => "ipw_standard_cox",
            MethodId::UnadjustedKm => "unadjusted_km",
            MethodId::PsmKm => "psm_km",
            MethodId::AftRegression => "aft_regression",
            MethodId::Aipw => "aipw",
            MethodId::IpwOverlapKm => "ipw_overlap_km",
        }
    }

    pub fn scale(self) -> Scale {
        match self {
            MethodId::UnadjustedCox | MethodId::PsmCox | MethodId::IpwOverlapCox | MethodId::IpwStandardCox => {
                Scale::LogHazardRatio
            }
            _ => Scale::RmstDifferenceDays,
        }
    }

    /// Method class label: unadjusted, matching, weighting, regression or doubly robust.
    pub fn class(self) -> &'static str {
        match self {
            MethodId::UnadjustedCox | MethodId::UnadjustedKm => "unadjusted",
            MethodId::PsmCox | MethodId::PsmKm => "matching",
            MethodId::IpwOverlapCox | MethodId::IpwStandardCox | MethodId::IpwOverlapKm => "weighting",
            MethodId::AftRegression => "regression",
            MethodId::Aipw => "doubly_robust",
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown method {s:?}")))
    }
}

/// One estimator's result. Log-HR and RMST differences are always drug A
/// relative to drug B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub method_id: MethodId,
    pub scale: Scale,
    #[serde(with = "io::float")]
    pub point: f64,
    #[serde(with = "io::float")]
    pub std_error: f64,
    /// Model-based standard error where a robust one is reported in `std_error`.
    #[serde(default, with = "io::float::option", skip_serializing_if = "Option::is_none")]
    pub model_std_error: Option<f64>,
    pub converged: bool,
    pub n_used: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl EffectEstimate {
    pub fn failed(method: MethodId, n_used: usize, note: impl Into<String>) -> Self {
        Self {
            method_id: method,
            scale: method.scale(),
            point: f64::NAN,
            std_error: f64::NAN,
            model_std_error: None,
            converged: false,
            n_used,
            note: Some(note.into()),
        }
    }

    /// Converged with a finite point estimate.
    pub fn usable(&self) -> bool {
        self.converged && self.point.is_finite()
    }
}

pub(crate) fn logit(p: f64) -> f64 {
    p.ln() - (1.0 - p).ln()
}
