//! Propensity-score weights.

use serde::{Deserialize, Serialize};

pub const DEFAULT_IPW_CAP: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `1 - e` for drug A rows, `e` for drug B rows.
    Overlap,
    /// `1 / e` and `1 / (1 - e)`, capped.
    Standard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub values: Vec<f64>,
    /// Number of standard-IPW weights that hit the cap.
    pub n_capped: usize,
}

pub fn weights(scores: &[f64], treated: &[bool], mode: WeightMode, cap: f64) -> WeightVector {
    let mut n_capped = 0;
    let values = scores
        .iter()
        .zip(treated)
        .map(|(&e, &t)| match mode {
            WeightMode::Overlap => {
                if t {
                    1.0 - e
                } else {
                    e
                }
            }
            WeightMode::Standard => {
                let w = if t { 1.0 / e } else { 1.0 / (1.0 - e) };
                if w > cap {
                    n_capped += 1;
                    cap
                } else {
                    w
                }
            }
        })
        .collect();
    WeightVector { values, n_capped }
}
