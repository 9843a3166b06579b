//! AIPW RMST difference when either the outcome model or the propensity
//! model omits a confounder.
//!
//! ```text
//! cargo run --release --example doubly_robust
//! ```

use nalgebra::DMatrix;
use refbench::estimators::aft::aft_fit;
use refbench::estimators::aipw::rmst_aipw;
use refbench::estimators::km::restriction_horizon;
use refbench::estimators::propensity::fit_logistic;
use refbench::synth::{self, ScenarioConfig};

const SCENARIO: &str = r#"
n_dense = 2
n_noise_codes = 0
baseline_hazard = 0.0012
weibull_shape = 1.3
oracle_size = 0
[censoring]
rate = 0.0003
horizon = 1500
[[pairs]]
drug_a = "DA"
drug_b = "DB"
n_patients = 30000
gamma = [0.8, -0.6]
[[pairs.outcomes]]
code = "E1"
log_hr = -0.5
eta = [0.7, 0.5]
"#;

fn main() -> refbench::Result<()> {
    let cfg = ScenarioConfig::from_toml(SCENARIO)?;
    let sample = synth::simulate_pair(&cfg, 0, 2)?;
    let (t, d): (Vec<f64>, Vec<bool>) = sample.iter().map(|p| p.observed(0)).unzip();
    let z: Vec<bool> = sample.iter().map(|p| p.treated).collect();
    let tau = restriction_horizon(&t, &d, 0.8).expect("events present");
    let truth = synth::oracle(&cfg, 0, 0, 300_000, Some(tau), 2)?.rmst_difference.expect("tau given");
    let design = |cols: &[usize]| DMatrix::from_fn(sample.len(), cols.len(), |i, j| sample[i].covariates[cols[j]]);
    let (full, partial) = (design(&[0, 1]), design(&[1]));

    let outcome = |x: &DMatrix<f64>| -> refbench::Result<(Vec<f64>, Vec<f64>)> {
        let model = aft_fit(x, &z, &t, &d)?;
        let rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
        Ok((rows.iter().map(|r| model.rmst(tau, true, r)).collect(), rows.iter().map(|r| model.rmst(tau, false, r)).collect()))
    };
    let ps_right = fit_logistic(&full, &z, 1e-4)?.scores;
    let ps_wrong = fit_logistic(&partial, &z, 1e-4)?.scores;
    let (m1_right, m0_right) = outcome(&full)?;
    let (m1_wrong, m0_wrong) = outcome(&partial)?;
    let plug_in = |m1: &[f64], m0: &[f64]| m1.iter().zip(m0).map(|(a, b)| a - b).sum::<f64>() / m1.len() as f64;

    println!("tau {tau} days, Monte Carlo truth {truth:.2}");
    println!("outcome model alone: right {:.2}, wrong {:.2}", plug_in(&m1_right, &m0_right), plug_in(&m1_wrong, &m0_wrong));
    for (label, ps, m1, m0) in [
        ("both right", &ps_right, &m1_right, &m0_right),
        ("wrong outcome model", &ps_right, &m1_wrong, &m0_wrong),
        ("wrong propensity", &ps_wrong, &m1_right, &m0_right),
    ] {
        let r = rmst_aipw(&t, &d, &z, ps, m1, m0, tau)?;
        println!("AIPW, {label:<20} {:.2} ± {:.2}", r.estimate, r.std_error);
    }
    Ok(())
}
