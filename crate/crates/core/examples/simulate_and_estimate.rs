//! Generate claims for the demo scenario, build a new-user cohort per
//! outcome and run every estimator, next to the Monte Carlo truth.
//!
//! ```text
//! cargo run --release --example simulate_and_estimate
//! ```

use refbench::cohort::{build_cohort, CohortBuild, CohortOptions, DenseFeatures, FeatureSource, PatientDb};
use refbench::estimators::registry::{run_all_methods, EstimatorConfig};
use refbench::estimators::{MethodId, Scale};
use refbench::refset::EntryKey;
use refbench::synth::{self, ScenarioConfig};

fn main() -> refbench::Result<()> {
    let mut cfg = ScenarioConfig::from_toml(include_str!("data/scenario.toml"))?;
    cfg.oracle_size = 100_000;
    let claims = synth::gen_claims(&cfg, 42)?;
    let dense = DenseFeatures::new(claims.dense.iter().map(|r| (r.patient_id.clone(), r.values.clone())))?;
    let db = PatientDb::with_derived_vocabulary(claims.patients)?;
    let opts = CohortOptions { features: FeatureSource::CountsAndDense, ..Default::default() };
    let config = EstimatorConfig { methods: MethodId::ALL.to_vec(), ..Default::default() };

    for truth in &claims.truth.entries {
        let key = EntryKey::new(&truth.drug_a, &truth.drug_b, &truth.outcome);
        let cohort = match build_cohort(&db, &key, 1, &opts, Some(&dense))? {
            CohortBuild::Built(c) => c,
            CohortBuild::Skipped(reason) => {
                println!("{key}: skipped ({reason})\n");
                continue;
            }
        };
        println!(
            "{key}: {} vs {} patients, truth log-HR {:.3} (overlap population {:.3}), RMST difference {:.1} days",
            cohort.n_a,
            cohort.n_b,
            truth.marginal_log_hr.unwrap_or(f64::NAN),
            truth.overlap_log_hr.unwrap_or(f64::NAN),
            truth.rmst_difference.unwrap_or(f64::NAN),
        );
        let run = run_all_methods(&cohort, &config, 7);
        for e in &run.estimates {
            let unit = match e.scale {
                Scale::LogHazardRatio => "log-HR",
                Scale::RmstDifferenceDays => "days",
            };
            println!("  {:<18} {:>9.3} ± {:<7.3} {unit}", e.method_id.as_str(), e.point, e.std_error);
        }
        println!();
    }
    Ok(())
}
