//! Build a reference set from a generated trial dump: parse, map drug and
//! outcome terms, filter arms, pool, test and apply BH.
//!
//! ```text
//! cargo run --example build_reference_set
//! ```

use refbench::refset::{build, BuildParams, RefsetInputs};
use refbench::synth::{self, ScenarioConfig};

fn main() -> refbench::Result<()> {
    let cfg = ScenarioConfig::from_toml(include_str!("data/scenario.toml"))?;
    let trials = synth::gen_scenario_trials(&cfg, 3)?;
    let dump = synth::dump_to_jsonl(&trials.arms);
    let inputs = RefsetInputs {
        dump: dump.as_bytes(),
        drug_dictionary: trials.drug_dictionary.as_bytes(),
        outcome_dictionary: trials.outcome_dictionary.as_bytes(),
    };
    let out = build(&inputs, &BuildParams::default())?;

    let provenance = out.refset.provenance.clone().expect("build records provenance");
    print!("{}", out.report.to_tsv(&provenance));
    println!();
    for e in &out.refset.entries {
        println!(
            "{:<20} {:?} {:?} OR={:.2} q={:.2e}",
            e.key.to_string(),
            e.label,
            e.direction,
            e.pooled_or.unwrap_or(f64::NAN),
            e.q_value.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
