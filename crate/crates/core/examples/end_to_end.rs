//! The whole pipeline through the command-line entry point: simulate,
//! build the reference set, evaluate and report, in a temporary directory.
//!
//! ```text
//! cargo run --release --example end_to_end [out_dir]
//! ```

use std::path::PathBuf;

fn main() {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("refbench-demo"));
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    let sim = out.join("sim");
    let steps: Vec<Vec<String>> = vec![
        vec!["simulate".into(), "--scenario".into(), s(data.join("scenario.toml")), "--seed".into(), "11".into(), "--out-dir".into(), s(sim.clone())],
        vec![
            "build-refset".into(),
            "--dump".into(),
            s(sim.join("trials.jsonl")),
            "--drug-dict".into(),
            s(sim.join("drug_dictionary.tsv")),
            "--outcome-dict".into(),
            s(sim.join("outcome_dictionary.tsv")),
            "--out".into(),
            s(out.join("refset.jsonl")),
            "--report".into(),
            s(out.join("build_report.tsv")),
        ],
        vec![
            "evaluate".into(),
            "--refset".into(),
            s(out.join("refset.jsonl")),
            "--db".into(),
            s(sim.join("patients.jsonl")),
            "--vocab".into(),
            s(sim.join("vocab.tsv")),
            "--dense".into(),
            s(sim.join("dense.jsonl")),
            "--config".into(),
            s(data.join("run.toml")),
            "--out-dir".into(),
            s(out.join("eval")),
            "--ablation-standard-ipw".into(),
        ],
        vec![
            "report".into(),
            "--estimates".into(),
            s(out.join("eval/estimates.jsonl")),
            "--refset".into(),
            s(out.join("refset.jsonl")),
            "--out-dir".into(),
            s(out.join("report")),
            "--rmst-thresholds".into(),
            "30,60".into(),
        ],
    ];
    for step in steps {
        let code = refbench::cli::run(std::iter::once("refbench".to_string()).chain(step.clone()));
        if code != 0 {
            eprintln!("{} exited with {code}", step[0]);
            std::process::exit(code);
        }
    }
    let table = std::fs::read_to_string(out.join("report/table.tsv")).expect("report written");
    print!("{table}");
}
