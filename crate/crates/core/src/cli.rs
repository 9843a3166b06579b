//! Command-line front end: `build-refset`, `simulate`, `evaluate`, `report`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{build_cohort, CohortBuild, CohortOptions, DenseFeatures, PatientDb, Vocabulary};
use crate::error::{Error, Result};
use crate::estimators::{run_all_methods, EstimatorConfig, MethodId, Scale};
use crate::eval::{
    metrics_tsv, pr_curve, score_at_threshold, EstimateRecord, EstimatesFile, MethodScores, MetricsRow, RunHeader,
    TABLE_HR_THRESHOLDS,
};
use crate::exact::StrongCombination;
use crate::io::{derive_seed, read_file, sha256_hex, write_atomic, TOOL_VERSION};
use crate::refset::{build, BuildParams, RefsetInputs, ReferenceSet};
use crate::synth::{dump_to_jsonl, gen_claims, gen_scenario_trials, ScenarioConfig};

#[derive(Debug, Parser)]
#[command(name = "refbench", version, about = "Reference-set benchmarking of observational effect estimators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a reference set from a trial dump and dictionaries.
    BuildRefset(BuildRefsetArgs),
    /// Generate a synthetic patient database, trial dump and ground truth.
    Simulate(SimulateArgs),
    /// Build cohorts and run the estimator registry for every reference entry.
    Evaluate(EvaluateArgs),
    /// Score estimates against a reference set.
    Report(ReportArgs),
}

#[derive(Debug, clap::Args)]
pub struct BuildRefsetArgs {
    #[arg(long)]
    pub dump: PathBuf,
    #[arg(long)]
    pub drug_dict: PathBuf,
    #[arg(long)]
    pub outcome_dict: PathBuf,
    #[arg(long, default_value_t = crate::refset::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Skip the minimum-achievable-p pre-filter.
    #[arg(long)]
    pub no_prefilter: bool,
    /// Use twice the smaller one-sided p-value for the strong family.
    #[arg(long)]
    pub twice_min: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Drop report; defaults to `<out>.report.tsv`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Override the scenario's counterfactual oracle size.
    #[arg(long)]
    pub oracle_size: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub refset: PathBuf,
    #[arg(long)]
    pub db: PathBuf,
    /// Code vocabulary fixing the feature layout; derived from the db if absent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub dense: Option<PathBuf>,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Comma-separated method ids; overrides the config.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<MethodId>>,
    /// Also run Cox with standard (untargeted) IPW weights.
    #[arg(long)]
    pub ablation_standard_ipw: bool,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Reuse per-entry results already present in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub estimates: PathBuf,
    #[arg(long)]
    pub refset: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Hazard-ratio thresholds for the fixed table.
    #[arg(long, value_delimiter = ',', default_values_t = TABLE_HR_THRESHOLDS)]
    pub thresholds: Vec<f64>,
    /// RMST-difference thresholds in days for the fixed table.
    #[arg(long, value_delimiter = ',')]
    pub rmst_thresholds: Vec<f64>,
}

/// Run configuration for `evaluate`, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Expected checksum of the reference-set file.
    #[serde(default)]
    pub refset_sha256: Option<String>,
    /// Expected checksum of the code vocabulary.
    #[serde(default)]
    pub vocab_sha256: Option<String>,
    #[serde(default)]
    pub cohort: CohortOptions,
    #[serde(default)]
    pub estimators: EstimatorConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format("run config", e.to_string()))
    }
}

fn read_text(path: &Path) -> Result<(Vec<u8>, String)> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| Error::format(path.display().to_string(), e))?;
    Ok((bytes, text))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn cmd_build_refset(args: &BuildRefsetArgs) -> Result<()> {
    let dump = read_file(&args.dump)?;
    let drug = read_file(&args.drug_dict)?;
    let outcome = read_file(&args.outcome_dict)?;
    let mut params = BuildParams { alpha: args.alpha, prefilter: !args.no_prefilter, ..Default::default() };
    if args.twice_min {
        params.classify.combination = StrongCombination::TwiceMin;
    }
    let out = build(&RefsetInputs { dump: &dump, drug_dictionary: &drug, outcome_dictionary: &outcome }, &params)?;
    let provenance = out.refset.provenance.clone().expect("build sets provenance");
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_atomic(&args.out, out.refset.to_jsonl().as_bytes())?;
    let report = args.report.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".report.tsv");
        PathBuf::from(p)
    });
    write_atomic(&report, out.report.to_tsv(&provenance).as_bytes())?;
    eprintln!(
        "reference set: {} strong, {} weak -> {}",
        out.refset.n_strong(),
        out.refset.n_weak(),
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool_version: &'a str,
    seed: u64,
    scenario_sha256: String,
    files: BTreeMap<&'a str, String>,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let (scenario_bytes, text) = read_text(&args.scenario)?;
    let mut cfg = ScenarioConfig::from_toml(&text)?;
    if let Some(n) = args.oracle_size {
        cfg.oracle_size = n;
    }
    let claims = gen_claims(&cfg, args.seed)?;
    let trials = gen_scenario_trials(&cfg, args.seed)?;
    let vocab = Vocabulary::from_patients(&claims.patients);

    let mut files: Vec<(&str, String)> = Vec::new();
    let mut patients = String::new();
    for p in &claims.patients {
        patients.push_str(&serde_json::to_string(p).expect("patient serializes"));
        patients.push('\n');
    }
    files.push(("patients.jsonl", patients));
    files.push(("vocab.tsv", vocab.to_tsv()));
    if !claims.dense.is_empty() {
        let mut dense = String::new();
        for r in &claims.dense {
            dense.push_str(&serde_json::to_string(r).expect("row serializes"));
            dense.push('\n');
        }
        files.push(("dense.jsonl", dense));
    }
    files.push(("ground_truth.json", serde_json::to_string_pretty(&claims.truth).expect("truth serializes") + "\n"));
    files.push(("trials.jsonl", dump_to_jsonl(&trials.arms)));
    files.push(("drug_dictionary.tsv", trials.drug_dictionary));
    files.push(("outcome_dictionary.tsv", trials.outcome_dictionary));

    create_dir(&args.out_dir)?;
    let mut manifest = Manifest {
        tool_version: TOOL_VERSION,
        seed: args.seed,
        scenario_sha256: sha256_hex(&scenario_bytes),
        files: BTreeMap::new(),
    };
    for (name, body) in &files {
        write_atomic(&args.out_dir.join(name), body.as_bytes())?;
        manifest.files.insert(name, sha256_hex(body.as_bytes()));
    }
    let manifest = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_atomic(&args.out_dir.join("manifest.json"), manifest.as_bytes())?;
    eprintln!("simulated {} patients -> {}", claims.patients.len(), args.out_dir.display());
    Ok(())
}

fn resolve_methods(cfg: &EstimatorConfig, args: &EvaluateArgs) -> Vec<MethodId> {
    let mut methods = args.methods.clone().unwrap_or_else(|| cfg.methods.clone());
    if args.ablation_standard_ipw && !methods.contains(&MethodId::IpwStandardCox) {
        methods.push(MethodId::IpwStandardCox);
    }
    methods.sort();
    methods.dedup();
    methods
}

fn check_pin(what: &str, expected: Option<&String>, actual: &str) -> Result<()> {
    match expected {
        Some(e) if !e.eq_ignore_ascii_case(actual) => {
            Err(Error::Provenance(format!("{what} checksum {actual} does not match the configured {e}")))
        }
        _ => Ok(()),
    }
}

fn entry_records(
    db: &PatientDb,
    dense: Option<&DenseFeatures>,
    config: &RunConfig,
    est: &EstimatorConfig,
    key: &crate::refset::EntryKey,
) -> Result<Vec<EstimateRecord>> {
    let label = key.to_string();
    let cohort = build_cohort(db, key, derive_seed(config.seed, &format!("cohort:{label}")), &config.cohort, dense)?;
    Ok(match cohort {
        CohortBuild::Skipped(reason) => {
            est.methods.iter().map(|&m| EstimateRecord::skipped(key, m, reason.clone())).collect()
        }
        CohortBuild::Built(c) => {
            let run = run_all_methods(&c, est, derive_seed(config.seed, &format!("methods:{label}")));
            run.estimates.iter().map(|e| EstimateRecord::new(key, e, run.tau)).collect()
        }
    })
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let (config_bytes, config_text) = read_text(&args.config)?;
    let config = RunConfig::from_toml(&config_text)?;
    let refset_bytes = read_file(&args.refset)?;
    let refset_sha256 = sha256_hex(&refset_bytes);
    check_pin("reference set", config.refset_sha256.as_ref(), &refset_sha256)?;
    let refset = ReferenceSet::from_jsonl(&refset_bytes[..])?;

    let vocab = match &args.vocab {
        Some(p) => Some(Vocabulary::from_reader(&read_file(p)?[..])?),
        None => None,
    };
    let db_bytes = read_file(&args.db)?;
    let db = PatientDb::from_jsonl(&db_bytes[..], vocab)?;
    let vocab_sha256 = sha256_hex(db.vocabulary().to_tsv().as_bytes());
    check_pin("vocabulary", config.vocab_sha256.as_ref(), &vocab_sha256)?;
    let dense = match &args.dense {
        Some(p) => Some(DenseFeatures::from_jsonl(&read_file(p)?[..])?),
        None => None,
    };

    let mut est = config.estimators.clone();
    est.methods = resolve_methods(&config.estimators, args);
    let header = RunHeader {
        tool_version: TOOL_VERSION.to_string(),
        refset_sha256,
        db_sha256: sha256_hex(&db_bytes),
        vocab_sha256,
        config_sha256: sha256_hex(&config_bytes),
        seed: config.seed,
        methods: est.methods.clone(),
    };
    let header_line = EstimatesFile::header_line(&header) + "\n";

    let entries_dir = args.out_dir.join("entries");
    let header_path = args.out_dir.join("run_header.json");
    if args.resume && header_path.exists() {
        let previous = read_file(&header_path)?;
        if previous != header_line.as_bytes() {
            return Err(Error::Provenance(format!(
                "{} was written by a different run; rerun without --resume",
                header_path.display()
            )));
        }
    } else if entries_dir.exists() {
        fs::remove_dir_all(&entries_dir).map_err(|e| Error::io(&entries_dir, e))?;
    }
    create_dir(&entries_dir)?;
    write_atomic(&header_path, header_line.as_bytes())?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let per_entry: Vec<Result<Vec<EstimateRecord>>> = pool.install(|| {
        refset
            .entries
            .par_iter()
            .enumerate()
            .map(|(i, entry)| {
                let path = entries_dir.join(format!("{i:06}.jsonl"));
                if args.resume && path.exists() {
                    let file = EstimatesFile::from_jsonl(&read_file(&path)?[..])?;
                    if file.records.iter().all(|r| r.key() == entry.key) && !file.records.is_empty() {
                        return Ok(file.records);
                    }
                }
                let records = entry_records(&db, dense.as_ref(), &config, &est, &entry.key)?;
                let body = EstimatesFile { header: None, records: records.clone() }.to_jsonl();
                write_atomic(&path, body.as_bytes())?;
                Ok(records)
            })
            .collect()
    });
    let mut records = Vec::new();
    for r in per_entry {
        records.extend(r?);
    }
    let n = records.len();
    let file = EstimatesFile { header: Some(header), records };
    write_atomic(&args.out_dir.join("estimates.jsonl"), file.to_jsonl().as_bytes())?;
    eprintln!("{} estimates for {} entries -> {}", n, refset.entries.len(), args.out_dir.display());
    Ok(())
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let est_bytes = read_file(&args.estimates)?;
    let refset_bytes = read_file(&args.refset)?;
    let estimates = EstimatesFile::from_jsonl(&est_bytes[..])?;
    let refset = ReferenceSet::from_jsonl(&refset_bytes[..])?;
    let refset_sha256 = sha256_hex(&refset_bytes);
    let header = estimates
        .header
        .as_ref()
        .ok_or_else(|| Error::format("estimates", "missing header line"))?;
    if header.refset_sha256 != refset_sha256 {
        return Err(Error::Provenance(format!(
            "estimates were computed against reference set {}, not {}",
            header.refset_sha256, refset_sha256
        )));
    }
    if estimates.records.is_empty() {
        return Err(Error::format("estimates", "no estimate rows"));
    }
    if refset.entries.is_empty() {
        return Err(Error::format("reference set", "no entries"));
    }

    let comment = format!(
        "{TOOL_VERSION} estimates_sha256={} refset_sha256={refset_sha256}",
        sha256_hex(&est_bytes)
    );
    let pr_dir = args.out_dir.join("pr");
    create_dir(&pr_dir)?;
    let mut table = Vec::new();
    let mut all_curves = Vec::new();
    for (method, map) in estimates.by_method() {
        let scores = MethodScores::collect(method, &refset, &map);
        let thresholds = match method.scale() {
            Scale::LogHazardRatio => &args.thresholds,
            Scale::RmstDifferenceDays => &args.rmst_thresholds,
        };
        for &t in thresholds {
            table.push(score_at_threshold(&scores, &refset, t)?);
        }
        let curve: Vec<MetricsRow> = pr_curve(&scores, &refset).unwrap_or_default();
        write_atomic(
            &pr_dir.join(format!("{method}.tsv")),
            metrics_tsv(Some(&comment), &curve).as_bytes(),
        )?;
        all_curves.extend(curve);
    }
    write_atomic(&args.out_dir.join("table.tsv"), metrics_tsv(Some(&comment), &table).as_bytes())?;
    write_atomic(&args.out_dir.join("pr_curves.tsv"), metrics_tsv(Some(&comment), &all_curves).as_bytes())?;
    eprintln!("report with {} table rows -> {}", table.len(), args.out_dir.display());
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::BuildRefset(a) => cmd_build_refset(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
