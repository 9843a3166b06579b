//! Reference-set construction: bucket pooled comparisons into strong/weak
//! candidate families, drop candidates that can never reach significance,
//! and keep the Benjamini-Hochberg rejections of each family.

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, ClassifyParams, Family, StrongCombination};
use crate::ingest::{self, ArmDrops, ContingencyTable, DrugDictionary, LineDiagnostic, MappedArm, OutcomeDictionary};
use crate::io::{self, sha256_hex, TOOL_VERSION};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    #[serde(alias = "positive", alias = "positive_control")]
    Strong,
    #[serde(alias = "negative", alias = "negative_control")]
    Weak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AHigher,
    BHigher,
    None,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::AHigher => Direction::BHigher,
            Direction::BHigher => Direction::AHigher,
            Direction::None => Direction::None,
        }
    }
}

/// Identity of one comparison: two drugs and an outcome code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntryKey {
    pub drug_a: String,
    pub drug_b: String,
    pub outcome_code: String,
}

impl EntryKey {
    pub fn new(drug_a: impl Into<String>, drug_b: impl Into<String>, outcome: impl Into<String>) -> Self {
        Self {
            drug_a: drug_a.into(),
            drug_b: drug_b.into(),
            outcome_code: outcome.into(),
        }
    }

    pub fn swapped(&self) -> Self {
        Self {
            drug_a: self.drug_b.clone(),
            drug_b: self.drug_a.clone(),
            outcome_code: self.outcome_code.clone(),
        }
    }
}

impl fmt::Display for EntryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}|{}", self.drug_a, self.drug_b, self.outcome_code)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    #[serde(flatten)]
    pub key: EntryKey,
    pub label: Label,
    #[serde(default = "default_direction")]
    pub direction: Direction,
    #[serde(default, with = "io::float::option", skip_serializing_if = "Option::is_none")]
    pub pooled_or: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_value: Option<f64>,
}

// `ReferenceSet::from_jsonl` resolves the direction from the label.
fn default_direction() -> Direction {
    Direction::None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub dump_sha256: String,
    pub drug_dictionary_sha256: String,
    pub outcome_dictionary_sha256: String,
    pub alpha: f64,
    pub weak_lower: f64,
    pub weak_upper: f64,
    pub strong_combination: StrongCombination,
    pub prefilter: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReferenceSet {
    pub provenance: Option<Provenance>,
    pub entries: Vec<ReferenceEntry>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    provenance: Provenance,
}

impl ReferenceSet {
    pub fn n_strong(&self) -> usize {
        self.entries.iter().filter(|e| e.label == Label::Strong).count()
    }

    pub fn n_weak(&self) -> usize {
        self.entries.iter().filter(|e| e.label == Label::Weak).count()
    }

    /// Header line with provenance (when present), then one entry per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        if let Some(p) = &self.provenance {
            out.push_str(&serde_json::to_string(&HeaderLine { provenance: p.clone() }).expect("serializable"));
            out.push('\n');
        }
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("serializable"));
            out.push('\n');
        }
        out
    }

    /// Read a reference-set file. The provenance header is optional so that
    /// externally curated sets load too; their positive controls become
    /// strong entries and negative controls weak ones. A strong entry with no
    /// direction is taken to mean drug A carries the higher risk.
    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut set = ReferenceSet::default();
        let mut keys = BTreeSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if i == 0 {
                if let Ok(h) = serde_json::from_str::<HeaderLine>(&line) {
                    set.provenance = Some(h.provenance);
                    continue;
                }
            }
            let raw: serde_json::Value = serde_json::from_str(&line)
                .map_err(|e| Error::format("reference set", format!("line {}: {e}", i + 1)))?;
            let has_direction = raw.get("direction").is_some();
            let mut entry: ReferenceEntry = serde_json::from_value(raw)
                .map_err(|e| Error::format("reference set", format!("line {}: {e}", i + 1)))?;
            if entry.label == Label::Strong && !has_direction {
                entry.direction = Direction::AHigher;
            }
            if entry.label == Label::Weak {
                entry.direction = Direction::None;
            }
            if !keys.insert(entry.key.clone()) {
                return Err(Error::format(
                    "reference set",
                    format!("line {}: duplicate entry {}", i + 1, entry.key),
                ));
            }
            set.entries.push(entry);
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildParams {
    pub alpha: f64,
    pub classify: ClassifyParams,
    pub prefilter: bool,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            classify: ClassifyParams::default(),
            prefilter: true,
        }
    }
}

/// Bucket tables by pooled odds ratio. Returns `(strong, weak)` candidates.
pub fn bucket(tables: Vec<ContingencyTable>, params: &ClassifyParams) -> (Vec<ContingencyTable>, Vec<ContingencyTable>) {
    tables
        .into_iter()
        .partition(|t| params.family_of(t.odds_ratio()) == Family::Strong)
}

/// Keep candidates whose smallest achievable family p-value is below `alpha`.
/// Returns the survivors and the number dropped.
pub fn prefilter(
    candidates: Vec<ContingencyTable>,
    family: Family,
    alpha: f64,
    params: &ClassifyParams,
) -> Result<(Vec<ContingencyTable>, usize)> {
    let before = candidates.len();
    let mut kept = Vec::with_capacity(before);
    for t in candidates {
        let m = t.margins();
        if exact::min_achievable_p_with(m.n1, m.n2, m.m, family, params)? < alpha {
            kept.push(t);
        }
    }
    let dropped = before - kept.len();
    Ok((kept, dropped))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FamilyCounts {
    pub candidates: usize,
    pub prefiltered: usize,
    pub tested: usize,
    pub significant: usize,
}

#[derive(Debug, Clone, Default)]
pub struct BuildReport {
    pub diagnostics: Vec<LineDiagnostic>,
    pub arms_parsed: usize,
    pub arm_drops: ArmDrops,
    pub comparisons: usize,
    pub strong: FamilyCounts,
    pub weak: FamilyCounts,
}

impl BuildReport {
    /// Tab-delimited `rule  count` table.
    pub fn to_tsv(&self, provenance: &Provenance) -> String {
        let rows: [(&str, usize); 12] = [
            ("malformed_line", self.diagnostics.len()),
            ("arms_parsed", self.arms_parsed),
            ("arm_too_few_participants", self.arm_drops.too_few_participants),
            ("arm_plus_sign", self.arm_drops.plus_sign),
            ("arm_not_single_ingredient", self.arm_drops.not_single_ingredient),
            ("comparisons", self.comparisons),
            ("strong_candidates", self.strong.candidates),
            ("strong_prefiltered", self.strong.prefiltered),
            ("strong_significant", self.strong.significant),
            ("weak_candidates", self.weak.candidates),
            ("weak_prefiltered", self.weak.prefiltered),
            ("weak_significant", self.weak.significant),
        ];
        let mut out = format!(
            "# {} dump_sha256={}\nrule\tcount\n",
            provenance.tool_version, provenance.dump_sha256
        );
        for (rule, n) in rows {
            out.push_str(&format!("{rule}\t{n}\n"));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub refset: ReferenceSet,
    pub report: BuildReport,
}

/// Raw input bytes; checksummed into the provenance block.
#[derive(Debug, Clone, Copy)]
pub struct RefsetInputs<'a> {
    pub dump: &'a [u8],
    pub drug_dictionary: &'a [u8],
    pub outcome_dictionary: &'a [u8],
}

fn classify_family(
    tables: Vec<ContingencyTable>,
    family: Family,
    params: &BuildParams,
) -> Result<(Vec<ReferenceEntry>, FamilyCounts)> {
    let mut counts = FamilyCounts {
        candidates: tables.len(),
        ..Default::default()
    };
    let tables = if params.prefilter {
        let (kept, dropped) = prefilter(tables, family, params.alpha, &params.classify)?;
        counts.prefiltered = dropped;
        kept
    } else {
        tables
    };
    counts.tested = tables.len();

    let p: Vec<f64> = tables
        .iter()
        .map(|t| exact::p_family(&t.margins(), family, &params.classify))
        .collect::<Result<_>>()?;
    let q = exact::bh_adjust(&p);
    let rejected = exact::bh_reject(&p, params.alpha);
    counts.significant = rejected.len();

    let entries = rejected
        .into_iter()
        .map(|i| {
            let t = &tables[i];
            let or = t.odds_ratio();
            let (label, direction) = match family {
                Family::Weak => (Label::Weak, Direction::None),
                Family::Strong if or > 1.0 => (Label::Strong, Direction::AHigher),
                Family::Strong => (Label::Strong, Direction::BHigher),
            };
            ReferenceEntry {
                key: EntryKey::new(&t.drug_a, &t.drug_b, &t.outcome_code),
                label,
                direction,
                pooled_or: Some(or),
                p_value: Some(p[i]),
                q_value: Some(q[i]),
            }
        })
        .collect();
    Ok((entries, counts))
}

/// Aggregated tables from raw inputs: parse, map drugs, filter, map outcomes, pool.
pub fn tables_from_inputs(
    inputs: &RefsetInputs<'_>,
    report: &mut BuildReport,
) -> Result<Vec<ContingencyTable>> {
    let drugs = DrugDictionary::from_reader(inputs.drug_dictionary)?;
    let outcomes = OutcomeDictionary::from_reader(inputs.outcome_dictionary)?;
    let parsed = ingest::parse_dump(inputs.dump)?;
    report.diagnostics = parsed.diagnostics;
    report.arms_parsed = parsed.arms.len();
    let mapped: Vec<MappedArm> = parsed
        .arms
        .into_iter()
        .map(|a| MappedArm::map(a, &drugs))
        .collect();
    let filtered = ingest::filter_arms(mapped);
    report.arm_drops = filtered.drops;
    let records: Vec<_> = filtered
        .records
        .into_iter()
        .map(|r| ingest::map_outcomes(r, &outcomes))
        .collect();
    let tables = ingest::aggregate(&records);
    report.comparisons = tables.len();
    Ok(tables)
}

/// Classify pooled tables into reference entries, ordered by key.
pub fn classify_tables(
    tables: Vec<ContingencyTable>,
    params: &BuildParams,
    report: &mut BuildReport,
) -> Result<Vec<ReferenceEntry>> {
    let (strong, weak) = bucket(tables, &params.classify);
    let (mut entries, sc) = classify_family(strong, Family::Strong, params)?;
    let (weak_entries, wc) = classify_family(weak, Family::Weak, params)?;
    entries.extend(weak_entries);
    entries.sort_by(|a, b| a.key.cmp(&b.key));
    report.strong = sc;
    report.weak = wc;
    Ok(entries)
}

pub fn build(inputs: &RefsetInputs<'_>, params: &BuildParams) -> Result<BuildOutput> {
    if !(params.alpha > 0.0 && params.alpha < 1.0) {
        return Err(Error::Invalid(format!("alpha must lie in (0, 1), got {}", params.alpha)));
    }
    let mut report = BuildReport::default();
    let tables = tables_from_inputs(inputs, &mut report)?;
    let entries = classify_tables(tables, params, &mut report)?;
    let provenance = Provenance {
        tool_version: TOOL_VERSION.to_string(),
        dump_sha256: sha256_hex(inputs.dump),
        drug_dictionary_sha256: sha256_hex(inputs.drug_dictionary),
        outcome_dictionary_sha256: sha256_hex(inputs.outcome_dictionary),
        alpha: params.alpha,
        weak_lower: params.classify.weak_lower,
        weak_upper: params.classify.weak_upper,
        strong_combination: params.classify.combination,
        prefilter: params.prefilter,
    };
    Ok(BuildOutput {
        refset: ReferenceSet {
            provenance: Some(provenance),
            entries,
        },
        report,
    })
}
