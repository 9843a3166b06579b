//! Trial-report ingestion: dump parsing, dictionary mapping, arm filtering
//! and pooling of arm counts into per-comparison 2x2 tables.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Read};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{odds_ratio, TableMargins};

/// Minimum arm size kept by [`filter_arms`].
pub const MIN_ARM_PARTICIPANTS: u64 = 100;
/// Minimum dictionary match score accepted by [`map_drug`].
pub const MIN_MATCH_SCORE: u8 = 51;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeCount {
    pub term: String,
    pub count: u64,
}

/// One arm line of a trial dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawArm {
    pub trial_id: String,
    pub arm_id: String,
    pub arm_name: String,
    pub drug_text: String,
    pub participant_count: u64,
    pub outcome_events: Vec<OutcomeCount>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineDiagnostic {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedDump {
    pub arms: Vec<RawArm>,
    pub diagnostics: Vec<LineDiagnostic>,
}

/// Parse a line-delimited JSON dump. Malformed arms are reported and
/// excluded; a repeated `(trial_id, arm_id)` aborts the parse.
pub fn parse_dump<R: BufRead>(reader: R) -> Result<ParsedDump> {
    let mut out = ParsedDump::default();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let arm: RawArm = match serde_json::from_str(&line) {
            Ok(a) => a,
            Err(e) => {
                out.diagnostics.push(LineDiagnostic {
                    line: lineno,
                    message: format!("schema violation: {e}"),
                });
                continue;
            }
        };
        if !seen.insert((arm.trial_id.clone(), arm.arm_id.clone())) {
            return Err(Error::DuplicateArm {
                line: lineno,
                trial_id: arm.trial_id,
                arm_id: arm.arm_id,
            });
        }
        if let Some(bad) = arm
            .outcome_events
            .iter()
            .find(|o| o.count > arm.participant_count)
        {
            out.diagnostics.push(LineDiagnostic {
                line: lineno,
                message: format!(
                    "event count {} for term {:?} exceeds participant count {}",
                    bad.count, bad.term, arm.participant_count
                ),
            });
            continue;
        }
        out.arms.push(arm);
    }
    Ok(out)
}

/// Lowercase, drop punctuation other than `+`, collapse whitespace.
pub fn normalize_text(text: &str) -> String {
    let cleaned: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace() || *c == '+')
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Deserialize)]
struct DrugRow {
    text_pattern: String,
    ingredient_id: String,
    match_score: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrugPattern {
    pub tokens: Vec<String>,
    pub ingredient_id: String,
    pub match_score: u8,
}

/// Text pattern to ingredient table, a file-based stand-in for a drug
/// normalization service.
#[derive(Debug, Clone, Default)]
pub struct DrugDictionary {
    entries: Vec<DrugPattern>,
}

impl DrugDictionary {
    /// Tab-delimited with header `text_pattern  ingredient_id  match_score`.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(reader);
        require_header(&mut rdr, "drug dictionary", &["text_pattern", "ingredient_id", "match_score"])?;
        let mut entries = Vec::new();
        for row in rdr.deserialize::<DrugRow>() {
            let row = row.map_err(|e| Error::format("drug dictionary", e))?;
            if row.match_score > 100 {
                return Err(Error::format(
                    "drug dictionary",
                    format!("match_score {} outside 0..=100", row.match_score),
                ));
            }
            let tokens: Vec<String> = normalize_text(&row.text_pattern)
                .split(' ')
                .filter(|t| !t.is_empty())
                .map(str::to_owned)
                .collect();
            if tokens.is_empty() {
                continue;
            }
            entries.push(DrugPattern {
                tokens,
                ingredient_id: row.ingredient_id,
                match_score: row.match_score,
            });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[DrugPattern] {
        &self.entries
    }
}

fn require_header<R: Read>(rdr: &mut csv::Reader<R>, what: &str, columns: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(|e| Error::format(what, e))?;
    for col in columns {
        if !headers.iter().any(|h| h == *col) {
            return Err(Error::format(what, format!("header row is missing column {col:?}")));
        }
    }
    Ok(())
}

fn contains_tokens(haystack: &[&str], needle: &[String]) -> bool {
    needle.len() <= haystack.len()
        && haystack
            .windows(needle.len())
            .any(|w| w.iter().zip(needle).all(|(a, b)| *a == b))
}

/// Map free drug text to an ingredient set.
///
/// A pattern matches when its normalized tokens appear contiguously in the
/// normalized text. The winning pattern is the highest-scoring one with score
/// at least [`MIN_MATCH_SCORE`] (ties: longer pattern, then lexicographic);
/// its rows at that score make up the returned set.
pub fn map_drug(drug_text: &str, dict: &DrugDictionary) -> BTreeSet<String> {
    let norm = normalize_text(drug_text);
    let tokens: Vec<&str> = norm.split(' ').filter(|t| !t.is_empty()).collect();
    let best = dict
        .entries
        .iter()
        .filter(|p| p.match_score >= MIN_MATCH_SCORE && contains_tokens(&tokens, &p.tokens))
        .max_by(|x, y| {
            x.match_score
                .cmp(&y.match_score)
                .then(x.tokens.len().cmp(&y.tokens.len()))
                .then(y.tokens.cmp(&x.tokens))
        });
    match best {
        None => BTreeSet::new(),
        Some(best) => dict
            .entries
            .iter()
            .filter(|p| p.tokens == best.tokens && p.match_score == best.match_score)
            .map(|p| p.ingredient_id.clone())
            .collect(),
    }
}

#[derive(Debug, Deserialize)]
struct OutcomeRow {
    source_term_code: String,
    target_outcome_code: String,
}

/// Direct source-term to outcome-code rows. Chains are never followed.
#[derive(Debug, Clone, Default)]
pub struct OutcomeDictionary {
    map: BTreeMap<String, String>,
}

impl OutcomeDictionary {
    /// Tab-delimited with header `source_term_code  target_outcome_code`.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(reader);
        require_header(&mut rdr, "outcome dictionary", &["source_term_code", "target_outcome_code"])?;
        let mut map = BTreeMap::new();
        for row in rdr.deserialize::<OutcomeRow>() {
            let row = row.map_err(|e| Error::format("outcome dictionary", e))?;
            if let Some(prev) = map.insert(row.source_term_code.clone(), row.target_outcome_code.clone()) {
                if prev != row.target_outcome_code {
                    return Err(Error::format(
                        "outcome dictionary",
                        format!(
                            "term {:?} maps to both {prev:?} and {:?}",
                            row.source_term_code, row.target_outcome_code
                        ),
                    ));
                }
            }
        }
        Ok(Self { map })
    }

    pub fn get(&self, term: &str) -> Option<&str> {
        self.map.get(term).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// A raw arm together with its mapped ingredient set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappedArm {
    pub raw: RawArm,
    pub ingredients: BTreeSet<String>,
}

impl MappedArm {
    pub fn map(raw: RawArm, dict: &DrugDictionary) -> Self {
        let ingredients = map_drug(&raw.drug_text, dict);
        Self { raw, ingredients }
    }
}

/// A single-ingredient arm that passed filtering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArmRecord {
    pub trial_id: String,
    pub arm_id: String,
    pub arm_name: String,
    pub drug_text: String,
    pub ingredient: String,
    pub participant_count: u64,
    pub outcome_events: BTreeMap<String, u64>,
}

impl From<&ArmRecord> for MappedArm {
    fn from(r: &ArmRecord) -> Self {
        MappedArm {
            raw: RawArm {
                trial_id: r.trial_id.clone(),
                arm_id: r.arm_id.clone(),
                arm_name: r.arm_name.clone(),
                drug_text: r.drug_text.clone(),
                participant_count: r.participant_count,
                outcome_events: r
                    .outcome_events
                    .iter()
                    .map(|(term, &count)| OutcomeCount {
                        term: term.clone(),
                        count,
                    })
                    .collect(),
            },
            ingredients: std::iter::once(r.ingredient.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ArmDrops {
    pub too_few_participants: usize,
    pub plus_sign: usize,
    pub not_single_ingredient: usize,
}

#[derive(Debug, Clone, Default)]
pub struct FilteredArms {
    pub records: Vec<ArmRecord>,
    pub drops: ArmDrops,
}

/// Drop small arms, arms with `+` in their name or drug text, and arms that
/// do not map to exactly one ingredient. Each dropped arm is counted under
/// the first rule it fails, in that order.
pub fn filter_arms(arms: Vec<MappedArm>) -> FilteredArms {
    let mut out = FilteredArms::default();
    for arm in arms {
        if arm.raw.participant_count < MIN_ARM_PARTICIPANTS {
            out.drops.too_few_participants += 1;
        } else if arm.raw.arm_name.contains('+') || arm.raw.drug_text.contains('+') {
            out.drops.plus_sign += 1;
        } else if arm.ingredients.len() != 1 {
            out.drops.not_single_ingredient += 1;
        } else {
            let mut outcome_events = BTreeMap::new();
            for o in &arm.raw.outcome_events {
                *outcome_events.entry(o.term.clone()).or_insert(0) += o.count;
            }
            let ingredient = arm.ingredients.into_iter().next().unwrap_or_default();
            out.records.push(ArmRecord {
                trial_id: arm.raw.trial_id,
                arm_id: arm.raw.arm_id,
                arm_name: arm.raw.arm_name,
                drug_text: arm.raw.drug_text,
                ingredient,
                participant_count: arm.raw.participant_count,
                outcome_events,
            });
        }
    }
    out
}

/// Rewrite outcome terms to target codes; unmapped terms are dropped and
/// terms sharing a target are summed.
pub fn map_outcomes(mut record: ArmRecord, dict: &OutcomeDictionary) -> ArmRecord {
    let mut mapped = BTreeMap::new();
    for (term, count) in std::mem::take(&mut record.outcome_events) {
        if let Some(code) = dict.get(&term) {
            *mapped.entry(code.to_owned()).or_insert(0) += count;
        }
    }
    record.outcome_events = mapped;
    record
}

/// Pooled counts for one `(drug_a, drug_b, outcome)` comparison, with
/// `drug_a < drug_b`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub drug_a: String,
    pub drug_b: String,
    pub outcome_code: String,
    pub a: u64,
    pub n1: u64,
    pub b: u64,
    pub n2: u64,
}

impl ContingencyTable {
    pub fn margins(&self) -> TableMargins {
        TableMargins {
            n1: self.n1,
            n2: self.n2,
            m: self.a + self.b,
            k: self.a,
        }
    }

    pub fn odds_ratio(&self) -> f64 {
        odds_ratio(self.a, self.n1, self.b, self.n2)
    }
}

#[derive(Default)]
struct DrugTotals {
    participants: u64,
    events: BTreeMap<String, u64>,
}

/// Pool arms into contingency tables.
///
/// Within a trial, arms of the same ingredient (dosage arms) are summed.
/// Every unordered pair of distinct ingredients in a trial forms one
/// comparison over the union of the outcome codes reported by the two drugs'
/// arms; an outcome missing from one drug's arms counts as zero events.
/// Comparisons are then summed across trials.
pub fn aggregate(records: &[ArmRecord]) -> Vec<ContingencyTable> {
    let mut by_trial: BTreeMap<&str, BTreeMap<&str, DrugTotals>> = BTreeMap::new();
    for r in records {
        let t = by_trial
            .entry(r.trial_id.as_str())
            .or_default()
            .entry(r.ingredient.as_str())
            .or_default();
        t.participants += r.participant_count;
        for (code, &n) in &r.outcome_events {
            *t.events.entry(code.clone()).or_insert(0) += n;
        }
    }

    let mut pooled: BTreeMap<(String, String, String), [u64; 4]> = BTreeMap::new();
    for drugs in by_trial.values() {
        let names: Vec<&&str> = drugs.keys().collect();
        for (i, da) in names.iter().enumerate() {
            for db in &names[i + 1..] {
                let ta = &drugs[**da];
                let tb = &drugs[**db];
                let codes: BTreeSet<&String> = ta.events.keys().chain(tb.events.keys()).collect();
                for code in codes {
                    let cell = pooled
                        .entry((da.to_string(), db.to_string(), code.clone()))
                        .or_insert([0; 4]);
                    cell[0] += ta.events.get(code).copied().unwrap_or(0);
                    cell[1] += ta.participants;
                    cell[2] += tb.events.get(code).copied().unwrap_or(0);
                    cell[3] += tb.participants;
                }
            }
        }
    }

    pooled
        .into_iter()
        .map(|((drug_a, drug_b, outcome_code), [a, n1, b, n2])| ContingencyTable {
            drug_a,
            drug_b,
            outcome_code,
            a,
            n1,
            b,
            n2,
        })
        .collect()
}
