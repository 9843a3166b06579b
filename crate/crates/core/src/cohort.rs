//! New-user cohort construction from patient event streams.
//!
//! Each patient is indexed at the first claim of either study drug; count
//! features are tabulated strictly before the index day and follow-up runs
//! to the first matching outcome diagnosis or the end of observation.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Read};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::derive_seed;
use crate::refset::EntryKey;

pub const MIN_PER_ARM: usize = 100;
pub const MAX_PER_ARM: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeKind {
    DrugClaim,
    Diagnosis,
    Procedure,
}

impl CodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CodeKind::DrugClaim => "drug_claim",
            CodeKind::Diagnosis => "diagnosis",
            CodeKind::Procedure => "procedure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub day: i64,
    pub kind: CodeKind,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientStream {
    pub patient_id: String,
    pub observation_start: i64,
    pub observation_end: i64,
    pub events: Vec<Event>,
}

impl PatientStream {
    pub fn validate(&self) -> Result<()> {
        if self.observation_end < self.observation_start {
            return Err(Error::format(
                "patient db",
                format!("{}: observation window ends before it starts", self.patient_id),
            ));
        }
        let mut prev = self.observation_start;
        for e in &self.events {
            if e.day < prev || e.day > self.observation_end {
                return Err(Error::format(
                    "patient db",
                    format!(
                        "{}: event on day {} is unsorted or outside [{}, {}]",
                        self.patient_id, e.day, self.observation_start, self.observation_end
                    ),
                ));
            }
            prev = e.day;
        }
        Ok(())
    }
}

/// Ordered `(kind, code)` list fixing the count-feature layout.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    codes: Vec<(CodeKind, String)>,
    index: HashMap<(CodeKind, String), usize>,
}

#[derive(Deserialize)]
struct VocabRow {
    kind: CodeKind,
    code: String,
}

impl Vocabulary {
    pub fn new(codes: Vec<(CodeKind, String)>) -> Self {
        let index = codes.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
        Self { codes, index }
    }

    /// Every code seen in the streams, sorted.
    pub fn from_patients(patients: &[PatientStream]) -> Self {
        let set: BTreeSet<(CodeKind, String)> = patients
            .iter()
            .flat_map(|p| p.events.iter().map(|e| (e.kind, e.code.clone())))
            .collect();
        Self::new(set.into_iter().collect())
    }

    /// Tab-delimited with header `kind  code`.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(reader);
        let mut codes = Vec::new();
        for row in rdr.deserialize::<VocabRow>() {
            let row = row.map_err(|e| Error::format("vocabulary", e))?;
            codes.push((row.kind, row.code));
        }
        let v = Self::new(codes);
        if v.index.len() != v.codes.len() {
            return Err(Error::format("vocabulary", "duplicate codes"));
        }
        Ok(v)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("kind\tcode\n");
        for (k, c) in &self.codes {
            out.push_str(k.as_str());
            out.push('\t');
            out.push_str(c);
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn position(&self, kind: CodeKind, code: &str) -> Option<usize> {
        self.index.get(&(kind, code.to_owned())).copied()
    }

    pub fn codes(&self) -> &[(CodeKind, String)] {
        &self.codes
    }
}

/// Read-only patient database with a drug-claim index.
#[derive(Debug, Clone)]
pub struct PatientDb {
    patients: Vec<PatientStream>,
    vocabulary: Vocabulary,
    by_drug: HashMap<String, Vec<usize>>,
    diagnoses: BTreeSet<String>,
}

impl PatientDb {
    pub fn new(patients: Vec<PatientStream>, vocabulary: Vocabulary) -> Result<Self> {
        let mut by_drug: HashMap<String, Vec<usize>> = HashMap::new();
        let mut diagnoses = BTreeSet::new();
        let mut ids = std::collections::HashSet::new();
        for (i, p) in patients.iter().enumerate() {
            p.validate()?;
            if !ids.insert(p.patient_id.as_str()) {
                return Err(Error::format("patient db", format!("duplicate patient {}", p.patient_id)));
            }
            let mut drugs_seen = BTreeSet::new();
            for e in &p.events {
                match e.kind {
                    CodeKind::DrugClaim => {
                        if drugs_seen.insert(e.code.as_str()) {
                            by_drug.entry(e.code.clone()).or_default().push(i);
                        }
                    }
                    CodeKind::Diagnosis => {
                        diagnoses.insert(e.code.clone());
                    }
                    CodeKind::Procedure => {}
                }
            }
        }
        Ok(Self {
            patients,
            vocabulary,
            by_drug,
            diagnoses,
        })
    }

    pub fn with_derived_vocabulary(patients: Vec<PatientStream>) -> Result<Self> {
        let vocab = Vocabulary::from_patients(&patients);
        Self::new(patients, vocab)
    }

    pub fn from_jsonl<R: BufRead>(reader: R, vocabulary: Option<Vocabulary>) -> Result<Self> {
        let mut patients = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let p: PatientStream = serde_json::from_str(&line)
                .map_err(|e| Error::format("patient db", format!("line {}: {e}", i + 1)))?;
            patients.push(p);
        }
        match vocabulary {
            Some(v) => Self::new(patients, v),
            None => Self::with_derived_vocabulary(patients),
        }
    }

    pub fn patients(&self) -> &[PatientStream] {
        &self.patients
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    fn outcome_known(&self, outcome: &str) -> bool {
        self.diagnoses
            .range(outcome.to_owned()..)
            .next()
            .is_some_and(|c| c.starts_with(outcome))
    }
}

/// Diagnosis codes match an outcome by prefix, so `I10` covers `I10.9`.
pub fn outcome_matches(code: &str, outcome: &str) -> bool {
    code.starts_with(outcome)
}

/// Externally supplied per-patient dense vectors, all of the same width.
#[derive(Debug, Clone, Default)]
pub struct DenseFeatures {
    width: usize,
    values: HashMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseRow {
    pub patient_id: String,
    pub values: Vec<f64>,
}

impl DenseFeatures {
    pub fn new(rows: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let mut width = None;
        let mut values = HashMap::new();
        for (id, v) in rows {
            match width {
                None => width = Some(v.len()),
                Some(w) if w != v.len() => {
                    return Err(Error::format(
                        "dense features",
                        format!("{id}: width {} differs from {w}", v.len()),
                    ))
                }
                _ => {}
            }
            values.insert(id, v);
        }
        Ok(Self {
            width: width.unwrap_or(0),
            values,
        })
    }

    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: DenseRow = serde_json::from_str(&line)
                .map_err(|e| Error::format("dense features", format!("line {}: {e}", i + 1)))?;
            rows.push((r.patient_id, r.values));
        }
        Self::new(rows)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.values.get(id).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    #[default]
    Counts,
    Dense,
    CountsAndDense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortOptions {
    pub min_per_arm: usize,
    pub max_per_arm: usize,
    /// Drop patients with the outcome before index. Off by default.
    pub exclude_prior_outcome: bool,
    pub features: FeatureSource,
}

impl Default for CohortOptions {
    fn default() -> Self {
        Self {
            min_per_arm: MIN_PER_ARM,
            max_per_arm: MAX_PER_ARM,
            exclude_prior_outcome: false,
            features: FeatureSource::Counts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    DrugA,
    DrugB,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortRow {
    pub patient_id: String,
    pub arm: Arm,
    pub features: Vec<f64>,
    pub time: f64,
    pub event: bool,
}

impl CohortRow {
    pub fn treated(&self) -> bool {
        self.arm == Arm::DrugA
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub entry: EntryKey,
    pub rows: Vec<CohortRow>,
    pub n_a: usize,
    pub n_b: usize,
    pub n_same_day_excluded: usize,
}

impl Cohort {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.event).collect()
    }

    /// `true` for drug A.
    pub fn treatment(&self) -> Vec<bool> {
        self.rows.iter().map(CohortRow::treated).collect()
    }

    pub fn n_features(&self) -> usize {
        self.rows.first().map_or(0, |r| r.features.len())
    }

    pub fn feature_matrix(&self) -> nalgebra::DMatrix<f64> {
        let p = self.n_features();
        nalgebra::DMatrix::from_fn(self.rows.len(), p, |i, j| self.rows[i].features[j])
    }

    /// Relabel drug A as drug B and vice versa.
    pub fn swapped(&self) -> Cohort {
        Cohort {
            entry: self.entry.swapped(),
            rows: self
                .rows
                .iter()
                .map(|r| CohortRow {
                    arm: match r.arm {
                        Arm::DrugA => Arm::DrugB,
                        Arm::DrugB => Arm::DrugA,
                    },
                    ..r.clone()
                })
                .collect(),
            n_a: self.n_b,
            n_b: self.n_a,
            n_same_day_excluded: self.n_same_day_excluded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum SkipReason {
    UnknownDrug { code: String },
    UnknownOutcome { code: String },
    TooFewPatients { n_a: usize, n_b: usize, minimum: usize },
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SkipReason::UnknownDrug { code } => write!(f, "unknown drug {code}"),
            SkipReason::UnknownOutcome { code } => write!(f, "unknown outcome {code}"),
            SkipReason::TooFewPatients { n_a, n_b, minimum } => {
                write!(f, "too few patients (a={n_a}, b={n_b}, minimum {minimum})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CohortBuild {
    Built(Cohort),
    Skipped(SkipReason),
}

/// Per-code counts of events strictly before `index_day`.
pub fn count_features(vocab: &Vocabulary, patient: &PatientStream, index_day: i64) -> Vec<f64> {
    let mut v = vec![0.0; vocab.len()];
    for e in patient.events.iter().take_while(|e| e.day < index_day) {
        if let Some(i) = vocab.position(e.kind, &e.code) {
            v[i] += 1.0;
        }
    }
    v
}

fn first_claim(p: &PatientStream, drug: &str) -> Option<i64> {
    p.events
        .iter()
        .find(|e| e.kind == CodeKind::DrugClaim && e.code == drug)
        .map(|e| e.day)
}

/// Downsample to at most `max` indices, keeping database order. Each drug
/// gets its own substream so relabelling the arms samples the same patients.
fn downsample(idx: Vec<usize>, max: usize, seed: u64, drug: &str) -> Vec<usize> {
    if idx.len() <= max {
        return idx;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, drug));
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, idx.len(), max)
        .into_iter()
        .map(|i| idx[i])
        .collect();
    chosen.sort_unstable();
    chosen
}

pub fn build_cohort(
    db: &PatientDb,
    entry: &EntryKey,
    sampling_seed: u64,
    opts: &CohortOptions,
    dense: Option<&DenseFeatures>,
) -> Result<CohortBuild> {
    for drug in [&entry.drug_a, &entry.drug_b] {
        if !db.by_drug.contains_key(drug.as_str()) {
            return Ok(CohortBuild::Skipped(SkipReason::UnknownDrug { code: drug.clone() }));
        }
    }
    if !db.outcome_known(&entry.outcome_code) {
        return Ok(CohortBuild::Skipped(SkipReason::UnknownOutcome {
            code: entry.outcome_code.clone(),
        }));
    }
    let needs_dense = matches!(opts.features, FeatureSource::Dense | FeatureSource::CountsAndDense);
    if needs_dense && dense.is_none() {
        return Err(Error::Invalid("dense features requested but none supplied".into()));
    }

    let mut candidates: Vec<usize> = db.by_drug[entry.drug_a.as_str()]
        .iter()
        .chain(&db.by_drug[entry.drug_b.as_str()])
        .copied()
        .collect();
    candidates.sort_unstable();
    candidates.dedup();

    struct Indexed {
        patient: usize,
        arm: Arm,
        index_day: i64,
    }
    let mut same_day = 0;
    let mut arm_a = Vec::new();
    let mut arm_b = Vec::new();
    for &pi in &candidates {
        let p = &db.patients[pi];
        let (arm, index_day) = match (first_claim(p, &entry.drug_a), first_claim(p, &entry.drug_b)) {
            (Some(a), Some(b)) if a == b => {
                same_day += 1;
                continue;
            }
            (Some(a), Some(b)) if a < b => (Arm::DrugA, a),
            (Some(_), Some(b)) => (Arm::DrugB, b),
            (Some(a), None) => (Arm::DrugA, a),
            (None, Some(b)) => (Arm::DrugB, b),
            (None, None) => continue,
        };
        if opts.exclude_prior_outcome
            && p.events.iter().any(|e| {
                e.day < index_day && e.kind == CodeKind::Diagnosis && outcome_matches(&e.code, &entry.outcome_code)
            })
        {
            continue;
        }
        let ix = Indexed {
            patient: pi,
            arm,
            index_day,
        };
        match arm {
            Arm::DrugA => arm_a.push(ix),
            Arm::DrugB => arm_b.push(ix),
        }
    }

    let (n_a, n_b) = (arm_a.len().min(opts.max_per_arm), arm_b.len().min(opts.max_per_arm));
    if n_a < opts.min_per_arm || n_b < opts.min_per_arm {
        return Ok(CohortBuild::Skipped(SkipReason::TooFewPatients {
            n_a,
            n_b,
            minimum: opts.min_per_arm,
        }));
    }
    let keep_a = downsample((0..arm_a.len()).collect(), opts.max_per_arm, sampling_seed, &entry.drug_a);
    let keep_b = downsample((0..arm_b.len()).collect(), opts.max_per_arm, sampling_seed, &entry.drug_b);
    let mut chosen: Vec<&Indexed> = keep_a
        .iter()
        .map(|&i| &arm_a[i])
        .chain(keep_b.iter().map(|&i| &arm_b[i]))
        .collect();
    chosen.sort_by_key(|ix| ix.patient);

    let mut rows = Vec::with_capacity(chosen.len());
    for ix in chosen {
        let p = &db.patients[ix.patient];
        let outcome_day = p
            .events
            .iter()
            .find(|e| {
                e.day >= ix.index_day && e.kind == CodeKind::Diagnosis && outcome_matches(&e.code, &entry.outcome_code)
            })
            .map(|e| e.day);
        let (time, event) = match outcome_day {
            Some(d) => ((d - ix.index_day) as f64, true),
            None => ((p.observation_end - ix.index_day) as f64, false),
        };
        let mut features = match opts.features {
            FeatureSource::Dense => Vec::new(),
            _ => count_features(&db.vocabulary, p, ix.index_day),
        };
        if needs_dense {
            let d = dense
                .and_then(|d| d.get(&p.patient_id))
                .ok_or_else(|| Error::Invalid(format!("no dense features for patient {}", p.patient_id)))?;
            features.extend_from_slice(d);
        }
        rows.push(CohortRow {
            patient_id: p.patient_id.clone(),
            arm: ix.arm,
            features,
            time,
            event,
        });
    }

    Ok(CohortBuild::Built(Cohort {
        entry: entry.clone(),
        rows,
        n_a,
        n_b,
        n_same_day_excluded: same_day,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(day: i64, kind: CodeKind, code: &str) -> Event {
        Event {
            day,
            kind,
            code: code.into(),
        }
    }

    fn patient(id: &str, end: i64, events: Vec<Event>) -> PatientStream {
        PatientStream {
            patient_id: id.into(),
            observation_start: 0,
            observation_end: end,
            events,
        }
    }

    /// `n` filler patients per drug so arms clear the minimum size.
    fn filler(n: usize) -> Vec<PatientStream> {
        let mut out = Vec::new();
        for i in 0..n {
            out.push(patient(&format!("fa{i:04}"), 300, vec![ev(1, CodeKind::DrugClaim, "A")]));
            out.push(patient(&format!("fb{i:04}"), 300, vec![ev(1, CodeKind::DrugClaim, "B")]));
        }
        out.push(patient("dx", 300, vec![ev(3, CodeKind::Diagnosis, "I10.1")]));
        out
    }

    fn built(b: CohortBuild) -> Cohort {
        match b {
            CohortBuild::Built(c) => c,
            CohortBuild::Skipped(r) => panic!("skipped: {r}"),
        }
    }

    #[test]
    fn hand_traced_rows() {
        let mut ps = vec![
            patient(
                "p1",
                400,
                vec![ev(10, CodeKind::DrugClaim, "A"), ev(25, CodeKind::Diagnosis, "I10")],
            ),
            patient("p2", 100, vec![ev(5, CodeKind::DrugClaim, "B")]),
            patient(
                "p3",
                100,
                vec![ev(5, CodeKind::DrugClaim, "A"), ev(5, CodeKind::DrugClaim, "B")],
            ),
            patient(
                "p4",
                90,
                vec![ev(7, CodeKind::DrugClaim, "B"), ev(7, CodeKind::Diagnosis, "I10.9")],
            ),
        ];
        ps.extend(filler(100));
        let db = PatientDb::with_derived_vocabulary(ps).unwrap();
        let c = built(build_cohort(&db, &EntryKey::new("A", "B", "I10"), 1, &CohortOptions::default(), None).unwrap());
        assert_eq!(c.n_same_day_excluded, 1);
        let find = |id: &str| c.rows.iter().find(|r| r.patient_id == id).cloned();
        let p1 = find("p1").unwrap();
        assert_eq!((p1.arm, p1.time, p1.event), (Arm::DrugA, 15.0, true));
        let p2 = find("p2").unwrap();
        assert_eq!((p2.arm, p2.time, p2.event), (Arm::DrugB, 95.0, false));
        assert!(find("p3").is_none());
        let p4 = find("p4").unwrap();
        assert_eq!((p4.time, p4.event), (0.0, true));
    }

    #[test]
    fn small_arm_is_skipped() {
        let mut ps = Vec::new();
        for i in 0..150 {
            ps.push(patient(&format!("a{i}"), 50, vec![ev(1, CodeKind::DrugClaim, "A")]));
        }
        for i in 0..40 {
            ps.push(patient(&format!("b{i}"), 50, vec![ev(1, CodeKind::DrugClaim, "B")]));
        }
        ps.push(patient("d", 50, vec![ev(2, CodeKind::Diagnosis, "K21")]));
        let db = PatientDb::with_derived_vocabulary(ps).unwrap();
        let r = build_cohort(&db, &EntryKey::new("A", "B", "K21"), 0, &CohortOptions::default(), None).unwrap();
        assert_eq!(
            r,
            CohortBuild::Skipped(SkipReason::TooFewPatients { n_a: 150, n_b: 40, minimum: 100 })
        );
        let r = build_cohort(&db, &EntryKey::new("A", "Z", "K21"), 0, &CohortOptions::default(), None).unwrap();
        assert!(matches!(r, CohortBuild::Skipped(SkipReason::UnknownDrug { .. })));
        let r = build_cohort(&db, &EntryKey::new("A", "B", "Q99"), 0, &CohortOptions::default(), None).unwrap();
        assert!(matches!(r, CohortBuild::Skipped(SkipReason::UnknownOutcome { .. })));
    }

    #[test]
    fn features_are_strictly_pre_index() {
        let p = patient(
            "p",
            100,
            vec![
                ev(1, CodeKind::Procedure, "X"),
                ev(2, CodeKind::Procedure, "X"),
                ev(5, CodeKind::Diagnosis, "Y"),
                ev(5, CodeKind::DrugClaim, "A"),
                ev(9, CodeKind::Procedure, "X"),
            ],
        );
        let vocab = Vocabulary::from_patients(std::slice::from_ref(&p));
        let f = count_features(&vocab, &p, 5);
        let x = vocab.position(CodeKind::Procedure, "X").unwrap();
        let y = vocab.position(CodeKind::Diagnosis, "Y").unwrap();
        assert_eq!(f[x], 2.0);
        assert_eq!(f[y], 0.0, "index-day events are not counted");
        assert!(count_features(&vocab, &p, 0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prior_outcome_exclusion_is_opt_in() {
        let mut ps = vec![patient(
            "prior",
            200,
            vec![ev(2, CodeKind::Diagnosis, "I10"), ev(10, CodeKind::DrugClaim, "A")],
        )];
        ps.extend(filler(100));
        let db = PatientDb::with_derived_vocabulary(ps).unwrap();
        let key = EntryKey::new("A", "B", "I10");
        let c = built(build_cohort(&db, &key, 0, &CohortOptions::default(), None).unwrap());
        assert!(c.rows.iter().any(|r| r.patient_id == "prior"));
        let opts = CohortOptions {
            exclude_prior_outcome: true,
            ..Default::default()
        };
        let c = built(build_cohort(&db, &key, 0, &opts, None).unwrap());
        assert!(!c.rows.iter().any(|r| r.patient_id == "prior"));
    }

    #[test]
    fn downsampling_is_seeded_and_label_symmetric() {
        let db = PatientDb::with_derived_vocabulary(filler(300)).unwrap();
        let opts = CohortOptions {
            max_per_arm: 120,
            ..Default::default()
        };
        let key = EntryKey::new("A", "B", "I10");
        let c1 = built(build_cohort(&db, &key, 42, &opts, None).unwrap());
        let c2 = built(build_cohort(&db, &key, 42, &opts, None).unwrap());
        assert_eq!(c1, c2);
        assert_eq!((c1.n_a, c1.n_b), (120, 120));
        let c3 = built(build_cohort(&db, &key.swapped(), 42, &opts, None).unwrap());
        assert_eq!(c3, c1.swapped());
        let c4 = built(build_cohort(&db, &key, 43, &opts, None).unwrap());
        assert_ne!(c4.rows, c1.rows);
    }

    #[test]
    fn unsorted_events_rejected() {
        let p = patient("p", 10, vec![ev(5, CodeKind::Procedure, "X"), ev(2, CodeKind::Procedure, "X")]);
        assert!(PatientDb::with_derived_vocabulary(vec![p]).is_err());
        let p = patient("p", 10, vec![ev(11, CodeKind::Procedure, "X")]);
        assert!(PatientDb::with_derived_vocabulary(vec![p]).is_err());
    }

    #[test]
    fn dense_features_are_appended() {
        let ps = filler(100);
        let dense = DenseFeatures::new(ps.iter().map(|p| (p.patient_id.clone(), vec![1.5, -2.0]))).unwrap();
        let db = PatientDb::with_derived_vocabulary(ps).unwrap();
        let opts = CohortOptions {
            features: FeatureSource::CountsAndDense,
            ..Default::default()
        };
        let c = built(build_cohort(&db, &EntryKey::new("A", "B", "I10"), 0, &opts, Some(&dense)).unwrap());
        assert_eq!(c.n_features(), db.vocabulary().len() + 2);
        assert_eq!(&c.rows[0].features[db.vocabulary().len()..], &[1.5, -2.0]);
        assert!(build_cohort(&db, &EntryKey::new("A", "B", "I10"), 0, &opts, None).is_err());
    }
}
