//! Scoring estimates against a reference set: thresholded predictions,
//! weighted precision, recall and precision-recall curves.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::cohort::SkipReason;
use crate::error::{Error, Result};
use crate::estimators::{EffectEstimate, MethodId, Scale};
use crate::io;
use crate::refset::{Direction, EntryKey, Label, ReferenceSet};

/// Hazard-ratio thresholds of the fixed table.
pub const TABLE_HR_THRESHOLDS: [f64; 3] = [2.0, 1.5, 1.25];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictedLabel {
    Strong,
    Weak,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub entry: EntryKey,
    pub method_id: MethodId,
    pub label: PredictedLabel,
    pub direction: Direction,
    /// `|log HR|` or `|RMST difference|` in days; absent when unavailable.
    pub magnitude: Option<f64>,
}

/// Magnitude and risk direction of a usable estimate. A positive log-HR or
/// a negative RMST difference means drug A carries the higher risk.
pub fn effect_direction(estimate: &EffectEstimate) -> Option<(f64, Direction)> {
    if !estimate.usable() {
        return None;
    }
    let risk = match estimate.scale {
        Scale::LogHazardRatio => estimate.point,
        Scale::RmstDifferenceDays => -estimate.point,
    };
    let direction = if risk > 0.0 {
        Direction::AHigher
    } else if risk < 0.0 {
        Direction::BHigher
    } else {
        Direction::None
    };
    Some((estimate.point.abs(), direction))
}

/// Cutoff on the magnitude scale: `ln(threshold)` for hazard ratios, the
/// threshold itself for RMST differences in days.
pub fn magnitude_cutoff(scale: Scale, threshold: f64) -> Result<f64> {
    match scale {
        Scale::LogHazardRatio if threshold > 1.0 => Ok(threshold.ln()),
        Scale::RmstDifferenceDays if threshold > 0.0 => Ok(threshold),
        _ => Err(Error::Invalid(format!("threshold {threshold} is out of range for {scale:?}"))),
    }
}

fn threshold_from_cutoff(scale: Scale, cutoff: f64) -> f64 {
    match scale {
        Scale::LogHazardRatio => cutoff.exp(),
        Scale::RmstDifferenceDays => cutoff,
    }
}

pub fn predict(entry: &EntryKey, estimate: &EffectEstimate, threshold: f64) -> Result<Prediction> {
    let cutoff = magnitude_cutoff(estimate.scale, threshold)?;
    Ok(predict_at_cutoff(entry, estimate, cutoff))
}

fn predict_at_cutoff(entry: &EntryKey, estimate: &EffectEstimate, cutoff: f64) -> Prediction {
    match effect_direction(estimate) {
        Some((magnitude, direction)) => Prediction {
            entry: entry.clone(),
            method_id: estimate.method_id,
            label: if magnitude >= cutoff { PredictedLabel::Strong } else { PredictedLabel::Weak },
            direction,
            magnitude: Some(magnitude),
        },
        None => Prediction {
            entry: entry.clone(),
            method_id: estimate.method_id,
            label: PredictedLabel::Unavailable,
            direction: Direction::None,
            magnitude: None,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method_id: MethodId,
    /// HR threshold, or days for RMST methods.
    pub threshold: f64,
    /// Absent when nothing is predicted strong.
    pub precision: Option<f64>,
    /// Over evaluable strong entries.
    pub recall: Option<f64>,
    /// Over every strong entry in the reference set.
    pub recall_all_strong: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tp_weighted: f64,
    pub fp_weighted: f64,
    pub n_predicted_strong: usize,
    pub n_evaluable: usize,
    pub n_strong_evaluable: usize,
    pub n_weak_evaluable: usize,
    pub n_strong_total: usize,
    pub strong_weight: f64,
}

/// One method's magnitude and direction per reference entry, `None` when
/// the method has no usable estimate for the entry.
#[derive(Debug, Clone)]
pub struct MethodScores {
    pub method_id: MethodId,
    pub scale: Scale,
    pub per_entry: Vec<Option<(f64, Direction)>>,
}

impl MethodScores {
    /// Look up each reference entry's estimate; an estimate stored under the
    /// swapped drug order has its direction flipped.
    pub fn collect(method: MethodId, refset: &ReferenceSet, estimates: &HashMap<EntryKey, EffectEstimate>) -> Self {
        let per_entry = refset
            .entries
            .iter()
            .map(|e| {
                if let Some(est) = estimates.get(&e.key) {
                    effect_direction(est)
                } else {
                    estimates
                        .get(&e.key.swapped())
                        .and_then(effect_direction)
                        .map(|(m, d)| (m, d.flipped()))
                }
            })
            .collect();
        Self { method_id: method, scale: method.scale(), per_entry }
    }

    pub fn predictions(&self, refset: &ReferenceSet, cutoff: f64) -> Vec<Prediction> {
        refset
            .entries
            .iter()
            .zip(&self.per_entry)
            .map(|(e, p)| match p {
                Some((m, d)) => Prediction {
                    entry: e.key.clone(),
                    method_id: self.method_id,
                    label: if *m >= cutoff { PredictedLabel::Strong } else { PredictedLabel::Weak },
                    direction: *d,
                    magnitude: Some(*m),
                },
                None => Prediction {
                    entry: e.key.clone(),
                    method_id: self.method_id,
                    label: PredictedLabel::Unavailable,
                    direction: Direction::None,
                    magnitude: None,
                },
            })
            .collect()
    }
}

/// Weighted precision and recall of `predictions` against `refset`.
/// Entries without a prediction count as unavailable.
pub fn score(predictions: &[Prediction], refset: &ReferenceSet, threshold: f64) -> Result<MetricsRow> {
    if refset.entries.is_empty() {
        return Err(Error::Invalid("reference set is empty".into()));
    }
    let method_id = predictions
        .first()
        .map(|p| p.method_id)
        .ok_or_else(|| Error::Invalid("no predictions to score".into()))?;
    let by_key: HashMap<&EntryKey, &Prediction> = predictions.iter().map(|p| (&p.entry, p)).collect();

    let available = |p: Option<&&Prediction>| p.is_some_and(|p| p.label != PredictedLabel::Unavailable);
    let (mut n_strong_eval, mut n_weak_eval) = (0usize, 0usize);
    for e in &refset.entries {
        if available(by_key.get(&e.key)) {
            match e.label {
                Label::Strong => n_strong_eval += 1,
                Label::Weak => n_weak_eval += 1,
            }
        }
    }
    let strong_weight = if n_strong_eval > 0 && n_weak_eval > 0 {
        n_weak_eval as f64 / n_strong_eval as f64
    } else {
        1.0
    };

    let (mut tp, mut fp, mut n_pred) = (0usize, 0usize, 0usize);
    let (mut tp_w, mut fp_w) = (0.0, 0.0);
    for e in &refset.entries {
        let Some(p) = by_key.get(&e.key) else { continue };
        if p.label != PredictedLabel::Strong {
            continue;
        }
        n_pred += 1;
        let w = match e.label {
            Label::Strong => strong_weight,
            Label::Weak => 1.0,
        };
        if e.label == Label::Strong && p.direction == e.direction && p.direction != Direction::None {
            tp += 1;
            tp_w += w;
        } else {
            fp += 1;
            fp_w += w;
        }
    }
    let n_strong_total = refset.n_strong();
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(MetricsRow {
        method_id,
        threshold,
        precision: (n_pred > 0).then(|| tp_w / (tp_w + fp_w)),
        recall: ratio(tp, n_strong_eval),
        recall_all_strong: ratio(tp, n_strong_total),
        tp,
        fp,
        fn_: n_strong_total - tp,
        tp_weighted: tp_w,
        fp_weighted: fp_w,
        n_predicted_strong: n_pred,
        n_evaluable: n_strong_eval + n_weak_eval,
        n_strong_evaluable: n_strong_eval,
        n_weak_evaluable: n_weak_eval,
        n_strong_total,
        strong_weight,
    })
}

/// Metrics at a threshold on the method's own scale.
pub fn score_at_threshold(scores: &MethodScores, refset: &ReferenceSet, threshold: f64) -> Result<MetricsRow> {
    let cutoff = magnitude_cutoff(scores.scale, threshold)?;
    score(&scores.predictions(refset, cutoff), refset, threshold)
}

/// One row per distinct magnitude, largest first; each row predicts strong
/// for every magnitude at or above it.
pub fn pr_curve(scores: &MethodScores, refset: &ReferenceSet) -> Result<Vec<MetricsRow>> {
    let mut mags: Vec<f64> = scores.per_entry.iter().flatten().map(|(m, _)| *m).collect();
    if mags.is_empty() {
        return Err(Error::Invalid(format!("{} has no usable estimates", scores.method_id)));
    }
    mags.sort_by(|a, b| b.total_cmp(a));
    mags.dedup();
    mags.iter()
        .map(|&m| score(&scores.predictions(refset, m), refset, threshold_from_cutoff(scores.scale, m)))
        .collect()
}

/// Header line of an estimates file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub tool_version: String,
    pub refset_sha256: String,
    pub db_sha256: String,
    pub vocab_sha256: String,
    pub config_sha256: String,
    pub seed: u64,
    pub methods: Vec<MethodId>,
}

/// One `(entry, method)` row of an estimates file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub drug_a: String,
    pub drug_b: String,
    pub outcome_code: String,
    pub method_id: MethodId,
    pub scale: Scale,
    #[serde(with = "io::float")]
    pub point: f64,
    #[serde(with = "io::float")]
    pub std_error: f64,
    #[serde(default, with = "io::float::option", skip_serializing_if = "Option::is_none")]
    pub model_std_error: Option<f64>,
    pub converged: bool,
    pub n_used: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, with = "io::float::option", skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<SkipReason>,
}

impl EstimateRecord {
    pub fn new(key: &EntryKey, estimate: &EffectEstimate, tau: Option<f64>) -> Self {
        Self {
            drug_a: key.drug_a.clone(),
            drug_b: key.drug_b.clone(),
            outcome_code: key.outcome_code.clone(),
            method_id: estimate.method_id,
            scale: estimate.scale,
            point: estimate.point,
            std_error: estimate.std_error,
            model_std_error: estimate.model_std_error,
            converged: estimate.converged,
            n_used: estimate.n_used,
            note: estimate.note.clone(),
            tau,
            skipped: None,
        }
    }

    pub fn skipped(key: &EntryKey, method: MethodId, reason: SkipReason) -> Self {
        let mut r = Self::new(key, &EffectEstimate::failed(method, 0, format!("cohort skipped: {reason}")), None);
        r.skipped = Some(reason);
        r
    }

    pub fn key(&self) -> EntryKey {
        EntryKey::new(&self.drug_a, &self.drug_b, &self.outcome_code)
    }

    pub fn estimate(&self) -> EffectEstimate {
        EffectEstimate {
            method_id: self.method_id,
            scale: self.scale,
            point: self.point,
            std_error: self.std_error,
            model_std_error: self.model_std_error,
            converged: self.converged,
            n_used: self.n_used,
            note: self.note.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: RunHeader,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimatesFile {
    pub header: Option<RunHeader>,
    pub records: Vec<EstimateRecord>,
}

impl EstimatesFile {
    pub fn header_line(header: &RunHeader) -> String {
        serde_json::to_string(&HeaderLine { header: header.clone() }).expect("header serializes")
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        if let Some(h) = &self.header {
            out.push_str(&Self::header_line(h));
            out.push('\n');
        }
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut file = Self::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if i == 0 {
                if let Ok(h) = serde_json::from_str::<HeaderLine>(&line) {
                    file.header = Some(h.header);
                    continue;
                }
            }
            let r: EstimateRecord = serde_json::from_str(&line)
                .map_err(|e| Error::format("estimates", format!("line {}: {e}", i + 1)))?;
            file.records.push(r);
        }
        Ok(file)
    }

    /// Estimates grouped by method, in registry order.
    pub fn by_method(&self) -> BTreeMap<MethodId, HashMap<EntryKey, EffectEstimate>> {
        let mut out: BTreeMap<MethodId, HashMap<EntryKey, EffectEstimate>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.method_id).or_default().insert(r.key(), r.estimate());
        }
        out
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

pub const METRICS_COLUMNS: &str = "method_id\tclass\tthreshold\tprecision\trecall\trecall_all_strong\ttp\tfp\tfn\ttp_weighted\tfp_weighted\tn_predicted_strong\tn_evaluable\tn_strong_evaluable\tn_weak_evaluable\tn_strong_total";

pub fn metrics_tsv_line(r: &MetricsRow) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}\t{}",
        r.method_id,
        r.method_id.class(),
        r.threshold,
        fmt_opt(r.precision),
        fmt_opt(r.recall),
        fmt_opt(r.recall_all_strong),
        r.tp,
        r.fp,
        r.fn_,
        r.tp_weighted,
        r.fp_weighted,
        r.n_predicted_strong,
        r.n_evaluable,
        r.n_strong_evaluable,
        r.n_weak_evaluable,
        r.n_strong_total
    )
}

/// Tab-delimited metrics, with an optional leading `#` comment line.
pub fn metrics_tsv(comment: Option<&str>, rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    if let Some(c) = comment {
        let _ = writeln!(out, "# {c}");
    }
    out.push_str(METRICS_COLUMNS);
    out.push('\n');
    for r in rows {
        out.push_str(&metrics_tsv_line(r));
        out.push('\n');
    }
    out
}
