//! Score estimates against a reference set: thresholded precision/recall
//! and a precision-recall curve.
//!
//! ```text
//! cargo run --example score_methods
//! ```

use std::collections::HashMap;

use refbench::estimators::{EffectEstimate, MethodId, Scale};
use refbench::eval::{metrics_tsv, pr_curve, score_at_threshold, MethodScores, TABLE_HR_THRESHOLDS};
use refbench::refset::{Direction, EntryKey, Label, ReferenceEntry, ReferenceSet};

fn entry(a: &str, b: &str, o: &str, label: Label, direction: Direction) -> ReferenceEntry {
    ReferenceEntry { key: EntryKey::new(a, b, o), label, direction, pooled_or: None, p_value: None, q_value: None }
}

fn main() -> refbench::Result<()> {
    let refset = ReferenceSet {
        provenance: None,
        entries: vec![
            entry("D1", "D2", "O1", Label::Strong, Direction::AHigher),
            entry("D1", "D2", "O2", Label::Weak, Direction::None),
            entry("D3", "D4", "O1", Label::Strong, Direction::BHigher),
            entry("D3", "D4", "O3", Label::Weak, Direction::None),
            entry("D5", "D6", "O1", Label::Strong, Direction::AHigher),
            entry("D5", "D6", "O4", Label::Weak, Direction::None),
        ],
    };
    let log_hr = [0.9, 0.3, -0.5, 0.05, f64::NAN, -0.25];
    let estimates: HashMap<EntryKey, EffectEstimate> = refset
        .entries
        .iter()
        .zip(log_hr)
        .map(|(e, point)| {
            let est = EffectEstimate {
                method_id: MethodId::IpwOverlapCox,
                scale: Scale::LogHazardRatio,
                point,
                std_error: 0.1,
                model_std_error: None,
                converged: point.is_finite(),
                n_used: 5000,
                note: None,
            };
            (e.key.clone(), est)
        })
        .collect();

    let scores = MethodScores::collect(MethodId::IpwOverlapCox, &refset, &estimates);
    let rows = TABLE_HR_THRESHOLDS
        .iter()
        .map(|&t| score_at_threshold(&scores, &refset, t))
        .collect::<refbench::Result<Vec<_>>>()?;
    print!("{}", metrics_tsv(Some("thresholded"), &rows));
    print!("{}", metrics_tsv(Some("precision-recall curve"), &pr_curve(&scores, &refset)?));
    Ok(())
}
