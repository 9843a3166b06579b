//! Acceptance checks. Each test prints a single `criterion N ... PASS|FAIL`
//! line (visible with `--nocapture`) and then asserts the same condition.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use refbench::cohort::{Arm, Cohort, CohortRow};
use refbench::estimators::aft::aft_fit;
use refbench::estimators::aipw::rmst_aipw;
use refbench::estimators::cox::cox_fit;
use refbench::estimators::km::{km_curve, restriction_horizon, SurvivalCurve};
use refbench::estimators::propensity::fit_logistic;
use refbench::estimators::weights::{weights, WeightMode};
use refbench::estimators::{EffectEstimate, MethodId, Scale};
use refbench::eval::{score, score_at_threshold, pr_curve, MethodScores, PredictedLabel, Prediction};
use refbench::exact::{
    bh_reject, fisher_one_sided_p, min_achievable_p, p_family, ClassifyParams, Family, NoncentralHypergeometric,
    OddsRatioNull, TableMargins, Tail,
};
use refbench::refset::{build, BuildParams, Direction, EntryKey, Label, ReferenceEntry, ReferenceSet, RefsetInputs};
use refbench::synth::{self, PlantedPair, ScenarioConfig, SimPatient};

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    println!("criterion {n:>2} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

// ---------------------------------------------------------------- criterion 1

fn binom(n: u64, k: u64) -> BigInt {
    let mut r = BigInt::one();
    for i in 0..k {
        r = r * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    r
}

/// Exact tails `(P(X <= k), P(X >= k))` for every k in the support, by
/// enumerating the rational weights `C(n1,k) C(n2,m-k) psi^k`.
fn rational_tails(n1: u64, n2: u64, m: u64, psi: (i64, i64)) -> Vec<(f64, f64)> {
    let lo = m.saturating_sub(n2);
    let hi = m.min(n1);
    let psi = BigRational::new(BigInt::from(psi.0), BigInt::from(psi.1));
    let mut w = Vec::new();
    let mut pow = BigRational::one();
    for _ in 0..lo {
        pow = &pow * &psi;
    }
    for k in lo..=hi {
        w.push(BigRational::from_integer(binom(n1, k) * binom(n2, m - k)) * &pow);
        pow = &pow * &psi;
    }
    let total: BigRational = w.iter().fold(BigRational::zero(), |a, b| a + b);
    let mut out = Vec::with_capacity(w.len());
    let mut below = BigRational::zero();
    for wk in &w {
        let lower = &below + wk;
        let upper = &total - &below;
        out.push(((&lower / &total).to_f64().unwrap(), (&upper / &total).to_f64().unwrap()));
        below = lower;
    }
    out
}

#[test]
fn criterion_01_exact_test_matches_rational_enumeration() {
    let start = Instant::now();
    let psis = [(4i64, 5i64), (1, 1), (5, 4)];
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for n1 in 1..=20u64 {
        for n2 in 1..=20u64 {
            for m in 0..=n1 + n2 {
                for &psi in &psis {
                    let exact = rational_tails(n1, n2, m, psi);
                    let lo = m.saturating_sub(n2);
                    for (i, &(lower, upper)) in exact.iter().enumerate() {
                        let t = TableMargins::new(n1, n2, m, lo + i as u64).unwrap();
                        let psi_f = psi.0 as f64 / psi.1 as f64;
                        let pl = fisher_one_sided_p(&t, OddsRatioNull::new(psi_f, Tail::Lower).unwrap()).unwrap();
                        let pu = fisher_one_sided_p(&t, OddsRatioNull::new(psi_f, Tail::Upper).unwrap()).unwrap();
                        worst = worst.max((pl - lower).abs()).max((pu - upper).abs());
                        checked += 2;
                    }
                }
            }
        }
    }
    let mut worst_norm = 0.0f64;
    for n1 in 1..=50u64 {
        for n2 in 1..=50u64 {
            for m in 0..=n1 + n2 {
                for psi in [0.8, 1.0, 1.25] {
                    let d = NoncentralHypergeometric::new(n1, n2, m, psi).unwrap();
                    let (lo, hi) = d.support();
                    let s: f64 = (lo..=hi).map(|k| d.log_pmf(k).unwrap().exp()).sum();
                    worst_norm = worst_norm.max((s - 1.0).abs());
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-12 && worst_norm <= 1e-12 && secs < 60.0;
    report(
        1,
        "exact test vs rational enumeration",
        pass,
        &format!("{checked} tails, max |err| {worst:.2e}, max normalization err {worst_norm:.2e}, {secs:.1}s"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 2

#[test]
fn criterion_02_prefilter_is_a_lower_bound() {
    let start = Instant::now();
    let params = ClassifyParams::default();
    let mut violations = 0usize;
    let mut checked = 0usize;
    for n1 in 1..=30u64 {
        for n2 in 1..=30u64 {
            for m in 0..=n1 + n2 {
                for family in [Family::Weak, Family::Strong] {
                    let floor = min_achievable_p(n1, n2, m, family).unwrap();
                    for k in m.saturating_sub(n2)..=m.min(n1) {
                        let t = TableMargins::new(n1, n2, m, k).unwrap();
                        let p = p_family(&t, family, &params).unwrap();
                        checked += 1;
                        if floor > p {
                            violations += 1;
                        }
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = violations == 0 && secs < 300.0;
    report(2, "prefilter soundness", pass, &format!("{checked} cells, {violations} violations, {secs:.1}s"));
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 3

/// Quadratic BH: the largest k such that at least k p-values are at or
/// below `k alpha / m`; reject every p-value at or below that bound.
fn naive_bh(p: &[f64], alpha: f64) -> Vec<usize> {
    let m = p.len();
    for k in (1..=m).rev() {
        let bound = k as f64 / m as f64 * alpha;
        let count = p.iter().filter(|&&x| x <= bound).count();
        if count >= k {
            return (0..m).filter(|&i| p[i] <= bound).collect();
        }
    }
    Vec::new()
}

#[test]
fn criterion_03_bh_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    let mut total_rejections = 0;
    for v in 0..1000 {
        let len = rng.random_range(1..=200usize);
        let p: Vec<f64> = (0..len)
            .map(|_| match v % 3 {
                // coarse grid to exercise ties
                0 => (rng.random_range(0..40u32) as f64) / 400.0,
                1 => rng.random::<f64>().powi(4),
                _ => rng.random::<f64>(),
            })
            .collect();
        let fast = bh_reject(&p, 0.05);
        total_rejections += fast.len();
        if fast != naive_bh(&p, 0.05) {
            mismatches += 1;
        }
    }
    let pass = mismatches == 0;
    report(3, "BH vs naive", pass, &format!("1000 vectors, {mismatches} mismatches, {total_rejections} rejections"));
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 4

fn drug_dictionary(codes: &[String]) -> String {
    let mut s = String::from("text_pattern\tingredient_id\tmatch_score\n");
    for c in codes {
        s.push_str(&format!("{}\t{c}\t100\n", c.to_lowercase()));
    }
    s
}

fn outcome_dictionary(codes: &[String]) -> String {
    let mut s = String::from("source_term_code\ttarget_outcome_code\n");
    for c in codes {
        s.push_str(&format!("{}\t{c}\n", synth::outcome_term(c)));
    }
    s
}

fn build_from_planted(planted: &[PlantedPair], drugs: &[String], outcomes: &[String], seed: u64) -> refbench::refset::BuildOutput {
    let dump = synth::dump_to_jsonl(&synth::gen_trial_dump(planted, seed).unwrap());
    let dd = drug_dictionary(drugs);
    let od = outcome_dictionary(outcomes);
    build(
        &RefsetInputs { dump: dump.as_bytes(), drug_dictionary: dd.as_bytes(), outcome_dictionary: od.as_bytes() },
        &BuildParams::default(),
    )
    .unwrap()
}

#[test]
fn criterion_04_refset_fdr_and_power() {
    let start = Instant::now();
    // Null dumps: 20 drug pairs x 3 outcomes, equal event rates in both arms.
    let drugs: Vec<String> = (0..40).map(|i| format!("D{i:02}")).collect();
    let outcomes: Vec<String> = ["AE1", "AE2", "AE3"].iter().map(|s| s.to_string()).collect();
    let sizes = [150u64, 400, 1000, 3000];
    let rates = [0.02, 0.1, 0.3];
    let mut fractions = Vec::new();
    let mut total_candidates = 0usize;
    let mut total_strong = 0usize;
    for seed in 0..200u64 {
        let planted: Vec<PlantedPair> = (0..20)
            .map(|j| {
                let n = sizes[j % sizes.len()];
                PlantedPair {
                    drug_a_text: synth::drug_text(&drugs[2 * j]),
                    drug_b_text: synth::drug_text(&drugs[2 * j + 1]),
                    n_a: n,
                    n_b: n + 50 * (j as u64 % 3),
                    n_trials: 1 + j % 2,
                    fixed_counts: false,
                    outcomes: outcomes
                        .iter()
                        .zip(rates)
                        .map(|(o, r)| (synth::outcome_term(o), r, r))
                        .collect(),
                }
            })
            .collect();
        let out = build_from_planted(&planted, &drugs, &outcomes, seed);
        let candidates = out.report.strong.candidates;
        let strong = out.refset.n_strong();
        total_candidates += candidates;
        total_strong += strong;
        if candidates > 0 {
            fractions.push(strong as f64 / candidates as f64);
        }
    }
    let mean_fraction = fractions.iter().sum::<f64>() / fractions.len().max(1) as f64;

    // Planted OR = 6 with 1,000 participants per arm.
    let planted_drugs = vec!["PA".to_string(), "PB".to_string()];
    let planted_outcome = vec!["AEX".to_string()];
    let (pb, or) = (0.05f64, 6.0f64);
    let pa = or * pb / (1.0 - pb + or * pb);
    let mut recovered = 0usize;
    for seed in 0..200u64 {
        let planted = [PlantedPair {
            drug_a_text: synth::drug_text("PA"),
            drug_b_text: synth::drug_text("PB"),
            n_a: 1000,
            n_b: 1000,
            n_trials: 1,
            fixed_counts: false,
            outcomes: vec![(synth::outcome_term("AEX"), pa, pb)],
        }];
        let out = build_from_planted(&planted, &planted_drugs, &planted_outcome, 10_000 + seed);
        let hit = out.refset.entries.iter().any(|e| {
            e.label == Label::Strong && e.direction == Direction::AHigher && e.key == EntryKey::new("PA", "PB", "AEX")
        });
        recovered += usize::from(hit);
    }
    let power = recovered as f64 / 200.0;
    let secs = start.elapsed().as_secs_f64();
    let pass = mean_fraction <= 0.075 && power >= 0.95;
    report(
        4,
        "refset FDR and planted recovery",
        pass,
        &format!(
            "null: mean strong/candidates {mean_fraction:.4} ({total_strong}/{total_candidates}); OR=6 recovered {recovered}/200; {secs:.1}s"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 5

/// Breslow partial log-likelihood, written independently of the library.
fn breslow_loglik(beta: f64, t: &[f64], d: &[bool], z: &[bool]) -> f64 {
    let mut ll = 0.0;
    for i in 0..t.len() {
        if !d[i] {
            continue;
        }
        let risk: f64 = (0..t.len())
            .filter(|&j| t[j] >= t[i])
            .map(|j| if z[j] { beta.exp() } else { 1.0 })
            .sum();
        ll += if z[i] { beta } else { 0.0 } - risk.ln();
    }
    ll
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..300 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

fn exponential_two_arm_config(n: usize, log_hr: f64, hazard: f64, censor_rate: f64) -> ScenarioConfig {
    ScenarioConfig::from_toml(&format!(
        r#"
n_dense = 0
n_noise_codes = 0
baseline_hazard = {hazard}
oracle_size = 0
[censoring]
rate = {censor_rate}
horizon = 1e9
[[pairs]]
drug_a = "HA"
drug_b = "HB"
n_patients = {n}
[[pairs.outcomes]]
code = "E1"
log_hr = {log_hr}
"#
    ))
    .unwrap()
}

#[test]
fn criterion_05_cox_recovery() {
    // Exponential censoring rate r * lambda0 with r solving
    // (r/(r+1) + r/(r+2)) / 2 = 0.2 gives 20% censoring when the arms are equal in size.
    let r = (-1.8 + (1.8f64 * 1.8 + 4.0 * 1.6 * 0.8).sqrt()) / 3.2;
    let hazard = 1e-3;
    let cfg = exponential_two_arm_config(40_000, 2f64.ln(), hazard, r * hazard);
    let mut within = 0;
    let mut censored_frac = 0.0;
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let sample = synth::simulate_pair(&cfg, 0, seed).unwrap();
        let (t, d): (Vec<f64>, Vec<bool>) = sample.iter().map(|p| p.observed(0)).unzip();
        let z: Vec<bool> = sample.iter().map(|p| p.treated).collect();
        censored_frac += d.iter().filter(|&&e| !e).count() as f64 / d.len() as f64 / 50.0;
        let fit = cox_fit(&t, &d, &z, None);
        let err = (fit.beta - 2f64.ln()).abs();
        worst = worst.max(err);
        within += usize::from(err <= 0.05);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut compared = 0;
    let mut tiny_worst: f64 = 0.0;
    for _ in 0..2000 {
        let n = rng.random_range(2..=8usize);
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(1..=4u32) as f64).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        let z: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        if !z.iter().any(|&x| x) || z.iter().all(|&x| x) || !d.iter().any(|&x| x) {
            continue;
        }
        let brute = golden_max(|b| breslow_loglik(b, &t, &d, &z), -30.0, 30.0);
        let ll = |b: f64| breslow_loglik(b, &t, &d, &z);
        if !(ll(brute) > ll(brute - 2.0) + 1e-6 && ll(brute) > ll(brute + 2.0) + 1e-6) {
            // monotone or flat likelihood: no finite maximizer to compare against
            continue;
        }
        let fit = cox_fit(&t, &d, &z, None);
        tiny_worst = tiny_worst.max((fit.beta - brute).abs());
        compared += 1;
    }
    let pass = within >= 45 && tiny_worst <= 1e-6 && compared > 500;
    report(
        5,
        "Cox recovery",
        pass,
        &format!(
            "{within}/50 seeds within 0.05 of ln 2 (worst {worst:.4}, censored {:.1}%); tiny cohorts: {compared} compared, max |diff| {tiny_worst:.2e}",
            100.0 * censored_frac
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 6

fn confounded_config(n: usize) -> ScenarioConfig {
    ScenarioConfig::from_toml(&format!(
        r#"
n_dense = 0
n_binary = 3
binary_prevalence = 0.4
n_noise_codes = 0
baseline_hazard = 0.001
oracle_size = 0
[censoring]
rate = 0.0003
horizon = 1825
[[pairs]]
drug_a = "CA"
drug_b = "CB"
n_patients = {n}
treatment_intercept = -0.8
gamma = [1.5, 1.2, -1.0]
[[pairs.outcomes]]
code = "E1"
log_hr = 0.3
eta = [1.2, 0.9, -0.8]
"#
    ))
    .unwrap()
}

fn cohort_from_sample(sample: &[SimPatient], outcome: usize, columns: &[usize]) -> Cohort {
    let rows: Vec<CohortRow> = sample
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (time, event) = p.observed(outcome);
            CohortRow {
                patient_id: format!("p{i}"),
                arm: if p.treated { Arm::DrugA } else { Arm::DrugB },
                features: columns.iter().map(|&j| p.covariates[j]).collect(),
                time,
                event,
            }
        })
        .collect();
    let n_a = rows.iter().filter(|r| r.arm == Arm::DrugA).count();
    Cohort { entry: EntryKey::new("A", "B", "E1"), n_b: rows.len() - n_a, n_a, rows, n_same_day_excluded: 0 }
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

#[test]
fn criterion_06_confounding_correction() {
    let cfg = confounded_config(20_000);
    let truth = synth::oracle(&cfg, 0, 0, 1_000_000, None, 606).unwrap();
    let (marginal, overlap_truth) = (truth.marginal_log_hr, truth.overlap_log_hr);
    let mut unadjusted = Vec::new();
    let mut overlap = Vec::new();
    let mut standard = Vec::new();
    for seed in 0..50u64 {
        let sample = synth::simulate_pair(&cfg, 0, 1000 + seed).unwrap();
        let cohort = cohort_from_sample(&sample, 0, &[0, 1, 2]);
        let (t, d, z) = (cohort.times(), cohort.events(), cohort.treatment());
        let ps = fit_logistic(&cohort.feature_matrix(), &z, 1e-4).unwrap();
        assert!(ps.converged);
        unadjusted.push(cox_fit(&t, &d, &z, None).beta);
        let wo = weights(&ps.scores, &z, WeightMode::Overlap, 100.0);
        overlap.push(cox_fit(&t, &d, &z, Some(&wo.values)).beta);
        let ws = weights(&ps.scores, &z, WeightMode::Standard, 100.0);
        standard.push(cox_fit(&t, &d, &z, Some(&ws.values)).beta);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let unadj_bias = mean(&unadjusted) - marginal;
    let overlap_ok = overlap.iter().filter(|b| (*b - overlap_truth).abs() <= 0.10).count();
    let overlap_ok_marginal = overlap.iter().filter(|b| (*b - marginal).abs() <= 0.10).count();
    let unadj_fail = unadjusted.iter().filter(|b| (*b - marginal).abs() > 0.10).count();
    let (v_overlap, v_standard) = (variance(&overlap), variance(&standard));
    let pass = unadj_bias.abs() >= 0.26 && overlap_ok >= 45 && unadj_fail >= 45 && v_overlap <= v_standard;
    report(
        6,
        "confounding correction",
        pass,
        &format!(
            "truth marginal {marginal:.3} overlap-pop {overlap_truth:.3}; unadjusted mean {:.3} (bias {unadj_bias:.3}, {unadj_fail}/50 outside 0.10); \
             overlap mean {:.3}, {overlap_ok}/50 within 0.10 ({overlap_ok_marginal}/50 vs whole-population truth); \
             standard IPW mean {:.3}; var overlap {v_overlap:.2e} vs standard {v_standard:.2e}",
            mean(&unadjusted),
            mean(&overlap),
            mean(&standard)
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 7

fn balance_gap(x: &DMatrix<f64>, z: &[bool], w: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..x.ncols() {
        let (mut sa, mut wa, mut sb, mut wb) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..x.nrows() {
            if z[i] {
                sa += w[i] * x[(i, j)];
                wa += w[i];
            } else {
                sb += w[i] * x[(i, j)];
                wb += w[i];
            }
        }
        worst = worst.max((sa / wa - sb / wb).abs());
    }
    worst
}

fn demo_scenario() -> ScenarioConfig {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/scenario.toml")).unwrap();
    ScenarioConfig::from_toml(&text).unwrap()
}

#[test]
fn criterion_07_overlap_exact_balance() {
    use refbench::cohort::{build_cohort, CohortBuild, CohortOptions, DenseFeatures, FeatureSource, PatientDb};

    let mut cohorts: Vec<(String, Cohort)> = Vec::new();
    // Cohorts built from generated claims, both feature sources.
    let mut demo = demo_scenario();
    demo.oracle_size = 0;
    let claims = synth::gen_claims(&demo, 7).unwrap();
    let dense = DenseFeatures::new(claims.dense.iter().map(|r| (r.patient_id.clone(), r.values.clone()))).unwrap();
    let db = PatientDb::with_derived_vocabulary(claims.patients).unwrap();
    for pc in &demo.pairs {
        for o in &pc.outcomes {
            for features in [FeatureSource::Counts, FeatureSource::CountsAndDense] {
                let opts = CohortOptions { features, ..Default::default() };
                let key = EntryKey::new(&pc.drug_a, &pc.drug_b, &o.code);
                if let CohortBuild::Built(c) = build_cohort(&db, &key, 7, &opts, Some(&dense)).unwrap() {
                    cohorts.push((format!("demo {} {:?}", o.code, features), c));
                }
            }
        }
    }
    // Direct covariate cohorts from the other scenarios.
    let conf = confounded_config(20_000);
    cohorts.push(("confounded".into(), cohort_from_sample(&synth::simulate_pair(&conf, 0, 7).unwrap(), 0, &[0, 1, 2])));
    let dr = double_robust_config(20_000);
    cohorts.push(("double-robust".into(), cohort_from_sample(&synth::simulate_pair(&dr, 0, 7).unwrap(), 0, &[0, 1])));

    let mut worst: f64 = 0.0;
    let mut converged = 0;
    for (name, c) in &cohorts {
        let x = c.feature_matrix();
        let z = c.treatment();
        let ps = fit_logistic(&x, &z, 1e-4).unwrap();
        if !ps.converged {
            println!("  {name}: propensity fit did not converge, skipped");
            continue;
        }
        converged += 1;
        let w = weights(&ps.scores, &z, WeightMode::Overlap, f64::INFINITY);
        worst = worst.max(balance_gap(&x, &z, &w.values));
    }
    let pass = worst <= 1e-6 && converged == cohorts.len();
    report(
        7,
        "overlap exact balance",
        pass,
        &format!("{converged}/{} cohorts converged, max weighted mean gap {worst:.2e}", cohorts.len()),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn criterion_08_rmst() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let t: Vec<f64> = (0..50_000).map(|_| -(1.0 - rng.random::<f64>()).ln() / 0.1).collect();
    let d = vec![true; t.len()];
    let estimate = km_curve(&t, &d, None).rmst(10.0).unwrap();
    let truth = (1.0 - (-1f64).exp()) / 0.1;
    let rel = (estimate - truth).abs() / truth;

    let fixture = km_curve(&[1.0, 2.0, 3.0, 4.0], &[true; 4], None).rmst(4.0).unwrap();
    // Same step function with redundant knots inserted.
    let refined = SurvivalCurve {
        knots: vec![(0.0, 1.0), (0.5, 1.0), (1.0, 0.75), (1.5, 0.75), (2.0, 0.5), (2.2, 0.5), (3.0, 0.25), (3.7, 0.25), (4.0, 0.0)],
    }
    .rmst(4.0)
    .unwrap();
    let pass = rel <= 0.01 && fixture == 2.5 && refined == 2.5;
    report(
        8,
        "KM RMST",
        pass,
        &format!("exponential: {estimate:.4} vs {truth:.4} (rel err {rel:.2e}); fixture {fixture}; refined fixture {refined}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 9

fn double_robust_config(n: usize) -> ScenarioConfig {
    ScenarioConfig::from_toml(&format!(
        r#"
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
n_patients = {n}
gamma = [0.8, -0.6]
[[pairs.outcomes]]
code = "E1"
log_hr = -0.5
eta = [0.7, 0.5]
"#
    ))
    .unwrap()
}

fn design(sample: &[SimPatient], columns: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(sample.len(), columns.len(), |i, j| sample[i].covariates[columns[j]])
}

#[test]
fn criterion_09_double_robustness() {
    let cfg = double_robust_config(50_000);
    let mut lines = Vec::new();
    let mut pass = true;
    for seed in [901u64, 902, 903] {
        let sample = synth::simulate_pair(&cfg, 0, seed).unwrap();
        let (t, d): (Vec<f64>, Vec<bool>) = sample.iter().map(|p| p.observed(0)).unzip();
        let z: Vec<bool> = sample.iter().map(|p| p.treated).collect();
        let tau = restriction_horizon(&t, &d, 0.8).unwrap();
        let truth = synth::oracle(&cfg, 0, 0, 1_000_000, Some(tau), seed).unwrap().rmst_difference.unwrap();

        let full = design(&sample, &[0, 1]);
        let partial = design(&sample, &[1]);
        let ps_right = fit_logistic(&full, &z, 1e-4).unwrap().scores;
        let ps_wrong = fit_logistic(&partial, &z, 1e-4).unwrap().scores;
        let outcome = |x: &DMatrix<f64>| {
            let m = aft_fit(x, &z, &t, &d).unwrap();
            assert!(m.converged);
            let rows: Vec<Vec<f64>> = (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect();
            let m1: Vec<f64> = rows.iter().map(|r| m.rmst(tau, true, r)).collect();
            let m0: Vec<f64> = rows.iter().map(|r| m.rmst(tau, false, r)).collect();
            let plugin = m1.iter().zip(&m0).map(|(a, b)| a - b).sum::<f64>() / m1.len() as f64;
            (m1, m0, plugin)
        };
        let (m1_right, m0_right, plugin_right) = outcome(&full);
        let (m1_wrong, m0_wrong, plugin_wrong) = outcome(&partial);
        let a = rmst_aipw(&t, &d, &z, &ps_right, &m1_wrong, &m0_wrong, tau).unwrap().estimate;
        let b = rmst_aipw(&t, &d, &z, &ps_wrong, &m1_right, &m0_right, tau).unwrap().estimate;
        let rel_a = (a - truth).abs() / truth.abs();
        let rel_b = (b - truth).abs() / truth.abs();
        pass &= rel_a <= 0.05 && rel_b <= 0.05;
        lines.push(format!(
            "seed {seed}: tau {tau}, truth {truth:.2}; (a) {a:.2} rel {rel_a:.3} [plug-in wrong model {plugin_wrong:.2}]; \
             (b) {b:.2} rel {rel_b:.3} [plug-in right model {plugin_right:.2}]"
        ));
    }
    report(9, "AIPW double robustness", pass, &lines.join("; "));
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 10

fn balanced_refset(n_strong: usize, n_weak: usize, rng: &mut ChaCha8Rng) -> ReferenceSet {
    let entries = (0..n_strong + n_weak)
        .map(|i| {
            let strong = i < n_strong;
            ReferenceEntry {
                key: EntryKey::new(format!("A{i:04}"), format!("B{i:04}"), "O"),
                label: if strong { Label::Strong } else { Label::Weak },
                direction: match (strong, rng.random_bool(0.5)) {
                    (false, _) => Direction::None,
                    (true, true) => Direction::AHigher,
                    (true, false) => Direction::BHigher,
                },
                pooled_or: None,
                p_value: None,
                q_value: None,
            }
        })
        .collect();
    ReferenceSet { provenance: None, entries }
}

fn estimate(point: f64) -> EffectEstimate {
    EffectEstimate {
        method_id: MethodId::UnadjustedCox,
        scale: Scale::LogHazardRatio,
        point,
        std_error: 0.1,
        model_std_error: None,
        converged: true,
        n_used: 1000,
        note: None,
    }
}

#[test]
fn criterion_10_metrics_baseline_and_fixture() {
    let mut precision = Vec::new();
    let mut max_recall = Vec::new();
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let refset = balanced_refset(500, 500, &mut rng);
        let estimates: HashMap<EntryKey, EffectEstimate> = refset
            .entries
            .iter()
            .map(|e| {
                let magnitude = rng.random::<f64>() * 1.5;
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                (e.key.clone(), estimate(sign * magnitude))
            })
            .collect();
        let scores = MethodScores::collect(MethodId::UnadjustedCox, &refset, &estimates);
        for threshold in [2.0, 1.5, 1.25] {
            precision.push(score_at_threshold(&scores, &refset, threshold).unwrap().precision.unwrap());
        }
        let curve = pr_curve(&scores, &refset).unwrap();
        max_recall.push(curve.iter().map(|r| r.recall.unwrap()).fold(0.0, f64::max));
    }
    let mean_precision = precision.iter().sum::<f64>() / precision.len() as f64;
    let mean_max_recall = max_recall.iter().sum::<f64>() / max_recall.len() as f64;
    let worst_seed_recall = max_recall.iter().copied().fold(0.0, f64::max);

    // Two strong entries (one right, one wrong direction), two weak (one called strong).
    let keys: Vec<EntryKey> = (0..4).map(|i| EntryKey::new(format!("A{i}"), format!("B{i}"), "O")).collect();
    let entry = |i: usize, label, direction| ReferenceEntry {
        key: keys[i].clone(),
        label,
        direction,
        pooled_or: None,
        p_value: None,
        q_value: None,
    };
    let fixture = ReferenceSet {
        provenance: None,
        entries: vec![
            entry(0, Label::Strong, Direction::AHigher),
            entry(1, Label::Strong, Direction::AHigher),
            entry(2, Label::Weak, Direction::None),
            entry(3, Label::Weak, Direction::None),
        ],
    };
    let prediction = |i: usize, label, direction| Prediction {
        entry: keys[i].clone(),
        method_id: MethodId::UnadjustedCox,
        label,
        direction,
        magnitude: Some(1.0),
    };
    let predictions = vec![
        prediction(0, PredictedLabel::Strong, Direction::AHigher),
        prediction(1, PredictedLabel::Strong, Direction::BHigher),
        prediction(2, PredictedLabel::Strong, Direction::AHigher),
        prediction(3, PredictedLabel::Weak, Direction::AHigher),
    ];
    let row = score(&predictions, &fixture, 1.25).unwrap();
    let fixture_ok = row.precision == Some(1.0 / 3.0) && row.recall == Some(0.5);

    let pass = (mean_precision - 0.25).abs() <= 0.03 && mean_max_recall <= 0.53 && fixture_ok;
    report(
        10,
        "metrics baseline and fixture",
        pass,
        &format!(
            "random guessing over 50 seeds: mean precision {mean_precision:.4}, mean max recall {mean_max_recall:.4} (largest single seed {worst_seed_recall:.4}); fixture precision {:?} recall {:?}",
            row.precision, row.recall
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 11

fn run_cli(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_refbench")).args(args).status().unwrap();
    assert!(status.success(), "refbench {args:?} failed with {status}");
}

fn pipeline(dir: &Path, jobs: &str) {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let sim = dir.join("sim");
    run_cli(&["simulate", "--scenario", &s(&data.join("scenario.toml")), "--seed", "11", "--out-dir", &s(&sim), "--oracle-size", "20000"]);
    run_cli(&[
        "build-refset",
        "--dump",
        &s(&sim.join("trials.jsonl")),
        "--drug-dict",
        &s(&sim.join("drug_dictionary.tsv")),
        "--outcome-dict",
        &s(&sim.join("outcome_dictionary.tsv")),
        "--out",
        &s(&dir.join("refset.jsonl")),
        "--report",
        &s(&dir.join("build_report.tsv")),
    ]);
    let eval = dir.join("eval");
    run_cli(&[
        "evaluate",
        "--refset",
        &s(&dir.join("refset.jsonl")),
        "--db",
        &s(&sim.join("patients.jsonl")),
        "--vocab",
        &s(&sim.join("vocab.tsv")),
        "--dense",
        &s(&sim.join("dense.jsonl")),
        "--config",
        &s(&data.join("run.toml")),
        "--out-dir",
        &s(&eval),
        "--ablation-standard-ipw",
        "--jobs",
        jobs,
    ]);
    run_cli(&[
        "report",
        "--estimates",
        &s(&eval.join("estimates.jsonl")),
        "--refset",
        &s(&dir.join("refset.jsonl")),
        "--out-dir",
        &s(&dir.join("report")),
        "--rmst-thresholds",
        "30,60",
    ]);
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
    let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(root, &p, out);
        } else {
            out.push((p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
        }
    }
}

#[test]
fn criterion_11_end_to_end_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), "1");
    pipeline(b.path(), "4");
    let (mut fa, mut fb) = (Vec::new(), Vec::new());
    collect_files(a.path(), a.path(), &mut fa);
    collect_files(b.path(), b.path(), &mut fb);
    let names: Vec<&String> = fa.iter().map(|(n, _)| n).collect();
    let differing: Vec<&String> = fa.iter().zip(&fb).filter(|(x, y)| x != y).map(|(x, _)| &x.0).collect();
    let pass = fa.len() == fb.len() && !fa.is_empty() && differing.is_empty();
    report(
        11,
        "end-to-end determinism",
        pass,
        &format!("{} files compared (jobs 1 vs 4), {} differ {:?}", names.len(), differing.len(), differing),
    );
    assert!(pass);
}
