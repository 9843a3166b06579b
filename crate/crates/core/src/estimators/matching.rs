//! Greedy 1:1 nearest-neighbour matching on the logit of the propensity score.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::logit;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct MatchedPair {
    /// Row index in the drug A arm.
    pub treated: usize,
    /// Row index in the drug B arm.
    pub control: usize,
}

/// Match without replacement within `caliper_sd` standard deviations of the
/// pooled logit score.
///
/// The arm being matched from (the focal arm) is the smaller one; on equal
/// sizes it is the arm holding row 0. Focal rows are visited in an order
/// shuffled by `seed`, so the pairing does not depend on which drug is called
/// A and which B. Fails when no pair can be formed.
pub fn match_pairs(scores: &[f64], treated: &[bool], caliper_sd: f64, seed: u64) -> Result<Vec<MatchedPair>> {
    assert_eq!(scores.len(), treated.len());
    let logits: Vec<f64> = scores.iter().map(|&p| logit(p)).collect();
    let n = logits.len();
    if n == 0 {
        return Err(Error::Invalid("no rows to match".into()));
    }
    let mean = logits.iter().sum::<f64>() / n as f64;
    let var = logits.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
    let caliper = caliper_sd * var.sqrt();

    let n_a = treated.iter().filter(|&&t| t).count();
    let n_b = n - n_a;
    let focal_is_a = match n_a.cmp(&n_b) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => treated[0],
    };

    let mut focal: Vec<usize> = (0..n).filter(|&i| treated[i] == focal_is_a).collect();
    let mut pool: Vec<usize> = (0..n).filter(|&i| treated[i] != focal_is_a).collect();
    pool.sort_by(|&i, &j| logits[i].total_cmp(&logits[j]).then(i.cmp(&j)));
    let pool_logits: Vec<f64> = pool.iter().map(|&i| logits[i]).collect();
    let mut available: BTreeSet<usize> = (0..pool.len()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    focal.shuffle(&mut rng);

    let mut pairs = Vec::with_capacity(focal.len());
    for f in focal {
        let x = logits[f];
        let at = pool_logits.partition_point(|&l| l < x);
        // within a run of tied logits, take the lowest row index
        let above = available.range(at..).next().copied();
        let below = available.range(..at).next_back().map(|b| {
            let start = pool_logits.partition_point(|&l| l < pool_logits[*b]);
            *available.range(start..=*b).next().expect("b is available")
        });
        let best = match (below, above) {
            (Some(b), Some(a)) => {
                let (db, da) = (x - pool_logits[b], pool_logits[a] - x);
                if db < da || (db == da && pool[b] < pool[a]) {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => break,
        };
        if (pool_logits[best] - x).abs() <= caliper {
            available.remove(&best);
            let other = pool[best];
            let (t, c) = if focal_is_a { (f, other) } else { (other, f) };
            pairs.push(MatchedPair { treated: t, control: c });
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoMatches);
    }
    pairs.sort();
    Ok(pairs)
}
