//! Exact inference on 2x2 tables under fixed margins.
//!
//! With both arm sizes and the total event count fixed, the event count in
//! arm A follows Fisher's noncentral hypergeometric distribution with the
//! odds ratio `psi` as noncentrality. One-sided tests at `psi = 0.8` and
//! `psi = 1.25` are combined into a "weak effect" p-value (both boundaries
//! rejected) and a "strong effect" p-value (either boundary rejected).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower edge of the weak-effect odds-ratio band.
pub const WEAK_LOWER: f64 = 0.8;
/// Upper edge of the weak-effect odds-ratio band.
pub const WEAK_UPPER: f64 = 1.25;

/// Margins of a 2x2 table: arm sizes, total events, and events observed in arm A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TableMargins {
    pub n1: u64,
    pub n2: u64,
    pub m: u64,
    pub k: u64,
}

impl TableMargins {
    pub fn new(n1: u64, n2: u64, m: u64, k: u64) -> Result<Self> {
        let (lo, hi) = support(n1, n2, m)?;
        if k < lo || k > hi {
            return Err(Error::OutsideSupport { k, lo, hi });
        }
        Ok(Self { n1, n2, m, k })
    }

    /// Build from cell counts: `a` events of `n1` in arm A, `b` of `n2` in arm B.
    pub fn from_cells(a: u64, n1: u64, b: u64, n2: u64) -> Result<Self> {
        if a > n1 || b > n2 {
            return Err(Error::Invalid(format!(
                "events exceed participants: a={a} n1={n1} b={b} n2={n2}"
            )));
        }
        Self::new(n1, n2, a + b, a)
    }

    pub fn support(&self) -> (u64, u64) {
        (self.m.saturating_sub(self.n2), self.m.min(self.n1))
    }
}

fn support(n1: u64, n2: u64, m: u64) -> Result<(u64, u64)> {
    if m > n1 + n2 {
        return Err(Error::Invalid(format!(
            "total events {m} exceed participants {}",
            n1 + n2
        )));
    }
    Ok((m.saturating_sub(n2), m.min(n1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OddsRatioNull {
    pub psi: f64,
    pub tail: Tail,
}

impl OddsRatioNull {
    pub fn new(psi: f64, tail: Tail) -> Result<Self> {
        if !(psi > 0.0 && psi.is_finite()) {
            return Err(Error::Invalid(format!("null odds ratio must be positive, got {psi}")));
        }
        Ok(Self { psi, tail })
    }
}

/// How the two one-sided tests are combined into the strong-effect p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrongCombination {
    /// Half the smaller one-sided p-value.
    #[default]
    HalfMin,
    /// Twice the smaller one-sided p-value, capped at 1. Sensitivity analysis only.
    TwiceMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Weak,
    Strong,
}

/// Odds-ratio band and strong-p combination rule used for classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyParams {
    pub weak_lower: f64,
    pub weak_upper: f64,
    pub combination: StrongCombination,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        Self {
            weak_lower: WEAK_LOWER,
            weak_upper: WEAK_UPPER,
            combination: StrongCombination::HalfMin,
        }
    }
}

impl ClassifyParams {
    /// Family of a pooled odds ratio. The weak band is the open interval,
    /// so values exactly on a boundary are strong candidates.
    pub fn family_of(&self, odds_ratio: f64) -> Family {
        if odds_ratio > self.weak_lower && odds_ratio < self.weak_upper {
            Family::Weak
        } else {
            Family::Strong
        }
    }
}

/// Sample odds ratio `a(n2-b) / ((n1-a) b)`.
///
/// Conventions: `0` when `a = 0 < b`; `+inf` when the denominator vanishes
/// with `a > 0`; `1` for the all-zero-events table.
pub fn odds_ratio(a: u64, n1: u64, b: u64, n2: u64) -> f64 {
    if a == 0 && b == 0 {
        return 1.0;
    }
    let num = a as f64 * (n2 - b) as f64;
    let den = (n1 - a) as f64 * b as f64;
    if den == 0.0 {
        if num == 0.0 {
            // a = n1 and b = n2: every participant had the event.
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// Fisher noncentral hypergeometric distribution over the support of fixed margins.
///
/// Unnormalized log-weights are filled by the ratio recurrence
/// `w(k+1)/w(k) = psi (n1-k)(m-k) / ((k+1)(n2-m+k+1))`, anchored at the mode,
/// so arm sizes in the tens of thousands stay in range.
#[derive(Debug, Clone)]
pub struct NoncentralHypergeometric {
    lo: u64,
    hi: u64,
    log_w: Vec<f64>,
    log_norm: f64,
    // lower[i] = P(X <= lo+i), upper[i] = P(X >= lo+i)
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl NoncentralHypergeometric {
    pub fn new(n1: u64, n2: u64, m: u64, psi: f64) -> Result<Self> {
        if !(psi > 0.0 && psi.is_finite()) {
            return Err(Error::Invalid(format!("psi must be positive, got {psi}")));
        }
        let (lo, hi) = support(n1, n2, m)?;
        let len = (hi - lo + 1) as usize;
        let ln_psi = psi.ln();
        let log_ratio = |k: u64| -> f64 {
            ln_psi + ((n1 - k) as f64).ln() + ((m - k) as f64).ln()
                - ((k + 1) as f64).ln()
                - ((n2 + k + 1 - m) as f64).ln()
        };

        // The step ratio is decreasing in k; the mode is the first k whose
        // ratio to the next value drops below 1.
        let (mut a, mut b) = (lo, hi);
        while a < b {
            let mid = a + (b - a) / 2;
            if log_ratio(mid) < 0.0 {
                b = mid;
            } else {
                a = mid + 1;
            }
        }
        let mode = a;

        let mut log_w = vec![0.0; len];
        let at = |k: u64| (k - lo) as usize;
        for k in mode..hi {
            log_w[at(k + 1)] = log_w[at(k)] + log_ratio(k);
        }
        for k in (lo..mode).rev() {
            log_w[at(k)] = log_w[at(k + 1)] - log_ratio(k);
        }

        let w: Vec<f64> = log_w.iter().map(|v| v.exp()).collect();
        let total: f64 = w.iter().sum();
        let log_norm = total.ln();

        let mut lower = vec![0.0; len];
        let mut acc = 0.0;
        for i in 0..len {
            acc += w[i];
            lower[i] = (acc / total).min(1.0);
        }
        let mut upper = vec![0.0; len];
        acc = 0.0;
        for i in (0..len).rev() {
            acc += w[i];
            upper[i] = (acc / total).min(1.0);
        }

        Ok(Self {
            lo,
            hi,
            log_w,
            log_norm,
            lower,
            upper,
        })
    }

    pub fn support(&self) -> (u64, u64) {
        (self.lo, self.hi)
    }

    fn index(&self, k: u64) -> Result<usize> {
        if k < self.lo || k > self.hi {
            return Err(Error::OutsideSupport {
                k,
                lo: self.lo,
                hi: self.hi,
            });
        }
        Ok((k - self.lo) as usize)
    }

    pub fn log_pmf(&self, k: u64) -> Result<f64> {
        Ok(self.log_w[self.index(k)?] - self.log_norm)
    }

    /// `P(X <= k)`.
    pub fn lower_tail(&self, k: u64) -> Result<f64> {
        Ok(self.lower[self.index(k)?])
    }

    /// `P(X >= k)`.
    pub fn upper_tail(&self, k: u64) -> Result<f64> {
        Ok(self.upper[self.index(k)?])
    }

    pub fn tail(&self, k: u64, tail: Tail) -> Result<f64> {
        match tail {
            Tail::Lower => self.lower_tail(k),
            Tail::Upper => self.upper_tail(k),
        }
    }
}

pub fn nchg_log_pmf(k: u64, n1: u64, n2: u64, m: u64, psi: f64) -> Result<f64> {
    NoncentralHypergeometric::new(n1, n2, m, psi)?.log_pmf(k)
}

pub fn fisher_one_sided_p(margins: &TableMargins, null: OddsRatioNull) -> Result<f64> {
    NoncentralHypergeometric::new(margins.n1, margins.n2, margins.m, null.psi)?
        .tail(margins.k, null.tail)
}

/// The four one-sided tails needed by the weak/strong p-values, evaluated
/// once per margin set so scans over the support are linear.
struct BandTests {
    at_lower: NoncentralHypergeometric,
    at_upper: NoncentralHypergeometric,
}

impl BandTests {
    fn new(n1: u64, n2: u64, m: u64, params: &ClassifyParams) -> Result<Self> {
        Ok(Self {
            at_lower: NoncentralHypergeometric::new(n1, n2, m, params.weak_lower)?,
            at_upper: NoncentralHypergeometric::new(n1, n2, m, params.weak_upper)?,
        })
    }

    fn weak(&self, k: u64) -> Result<f64> {
        // Reject "OR >= upper" with the lower tail and "OR <= lower" with the upper tail.
        Ok(self
            .at_upper
            .lower_tail(k)?
            .max(self.at_lower.upper_tail(k)?))
    }

    fn strong(&self, k: u64, combination: StrongCombination) -> Result<f64> {
        let min = self
            .at_lower
            .lower_tail(k)?
            .min(self.at_upper.upper_tail(k)?);
        let p = match combination {
            StrongCombination::HalfMin => 0.5 * min,
            StrongCombination::TwiceMin => (2.0 * min).min(1.0),
        };
        Ok(p.max(f64::MIN_POSITIVE))
    }

    fn family(&self, k: u64, family: Family, params: &ClassifyParams) -> Result<f64> {
        match family {
            Family::Weak => self.weak(k),
            Family::Strong => self.strong(k, params.combination),
        }
    }
}

pub fn p_weak(margins: &TableMargins) -> Result<f64> {
    p_weak_with(margins, &ClassifyParams::default())
}

pub fn p_weak_with(margins: &TableMargins, params: &ClassifyParams) -> Result<f64> {
    BandTests::new(margins.n1, margins.n2, margins.m, params)?.weak(margins.k)
}

pub fn p_strong(margins: &TableMargins) -> Result<f64> {
    p_strong_with(margins, &ClassifyParams::default())
}

pub fn p_strong_with(margins: &TableMargins, params: &ClassifyParams) -> Result<f64> {
    BandTests::new(margins.n1, margins.n2, margins.m, params)?.strong(margins.k, params.combination)
}

pub fn p_family(margins: &TableMargins, family: Family, params: &ClassifyParams) -> Result<f64> {
    match family {
        Family::Weak => p_weak_with(margins, params),
        Family::Strong => p_strong_with(margins, params),
    }
}

/// Smallest p-value any cell value could produce for these margins.
pub fn min_achievable_p(n1: u64, n2: u64, m: u64, family: Family) -> Result<f64> {
    min_achievable_p_with(n1, n2, m, family, &ClassifyParams::default())
}

pub fn min_achievable_p_with(
    n1: u64,
    n2: u64,
    m: u64,
    family: Family,
    params: &ClassifyParams,
) -> Result<f64> {
    let tests = BandTests::new(n1, n2, m, params)?;
    let (lo, hi) = tests.at_lower.support();
    let mut best = 1.0_f64;
    for k in lo..=hi {
        best = best.min(tests.family(k, family, params)?);
    }
    Ok(best)
}

/// Benjamini-Hochberg step-up procedure. Returns rejected indices in ascending order.
pub fn bh_reject(p_values: &[f64], alpha: f64) -> Vec<usize> {
    let m = p_values.len();
    if m == 0 {
        return Vec::new();
    }
    let order = sorted_order(p_values);
    let mut cutoff = 0;
    for (rank0, &i) in order.iter().enumerate() {
        let rank = rank0 + 1;
        if p_values[i] <= rank as f64 / m as f64 * alpha {
            cutoff = rank;
        }
    }
    let mut rejected: Vec<usize> = order[..cutoff].to_vec();
    rejected.sort_unstable();
    rejected
}

/// Benjamini-Hochberg adjusted p-values (q-values), aligned with the input.
pub fn bh_adjust(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let order = sorted_order(p_values);
    let mut q = vec![0.0; m];
    let mut running = 1.0_f64;
    for (rank0, &i) in order.iter().enumerate().rev() {
        let scaled = p_values[i] * m as f64 / (rank0 + 1) as f64;
        running = running.min(scaled).min(1.0);
        q[i] = running.max(p_values[i]);
    }
    q
}

fn sorted_order(p: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn odds_ratio_examples() {
        assert_eq!(odds_ratio(10, 100, 10, 100), 1.0);
        assert!(close(odds_ratio(20, 100, 10, 100), 2.25, 1e-15));
        assert_eq!(odds_ratio(0, 100, 0, 100), 1.0);
        assert_eq!(odds_ratio(0, 100, 5, 100), 0.0);
        assert_eq!(odds_ratio(5, 100, 0, 100), f64::INFINITY);
        assert_eq!(odds_ratio(100, 100, 5, 100), f64::INFINITY);
    }

    #[test]
    fn pmf_small_tables() {
        let d = NoncentralHypergeometric::new(2, 2, 2, 1.0).unwrap();
        let got: Vec<f64> = (0..=2).map(|k| d.log_pmf(k).unwrap().exp()).collect();
        for (g, e) in got.iter().zip([1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0]) {
            assert!(close(*g, e, 1e-15), "{got:?}");
        }
        let d = NoncentralHypergeometric::new(2, 2, 2, 2.0).unwrap();
        let got: Vec<f64> = (0..=2).map(|k| d.log_pmf(k).unwrap().exp()).collect();
        for (g, e) in got.iter().zip([1.0 / 13.0, 8.0 / 13.0, 4.0 / 13.0]) {
            assert!(close(*g, e, 1e-15), "{got:?}");
        }
    }

    #[test]
    fn k_outside_support_is_an_error() {
        assert!(matches!(
            nchg_log_pmf(3, 2, 2, 2, 1.0),
            Err(Error::OutsideSupport { .. })
        ));
        assert!(TableMargins::new(5, 5, 8, 2).is_err());
    }

    #[test]
    fn one_sided_examples() {
        let t = TableMargins::new(2, 2, 2, 2).unwrap();
        let p = fisher_one_sided_p(&t, OddsRatioNull::new(1.0, Tail::Upper).unwrap()).unwrap();
        assert!(close(p, 1.0 / 6.0, 1e-15));
        let p = fisher_one_sided_p(&t, OddsRatioNull::new(2.0, Tail::Upper).unwrap()).unwrap();
        assert!(close(p, 4.0 / 13.0, 1e-15));
        let empty = TableMargins::new(40, 30, 0, 0).unwrap();
        for psi in [0.5, 1.0, 3.0] {
            for tail in [Tail::Lower, Tail::Upper] {
                let p = fisher_one_sided_p(&empty, OddsRatioNull::new(psi, tail).unwrap()).unwrap();
                assert_eq!(p, 1.0);
            }
        }
    }

    #[test]
    fn composite_p_values_on_empty_table() {
        let empty = TableMargins::from_cells(0, 100, 0, 100).unwrap();
        assert_eq!(p_weak(&empty).unwrap(), 1.0);
        assert_eq!(p_strong(&empty).unwrap(), 0.5);
        assert_eq!(min_achievable_p(100, 100, 0, Family::Weak).unwrap(), 1.0);
    }

    #[test]
    fn min_achievable_single_event() {
        let p = min_achievable_p(100, 100, 1, Family::Strong).unwrap();
        // 0.5 * 100/180 = 0.5 * 125/225 = 5/18
        assert!(close(p, 5.0 / 18.0, 1e-14), "{p}");
    }

    #[test]
    fn twice_min_is_four_times_half_min_when_unclipped() {
        let t = TableMargins::from_cells(40, 100, 10, 100).unwrap();
        let half = p_strong(&t).unwrap();
        let params = ClassifyParams {
            combination: StrongCombination::TwiceMin,
            ..Default::default()
        };
        let twice = p_strong_with(&t, &params).unwrap();
        assert!(close(twice, 4.0 * half, 1e-18));
    }

    #[test]
    fn huge_arms_do_not_overflow() {
        let t = TableMargins::from_cells(900, 40_000, 300, 40_000).unwrap();
        let p = p_strong(&t).unwrap();
        assert!(p > 0.0 && p < 1e-20, "{p}");
        let d = NoncentralHypergeometric::new(40_000, 40_000, 1200, 1.25).unwrap();
        let (lo, hi) = d.support();
        let total: f64 = (lo..=hi).map(|k| d.log_pmf(k).unwrap().exp()).sum();
        assert!(close(total, 1.0, 1e-12));
    }

    #[test]
    fn family_boundaries_are_strong() {
        let params = ClassifyParams::default();
        assert_eq!(params.family_of(1.0), Family::Weak);
        assert_eq!(params.family_of(0.8), Family::Strong);
        assert_eq!(params.family_of(1.25), Family::Strong);
        assert_eq!(params.family_of(2.25), Family::Strong);
        assert_eq!(params.family_of(f64::INFINITY), Family::Strong);
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh_reject(&[0.01, 0.02, 0.03, 0.04, 0.05], 0.05), vec![0, 1, 2, 3, 4]);
        assert!(bh_reject(&[0.5], 0.05).is_empty());
        assert!(bh_reject(&[], 0.05).is_empty());
        assert_eq!(bh_reject(&[0.04, 0.2, 0.03, 0.001], 0.05), vec![3]);
        // step-up: 0.035 passes at rank 3, carrying 0.03 (which fails at rank 2)
        assert_eq!(bh_reject(&[0.03, 0.001, 0.5, 0.035], 0.05), vec![0, 1, 3]);
    }

    #[test]
    fn q_values_dominate_p_and_match_rejections() {
        let p = [0.001, 0.2, 0.03, 0.04, 0.011, 0.5, 0.049];
        let q = bh_adjust(&p);
        for (pi, qi) in p.iter().zip(&q) {
            assert!(qi >= pi);
        }
        let by_q: Vec<usize> = (0..p.len()).filter(|&i| q[i] <= 0.05).collect();
        assert_eq!(by_q, bh_reject(&p, 0.05));
    }
}
