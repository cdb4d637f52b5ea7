//! Wilcoxon signed-rank test over paired score vectors and the p < I
//! classification rule.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::trace::Label;
use crate::{Error, Result};

/// How the p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExactEnumeration,
    NormalApproximation,
}

/// Alternative hypothesis direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// The paired populations differ (default).
    #[default]
    TwoSided,
    /// The test scores sit below the baseline (malware scores lower).
    OneSidedLess,
}

/// Below this effective sample size the exact enumeration branch runs.
pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    /// Sum of ranks of negative differences.
    pub w_minus: f64,
    /// Test statistic, `min(w_plus, w_minus)`.
    pub w: f64,
    /// Pairs remaining after zero differences are dropped.
    pub n_effective: usize,
    pub p_value: f64,
    pub method: Method,
    /// Set when every difference was zero; `p_value` is 1 then.
    pub no_evidence: bool,
}

/// Two-sided Wilcoxon signed-rank test on positionally paired vectors.
pub fn wilcoxon(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    wilcoxon_with(x, y, Tail::TwoSided, None)
}

/// Wilcoxon test with an explicit tail and, for calibration tests, an
/// optional forced p-value method.
pub fn wilcoxon_with(
    x: &[f64],
    y: &[f64],
    tail: Tail,
    force_method: Option<Method>,
) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(Error::VectorLengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(Error::EmptyInput("score vectors".into()));
    }
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            w_plus: 0.0,
            w_minus: 0.0,
            w: 0.0,
            n_effective: 0,
            p_value: 1.0,
            method: Method::ExactEnumeration,
            no_evidence: true,
        });
    }

    // Average ranks on tied |d|, held in doubled units so they stay
    // integral.
    let ranks2 = doubled_ranks(&diffs);
    let mut w_plus2: u64 = 0;
    let mut w_minus2: u64 = 0;
    for (d, r2) in diffs.iter().zip(&ranks2) {
        if *d > 0.0 {
            w_plus2 += r2;
        } else {
            w_minus2 += r2;
        }
    }
    let w2 = w_plus2.min(w_minus2);

    let method = force_method.unwrap_or(if n < EXACT_LIMIT {
        Method::ExactEnumeration
    } else {
        Method::NormalApproximation
    });
    let p_value = match method {
        Method::ExactEnumeration => exact_p(&ranks2, w_plus2, w2, tail),
        Method::NormalApproximation => normal_p(n, w_plus2, w2, tail),
    };
    Ok(WilcoxonResult {
        w_plus: w_plus2 as f64 / 2.0,
        w_minus: w_minus2 as f64 / 2.0,
        w: w2 as f64 / 2.0,
        n_effective: n,
        p_value,
        method,
        no_evidence: false,
    })
}

/// Ranks of |d| ascending, average ranks on ties, multiplied by 2.
fn doubled_ranks(diffs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&a, &b| diffs[a].abs().partial_cmp(&diffs[b].abs()).unwrap());
    let mut ranks2 = vec![0u64; diffs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        // positions i..=j share the average of ranks i+1..=j+1
        let avg2 = (i as u64 + 1) + (j as u64 + 1); // 2 * average rank
        for &idx in &order[i..=j] {
            ranks2[idx] = avg2;
        }
        i = j + 1;
    }
    ranks2
}

/// Exact tail probability by enumerating all 2^n sign assignments.
fn exact_p(ranks2: &[u64], w_plus2: u64, w2: u64, tail: Tail) -> f64 {
    let n = ranks2.len();
    debug_assert!(n < 64);
    let total = 1u64 << n;
    let threshold = match tail {
        Tail::TwoSided => w2,
        Tail::OneSidedLess => w_plus2,
    };
    let mut count = 0u64;
    for mask in 0..total {
        let mut sum = 0u64;
        let mut bits = mask;
        while bits != 0 {
            let b = bits.trailing_zeros() as usize;
            sum += ranks2[b];
            bits &= bits - 1;
        }
        if sum <= threshold {
            count += 1;
        }
    }
    let tail_p = count as f64 / total as f64;
    match tail {
        Tail::TwoSided => (2.0 * tail_p).min(1.0),
        Tail::OneSidedLess => tail_p,
    }
}

/// Large-sample p-value: W is approximately normal with mean n(n+1)/4 and
/// variance n(n+1)(2n+1)/24, with the usual half-unit continuity
/// correction for the lower tail.
fn normal_p(n: usize, w_plus2: u64, w2: u64, tail: Tail) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let sd = (nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0).sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    match tail {
        Tail::TwoSided => {
            let z = (w2 as f64 / 2.0 + 0.5 - mean) / sd;
            (2.0 * normal.cdf(z)).min(1.0)
        }
        Tail::OneSidedLess => {
            let z = (w_plus2 as f64 / 2.0 + 0.5 - mean) / sd;
            normal.cdf(z)
        }
    }
}

/// Final label for one analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    pub p_value: f64,
    /// The confidence interval I the p-value was compared against.
    pub confidence: f64,
    pub test_detail: WilcoxonResult,
}

/// Apply the decision rule: malicious iff `p < I` (strict).
pub fn classify(result: &WilcoxonResult, confidence: f64) -> Result<Verdict> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidConfidence(confidence));
    }
    let label = if result.p_value < confidence {
        Label::Malicious
    } else {
        Label::Legitimate
    };
    Ok(Verdict {
        label,
        p_value: result.p_value,
        confidence,
        test_detail: result.clone(),
    })
}
