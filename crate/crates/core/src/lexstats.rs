//! Lexical analysis: univariate Pearson correlation of per-ad unigram
//! frequencies against binary class labels, with two-tailed t-test
//! significance and per-class ranked reporting.
//!
//! The t-distribution CDF is computed from the regularized incomplete beta
//! function, evaluated with a Lentz continued fraction; no statistics
//! library is assumed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Correlation of one unigram's relative frequency with the 0/1 labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub feature: String,
    pub r: f64,
    pub t: f64,
    pub p: f64,
    pub n: usize,
}

/// All correlation rows plus the features excluded for zero variance
/// (Pearson r is undefined on a constant column).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rows: Vec<CorrelationRow>,
    pub excluded: Vec<String>,
}

/// Natural log of the gamma function (Lanczos approximation, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection formula
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.999_999_999_999_809_9;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta function, evaluated with the
/// modified Lentz method.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-16;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b), relative accuracy
/// around 1e-14.
pub fn inc_beta(x: f64, a: f64, b: f64) -> f64 {
    assert!((0.0..=1.0).contains(&x), "x must lie in [0,1]");
    assert!(a > 0.0 && b > 0.0, "a and b must be positive");
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let ln_bt = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let bt = ln_bt.exp();
    // the continued fraction converges fast only below the crossover point
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * beta_cf(a, b, x) / a
    } else {
        1.0 - bt * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-tailed p-value of a t statistic with `df` degrees of freedom:
/// p = I_{df/(df+t^2)}(df/2, 1/2).
pub fn p_value(t: f64, df: f64) -> f64 {
    assert!(df >= 1.0, "df must be >= 1");
    if !t.is_finite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    inc_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Pearson correlations of every feature column against binary labels.
/// `features[i]` holds ad i's unigram relative frequencies; absent keys are
/// zero. Labels must contain both classes and at least 3 ads.
pub fn correlate(features: &[BTreeMap<String, f64>], labels: &[u8]) -> Result<CorrelationReport> {
    if features.len() != labels.len() {
        return Err(Error::DimMismatch(format!(
            "{} feature rows vs {} labels",
            features.len(),
            labels.len()
        )));
    }
    let n = labels.len();
    if n < 3 {
        return Err(Error::EmptyInput(format!(
            "correlation needs at least 3 ads, got {n}"
        )));
    }
    let ones = labels.iter().filter(|&&y| y == 1).count();
    if ones == 0 || ones == n {
        return Err(Error::SingleClassLabels);
    }
    let y: Vec<f64> = labels.iter().map(|&v| v as f64).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let y_ss: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();

    let names: BTreeSet<&String> = features.iter().flat_map(|m| m.keys()).collect();
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    let df = (n - 2) as f64;
    for name in names {
        let x: Vec<f64> = features
            .iter()
            .map(|m| m.get(name).copied().unwrap_or(0.0))
            .collect();
        let x_mean = x.iter().sum::<f64>() / n as f64;
        let x_ss: f64 = x.iter().map(|v| (v - x_mean).powi(2)).sum();
        if x_ss == 0.0 {
            excluded.push(name.clone());
            continue;
        }
        let cov: f64 = x
            .iter()
            .zip(&y)
            .map(|(xv, yv)| (xv - x_mean) * (yv - y_mean))
            .sum();
        let r = (cov / (x_ss * y_ss).sqrt()).clamp(-1.0, 1.0);
        let denom = 1.0 - r * r;
        let t = if denom <= 0.0 {
            if r > 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            }
        } else {
            r * (df / denom).sqrt()
        };
        let p = p_value(t, df);
        rows.push(CorrelationRow {
            feature: name.clone(),
            r,
            t,
            p,
            n,
        });
    }
    Ok(CorrelationReport { rows, excluded })
}

/// Top-k features associated with one class. For the positive class
/// (label 1) rows with r > 0 qualify; for the negative class the label
/// encoding is flipped, negating r and t while p is unchanged. Rows must
/// be significant at `alpha`, and are sorted by descending r (ties by
/// feature name).
pub fn rank_report(
    rows: &[CorrelationRow],
    toward_positive: bool,
    alpha: f64,
    k: usize,
) -> Vec<CorrelationRow> {
    let mut out: Vec<CorrelationRow> = rows
        .iter()
        .filter(|row| row.p < alpha)
        .filter_map(|row| {
            let (r, t) = if toward_positive {
                (row.r, row.t)
            } else {
                (-row.r, -row.t)
            };
            if r > 0.0 {
                Some(CorrelationRow {
                    feature: row.feature.clone(),
                    r,
                    t,
                    p: row.p,
                    n: row.n,
                })
            } else {
                None
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.r.partial_cmp(&a.r)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.feature.cmp(&b.feature))
    });
    out.truncate(k);
    out
}
