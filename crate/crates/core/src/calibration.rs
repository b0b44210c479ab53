//! Threshold calibration from same-author score samples.
//!
//! Same-author scores are approximated by a Beta(α, β) distribution fitted
//! by the method of moments. For a scan that compares one query against n
//! corpus functions, the relevant statistic is the minimum of n draws; its
//! density is
//!
//! ```text
//! f_min(x) = n · f(x) · (1 - F(x))^(n-1)
//! ```
//!
//! and the dynamic threshold is the expected minimum
//! `θ(n) = ∫₀¹ x · f_min(x) dx`, computed by composite Simpson integration
//! with a refinement check. θ(n) shrinks as the number of comparisons grows,
//! which keeps the false-discovery rate of a many-comparison scan in check.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scores are clamped into [CLAMP, 1 - CLAMP] before fitting: cosine
/// similarities can be exactly 1 or negative, while the Beta support is
/// the open unit interval.
pub const CLAMP: f64 = 1e-6;

/// What the fitted values represent. Determines the comparison direction:
/// below-threshold is suspicious for similarities, above-threshold for
/// distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreDomain {
    Similarity,
    Distance,
}

/// A Beta(α, β) distribution fitted to same-author scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub alpha: f64,
    pub beta: f64,
    pub fitted_on: usize,
    pub domain: ScoreDomain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    ExpectedMinimum,
    Manual,
}

/// A verdict threshold together with the comparison count it was derived
/// for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    pub n: usize,
    pub source: ThresholdSource,
}

/// Calibration result file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub alpha: f64,
    pub beta: f64,
    pub domain: ScoreDomain,
    pub n: usize,
    pub theta: f64,
    pub fitted_on: usize,
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("need at least 2 score values to fit, got {0}")]
    TooFewValues(usize),
    #[error("degenerate sample: zero variance")]
    DegenerateSample,
    #[error("sample variance too large for a Beta fit (method-of-moments c = {0})")]
    VarianceTooLarge(f64),
    #[error("comparison count n must be at least 1")]
    BadComparisonCount,
    #[error("x = {0} outside [0, 1]")]
    OutOfDomain(f64),
    #[error("integral failed to converge: refinement disagreement {0:.2e} > 1e-5")]
    NonConvergent(f64),
}

impl BetaFit {
    /// Density at x in [0, 1]. Diverges (returns +inf) at an endpoint when
    /// the corresponding shape parameter is below 1.
    pub fn pdf(&self, x: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&x));
        let t_alpha = if self.alpha == 1.0 {
            0.0
        } else {
            (self.alpha - 1.0) * x.ln()
        };
        let t_beta = if self.beta == 1.0 {
            0.0
        } else {
            (self.beta - 1.0) * (1.0 - x).ln()
        };
        (t_alpha + t_beta - ln_beta(self.alpha, self.beta)).exp()
    }

    /// Cumulative distribution (regularized incomplete beta).
    pub fn cdf(&self, x: f64) -> f64 {
        reg_inc_beta(self.alpha, self.beta, x)
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Method-of-moments Beta fit over scores clamped into the open unit
/// interval: with mean m and population variance v,
/// `c = m(1-m)/v - 1`, `α = m·c`, `β = (1-m)·c`.
pub fn fit_beta(values: &[f64], domain: ScoreDomain) -> Result<BetaFit, CalibrationError> {
    if values.len() < 2 {
        return Err(CalibrationError::TooFewValues(values.len()));
    }
    let clamped: Vec<f64> = values
        .iter()
        .map(|v| v.clamp(CLAMP, 1.0 - CLAMP))
        .collect();
    let n = clamped.len() as f64;
    let mean = clamped.iter().sum::<f64>() / n;
    let variance = clamped.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if variance <= 0.0 {
        return Err(CalibrationError::DegenerateSample);
    }
    let c = mean * (1.0 - mean) / variance - 1.0;
    if c <= 0.0 {
        return Err(CalibrationError::VarianceTooLarge(c));
    }
    Ok(BetaFit {
        alpha: mean * c,
        beta: (1.0 - mean) * c,
        fitted_on: clamped.len(),
        domain,
    })
}

/// Density of the minimum of `n` independent draws from `fit`.
pub fn min_density(fit: &BetaFit, n: usize, x: f64) -> Result<f64, CalibrationError> {
    if n == 0 {
        return Err(CalibrationError::BadComparisonCount);
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(CalibrationError::OutOfDomain(x));
    }
    let survival = 1.0 - fit.cdf(x);
    Ok(n as f64 * fit.pdf(x) * survival.powi(n as i32 - 1))
}

/// Expected minimum of `n` independent draws from `fit`, by composite
/// Simpson integration of `x · f_min(x)` over [0, 1] on 20001 points,
/// cross-checked against a doubled-resolution pass. Endpoint values where
/// the density diverges are integrable limits and are evaluated as 0.
pub fn expected_minimum(fit: &BetaFit, n: usize) -> Result<f64, CalibrationError> {
    if n == 0 {
        return Err(CalibrationError::BadComparisonCount);
    }
    let integrand = |x: f64| {
        let v = x * n as f64 * fit.pdf(x) * (1.0 - fit.cdf(x)).powi(n as i32 - 1);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let coarse = simpson(&integrand, 20_000);
    let fine = simpson(&integrand, 40_000);
    let disagreement = (coarse - fine).abs();
    if disagreement > 1e-5 {
        return Err(CalibrationError::NonConvergent(disagreement));
    }
    Ok(fine)
}

/// Fit same-author scores and derive the dynamic threshold θ = E(X_min)
/// for `n` comparisons. Scores are always given in similarity form; for
/// the distance domain they are mapped through d = 1 - s before fitting.
pub fn derive_threshold(
    same_author_scores: &[f64],
    n: usize,
    domain: ScoreDomain,
) -> Result<(BetaFit, Threshold), CalibrationError> {
    let values: Vec<f64> = match domain {
        ScoreDomain::Similarity => same_author_scores.to_vec(),
        ScoreDomain::Distance => same_author_scores.iter().map(|s| 1.0 - s).collect(),
    };
    let fit = fit_beta(&values, domain)?;
    let theta = expected_minimum(&fit, n)?;
    Ok((
        fit,
        Threshold {
            value: theta,
            n,
            source: ThresholdSource::ExpectedMinimum,
        },
    ))
}

/// Composite Simpson rule over [0, 1] with `intervals` subintervals
/// (must be even; grid has `intervals + 1` points).
fn simpson(f: &dyn Fn(f64) -> f64, intervals: usize) -> f64 {
    debug_assert!(intervals.is_multiple_of(2));
    let h = 1.0 / intervals as f64;
    let mut sum = f(0.0) + f(1.0);
    for i in 1..intervals {
        let x = i as f64 * h;
        sum += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

// --- Beta special functions -----------------------------------------------
//
// Log-gamma via the Lanczos approximation (g = 7, 9 terms) and the
// regularized incomplete beta via the Lentz continued fraction, as in
// Numerical Recipes. Accurate to ~1e-13 relative over the parameter ranges
// used here; unit tests pin spot values against an independent library.

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn ln_gamma(z: f64) -> f64 {
    if z < 0.5 {
        // Reflection formula; our arguments are always positive.
        let pi = std::f64::consts::PI;
        pi.ln() - (pi * z).sin().ln() - ln_gamma(1.0 - z)
    } else {
        let z = z - 1.0;
        let mut acc = LANCZOS_COEFFS[0];
        for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
            acc += c / (z + i as f64);
        }
        let t = z + LANCZOS_G + 0.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete beta I_x(a, b).
fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    let front = ln_front.exp();
    // The continued fraction converges fast only on one side of the mean;
    // use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) on the other.
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Lentz's algorithm for the incomplete beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
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
        let m_f = m as f64;
        let m2 = 2.0 * m_f;

        // Even step.
        let numerator = m_f * (b - m_f) * x / ((qam + m2) * (a + m2));
        d = 1.0 + numerator * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + numerator / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;

        // Odd step.
        let numerator = -(a + m_f) * (qab + m_f) * x / ((a + m2) * (qap + m2));
        d = 1.0 + numerator * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + numerator / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
