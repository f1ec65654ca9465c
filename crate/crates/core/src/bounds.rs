//! High-confidence upper bounds on the mean of a sample.

use serde::{Deserialize, Serialize};

use crate::error::{ElfError, Result};
use crate::stats::t_quantile_upper;

/// Concentration inequality used to bound a constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    /// Student's t; assumes the sample mean is approximately normal.
    TTest,
    /// Hoeffding's inequality; every sample must lie in `[a, b]`.
    Hoeffding { a: f64, b: f64 },
}

impl BoundMethod {
    /// Fewest samples the method can bound.
    pub fn min_samples(&self) -> usize {
        match self {
            BoundMethod::TTest => 2,
            BoundMethod::Hoeffding { .. } => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BoundMethod::Hoeffding { a, b } if !(a < b) => Err(ElfError::Config(format!(
                "hoeffding range requires a < b, got [{a}, {b}]"
            ))),
            _ => Ok(()),
        }
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(ElfError::Config(format!("delta must lie in (0, 1), got {delta}")))
    }
}

/// Mean accumulated as offsets from the first sample; exact for constant input.
pub(crate) fn mean(samples: &[f64]) -> f64 {
    let first = samples[0];
    first + samples.iter().map(|v| v - first).sum::<f64>() / samples.len() as f64
}

/// Sample standard deviation with Bessel's correction.
pub(crate) fn std_dev(samples: &[f64]) -> f64 {
    let m = mean(samples);
    let ss: f64 = samples.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (samples.len() - 1) as f64).sqrt()
}

/// Mean plus the one-sided Student's t confidence offset:
/// `mean + sd / sqrt(m) * t_{1-δ, m-1}`.
pub fn ttest_upper(samples: &[f64], delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if samples.len() < 2 {
        return Err(ElfError::InsufficientSamples { needed: 2, got: samples.len() });
    }
    let m = samples.len();
    let sd = std_dev(samples);
    if sd == 0.0 {
        return Ok(mean(samples));
    }
    let t = t_quantile_upper(delta, (m - 1) as f64)?;
    Ok(mean(samples) + sd / (m as f64).sqrt() * t)
}

fn check_range(samples: &[f64], a: f64, b: f64) -> Result<()> {
    BoundMethod::Hoeffding { a, b }.validate()?;
    match samples.iter().find(|&&v| !(a..=b).contains(&v)) {
        Some(&value) => Err(ElfError::OutOfRange { value, lo: a, hi: b }),
        None => Ok(()),
    }
}

/// Mean plus Hoeffding's offset `(b - a) * sqrt(ln(1/δ) / (2m))`.
pub fn hoeffding_upper(samples: &[f64], delta: f64, a: f64, b: f64) -> Result<f64> {
    check_delta(delta)?;
    if samples.is_empty() {
        return Err(ElfError::InsufficientSamples { needed: 1, got: 0 });
    }
    check_range(samples, a, b)?;
    let m = samples.len() as f64;
    Ok(mean(samples) + (b - a) * ((1.0 / delta).ln() / (2.0 * m)).sqrt())
}

/// Non-inflated bound with the given method.
pub fn upper_bound(samples: &[f64], delta: f64, method: BoundMethod) -> Result<f64> {
    match method {
        BoundMethod::TTest => ttest_upper(samples, delta),
        BoundMethod::Hoeffding { a, b } => hoeffding_upper(samples, delta, a, b),
    }
}

/// Inputs to [`inflated_upper`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRequest<'a> {
    pub samples: &'a [f64],
    pub delta: f64,
    pub method: BoundMethod,
    pub lambda: f64,
    /// Size of the safety set the bound predicts for.
    pub n_future: usize,
}

/// Candidate-selection bound: the sample mean plus `lambda` times the
/// confidence offset computed as if the sample had `n_future` entries.
pub fn inflated_upper(req: &BoundRequest<'_>) -> Result<f64> {
    check_delta(req.delta)?;
    let m = req.samples.len();
    match req.method {
        BoundMethod::TTest => {
            if m < 2 {
                return Err(ElfError::InsufficientSamples { needed: 2, got: m });
            }
            if req.n_future < 2 {
                return Err(ElfError::InsufficientSamples { needed: 2, got: req.n_future });
            }
            let t = t_quantile_upper(req.delta, (req.n_future - 1) as f64)?;
            Ok(inflated_ttest(req.samples, t, req.lambda, req.n_future))
        }
        BoundMethod::Hoeffding { a, b } => {
            if m == 0 {
                return Err(ElfError::InsufficientSamples { needed: 1, got: 0 });
            }
            if req.n_future == 0 {
                return Err(ElfError::InsufficientSamples { needed: 1, got: 0 });
            }
            check_range(req.samples, a, b)?;
            let offset = (b - a) * ((1.0 / req.delta).ln() / (2.0 * req.n_future as f64)).sqrt();
            Ok(mean(req.samples) + req.lambda * offset)
        }
    }
}

/// Inflated t bound with a precomputed quantile `t_{1-δ, n_future-1}`.
pub(crate) fn inflated_ttest(samples: &[f64], quantile: f64, lambda: f64, n_future: usize) -> f64 {
    let sd = std_dev(samples);
    if sd == 0.0 {
        return mean(samples);
    }
    mean(samples) + lambda * sd / (n_future as f64).sqrt() * quantile
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// `m` samples with exactly the given mean and sample standard deviation.
    fn with_moments(mean: f64, sd: f64, m: usize) -> Vec<f64> {
        let half = m / 2;
        let spread = sd * (((m - 1) as f64) / m as f64).sqrt();
        (0..m).map(|i| if i < half { mean - spread } else { mean + spread }).collect()
    }

    #[test]
    fn ttest_zero_variance() {
        assert_eq!(ttest_upper(&[0.3; 10], 0.1).unwrap(), 0.3);
    }

    #[test]
    fn ttest_hand_values() {
        let s = with_moments(-0.5, 1.0, 100);
        assert_abs_diff_eq!(std_dev(&s), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ttest_upper(&s, 0.1).unwrap(), -0.37098385579724974, epsilon = 1e-10);
        assert_abs_diff_eq!(ttest_upper(&[0.0, 1.0], 0.1).unwrap(), 2.0388417686039033, epsilon = 1e-10);
    }

    #[test]
    fn ttest_needs_two_samples() {
        assert!(matches!(ttest_upper(&[1.0], 0.1), Err(ElfError::InsufficientSamples { .. })));
        assert!(ttest_upper(&[1.0, 2.0], 1.5).is_err());
    }

    #[test]
    fn hoeffding_hand_value() {
        let s = with_moments(0.5, 0.2, 50);
        let expected = 0.5 + 0.17308183826022852;
        assert_abs_diff_eq!(hoeffding_upper(&s, 0.05, 0.0, 1.0).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn hoeffding_limits() {
        let s = [0.2, 0.4];
        assert_abs_diff_eq!(hoeffding_upper(&s, 1.0 - 1e-15, 0.0, 1.0).unwrap(), 0.3, epsilon = 1e-7);
        let off = |m: usize| hoeffding_upper(&vec![0.5; m], 0.05, 0.0, 1.0).unwrap() - 0.5;
        assert_abs_diff_eq!(off(20) / off(40), 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn hoeffding_range_violation() {
        assert!(matches!(
            hoeffding_upper(&[0.5, 1.5], 0.1, 0.0, 1.0),
            Err(ElfError::OutOfRange { .. })
        ));
        assert!(hoeffding_upper(&[0.5], 0.1, 1.0, 0.0).is_err());
        assert!(hoeffding_upper(&[], 0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn inflated_hoeffding_hand_value() {
        let s = [-0.25, 0.25];
        let req = BoundRequest {
            samples: &s,
            delta: 0.05,
            method: BoundMethod::Hoeffding { a: -0.5, b: 0.5 },
            lambda: 2.0,
            n_future: 100,
        };
        assert_abs_diff_eq!(inflated_upper(&req).unwrap(), 0.24477468306808164, epsilon = 1e-12);
        let flat = BoundRequest { lambda: 0.0, ..req.clone() };
        assert_abs_diff_eq!(inflated_upper(&flat).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn inflated_ttest_cases() {
        let req = BoundRequest {
            samples: &[0.7; 5],
            delta: 0.1,
            method: BoundMethod::TTest,
            lambda: 2.0,
            n_future: 40,
        };
        assert_eq!(inflated_upper(&req).unwrap(), 0.7);

        let s = with_moments(-0.5, 1.0, 100);
        let req = BoundRequest { samples: &s, n_future: 100, ..req };
        // with n_future = m the inflated offset is exactly lambda times the plain one
        let plain = ttest_upper(&s, 0.1).unwrap();
        assert_abs_diff_eq!(inflated_upper(&req).unwrap(), -0.5 + 2.0 * (plain + 0.5), epsilon = 1e-12);
        let few = BoundRequest { n_future: 1, ..req };
        assert!(inflated_upper(&few).is_err());
    }
}
