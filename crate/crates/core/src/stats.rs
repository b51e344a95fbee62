//! Test errors, per-method summaries and the paired t-test used to mark the
//! best method and those not significantly worse.

use std::collections::BTreeMap;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::EvalSet;
use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::predictor::{pointwise_losses, Predictor};

pub const SIGNIFICANCE: f64 = 0.05;

/// Mean of `metric` over the eval pairs.
pub fn test_error<P: Predictor + ?Sized>(
    model: &P,
    eval: &EvalSet,
    metric: &LossSpec,
) -> Result<f64> {
    if eval.y.is_empty() {
        return Err(Error::Empty("eval set has no rows".into()));
    }
    let losses = pointwise_losses(model, &eval.x, &eval.y, metric)?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub method: String,
    pub trial: usize,
    pub error: f64,
    pub fit_seconds: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than 2 values.
pub fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Divide every error by the reference method's mean error.
pub fn normalize_errors(records: &[TrialRecord], reference: &str) -> Result<Vec<TrialRecord>> {
    if records.is_empty() {
        return Err(Error::Empty("no trial records".into()));
    }
    let reference_errors: Vec<f64> = records
        .iter()
        .filter(|r| r.method == reference)
        .map(|r| r.error)
        .collect();
    if reference_errors.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "reference method {reference:?} has no records"
        )));
    }
    let scale = mean(&reference_errors);
    if !(scale > 0.0) {
        return Err(Error::Degenerate(format!(
            "reference method {reference:?} has mean error {scale}"
        )));
    }
    Ok(records
        .iter()
        .map(|r| TrialRecord {
            error: r.error / scale,
            ..r.clone()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub significant: bool,
}

/// Paired two-sided t-test on `a − b` with `n − 1` degrees of freedom.
/// Identical samples give `t = 0, p = 1`; constant nonzero differences give
/// an infinite `t` and `p = 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "{} vs {} paired values",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidParameter(
            "paired t-test needs at least 2 pairs".into(),
        ));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = mean(&d);
    let sd = sample_sd(&d);
    if sd == 0.0 {
        return Ok(if m == 0.0 {
            TTest {
                t: 0.0,
                p: 1.0,
                significant: false,
            }
        } else {
            TTest {
                t: m.signum() * f64::INFINITY,
                p: 0.0,
                significant: true,
            }
        });
    }
    let t = m / (sd / n.sqrt());
    let dist =
        StudentsT::new(0.0, 1.0, n - 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest {
        t,
        p,
        significant: p < SIGNIFICANCE,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub mean: f64,
    pub sd: f64,
    /// Mean divided by the reference method's mean, when available.
    pub normalized_mean: Option<f64>,
    /// Best mean, or not significantly different from it.
    pub best_group: bool,
    pub mean_fit_seconds: f64,
    pub trials_ok: usize,
    pub trials_failed: usize,
    /// False when more than half of the method's trials failed.
    pub valid: bool,
}

/// Per-method summary in the order methods first appear in `order`.
/// `failed` counts failed trials per method.
pub fn summarize(
    records: &[TrialRecord],
    order: &[String],
    failed: &BTreeMap<String, usize>,
    reference: Option<&str>,
) -> Vec<MethodSummary> {
    let by_method: BTreeMap<&str, BTreeMap<usize, &TrialRecord>> =
        records.iter().fold(BTreeMap::new(), |mut acc, r| {
            acc.entry(r.method.as_str()).or_default().insert(r.trial, r);
            acc
        });
    let reference_mean = reference
        .and_then(|m| by_method.get(m))
        .map(|rs| mean(&rs.values().map(|r| r.error).collect::<Vec<_>>()))
        .filter(|m| *m > 0.0);
    let mut out: Vec<MethodSummary> = order
        .iter()
        .map(|method| {
            let rs: Vec<&TrialRecord> = by_method
                .get(method.as_str())
                .map(|m| m.values().copied().collect())
                .unwrap_or_default();
            let errors: Vec<f64> = rs.iter().map(|r| r.error).collect();
            let n_failed = failed.get(method).copied().unwrap_or(0);
            let total = errors.len() + n_failed;
            let (m, sd, secs) = if errors.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (
                    mean(&errors),
                    sample_sd(&errors),
                    mean(&rs.iter().map(|r| r.fit_seconds).collect::<Vec<_>>()),
                )
            };
            MethodSummary {
                method: method.clone(),
                mean: m,
                sd,
                normalized_mean: reference_mean.filter(|_| !errors.is_empty()).map(|r| m / r),
                best_group: false,
                mean_fit_seconds: secs,
                trials_ok: errors.len(),
                trials_failed: n_failed,
                valid: total > 0 && 2 * n_failed <= total,
            }
        })
        .collect();
    let best = out
        .iter()
        .enumerate()
        .filter(|(_, s)| s.valid && s.mean.is_finite())
        .min_by(|a, b| a.1.mean.total_cmp(&b.1.mean))
        .map(|(i, _)| i);
    if let Some(bi) = best {
        let best_trials = &by_method[out[bi].method.as_str()];
        for (i, s) in out.iter_mut().enumerate() {
            if i == bi {
                s.best_group = true;
                continue;
            }
            if !s.valid || !s.mean.is_finite() {
                continue;
            }
            let mine = &by_method[s.method.as_str()];
            let (a, b): (Vec<f64>, Vec<f64>) = best_trials
                .iter()
                .filter_map(|(t, r)| mine.get(t).map(|o| (o.error, r.error)))
                .unzip();
            s.best_group = paired_t_test(&a, &b)
                .map(|t| !t.significant)
                .unwrap_or(false);
        }
    }
    out
}
