//! Pointwise losses, their derivatives, and the Tukey IRLS weight.
//!
//! Scalar losses take a one-element prediction slice; `SoftmaxCe` and the
//! multiclass zero-one loss take a logit vector of length K with the target
//! given as a class index stored in an `f64`.

use crate::error::{Error, Result};

/// Default Tukey scale.
pub const TUKEY_RHO: f64 = 4.685;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Squared,
    Tukey,
    ZeroOne,
    Hinge,
    SoftmaxCe,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Squared => "squared",
            LossKind::Tukey => "tukey",
            LossKind::ZeroOne => "zero_one",
            LossKind::Hinge => "hinge",
            LossKind::SoftmaxCe => "softmax_ce",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "squared" => Ok(LossKind::Squared),
            "tukey" => Ok(LossKind::Tukey),
            "zero_one" | "zero-one" | "01" => Ok(LossKind::ZeroOne),
            "hinge" => Ok(LossKind::Hinge),
            "softmax_ce" | "softmax-ce" | "cross_entropy" => Ok(LossKind::SoftmaxCe),
            other => Err(Error::InvalidParameter(format!("unknown loss {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Tukey scale ρ; ignored by other kinds.
    pub rho: f64,
    /// The constant m bounding the true loss.
    pub bound_m: f64,
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            rho: TUKEY_RHO,
            bound_m: 1.0,
        }
    }

    pub fn squared() -> Self {
        Self::new(LossKind::Squared)
    }

    pub fn tukey() -> Self {
        Self::new(LossKind::Tukey)
    }

    pub fn zero_one() -> Self {
        Self::new(LossKind::ZeroOne)
    }

    pub fn hinge() -> Self {
        Self::new(LossKind::Hinge)
    }

    pub fn softmax_ce() -> Self {
        Self::new(LossKind::SoftmaxCe)
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        if !(self.bound_m > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bound m must be positive, got {}",
                self.bound_m
            )));
        }
        Ok(())
    }

    pub fn value(&self, prediction: &[f64], target: f64) -> Result<f64> {
        loss_value(self, prediction, target)
    }

    pub fn derivative(&self, prediction: &[f64], target: f64) -> Result<Vec<f64>> {
        loss_derivative(self, prediction, target)
    }

    /// Value for a scalar prediction.
    pub fn scalar(&self, prediction: f64, target: f64) -> Result<f64> {
        loss_value(self, &[prediction], target)
    }
}

fn check_finite(prediction: &[f64]) -> Result<()> {
    if prediction.is_empty() {
        return Err(Error::Empty("prediction has no entries".into()));
    }
    if prediction.iter().all(|p| p.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("prediction {prediction:?}")))
    }
}

fn scalar_of(kind: LossKind, prediction: &[f64]) -> Result<f64> {
    match prediction {
        [p] => Ok(*p),
        _ => Err(Error::Dimension(format!(
            "{} loss expects a scalar prediction, got {} values",
            kind.name(),
            prediction.len()
        ))),
    }
}

fn class_index(target: f64, k: usize) -> Result<usize> {
    if target >= 0.0 && target.fract() == 0.0 && (target as usize) < k {
        Ok(target as usize)
    } else {
        Err(Error::InvalidParameter(format!(
            "class index {target} is not in 0..{k}"
        )))
    }
}

fn binary_label(target: f64) -> Result<f64> {
    if target == 1.0 || target == -1.0 {
        Ok(target)
    } else {
        Err(Error::InvalidParameter(format!(
            "binary label must be ±1, got {target}"
        )))
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|o| (o - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|o| (o - max).exp()).sum::<f64>().ln()
}

/// Index of the largest logit; the first one on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Rescaled Tukey bisquare loss, bounded by 1.
pub fn tukey(residual: f64, rho: f64) -> f64 {
    let u = residual * residual / (rho * rho);
    if u >= 1.0 {
        1.0
    } else {
        (1.0 - (1.0 - u).powi(3)).min(1.0)
    }
}

pub fn loss_value(spec: &LossSpec, prediction: &[f64], target: f64) -> Result<f64> {
    check_finite(prediction)?;
    match spec.kind {
        LossKind::Squared => {
            let p = scalar_of(spec.kind, prediction)?;
            Ok((p - target) * (p - target))
        }
        LossKind::Tukey => {
            let p = scalar_of(spec.kind, prediction)?;
            Ok(tukey(p - target, spec.rho))
        }
        LossKind::ZeroOne => {
            if prediction.len() == 1 {
                let y = binary_label(target)?;
                Ok(if prediction[0] * y <= 0.0 { 1.0 } else { 0.0 })
            } else {
                let y = class_index(target, prediction.len())?;
                Ok(if argmax(prediction) != y { 1.0 } else { 0.0 })
            }
        }
        LossKind::Hinge => {
            let p = scalar_of(spec.kind, prediction)?;
            let y = binary_label(target)?;
            Ok((1.0 - p * y).max(0.0))
        }
        LossKind::SoftmaxCe => {
            let y = class_index(target, prediction.len())?;
            Ok(log_sum_exp(prediction) - prediction[y])
        }
    }
}

/// Derivative with respect to the prediction (a K-vector for softmax).
pub fn loss_derivative(spec: &LossSpec, prediction: &[f64], target: f64) -> Result<Vec<f64>> {
    check_finite(prediction)?;
    match spec.kind {
        LossKind::Squared => {
            let p = scalar_of(spec.kind, prediction)?;
            Ok(vec![2.0 * (p - target)])
        }
        LossKind::Tukey => {
            let p = scalar_of(spec.kind, prediction)?;
            let r = p - target;
            let rho2 = spec.rho * spec.rho;
            if r.abs() < spec.rho {
                let u = 1.0 - r * r / rho2;
                Ok(vec![6.0 * r / rho2 * u * u])
            } else {
                Ok(vec![0.0])
            }
        }
        LossKind::Hinge => {
            let p = scalar_of(spec.kind, prediction)?;
            let y = binary_label(target)?;
            Ok(vec![if p * y < 1.0 { -y } else { 0.0 }])
        }
        LossKind::SoftmaxCe => {
            let y = class_index(target, prediction.len())?;
            let mut g = softmax(prediction);
            g[y] -= 1.0;
            Ok(g)
        }
        LossKind::ZeroOne => Err(Error::InvalidParameter(
            "the zero-one loss is not differentiable".into(),
        )),
    }
}

/// Half-quadratic IRLS weight `(1 − (r/ρ)²)²` inside `|r| < ρ`, zero outside.
pub fn tukey_irls_weight(residual: f64, rho: f64) -> f64 {
    let u = residual / rho;
    if u.abs() < 1.0 {
        let v = 1.0 - u * u;
        v * v
    } else {
        0.0
    }
}
