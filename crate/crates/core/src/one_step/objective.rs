use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::LinearModel;
use crate::loss::LossSpec;
use crate::predictor::{pointwise_losses, Predictor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSpec {
    /// Surrogate loss ℓ_UB used in training.
    pub surrogate: LossSpec,
    /// Bound m on the true loss.
    pub bound_m: f64,
    pub lambda_f: f64,
    pub lambda_g: f64,
    /// Additive constant C; shifts reported values only.
    pub constant_c: f64,
}

impl ObjectiveSpec {
    pub fn new(surrogate: LossSpec, lambda_f: f64, lambda_g: f64) -> Self {
        Self {
            surrogate,
            bound_m: 1.0,
            lambda_f,
            lambda_g,
            constant_c: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.surrogate.validate()?;
        if !(self.bound_m > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "m must be positive, got {}",
                self.bound_m
            )));
        }
        if !(self.lambda_f >= 0.0 && self.lambda_g >= 0.0) {
            return Err(Error::InvalidParameter(
                "regularization parameters must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Objective from per-sample values. `g` values are clipped at 0 first.
pub fn j_ub_from_values(
    losses: &[f64],
    g_train: &[f64],
    g_test: &[f64],
    m: f64,
    c: f64,
) -> Result<f64> {
    if losses.is_empty() || g_test.is_empty() {
        return Err(Error::Empty(
            "objective needs training and test samples".into(),
        ));
    }
    if losses.len() != g_train.len() {
        return Err(Error::Dimension(format!(
            "{} losses for {} weight values",
            losses.len(),
            g_train.len()
        )));
    }
    let n_tr = losses.len() as f64;
    let n_te = g_test.len() as f64;
    let weighted: f64 = losses
        .iter()
        .zip(g_train)
        .map(|(l, g)| l * g.max(0.0))
        .sum::<f64>()
        / n_tr;
    let sq: f64 = g_train.iter().map(|g| g.max(0.0).powi(2)).sum::<f64>() / n_tr;
    let te: f64 = g_test.iter().map(|g| g.max(0.0)).sum::<f64>() / n_te;
    Ok(weighted * weighted + m * m * (sq - 2.0 * te + c))
}

/// Empirical objective of predictor `f` and weight model `g` on `data`.
pub fn j_ub_empirical<P: Predictor + ?Sized>(
    f: &P,
    g: &LinearModel,
    data: &Dataset,
    spec: &ObjectiveSpec,
) -> Result<f64> {
    let losses = pointwise_losses(f, &data.train_x, &data.train_y, &spec.surrogate)?;
    let g_tr = g.predict(&data.train_x)?;
    let g_te = g.predict(&data.test_x)?;
    j_ub_from_values(
        &losses,
        g_tr.as_slice(),
        g_te.as_slice(),
        spec.bound_m,
        spec.constant_c,
    )
}
