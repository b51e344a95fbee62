//! Weighted empirical risk minimization over linear-in-parameter models.
//!
//! Objective: `(1/n) Σ w_i ℓ(f(x_i), y_i) + λ ‖α‖²`. The squared loss has a
//! closed form, Tukey's loss is handled by IRLS, anything else by full-batch
//! subgradient descent.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{KernelBasis, LinearModel};
use crate::linalg;
use crate::loss::{self, LossKind, LossSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedFitConfig {
    pub loss: LossSpec,
    pub lambda_f: f64,
    /// Flattening exponent applied to importance weights.
    pub gamma: f64,
    pub max_irls_iters: usize,
    pub irls_tol: f64,
    pub gd_steps: usize,
    /// Step size for the subgradient path; `None` picks `1/L` from the data.
    pub gd_lr: Option<f64>,
}

impl Default for WeightedFitConfig {
    fn default() -> Self {
        Self {
            loss: LossSpec::squared(),
            lambda_f: 1e-3,
            gamma: 1.0,
            max_irls_iters: 100,
            irls_tol: 1e-8,
            gd_steps: 2000,
            gd_lr: None,
        }
    }
}

impl WeightedFitConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.lambda_f >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda_f must be nonnegative, got {}",
                self.lambda_f
            )));
        }
        if !(self.irls_tol > 0.0) {
            return Err(Error::InvalidParameter("irls_tol must be positive".into()));
        }
        Ok(())
    }
}

fn check_weights(weights: &DVector<f64>, n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::Dimension(format!(
            "{} weights for {n} samples",
            weights.len()
        )));
    }
    if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "weight {i} is {w}; weights must be nonnegative"
        )));
    }
    Ok(())
}

/// Weighted ridge on a precomputed design: `(Φᵀ W Φ + λ n I)⁻¹ Φᵀ W y`.
pub fn weighted_ridge_coefficients(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    lambda_f: f64,
) -> Result<DVector<f64>> {
    let n = phi.nrows();
    check_weights(weights, n)?;
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "{} targets for {n} samples",
            y.len()
        )));
    }
    if !(lambda_f >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda_f must be nonnegative, got {lambda_f}"
        )));
    }
    let mut a = linalg::weighted_gram(phi, weights);
    let ridge = lambda_f * n as f64;
    for i in 0..a.nrows() {
        a[(i, i)] += ridge;
    }
    let rhs = phi.transpose() * y.component_mul(weights);
    linalg::solve_spd(&a, &rhs, ridge, "weighted ridge system")
}

pub fn weighted_ridge_fit(
    train_x: &DMatrix<f64>,
    train_y: &DVector<f64>,
    weights: &DVector<f64>,
    basis: &KernelBasis,
    lambda_f: f64,
) -> Result<LinearModel> {
    let phi = basis.design_matrix(train_x)?;
    let alpha = weighted_ridge_coefficients(&phi, train_y, weights, lambda_f)?;
    LinearModel::new(basis.clone(), alpha)
}

/// Elementwise `raw^γ` with `0^0 = 1`.
pub fn flatten_weights(raw: &DVector<f64>, gamma: f64) -> DVector<f64> {
    raw.map(|r| {
        if gamma == 0.0 {
            1.0
        } else {
            r.max(0.0).powf(gamma)
        }
    })
}

/// `(1/n) Σ w_i ℓ(f_i, y_i) + λ ‖α‖²` for scalar predictions.
pub fn weighted_objective(
    loss: &LossSpec,
    predictions: &DVector<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    coefficients: &DVector<f64>,
    lambda_f: f64,
) -> Result<f64> {
    let n = predictions.len();
    let mut total = 0.0;
    for i in 0..n {
        total += weights[i] * loss.scalar(predictions[i], y[i])?;
    }
    Ok(total / n as f64 + lambda_f * coefficients.dot(coefficients))
}

#[derive(Debug, Clone)]
pub struct IrlsFit {
    pub model: LinearModel,
    /// Weighted Tukey objective after the warm start and after each iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// IRLS on a precomputed design. Starts from the squared-loss weighted ridge
/// solution and majorizes each Tukey term by a weighted squared residual.
pub fn irls_tukey_coefficients(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    lambda_f: f64,
    rho: f64,
    max_iters: usize,
    tol: f64,
) -> Result<(DVector<f64>, Vec<f64>, usize, bool)> {
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rho must be positive, got {rho}"
        )));
    }
    let spec = LossSpec::tukey().with_rho(rho);
    let mut alpha = weighted_ridge_coefficients(phi, y, weights, lambda_f)?;
    let mut pred = phi * &alpha;
    let mut trace = vec![weighted_objective(
        &spec, &pred, y, weights, &alpha, lambda_f,
    )?];
    // slope of the rescaled Tukey loss in r² at r = 0
    let scale = 3.0 / (rho * rho);
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        let combined = DVector::from_fn(y.len(), |i, _| {
            weights[i] * scale * loss::tukey_irls_weight(pred[i] - y[i], rho)
        });
        let next = weighted_ridge_coefficients(phi, y, &combined, lambda_f)?;
        let change = (&next - &alpha).amax();
        alpha = next;
        pred = phi * &alpha;
        trace.push(weighted_objective(
            &spec, &pred, y, weights, &alpha, lambda_f,
        )?);
        if change < tol {
            converged = true;
            break;
        }
    }
    Ok((alpha, trace, iterations, converged))
}

#[allow(clippy::too_many_arguments)]
pub fn irls_tukey_fit(
    train_x: &DMatrix<f64>,
    train_y: &DVector<f64>,
    weights: &DVector<f64>,
    basis: &KernelBasis,
    lambda_f: f64,
    rho: f64,
    max_iters: usize,
    tol: f64,
) -> Result<IrlsFit> {
    let phi = basis.design_matrix(train_x)?;
    let (alpha, trace, iterations, converged) =
        irls_tukey_coefficients(&phi, train_y, weights, lambda_f, rho, max_iters, tol)?;
    Ok(IrlsFit {
        model: LinearModel::new(basis.clone(), alpha)?,
        trace,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone)]
pub struct SubgradientFit {
    pub model: LinearModel,
    pub best_objective: f64,
    pub steps_taken: usize,
}

/// Full-batch subgradient descent from zero on a precomputed design.
/// Returns the iterate with the lowest recorded objective.
pub fn weighted_subgradient_coefficients(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    loss: &LossSpec,
    lambda_f: f64,
    steps: usize,
    lr: Option<f64>,
) -> Result<(DVector<f64>, f64)> {
    let n = phi.nrows();
    check_weights(weights, n)?;
    let b = phi.ncols();
    let lr = match lr {
        Some(lr) if lr > 0.0 => lr,
        Some(lr) => {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {lr}"
            )))
        }
        None => 1.0 / smoothness_bound(phi, weights, lambda_f),
    };
    let mut alpha = DVector::zeros(b);
    let mut pred = DVector::zeros(n);
    let mut best = (
        alpha.clone(),
        weighted_objective(loss, &pred, y, weights, &alpha, lambda_f)?,
    );
    for _ in 0..steps {
        let mut dpred = DVector::zeros(n);
        for i in 0..n {
            if weights[i] != 0.0 {
                dpred[i] = weights[i] * loss.derivative(&[pred[i]], y[i])?[0] / n as f64;
            }
        }
        let grad = phi.transpose() * dpred + &alpha * (2.0 * lambda_f);
        if !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite("subgradient".into()));
        }
        alpha -= grad * lr;
        pred = phi * &alpha;
        let obj = weighted_objective(loss, &pred, y, weights, &alpha, lambda_f)?;
        if obj < best.1 {
            best = (alpha.clone(), obj);
        }
    }
    Ok(best)
}

/// Lipschitz constant of the squared-loss gradient, used as a step-size scale.
fn smoothness_bound(phi: &DMatrix<f64>, weights: &DVector<f64>, lambda_f: f64) -> f64 {
    let gram = linalg::weighted_gram(phi, weights) / phi.nrows() as f64;
    let top = gram.symmetric_eigenvalues().max();
    (2.0 * top + 2.0 * lambda_f).max(1e-12)
}

#[allow(clippy::too_many_arguments)]
pub fn weighted_subgradient_fit(
    train_x: &DMatrix<f64>,
    train_y: &DVector<f64>,
    weights: &DVector<f64>,
    basis: &KernelBasis,
    loss: &LossSpec,
    lambda_f: f64,
    steps: usize,
    lr: Option<f64>,
) -> Result<SubgradientFit> {
    let phi = basis.design_matrix(train_x)?;
    let (alpha, best_objective) =
        weighted_subgradient_coefficients(&phi, train_y, weights, loss, lambda_f, steps, lr)?;
    Ok(SubgradientFit {
        model: LinearModel::new(basis.clone(), alpha)?,
        best_objective,
        steps_taken: steps,
    })
}

/// Fit by the path matching `config.loss` on a precomputed design.
pub fn fit_weighted_coefficients(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    config: &WeightedFitConfig,
) -> Result<DVector<f64>> {
    match config.loss.kind {
        LossKind::Squared => weighted_ridge_coefficients(phi, y, weights, config.lambda_f),
        LossKind::Tukey => irls_tukey_coefficients(
            phi,
            y,
            weights,
            config.lambda_f,
            config.loss.rho,
            config.max_irls_iters,
            config.irls_tol,
        )
        .map(|(a, ..)| a),
        LossKind::Hinge => weighted_subgradient_coefficients(
            phi,
            y,
            weights,
            &config.loss,
            config.lambda_f,
            config.gd_steps,
            config.gd_lr,
        )
        .map(|(a, _)| a),
        other => Err(Error::InvalidParameter(format!(
            "{} is not a trainable surrogate for scalar models",
            other.name()
        ))),
    }
}

/// Weighted fit with the configured flattening applied to `importance`.
pub fn fit_weighted(
    train_x: &DMatrix<f64>,
    train_y: &DVector<f64>,
    importance: &DVector<f64>,
    basis: &KernelBasis,
    config: &WeightedFitConfig,
) -> Result<LinearModel> {
    config.validate()?;
    let phi = basis.design_matrix(train_x)?;
    let w = flatten_weights(importance, config.gamma);
    let alpha = fit_weighted_coefficients(&phi, train_y, &w, config)?;
    LinearModel::new(basis.clone(), alpha)
}
