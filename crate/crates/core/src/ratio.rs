//! Least-squares density-ratio fitting (uLSIF and its relative variant).
//!
//! The weight model is `g(x) = βᵀψ(x)` over a nonnegative basis. Coefficients
//! come from a regularized quadratic in closed form and are then clipped at
//! zero, which keeps `g` nonnegative wherever the basis is.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{KernelBasis, LinearModel};
use crate::linalg;
use crate::selection::FoldPlan;

/// A fitted (relative) importance model.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioModel {
    pub model: LinearModel,
    /// Relative parameter α; 0 means the plain importance p_te/p_tr.
    pub alpha: f64,
    pub lambda_g: f64,
    /// Coefficients before clipping at zero.
    pub raw_coefficients: DVector<f64>,
}

impl RatioModel {
    /// Estimated ratio at each row of `x`; never negative.
    pub fn evaluate(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(self.model.predict(x)?.map(|v| v.max(0.0)))
    }
}

/// Closed-form solve from precomputed design matrices. Returns (raw, clipped).
pub(crate) fn relative_ratio_coefficients(
    psi_tr: &DMatrix<f64>,
    psi_te: &DMatrix<f64>,
    alpha: f64,
    lambda_g: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    if !(lambda_g >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda_g must be nonnegative, got {lambda_g}"
        )));
    }
    let (n_tr, n_te) = (psi_tr.nrows() as f64, psi_te.nrows() as f64);
    if psi_tr.nrows() == 0 || psi_te.nrows() == 0 {
        return Err(Error::Empty(
            "ratio fitting needs train and test inputs".into(),
        ));
    }
    let b = psi_tr.ncols();
    let mut h_mat = psi_tr.transpose() * psi_tr * ((1.0 - alpha) / n_tr);
    if alpha > 0.0 {
        h_mat += psi_te.transpose() * psi_te * (alpha / n_te);
    }
    for i in 0..b {
        h_mat[(i, i)] += lambda_g;
    }
    let h = linalg::column_means(psi_te);
    let raw = linalg::solve_spd(&h_mat, &h, lambda_g, "density-ratio system")?;
    let clipped = raw.map(|v| v.max(0.0));
    Ok((raw, clipped))
}

/// Fit the plain importance `p_te/p_tr` by uLSIF.
pub fn ulsif_fit(
    train_x: &DMatrix<f64>,
    test_x: &DMatrix<f64>,
    basis: &KernelBasis,
    lambda_g: f64,
) -> Result<RatioModel> {
    rulsif_fit(train_x, test_x, basis, 0.0, lambda_g)
}

/// Fit the α-relative importance `p_te / (α p_te + (1 − α) p_tr)`.
pub fn rulsif_fit(
    train_x: &DMatrix<f64>,
    test_x: &DMatrix<f64>,
    basis: &KernelBasis,
    alpha: f64,
    lambda_g: f64,
) -> Result<RatioModel> {
    let psi_tr = basis.design_matrix(train_x)?;
    let psi_te = basis.design_matrix(test_x)?;
    let (raw, clipped) = relative_ratio_coefficients(&psi_tr, &psi_te, alpha, lambda_g)?;
    Ok(RatioModel {
        model: LinearModel::new(basis.clone(), clipped)?,
        alpha,
        lambda_g,
        raw_coefficients: raw,
    })
}

/// The squared-error objective `½ mean_mix[g²] − mean_te[g]` on held-out values.
pub fn ratio_objective(g_train: &[f64], g_test: &[f64], alpha: f64) -> f64 {
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().map(|x| f(*x)).sum::<f64>() / v.len() as f64
        }
    };
    let sq_tr = mean(g_train, &|g| g * g);
    let sq_te = mean(g_test, &|g| g * g);
    0.5 * ((1.0 - alpha) * sq_tr + alpha * sq_te) - mean(g_test, &|g| g)
}

/// k-fold held-out value of the fitting objective; lower is better.
///
/// Train and test inputs are folded independently by `plan`.
pub fn ratio_cv_score(
    train_x: &DMatrix<f64>,
    test_x: &DMatrix<f64>,
    basis: &KernelBasis,
    alpha: f64,
    lambda_g: f64,
    plan: &FoldPlan,
) -> Result<f64> {
    let test_plan = plan
        .test
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("ratio CV needs test folds in the plan".into()))?;
    if plan.train.assignments.len() != train_x.nrows()
        || test_plan.assignments.len() != test_x.nrows()
    {
        return Err(Error::Dimension("fold plan does not match the data".into()));
    }
    let psi_tr = basis.design_matrix(train_x)?;
    let psi_te = basis.design_matrix(test_x)?;
    let mut total = 0.0;
    for fold in 0..plan.k {
        let (fit_tr, held_tr) = plan.train.split(fold);
        let (fit_te, held_te) = test_plan.split(fold);
        let (_, beta) = relative_ratio_coefficients(
            &psi_tr.select_rows(&fit_tr),
            &psi_te.select_rows(&fit_te),
            alpha,
            lambda_g,
        )?;
        let g_tr: Vec<f64> = held_tr
            .iter()
            .map(|&i| (psi_tr.row(i) * &beta)[0].max(0.0))
            .collect();
        let g_te: Vec<f64> = held_te
            .iter()
            .map(|&i| (psi_te.row(i) * &beta)[0].max(0.0))
            .collect();
        total += ratio_objective(&g_tr, &g_te, alpha);
    }
    Ok(total / plan.k as f64)
}
