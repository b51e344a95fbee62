//! Tuning and fitting of one method on one trial's data.

use nalgebra::{DMatrix, DVector};

use super::config::{MethodConfig, MethodKind, Task};
use crate::data::{Dataset, EvalSet};
use crate::erm::{self, WeightedFitConfig};
use crate::error::{Error, Result};
use crate::kernel::{choose_centers, median_heuristic_bandwidth, KernelBasis, LinearModel};
use crate::loss::{LossKind, LossSpec};
use crate::one_step::{
    self, grad_alt_fit, pretrain_g_discriminator, train_weighted_classifier, AlternationState,
    GradAltConfig, ObjectiveSpec, OneStepOptions, SoftmaxModel,
};
use crate::ratio::{ratio_cv_score, rulsif_fit, RatioModel};
use crate::seed;
use crate::selection::{
    grid_search, iwcv_score, kfold_cv_score, one_step_cv_score, Cell, FoldPlan, HyperGrid, Param,
    Strategy,
};
use crate::stats::test_error;

/// Everything shared by the methods of one trial.
#[derive(Debug, Clone)]
pub struct TrialContext {
    pub data: Dataset,
    pub task: Task,
    pub seed: u64,
    pub folds: usize,
    pub basis_size: usize,
    pub grad: GradAltConfig,
}

/// A trained predictor of either shape.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Linear(LinearModel),
    Softmax(SoftmaxModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fitted {
    pub model: FittedModel,
    /// Selected hyperparameters as `key=value;...`.
    pub params: String,
}

/// Result of one method on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub error: f64,
    /// Selected hyperparameters as `key=value;...`.
    pub params: String,
}

const DEFAULT_CLASSIFIER_LAMBDA_F: f64 = 1e-4;
const DEFAULT_CLASSIFIER_LAMBDA_G: f64 = 1e-3;

/// Tune and fit `method` on the trial's training and test inputs.
pub fn fit_method(method: &MethodConfig, ctx: &TrialContext) -> Result<Fitted> {
    match ctx.task {
        Task::Multiclass => fit_classifier(method, ctx),
        Task::Regression | Task::Binary => KernelTrial::new(ctx)?.fit(method),
    }
}

/// Reporting error on `eval`: squared error for regression, misclassification
/// rate otherwise.
pub fn evaluate_fitted(model: &FittedModel, eval: &EvalSet, task: Task) -> Result<f64> {
    if eval.y.is_empty() {
        return Err(Error::Empty("eval set has no rows".into()));
    }
    match (model, task) {
        (FittedModel::Linear(m), Task::Regression) => test_error(m, eval, &LossSpec::squared()),
        (FittedModel::Linear(m), _) => test_error(m, eval, &LossSpec::zero_one()),
        (FittedModel::Softmax(m), _) => Ok(misclassification(&m.classify(&eval.x)?, &eval.y)),
    }
}

/// Fit, then evaluate on the trial's eval block.
pub fn run_method(method: &MethodConfig, ctx: &TrialContext) -> Result<MethodOutcome> {
    let eval = ctx
        .data
        .eval
        .as_ref()
        .ok_or_else(|| Error::Empty("trial has no labeled eval block".into()))?;
    let fitted = fit_method(method, ctx)?;
    Ok(MethodOutcome {
        error: evaluate_fitted(&fitted.model, eval, ctx.task)?,
        params: fitted.params,
    })
}

/// The tuned one-step fit of a regression or binary method, with the chosen
/// hyperparameters.
pub fn fit_one_step(method: &MethodConfig, ctx: &TrialContext) -> Result<(AlternationState, Cell)> {
    if method.kind != MethodKind::OneStep || ctx.task == Task::Multiclass {
        return Err(Error::InvalidParameter(
            "fit_one_step needs a one_step method on a scalar task".into(),
        ));
    }
    let trial = KernelTrial::new(ctx)?;
    trial.fit_one_step(method, trial.surrogate(method))
}

/// Kernel models with Gaussian bases whose centers come from the test inputs.
struct KernelTrial<'a> {
    ctx: &'a TrialContext,
    f_centers: DMatrix<f64>,
    g_centers: DMatrix<f64>,
    sigma_f: f64,
    sigma_g: f64,
    plan: FoldPlan,
    paired: FoldPlan,
}

impl<'a> KernelTrial<'a> {
    fn new(ctx: &'a TrialContext) -> Result<Self> {
        let d = &ctx.data;
        let f_centers = choose_centers(
            &d.test_x,
            ctx.basis_size,
            seed::derive_named(ctx.seed, "centers_f"),
        )?;
        let g_centers = choose_centers(
            &d.test_x,
            ctx.basis_size,
            seed::derive_named(ctx.seed, "centers_g"),
        )?;
        let all = d.all_inputs();
        let folds_seed = seed::derive_named(ctx.seed, "folds");
        Ok(Self {
            sigma_f: median_heuristic_bandwidth(&all, &f_centers)?,
            sigma_g: median_heuristic_bandwidth(&all, &g_centers)?,
            f_centers,
            g_centers,
            plan: FoldPlan::new(d.n_train(), ctx.folds, folds_seed)?,
            paired: FoldPlan::paired(d.n_train(), d.n_test(), ctx.folds, folds_seed)?,
            ctx,
        })
    }

    fn f_basis(&self, sigma: Option<f64>) -> Result<KernelBasis> {
        KernelBasis::gaussian(self.f_centers.clone(), sigma.unwrap_or(self.sigma_f))
    }

    fn g_basis(&self, sigma: Option<f64>) -> Result<KernelBasis> {
        KernelBasis::gaussian(self.g_centers.clone(), sigma.unwrap_or(self.sigma_g))
    }

    fn surrogate(&self, method: &MethodConfig) -> LossSpec {
        let kind = method.loss.unwrap_or(match self.ctx.task {
            Task::Binary => LossKind::Hinge,
            _ => LossKind::Squared,
        });
        LossSpec::new(kind)
    }

    /// True loss used inside CV and IWCV.
    fn cv_metric(&self) -> LossSpec {
        match self.ctx.task {
            Task::Binary => LossSpec::zero_one(),
            _ => LossSpec::tukey(),
        }
    }

    fn grid(&self, method: &MethodConfig, strategy: Strategy) -> HyperGrid {
        let mut g = HyperGrid::default_around(self.sigma_f, self.sigma_g, strategy);
        if let Some(v) = method.lambda_f {
            g.lambda_f_candidates = vec![v];
        }
        if let Some(v) = method.lambda_g {
            g.lambda_g_candidates = vec![v];
        }
        if let Some(v) = method.gamma {
            g.gamma_candidates = vec![v];
        }
        if let Some(v) = method.alpha {
            g.alpha_candidates = vec![v];
        }
        g
    }

    fn fit_config(&self, loss: LossSpec, lambda_f: f64) -> WeightedFitConfig {
        WeightedFitConfig {
            loss,
            lambda_f,
            gamma: 1.0,
            ..WeightedFitConfig::default()
        }
    }

    /// Weighted fit on the rows `idx` with per-row weights `w` (full length).
    fn fit_rows(
        &self,
        idx: &[usize],
        w: &DVector<f64>,
        basis: &KernelBasis,
        config: &WeightedFitConfig,
    ) -> Result<LinearModel> {
        let d = &self.ctx.data;
        let x = d.train_x.select_rows(idx);
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| d.train_y[i]));
        let wi = DVector::from_iterator(idx.len(), idx.iter().map(|&i| w[i]));
        let phi = basis.design_matrix(&x)?;
        LinearModel::new(
            basis.clone(),
            erm::fit_weighted_coefficients(&phi, &y, &wi, config)?,
        )
    }

    /// Relative-ratio fit with λ_g chosen by the built-in CV; σ_g is tuned
    /// too unless the strategy is the median heuristic.
    fn tuned_ratio(
        &self,
        method: &MethodConfig,
        alpha: f64,
        sigma_g: Option<f64>,
    ) -> Result<(RatioModel, Cell)> {
        let mut grid = self.grid(method, Strategy::FullGrid);
        if method.tuning == Strategy::MedianHeuristic || sigma_g.is_some() {
            grid.sigma_g_candidates = vec![sigma_g.unwrap_or(self.sigma_g)];
        }
        let cells = grid.cells(&[Param::SigmaG, Param::LambdaG])?;
        let d = &self.ctx.data;
        let best = grid_search(
            &cells,
            seed::derive_named(self.ctx.seed, "ratio-grid"),
            |c, _| {
                ratio_cv_score(
                    &d.train_x,
                    &d.test_x,
                    &self.g_basis(c.sigma_g)?,
                    alpha,
                    c.lambda_g.unwrap_or(0.0),
                    &self.paired,
                )
            },
        )?
        .best;
        let model = rulsif_fit(
            &d.train_x,
            &d.test_x,
            &self.g_basis(best.sigma_g)?,
            alpha,
            best.lambda_g.unwrap_or(0.0),
        )?;
        Ok((model, best))
    }

    fn fit_one_step(
        &self,
        method: &MethodConfig,
        loss: LossSpec,
    ) -> Result<(AlternationState, Cell)> {
        let d = &self.ctx.data;
        let seed_grid = seed::derive_named(self.ctx.seed, "grid");
        let options = OneStepOptions::default();
        let mut grid = self.grid(method, method.tuning);
        let mut fixed = Cell::default();
        if method.tuning == Strategy::UlsifHandoff {
            let (_, rcell) = self.tuned_ratio(method, 0.0, None)?;
            grid.sigma_g_candidates = vec![rcell.sigma_g.unwrap_or(self.sigma_g)];
            grid.lambda_g_candidates = vec![rcell.lambda_g.unwrap_or(0.0)];
            fixed = rcell;
        }
        let cells = grid.cells(&[Param::SigmaF, Param::SigmaG, Param::LambdaF, Param::LambdaG])?;
        let cells: Vec<Cell> = cells
            .into_iter()
            .map(|c| Cell {
                sigma_g: c.sigma_g.or(fixed.sigma_g),
                lambda_g: c.lambda_g.or(fixed.lambda_g),
                ..c
            })
            .collect();
        let best = grid_search(&cells, seed_grid, |c, _| {
            let spec =
                ObjectiveSpec::new(loss, c.lambda_f.unwrap_or(0.0), c.lambda_g.unwrap_or(0.0));
            one_step_cv_score(
                d,
                &self.f_basis(c.sigma_f)?,
                &self.g_basis(c.sigma_g)?,
                &spec,
                &self.paired,
                &options,
            )
        })?
        .best;
        let spec = ObjectiveSpec::new(
            loss,
            best.lambda_f.unwrap_or(0.0),
            best.lambda_g.unwrap_or(0.0),
        );
        let state = one_step::one_step_fit(
            d,
            &self.f_basis(best.sigma_f)?,
            &self.g_basis(best.sigma_g)?,
            &spec,
            &options,
        )?;
        Ok((state, best))
    }

    fn fit(&self, method: &MethodConfig) -> Result<Fitted> {
        let d = &self.ctx.data;
        let loss = self.surrogate(method);
        let metric = self.cv_metric();
        let n = d.n_train();
        let ones = DVector::from_element(n, 1.0);
        let seed_grid = seed::derive_named(self.ctx.seed, "grid");
        let (model, chosen): (LinearModel, Cell) = match method.kind {
            MethodKind::Erm => {
                let grid = self.grid(method, method.tuning);
                let cells = grid.cells(&[Param::SigmaF, Param::LambdaF])?;
                let best = grid_search(&cells, seed_grid, |c, _| {
                    let basis = self.f_basis(c.sigma_f)?;
                    let cfg = self.fit_config(loss, c.lambda_f.unwrap_or(0.0));
                    kfold_cv_score(&d.train_x, &d.train_y, &self.plan, &metric, |idx| {
                        self.fit_rows(idx, &ones, &basis, &cfg)
                    })
                })?
                .best;
                let cfg = self.fit_config(loss, best.lambda_f.unwrap_or(0.0));
                let all: Vec<usize> = (0..n).collect();
                (
                    self.fit_rows(&all, &ones, &self.f_basis(best.sigma_f)?, &cfg)?,
                    best,
                )
            }
            MethodKind::Iwerm | MethodKind::Eiwerm => {
                let (ratio, rcell) = self.tuned_ratio(method, 0.0, None)?;
                let importance = ratio.evaluate(&d.train_x)?;
                let mut grid = self.grid(method, method.tuning);
                if method.kind == MethodKind::Iwerm {
                    grid.gamma_candidates = vec![1.0];
                }
                let cells = grid.cells(&[Param::SigmaF, Param::LambdaF, Param::Gamma])?;
                let best = grid_search(&cells, seed_grid, |c, _| {
                    let basis = self.f_basis(c.sigma_f)?;
                    let cfg = self.fit_config(loss, c.lambda_f.unwrap_or(0.0));
                    let w = erm::flatten_weights(&importance, c.gamma.unwrap_or(1.0));
                    iwcv_score(
                        &d.train_x,
                        &d.train_y,
                        &importance,
                        &self.plan,
                        &metric,
                        |idx| self.fit_rows(idx, &w, &basis, &cfg),
                    )
                })?
                .best;
                let cfg = self.fit_config(loss, best.lambda_f.unwrap_or(0.0));
                let w = erm::flatten_weights(&importance, best.gamma.unwrap_or(1.0));
                let all: Vec<usize> = (0..n).collect();
                let chosen = Cell {
                    sigma_g: rcell.sigma_g,
                    lambda_g: rcell.lambda_g,
                    ..best
                };
                (
                    self.fit_rows(&all, &w, &self.f_basis(best.sigma_f)?, &cfg)?,
                    chosen,
                )
            }
            MethodKind::Riwerm => {
                let (ratio, rcell) = self.tuned_ratio(method, 0.0, None)?;
                let importance = ratio.evaluate(&d.train_x)?;
                let grid = self.grid(method, method.tuning);
                let mut relative: Vec<(f64, DVector<f64>, f64)> = Vec::new();
                for &a in &grid.alpha_candidates {
                    let (m, c) = self.tuned_ratio(method, a, rcell.sigma_g)?;
                    relative.push((a, m.evaluate(&d.train_x)?, c.lambda_g.unwrap_or(0.0)));
                }
                let weights_for = |a: f64| -> Result<&DVector<f64>> {
                    relative
                        .iter()
                        .find(|r| r.0 == a)
                        .map(|r| &r.1)
                        .ok_or_else(|| {
                            Error::InvalidParameter(format!("no relative ratio for alpha {a}"))
                        })
                };
                let cells = grid.cells(&[Param::SigmaF, Param::LambdaF, Param::Alpha])?;
                let best = grid_search(&cells, seed_grid, |c, _| {
                    let basis = self.f_basis(c.sigma_f)?;
                    let cfg = self.fit_config(loss, c.lambda_f.unwrap_or(0.0));
                    let w = weights_for(c.alpha.unwrap_or(0.0))?;
                    iwcv_score(
                        &d.train_x,
                        &d.train_y,
                        &importance,
                        &self.plan,
                        &metric,
                        |idx| self.fit_rows(idx, w, &basis, &cfg),
                    )
                })?
                .best;
                let alpha = best.alpha.unwrap_or(0.0);
                let cfg = self.fit_config(loss, best.lambda_f.unwrap_or(0.0));
                let all: Vec<usize> = (0..n).collect();
                let lambda_g = relative.iter().find(|r| r.0 == alpha).map(|r| r.2);
                let chosen = Cell {
                    sigma_g: rcell.sigma_g,
                    lambda_g,
                    ..best
                };
                (
                    self.fit_rows(
                        &all,
                        weights_for(alpha)?,
                        &self.f_basis(best.sigma_f)?,
                        &cfg,
                    )?,
                    chosen,
                )
            }
            MethodKind::OneStep => {
                let (state, best) = self.fit_one_step(method, loss)?;
                (state.f_model, best)
            }
            MethodKind::OneStepGrad => {
                return Err(Error::InvalidParameter(
                    "one_step_grad needs a multiclass task".into(),
                ));
            }
        };
        let chosen = Cell {
            sigma_f: Some(chosen.sigma_f.unwrap_or(self.sigma_f)),
            ..chosen
        };
        Ok(Fitted {
            model: FittedModel::Linear(model),
            params: chosen.describe(),
        })
    }
}

fn n_classes(data: &Dataset) -> usize {
    let mut max = data.train_y.iter().fold(0.0f64, |a, &b| a.max(b));
    if let Some(e) = &data.eval {
        max = e.y.iter().fold(max, |a, &b| a.max(b));
    }
    (max as usize + 1).max(2)
}

fn misclassification(predicted: &[usize], y: &DVector<f64>) -> f64 {
    let wrong = predicted
        .iter()
        .zip(y.iter())
        .filter(|(p, t)| **p as f64 != **t)
        .count();
    wrong as f64 / y.len().max(1) as f64
}

/// Linear softmax classifiers over raw features, trained by minibatch Adam.
fn fit_classifier(method: &MethodConfig, ctx: &TrialContext) -> Result<Fitted> {
    let d = &ctx.data;
    let basis = KernelBasis::raw_features(d.dim());
    let k = n_classes(d);
    let lambda_f = method.lambda_f.unwrap_or(DEFAULT_CLASSIFIER_LAMBDA_F);
    let lambda_g = method.lambda_g.unwrap_or(DEFAULT_CLASSIFIER_LAMBDA_G);
    let grad_seed = seed::derive_named(ctx.seed, "grad");
    let mut unit = DVector::zeros(basis.size());
    unit[basis.size() - 1] = 1.0;
    let g0 = LinearModel::new(basis.clone(), unit)?;
    let pretrained_weights = || -> Result<DVector<f64>> {
        let p = pretrain_g_discriminator(d, &g0, &ctx.grad, grad_seed)?;
        Ok(p.g_model.predict(&d.train_x)?.map(|v| v.max(0.0)))
    };
    let (model, params) = match method.kind {
        MethodKind::Erm => {
            let w = DVector::from_element(d.n_train(), 1.0);
            let (m, _) = train_weighted_classifier(
                &d.train_x, &d.train_y, &w, &basis, k, lambda_f, &ctx.grad, grad_seed,
            )?;
            (m, format!("lambda_f={lambda_f}"))
        }
        MethodKind::Iwerm | MethodKind::Eiwerm => {
            let gamma = method.gamma.unwrap_or(if method.kind == MethodKind::Iwerm {
                1.0
            } else {
                0.5
            });
            let w = erm::flatten_weights(&pretrained_weights()?, gamma);
            let (m, _) = train_weighted_classifier(
                &d.train_x, &d.train_y, &w, &basis, k, lambda_f, &ctx.grad, grad_seed,
            )?;
            (m, format!("lambda_f={lambda_f};gamma={gamma}"))
        }
        MethodKind::Riwerm => {
            let alpha = method.alpha.unwrap_or(0.5);
            let r = pretrained_weights()?;
            let w = r.map(|v| v / (alpha * v + 1.0 - alpha));
            let (m, _) = train_weighted_classifier(
                &d.train_x, &d.train_y, &w, &basis, k, lambda_f, &ctx.grad, grad_seed,
            )?;
            (m, format!("lambda_f={lambda_f};alpha={alpha}"))
        }
        MethodKind::OneStepGrad => {
            let spec = ObjectiveSpec::new(LossSpec::softmax_ce(), lambda_f, lambda_g);
            let fit = grad_alt_fit(d, &basis, &g0, &spec, &ctx.grad, grad_seed)?;
            (
                fit.f_model,
                format!("lambda_f={lambda_f};lambda_g={lambda_g}"),
            )
        }
        MethodKind::OneStep => {
            return Err(Error::InvalidParameter(
                "one_step needs a regression or binary task".into(),
            ));
        }
    };
    if model.n_classes() < k {
        return Err(Error::Dimension(
            "classifier has fewer classes than the labels".into(),
        ));
    }
    Ok(Fitted {
        model: FittedModel::Softmax(model),
        params,
    })
}
