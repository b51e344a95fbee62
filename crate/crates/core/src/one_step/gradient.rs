use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{KernelBasis, LinearModel};
use crate::linalg;
use crate::loss::softmax;
use crate::predictor::Predictor;
use crate::seed;

use super::objective::ObjectiveSpec;

/// Linear multiclass classifier: logits `W ψ(x)` with `W` of shape K × b.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel {
    basis: KernelBasis,
    weights: DMatrix<f64>,
}

impl SoftmaxModel {
    pub fn zeros(basis: KernelBasis, n_classes: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        let b = basis.size();
        Ok(Self {
            basis,
            weights: DMatrix::zeros(n_classes, b),
        })
    }

    pub fn new(basis: KernelBasis, weights: DMatrix<f64>) -> Result<Self> {
        if weights.ncols() != basis.size() || weights.nrows() < 2 {
            return Err(Error::Dimension(format!(
                "weights are {}×{} for a basis of size {}",
                weights.nrows(),
                weights.ncols(),
                basis.size()
            )));
        }
        Ok(Self { basis, weights })
    }

    pub fn basis(&self) -> &KernelBasis {
        &self.basis
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    /// Predicted class per row.
    pub fn classify(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        let out = self.outputs(x)?;
        Ok((0..out.nrows())
            .map(|i| crate::loss::argmax(&out.row(i).iter().copied().collect::<Vec<_>>()))
            .collect())
    }
}

impl Predictor for SoftmaxModel {
    fn outputs(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.basis.design_matrix(x)? * self.weights.transpose())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradAltConfig {
    pub rounds: usize,
    pub epochs_g: usize,
    pub epochs_f: usize,
    pub batch_size: usize,
    pub lr_g: f64,
    /// Adam step size for f; halved every `lr_f_halving_period` rounds.
    pub lr_f: f64,
    pub lr_f_halving_period: usize,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    /// Upper clip for the pretrained ratio targets.
    pub g_cap: f64,
}

impl Default for GradAltConfig {
    fn default() -> Self {
        Self {
            rounds: 20,
            epochs_g: 5,
            epochs_f: 10,
            batch_size: 128,
            lr_g: 0.01,
            lr_f: 0.01,
            lr_f_halving_period: 4,
            pretrain_epochs: 20,
            pretrain_lr: 0.1,
            g_cap: 50.0,
        }
    }
}

impl GradAltConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "batch size must be positive".into(),
            ));
        }
        for (name, v) in [
            ("lr_g", self.lr_g),
            ("lr_f", self.lr_f),
            ("pretrain_lr", self.pretrain_lr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.g_cap > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "g cap must be positive, got {}",
                self.g_cap
            )));
        }
        Ok(())
    }

    fn lr_f_at(&self, round: usize) -> f64 {
        match round.checked_div(self.lr_f_halving_period) {
            Some(halvings) => self.lr_f * 0.5f64.powi(halvings as i32),
            None => self.lr_f,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradAltResult {
    pub f_model: SoftmaxModel,
    pub g_model: LinearModel,
    /// Minibatches whose clipped weights were all zero and fell back to uniform.
    pub fallback_batches: usize,
    /// Full-data objective (clipped g, C = 0) after each round.
    pub objective_trace: Vec<f64>,
    /// Smallest batch weight seen across all f-steps.
    pub min_batch_weight: f64,
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub g_model: LinearModel,
    /// Logistic discriminator over g's basis; positive logit means test-like.
    pub discriminator: LinearModel,
    /// Clipped ratio targets at the training inputs followed by the test inputs.
    pub targets: DVector<f64>,
}

/// Clip at zero and normalize to sum one; all-zero batches become uniform.
/// Returns the weights and whether the fallback fired.
pub fn normalize_batch_weights(raw: &[f64]) -> (Vec<f64>, bool) {
    let clipped: Vec<f64> = raw.iter().map(|w| w.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total > 0.0 && total.is_finite() {
        (clipped.iter().map(|w| w / total).collect(), false)
    } else {
        let n = raw.len().max(1) as f64;
        (vec![1.0 / n; raw.len()], true)
    }
}

/// Value and gradient of `Σ_j w_j CE(W φ_j, y_j) + λ_f ‖W‖²`.
pub fn weighted_ce_gradient(
    weights_kb: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    y: &[usize],
    w: &[f64],
    lambda_f: f64,
) -> Result<(f64, DMatrix<f64>)> {
    let k = weights_kb.nrows();
    if phi.ncols() != weights_kb.ncols() || phi.nrows() != y.len() || y.len() != w.len() {
        return Err(Error::Dimension("inconsistent batch shapes".into()));
    }
    let logits = phi * weights_kb.transpose();
    let mut value = lambda_f * weights_kb.norm_squared();
    let mut grad = weights_kb * (2.0 * lambda_f);
    for j in 0..y.len() {
        if y[j] >= k {
            return Err(Error::InvalidParameter(format!(
                "class index {} is not in 0..{k}",
                y[j]
            )));
        }
        let row: Vec<f64> = logits.row(j).iter().copied().collect();
        let p = softmax(&row);
        value -= w[j] * p[y[j]].max(f64::MIN_POSITIVE).ln();
        for c in 0..k {
            let coef = w[j] * (p[c] - if c == y[j] { 1.0 } else { 0.0 });
            if coef != 0.0 {
                for t in 0..phi.ncols() {
                    grad[(c, t)] += coef * phi[(j, t)];
                }
            }
        }
    }
    Ok((value, grad))
}

/// Value and gradient in β of the smooth objective with unclipped `g = βᵀψ`:
/// `(mean_tr[l g])² + m²(mean_tr[g²] − 2 mean_te[g]) + λ_g‖β‖²`.
pub fn j_ub_gradient(
    beta: &DVector<f64>,
    losses: &DVector<f64>,
    psi_tr: &DMatrix<f64>,
    psi_te: &DMatrix<f64>,
    m: f64,
    lambda_g: f64,
) -> Result<(f64, DVector<f64>)> {
    if psi_tr.nrows() != losses.len()
        || psi_tr.ncols() != beta.len()
        || psi_te.ncols() != beta.len()
    {
        return Err(Error::Dimension("inconsistent objective shapes".into()));
    }
    if psi_tr.nrows() == 0 || psi_te.nrows() == 0 {
        return Err(Error::Empty(
            "objective needs training and test samples".into(),
        ));
    }
    let n_tr = psi_tr.nrows() as f64;
    let g_tr = psi_tr * beta;
    let g_te = psi_te * beta;
    let a = losses.dot(&g_tr) / n_tr;
    let m2 = m * m;
    let value = a * a
        + m2 * (g_tr.norm_squared() / n_tr - 2.0 * g_te.mean())
        + lambda_g * beta.norm_squared();
    let lw = psi_tr.tr_mul(losses) / n_tr;
    let gw = psi_tr.tr_mul(&g_tr) / n_tr;
    let te = linalg::column_means(psi_te);
    let grad = lw * (2.0 * a) + (gw - te) * (2.0 * m2) + beta * (2.0 * lambda_g);
    Ok((value, grad))
}

struct Adam {
    m: DMatrix<f64>,
    v: DMatrix<f64>,
    t: i32,
}

impl Adam {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: DMatrix::zeros(rows, cols),
            v: DMatrix::zeros(rows, cols),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut DMatrix<f64>, grad: &DMatrix<f64>, lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

fn class_labels(y: &DVector<f64>, k: usize) -> Result<Vec<usize>> {
    y.iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 && (v as usize) < k {
                Ok(v as usize)
            } else {
                Err(Error::InvalidParameter(format!(
                    "class index {v} is not in 0..{k}"
                )))
            }
        })
        .collect()
}

fn count_classes(y: &DVector<f64>) -> usize {
    y.iter().fold(0.0f64, |a, &b| a.max(b)) as usize + 1
}

/// Training state of f shared by the alternating and the fixed-weight loops.
struct FTrainer<'a> {
    phi: &'a DMatrix<f64>,
    labels: Vec<usize>,
    weights: DMatrix<f64>,
    adam: Adam,
    lambda_f: f64,
    batch_size: usize,
    rng: seed::Rng,
    order: Vec<usize>,
    fallback_batches: usize,
    min_batch_weight: f64,
}

impl<'a> FTrainer<'a> {
    fn new(
        phi: &'a DMatrix<f64>,
        labels: Vec<usize>,
        k: usize,
        lambda_f: f64,
        batch_size: usize,
        seed: u64,
    ) -> Self {
        Self {
            phi,
            labels,
            weights: DMatrix::zeros(k, phi.ncols()),
            adam: Adam::new(k, phi.ncols()),
            lambda_f,
            batch_size,
            rng: seed::rng(seed),
            order: (0..phi.nrows()).collect(),
            fallback_batches: 0,
            min_batch_weight: f64::INFINITY,
        }
    }

    fn epoch(&mut self, raw_weight: &DVector<f64>, lr: f64) -> Result<()> {
        self.order.shuffle(&mut self.rng);
        let order = self.order.clone();
        for batch in order.chunks(self.batch_size) {
            let raw: Vec<f64> = batch.iter().map(|&i| raw_weight[i]).collect();
            let (w, fallback) = normalize_batch_weights(&raw);
            if fallback {
                self.fallback_batches += 1;
            }
            self.min_batch_weight = w.iter().copied().fold(self.min_batch_weight, f64::min);
            let phi_b = linalg::select_rows(self.phi, batch);
            let y_b: Vec<usize> = batch.iter().map(|&i| self.labels[i]).collect();
            let (_, grad) = weighted_ce_gradient(&self.weights, &phi_b, &y_b, &w, self.lambda_f)?;
            self.adam.step(&mut self.weights, &grad, lr);
        }
        if self.weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("classifier weights diverged".into()));
        }
        Ok(())
    }
}

/// Minibatch Adam on the weighted cross-entropy with fixed per-sample
/// weights, using the same round/epoch/halving schedule as [`grad_alt_fit`].
/// Uniform weights give ordinary ERM.
#[allow(clippy::too_many_arguments)]
pub fn train_weighted_classifier(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    basis: &KernelBasis,
    n_classes: usize,
    lambda_f: f64,
    config: &GradAltConfig,
    seed: u64,
) -> Result<(SoftmaxModel, usize)> {
    config.validate()?;
    if weights.len() != x.nrows() {
        return Err(Error::Dimension(format!(
            "{} weights for {} samples",
            weights.len(),
            x.nrows()
        )));
    }
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidParameter(
            "weights must be nonnegative and finite".into(),
        ));
    }
    let phi = basis.design_matrix(x)?;
    let labels = class_labels(y, n_classes)?;
    let mut trainer = FTrainer::new(
        &phi,
        labels,
        n_classes,
        lambda_f,
        config.batch_size,
        seed::derive_named(seed, "f"),
    );
    for round in 0..config.rounds {
        let lr = config.lr_f_at(round);
        for _ in 0..config.epochs_f {
            trainer.epoch(weights, lr)?;
        }
    }
    let fallback = trainer.fallback_batches;
    Ok((SoftmaxModel::new(basis.clone(), trainer.weights)?, fallback))
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Initialize g from a logistic discriminator separating training inputs
/// (label 0) from test inputs (label 1). The odds estimate
/// `(n_tr/n_te) exp(logit)`, clipped to `[0, g_cap]`, is evaluated at all
/// inputs and g is fitted to it by least squares. With zero epochs g is
/// returned unchanged.
pub fn pretrain_g_discriminator(
    data: &Dataset,
    g: &LinearModel,
    config: &GradAltConfig,
    seed: u64,
) -> Result<Pretrained> {
    config.validate()?;
    let basis = g.basis().clone();
    let b = basis.size();
    if config.pretrain_epochs == 0 {
        return Ok(Pretrained {
            g_model: g.clone(),
            discriminator: LinearModel::zeros(basis),
            targets: DVector::zeros(0),
        });
    }
    let psi = basis.design_matrix(&data.all_inputs())?;
    let n_tr = data.n_train();
    let n = psi.nrows();
    let label = |i: usize| if i < n_tr { 0.0 } else { 1.0 };
    let mut theta = DVector::zeros(b);
    let mut rng = seed::rng(seed::derive_named(seed, "pretrain"));
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..config.pretrain_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let mut grad = DVector::zeros(b);
            for &i in batch {
                let row = psi.row(i);
                let s = row
                    .iter()
                    .zip(theta.iter())
                    .map(|(a, t)| a * t)
                    .sum::<f64>();
                let r = sigmoid(s) - label(i);
                for t in 0..b {
                    grad[t] += r * row[t];
                }
            }
            theta -= grad * (config.pretrain_lr / batch.len() as f64);
        }
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("discriminator diverged".into()));
    }
    let prior = n_tr as f64 / data.n_test() as f64;
    let logits = &psi * &theta;
    let targets = logits.map(|s| (prior * s.min(700.0).exp()).clamp(0.0, config.g_cap));
    let gram = psi.tr_mul(&psi) / n as f64;
    let rhs = psi.tr_mul(&targets) / n as f64;
    let ridge = 1e-8;
    let mut a = gram;
    for i in 0..b {
        a[(i, i)] += ridge;
    }
    let beta = linalg::solve_spd(&a, &rhs, ridge, "pretraining fit")?;
    Ok(Pretrained {
        g_model: LinearModel::new(basis.clone(), beta)?,
        discriminator: LinearModel::new(basis, theta)?,
        targets,
    })
}

/// Gradient-based alternating minimization. Each round runs `epochs_g`
/// epochs of SGD on β (train and test minibatches) and then `epochs_f`
/// epochs of Adam on f with batch weights `max(g, 0)` normalized to sum one.
/// When `pretrain_epochs > 0`, `g` is first initialized by
/// [`pretrain_g_discriminator`].
pub fn grad_alt_fit(
    data: &Dataset,
    f_basis: &KernelBasis,
    g_init: &LinearModel,
    spec: &ObjectiveSpec,
    config: &GradAltConfig,
    seed: u64,
) -> Result<GradAltResult> {
    spec.validate()?;
    config.validate()?;
    let k = count_classes(&data.train_y).max(2);
    let labels = class_labels(&data.train_y, k)?;
    let g_model = if config.pretrain_epochs > 0 {
        pretrain_g_discriminator(data, g_init, config, seed)?.g_model
    } else {
        g_init.clone()
    };
    let g_basis = g_model.basis().clone();
    let mut beta = g_model.coefficients().clone();
    let phi = f_basis.design_matrix(&data.train_x)?;
    let psi_tr = g_basis.design_matrix(&data.train_x)?;
    let psi_te = g_basis.design_matrix(&data.test_x)?;
    let mut f = FTrainer::new(
        &phi,
        labels.clone(),
        k,
        spec.lambda_f,
        config.batch_size,
        seed::derive_named(seed, "f"),
    );
    let mut rng_g = seed::rng(seed::derive_named(seed, "g"));
    let mut tr_order: Vec<usize> = (0..data.n_train()).collect();
    let mut te_order: Vec<usize> = (0..data.n_test()).collect();
    let mut trace = Vec::with_capacity(config.rounds);
    for round in 0..config.rounds {
        for _ in 0..config.epochs_g {
            tr_order.shuffle(&mut rng_g);
            te_order.shuffle(&mut rng_g);
            let mut te_pos = 0;
            for batch in tr_order.chunks(config.batch_size) {
                let te_batch: Vec<usize> = (0..config.batch_size.min(te_order.len()))
                    .map(|j| te_order[(te_pos + j) % te_order.len()])
                    .collect();
                te_pos = (te_pos + te_batch.len()) % te_order.len();
                let phi_b = linalg::select_rows(&phi, batch);
                let losses = batch_ce(&f.weights, &phi_b, batch, &labels);
                let (_, grad) = j_ub_gradient(
                    &beta,
                    &losses,
                    &linalg::select_rows(&psi_tr, batch),
                    &linalg::select_rows(&psi_te, &te_batch),
                    spec.bound_m,
                    spec.lambda_g,
                )?;
                beta -= grad * config.lr_g;
            }
            if beta.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "weight model diverged in round {round}"
                )));
            }
        }
        let g_tr = &psi_tr * &beta;
        let lr = config.lr_f_at(round);
        for _ in 0..config.epochs_f {
            f.epoch(&g_tr, lr)?;
        }
        let all: Vec<usize> = (0..data.n_train()).collect();
        let losses = batch_ce(&f.weights, &phi, &all, &labels);
        let g_te = &psi_te * &beta;
        trace.push(super::objective::j_ub_from_values(
            losses.as_slice(),
            g_tr.as_slice(),
            g_te.as_slice(),
            spec.bound_m,
            0.0,
        )?);
    }
    let min_batch_weight = f.min_batch_weight;
    let fallback_batches = f.fallback_batches;
    Ok(GradAltResult {
        f_model: SoftmaxModel::new(f_basis.clone(), f.weights)?,
        g_model: LinearModel::new(g_basis, beta)?,
        fallback_batches,
        objective_trace: trace,
        min_batch_weight,
    })
}

fn batch_ce(
    weights: &DMatrix<f64>,
    phi_b: &DMatrix<f64>,
    batch: &[usize],
    labels: &[usize],
) -> DVector<f64> {
    let logits = phi_b * weights.transpose();
    DVector::from_iterator(
        batch.len(),
        batch.iter().enumerate().map(|(j, &i)| {
            let row: Vec<f64> = logits.row(j).iter().copied().collect();
            -softmax(&row)[labels[i]].max(f64::MIN_POSITIVE).ln()
        }),
    )
}
