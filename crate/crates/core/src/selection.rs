//! Model selection: fold plans, plain and importance-weighted cross
//! validation, held-out one-step objective, and grid search.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::KernelBasis;
use crate::loss::LossSpec;
use crate::one_step::{self, ObjectiveSpec, OneStepOptions};
use crate::predictor::{pointwise_losses, Predictor};
use crate::seed;

/// Default number of folds.
pub const DEFAULT_FOLDS: usize = 5;

/// Fold id for each of `n` indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldAssignment {
    pub k: usize,
    pub assignments: Vec<usize>,
}

impl FoldAssignment {
    /// Shuffled round-robin assignment; fold sizes differ by at most one.
    pub fn new(n: usize, k: usize, rng_seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 folds, got {k}"
            )));
        }
        if k > n {
            return Err(Error::InvalidParameter(format!(
                "{k} folds for only {n} samples"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng(rng_seed));
        let mut assignments = vec![0; n];
        for (pos, idx) in order.into_iter().enumerate() {
            assignments[idx] = pos % k;
        }
        Ok(Self { k, assignments })
    }

    /// (retained, held-out) indices for `fold`.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut keep = Vec::new();
        let mut held = Vec::new();
        for (i, f) in self.assignments.iter().enumerate() {
            if *f == fold {
                held.push(i);
            } else {
                keep.push(i);
            }
        }
        (keep, held)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub k: usize,
    pub train: FoldAssignment,
    /// Present when test inputs are folded alongside the training samples.
    pub test: Option<FoldAssignment>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn new(n_train: usize, k: usize, rng_seed: u64) -> Result<Self> {
        Ok(Self {
            k,
            train: FoldAssignment::new(n_train, k, seed::derive(rng_seed, 0))?,
            test: None,
            seed: rng_seed,
        })
    }

    pub fn paired(n_train: usize, n_test: usize, k: usize, rng_seed: u64) -> Result<Self> {
        Ok(Self {
            k,
            train: FoldAssignment::new(n_train, k, seed::derive(rng_seed, 0))?,
            test: Some(FoldAssignment::new(n_test, k, seed::derive(rng_seed, 1))?),
            seed: rng_seed,
        })
    }

    fn test_folds(&self) -> Result<&FoldAssignment> {
        self.test.as_ref().ok_or_else(|| {
            Error::InvalidParameter("this score needs test folds in the plan".into())
        })
    }
}

/// Mean held-out loss over folds.
pub fn kfold_cv_score<P, F>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    plan: &FoldPlan,
    metric: &LossSpec,
    trainer: F,
) -> Result<f64>
where
    P: Predictor,
    F: Fn(&[usize]) -> Result<P>,
{
    weighted_cv(x, y, None, plan, metric, trainer)
}

/// Importance-weighted CV: held-out losses are multiplied by `importance[i]`,
/// the estimated ratio at training point `i`.
pub fn iwcv_score<P, F>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    importance: &DVector<f64>,
    plan: &FoldPlan,
    metric: &LossSpec,
    trainer: F,
) -> Result<f64>
where
    P: Predictor,
    F: Fn(&[usize]) -> Result<P>,
{
    if importance.len() != x.nrows() {
        return Err(Error::Dimension(format!(
            "{} importance values for {} samples",
            importance.len(),
            x.nrows()
        )));
    }
    weighted_cv(x, y, Some(importance), plan, metric, trainer)
}

fn weighted_cv<P, F>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    importance: Option<&DVector<f64>>,
    plan: &FoldPlan,
    metric: &LossSpec,
    trainer: F,
) -> Result<f64>
where
    P: Predictor,
    F: Fn(&[usize]) -> Result<P>,
{
    if plan.train.assignments.len() != x.nrows() {
        return Err(Error::Dimension(format!(
            "fold plan covers {} samples, data has {}",
            plan.train.assignments.len(),
            x.nrows()
        )));
    }
    let mut total = 0.0;
    for fold in 0..plan.k {
        let (keep, held) = plan.train.split(fold);
        if held.is_empty() || keep.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "fold {fold} leaves an empty side"
            )));
        }
        let model = trainer(&keep)?;
        let hx = x.select_rows(&held);
        let hy = DVector::from_iterator(held.len(), held.iter().map(|&i| y[i]));
        let losses = pointwise_losses(&model, &hx, &hy, metric)?;
        let fold_sum: f64 = match importance {
            Some(r) => losses.iter().zip(held.iter()).map(|(l, &i)| r[i] * l).sum(),
            None => losses.iter().sum(),
        };
        total += fold_sum / held.len() as f64;
    }
    Ok(total / plan.k as f64)
}

/// Held-out one-step objective (C = 0), averaged over folds.
///
/// Returns [`Error::Degenerate`] when a fold's fitted weight model collapses
/// to g ≈ 0, whose objective value is trivially 0.
pub fn one_step_cv_score(
    data: &Dataset,
    f_basis: &KernelBasis,
    g_basis: &KernelBasis,
    spec: &ObjectiveSpec,
    plan: &FoldPlan,
    options: &OneStepOptions,
) -> Result<f64> {
    let test_folds = plan.test_folds()?;
    let prepared = one_step::Prepared::new(data, f_basis, g_basis)?;
    let mut total = 0.0;
    for fold in 0..plan.k {
        let (keep_tr, held_tr) = plan.train.split(fold);
        let (keep_te, held_te) = test_folds.split(fold);
        let fit_part = prepared.subset(&keep_tr, &keep_te);
        let state = one_step::fit_prepared(&fit_part, spec, options)?;
        let g_fit = &fit_part.psi_tr * state.g_model.coefficients();
        let mean_g = g_fit.iter().map(|g| g.max(0.0)).sum::<f64>() / g_fit.len() as f64;
        if mean_g < DEGENERATE_G_MEAN {
            return Err(Error::Degenerate(format!(
                "fold {fold}: fitted weight model has mean {mean_g:e} on training inputs"
            )));
        }
        let held = prepared.subset(&held_tr, &held_te);
        total += one_step::objective_on(
            &held,
            state.f_model.coefficients(),
            state.g_model.coefficients(),
            spec,
        )?;
    }
    Ok(total / plan.k as f64)
}

/// Mean training value of g below which a one-step fit is treated as g ≡ 0.
pub const DEGENERATE_G_MEAN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    FullGrid,
    MedianHeuristic,
    UlsifHandoff,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full_grid" | "full" | "cv" => Ok(Strategy::FullGrid),
            "median" | "median_heuristic" => Ok(Strategy::MedianHeuristic),
            "ulsif" | "ulsif_handoff" => Ok(Strategy::UlsifHandoff),
            other => Err(Error::InvalidParameter(format!(
                "unknown tuning strategy {other:?}"
            ))),
        }
    }
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::FullGrid => "full_grid",
            Strategy::MedianHeuristic => "median",
            Strategy::UlsifHandoff => "ulsif",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    SigmaF,
    SigmaG,
    LambdaF,
    LambdaG,
    Gamma,
    Alpha,
}

/// One point of a hyperparameter grid; unset parameters are not tuned.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Cell {
    pub sigma_f: Option<f64>,
    pub sigma_g: Option<f64>,
    pub lambda_f: Option<f64>,
    pub lambda_g: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
}

impl Cell {
    fn set(&mut self, p: Param, v: f64) {
        match p {
            Param::SigmaF => self.sigma_f = Some(v),
            Param::SigmaG => self.sigma_g = Some(v),
            Param::LambdaF => self.lambda_f = Some(v),
            Param::LambdaG => self.lambda_g = Some(v),
            Param::Gamma => self.gamma = Some(v),
            Param::Alpha => self.alpha = Some(v),
        }
    }

    /// `key=value` pairs of the set parameters, `;`-separated.
    pub fn describe(&self) -> String {
        let fields = [
            ("sigma_f", self.sigma_f),
            ("sigma_g", self.sigma_g),
            ("lambda_f", self.lambda_f),
            ("lambda_g", self.lambda_g),
            ("gamma", self.gamma),
            ("alpha", self.alpha),
        ];
        fields
            .iter()
            .filter_map(|(k, v)| v.map(|v| format!("{k}={v}")))
            .collect::<Vec<_>>()
            .join(";")
    }
}

pub const DEFAULT_LAMBDAS: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];
pub const DEFAULT_SIGMA_FACTORS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
pub const DEFAULT_FRACTIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct HyperGrid {
    pub sigma_f_candidates: Vec<f64>,
    pub sigma_g_candidates: Vec<f64>,
    pub lambda_f_candidates: Vec<f64>,
    pub lambda_g_candidates: Vec<f64>,
    pub gamma_candidates: Vec<f64>,
    pub alpha_candidates: Vec<f64>,
    pub strategy: Strategy,
}

impl HyperGrid {
    /// Default candidates, with bandwidths scaled around the given medians.
    pub fn default_around(median_f: f64, median_g: f64, strategy: Strategy) -> Self {
        Self {
            sigma_f_candidates: DEFAULT_SIGMA_FACTORS.iter().map(|s| s * median_f).collect(),
            sigma_g_candidates: DEFAULT_SIGMA_FACTORS.iter().map(|s| s * median_g).collect(),
            lambda_f_candidates: DEFAULT_LAMBDAS.to_vec(),
            lambda_g_candidates: DEFAULT_LAMBDAS.to_vec(),
            gamma_candidates: DEFAULT_FRACTIONS.to_vec(),
            alpha_candidates: DEFAULT_FRACTIONS.to_vec(),
            strategy,
        }
    }

    fn candidates(&self, p: Param) -> &[f64] {
        match p {
            Param::SigmaF => &self.sigma_f_candidates,
            Param::SigmaG => &self.sigma_g_candidates,
            Param::LambdaF => &self.lambda_f_candidates,
            Param::LambdaG => &self.lambda_g_candidates,
            Param::Gamma => &self.gamma_candidates,
            Param::Alpha => &self.alpha_candidates,
        }
    }

    /// Whether the strategy fixes `p` before the grid loop.
    pub fn fixed_by_strategy(&self, p: Param) -> bool {
        match self.strategy {
            Strategy::FullGrid => false,
            Strategy::MedianHeuristic => matches!(p, Param::SigmaF | Param::SigmaG),
            Strategy::UlsifHandoff => matches!(p, Param::SigmaG | Param::LambdaG),
        }
    }

    /// Cartesian product over the requested parameters that the strategy
    /// leaves free. Order: first parameter varies slowest.
    pub fn cells(&self, params: &[Param]) -> Result<Vec<Cell>> {
        let free: Vec<Param> = params
            .iter()
            .copied()
            .filter(|p| !self.fixed_by_strategy(*p))
            .collect();
        for p in &free {
            let c = self.candidates(*p);
            if c.is_empty() {
                return Err(Error::InvalidParameter(format!("no candidates for {p:?}")));
            }
            if matches!(p, Param::Gamma | Param::Alpha)
                && c.iter().any(|v| !(0.0..=1.0).contains(v))
            {
                return Err(Error::InvalidParameter(format!(
                    "{p:?} candidates must lie in [0, 1]"
                )));
            }
        }
        let mut cells = vec![Cell::default()];
        for p in free {
            let mut next = Vec::with_capacity(cells.len() * self.candidates(p).len());
            for cell in &cells {
                for v in self.candidates(p) {
                    let mut c = *cell;
                    c.set(p, *v);
                    next.push(c);
                }
            }
            cells = next;
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellScore {
    pub cell: Cell,
    pub score: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best: Cell,
    pub best_score: f64,
    pub table: Vec<CellScore>,
}

impl GridResult {
    /// Score table as CSV text (cell parameters, score, status).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sigma_f,sigma_g,lambda_f,lambda_g,gamma,alpha,score,status\n");
        let fmt = |v: Option<f64>| v.map(crate::data::format_f64).unwrap_or_default();
        for row in &self.table {
            let c = &row.cell;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                fmt(c.sigma_f),
                fmt(c.sigma_g),
                fmt(c.lambda_f),
                fmt(c.lambda_g),
                fmt(c.gamma),
                fmt(c.alpha),
                fmt(row.score),
                row.status
            ));
        }
        out
    }
}

fn tie_key(c: &Cell) -> [f64; 4] {
    let v = |x: Option<f64>| x.unwrap_or(0.0);
    [v(c.lambda_f), v(c.lambda_g), v(c.sigma_f), v(c.sigma_g)]
}

/// Score every cell and return the argmin. Equal scores go to the larger λ,
/// then the larger σ. Cell `i` receives seed `derive(seed, i)`.
pub fn grid_search<F>(cells: &[Cell], rng_seed: u64, score: F) -> Result<GridResult>
where
    F: Fn(&Cell, u64) -> Result<f64> + Sync,
{
    if cells.is_empty() {
        return Err(Error::Empty("grid has no cells".into()));
    }
    let table: Vec<CellScore> = cells
        .par_iter()
        .enumerate()
        .map(
            |(i, cell)| match score(cell, seed::derive(rng_seed, i as u64)) {
                Ok(s) if s.is_finite() => CellScore {
                    cell: *cell,
                    score: Some(s),
                    status: "ok".into(),
                },
                Ok(s) => CellScore {
                    cell: *cell,
                    score: None,
                    status: format!("non-finite score {s}"),
                },
                Err(e) => CellScore {
                    cell: *cell,
                    score: None,
                    status: match e {
                        Error::Degenerate(_) => "rejected: degenerate".into(),
                        other => format!("failed: {}", other.to_string().replace([',', '\n'], " ")),
                    },
                },
            },
        )
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in table.iter().enumerate() {
        let Some(s) = row.score else { continue };
        best = match best {
            None => Some((i, s)),
            Some((j, t)) => {
                let better = s < t
                    || (s == t
                        && tie_key(&row.cell)
                            .iter()
                            .zip(tie_key(&table[j].cell).iter())
                            .find(|(a, b)| a != b)
                            .is_some_and(|(a, b)| a > b));
                if better {
                    Some((i, s))
                } else {
                    Some((j, t))
                }
            }
        };
    }
    match best {
        Some((i, s)) => Ok(GridResult {
            best: table[i].cell,
            best_score: s,
            table,
        }),
        None => Err(Error::GridFailed(
            table
                .iter()
                .map(|r| format!("{}: {}", r.cell.describe(), r.status))
                .collect::<Vec<_>>()
                .join("\n"),
        )),
    }
}
