use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::erm::{self, WeightedFitConfig};
use crate::error::{Error, Result};
use crate::kernel::{KernelBasis, LinearModel};
use crate::linalg;

use super::objective::{j_ub_from_values, ObjectiveSpec};

/// Design matrices for one dataset and one pair of bases.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub f_basis: KernelBasis,
    pub g_basis: KernelBasis,
    pub phi_tr: DMatrix<f64>,
    pub psi_tr: DMatrix<f64>,
    pub psi_te: DMatrix<f64>,
    pub y_tr: DVector<f64>,
}

impl Prepared {
    pub fn new(data: &Dataset, f_basis: &KernelBasis, g_basis: &KernelBasis) -> Result<Self> {
        Ok(Self {
            f_basis: f_basis.clone(),
            g_basis: g_basis.clone(),
            phi_tr: f_basis.design_matrix(&data.train_x)?,
            psi_tr: g_basis.design_matrix(&data.train_x)?,
            psi_te: g_basis.design_matrix(&data.test_x)?,
            y_tr: data.train_y.clone(),
        })
    }

    pub fn subset(&self, train_idx: &[usize], test_idx: &[usize]) -> Self {
        Self {
            f_basis: self.f_basis.clone(),
            g_basis: self.g_basis.clone(),
            phi_tr: self.phi_tr.select_rows(train_idx),
            psi_tr: self.psi_tr.select_rows(train_idx),
            psi_te: self.psi_te.select_rows(test_idx),
            y_tr: linalg::select_entries(&self.y_tr, train_idx),
        }
    }

    pub fn n_train(&self) -> usize {
        self.phi_tr.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneStepOptions {
    /// Maximum number of alternation rounds T.
    pub rounds: usize,
    /// Stop when the objective changes by less than this, relative.
    pub rel_tol: f64,
    pub max_irls_iters: usize,
    pub irls_tol: f64,
    pub gd_steps: usize,
    pub gd_lr: Option<f64>,
}

impl Default for OneStepOptions {
    fn default() -> Self {
        Self {
            rounds: 20,
            rel_tol: 1e-9,
            max_irls_iters: 100,
            irls_tol: 1e-8,
            gd_steps: 2000,
            gd_lr: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlternationState {
    pub f_model: LinearModel,
    /// Weight model with clipped, nonnegative coefficients.
    pub g_model: LinearModel,
    pub round: usize,
    /// Objective with C = 0 after each completed round.
    pub objective_trace: Vec<f64>,
    /// Same, plus λ_g‖β‖² + λ_f‖α‖².
    pub regularized_trace: Vec<f64>,
    /// Whether the g-step clipped any coefficient, per round.
    pub clipped: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GStep {
    pub raw: DVector<f64>,
    pub clipped: DVector<f64>,
}

/// Surrogate loss of `f = αᵀφ` at each training point.
pub fn surrogate_losses(
    p: &Prepared,
    alpha: &DVector<f64>,
    spec: &ObjectiveSpec,
) -> Result<DVector<f64>> {
    let pred = &p.phi_tr * alpha;
    let mut out = DVector::zeros(pred.len());
    for i in 0..pred.len() {
        out[i] = spec.surrogate.scalar(pred[i], p.y_tr[i])?;
    }
    Ok(out)
}

/// Closed-form minimizer over β of the objective plus λ_g‖β‖², then clipping.
pub fn g_step_closed_form(
    p: &Prepared,
    losses: &DVector<f64>,
    spec: &ObjectiveSpec,
) -> Result<GStep> {
    let n_tr = p.n_train() as f64;
    let m2 = spec.bound_m * spec.bound_m;
    let b = p.psi_tr.ncols();
    if losses.len() != p.n_train() {
        return Err(Error::Dimension(format!(
            "{} losses for {} samples",
            losses.len(),
            p.n_train()
        )));
    }
    let u = p.psi_tr.transpose() * losses;
    let mut h_mat =
        p.psi_tr.transpose() * &p.psi_tr / n_tr + &u * u.transpose() / (m2 * n_tr * n_tr);
    let ridge = spec.lambda_g / m2;
    for i in 0..b {
        h_mat[(i, i)] += ridge;
    }
    let h = linalg::column_means(&p.psi_te);
    let raw = linalg::solve_spd(&h_mat, &h, ridge, "weight-model update")?;
    let clipped = raw.map(|v| v.max(0.0));
    Ok(GStep { raw, clipped })
}

/// The β-dependent objective with unclipped g plus λ_g‖β‖², which the
/// unclipped g-step minimizes exactly.
pub fn g_objective(
    p: &Prepared,
    losses: &DVector<f64>,
    beta: &DVector<f64>,
    spec: &ObjectiveSpec,
) -> f64 {
    let n_tr = p.n_train() as f64;
    let g_tr = &p.psi_tr * beta;
    let g_te = &p.psi_te * beta;
    let weighted = losses.dot(&g_tr) / n_tr;
    let m2 = spec.bound_m * spec.bound_m;
    weighted * weighted
        + m2 * (g_tr.dot(&g_tr) / n_tr - 2.0 * g_te.mean())
        + spec.lambda_g * beta.dot(beta)
}

/// Weighted fit of f with weights `max(βᵀψ(x_i), 0)`.
pub fn f_step(
    p: &Prepared,
    beta: &DVector<f64>,
    spec: &ObjectiveSpec,
    options: &OneStepOptions,
) -> Result<DVector<f64>> {
    let w = (&p.psi_tr * beta).map(|v| v.max(0.0));
    let config = WeightedFitConfig {
        loss: spec.surrogate,
        lambda_f: spec.lambda_f,
        gamma: 1.0,
        max_irls_iters: options.max_irls_iters,
        irls_tol: options.irls_tol,
        gd_steps: options.gd_steps,
        gd_lr: options.gd_lr,
    };
    erm::fit_weighted_coefficients(&p.phi_tr, &p.y_tr, &w, &config)
}

/// Objective, including `spec.constant_c`, for given coefficients on prepared designs.
pub fn objective_on(
    p: &Prepared,
    alpha: &DVector<f64>,
    beta: &DVector<f64>,
    spec: &ObjectiveSpec,
) -> Result<f64> {
    let losses = surrogate_losses(p, alpha, spec)?;
    let g_tr = &p.psi_tr * beta;
    let g_te = &p.psi_te * beta;
    j_ub_from_values(
        losses.as_slice(),
        g_tr.as_slice(),
        g_te.as_slice(),
        spec.bound_m,
        spec.constant_c,
    )
}

/// Alternating minimization on prepared designs. `α₀` is the unweighted
/// ridge fit, so the result does not depend on any seed.
pub fn fit_prepared(
    p: &Prepared,
    spec: &ObjectiveSpec,
    options: &OneStepOptions,
) -> Result<AlternationState> {
    spec.validate()?;
    if options.rounds == 0 {
        return Err(Error::InvalidParameter(
            "at least one alternation round is required".into(),
        ));
    }
    let ones = DVector::from_element(p.n_train(), 1.0);
    let mut alpha = erm::weighted_ridge_coefficients(&p.phi_tr, &p.y_tr, &ones, spec.lambda_f)?;
    let mut beta = DVector::zeros(p.psi_tr.ncols());
    let zero_c = ObjectiveSpec {
        constant_c: 0.0,
        ..*spec
    };
    let mut objective_trace = Vec::new();
    let mut regularized_trace = Vec::new();
    let mut clipped = Vec::new();
    for round in 0..options.rounds {
        let losses = surrogate_losses(p, &alpha, spec)?;
        let step = g_step_closed_form(p, &losses, spec)?;
        clipped.push(step.raw.iter().any(|v| *v < 0.0));
        beta = step.clipped;
        alpha = f_step(p, &beta, spec, options)?;
        let obj = objective_on(p, &alpha, &beta, &zero_c)?;
        if !obj.is_finite() {
            return Err(Error::NonFinite(format!("objective at round {round}")));
        }
        let reg = obj + spec.lambda_g * beta.dot(&beta) + spec.lambda_f * alpha.dot(&alpha);
        let prev = objective_trace.last().copied();
        objective_trace.push(obj);
        regularized_trace.push(reg);
        if let Some(prev) = prev {
            let scale = prev.abs().max(f64::MIN_POSITIVE);
            if (obj - prev).abs() <= options.rel_tol * scale {
                break;
            }
        }
    }
    Ok(AlternationState {
        f_model: LinearModel::new(p.f_basis.clone(), alpha)?,
        g_model: LinearModel::new(p.g_basis.clone(), beta)?,
        round: objective_trace.len(),
        objective_trace,
        regularized_trace,
        clipped,
    })
}

pub fn one_step_fit(
    data: &Dataset,
    f_basis: &KernelBasis,
    g_basis: &KernelBasis,
    spec: &ObjectiveSpec,
    options: &OneStepOptions,
) -> Result<AlternationState> {
    fit_prepared(&Prepared::new(data, f_basis, g_basis)?, spec, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_toy, ToySpec};
    use crate::kernel::{choose_centers, median_heuristic_bandwidth};
    use crate::loss::LossSpec;
    use crate::ratio::ulsif_fit;

    fn toy_setup(seed: u64, shift: bool) -> (Dataset, KernelBasis, KernelBasis) {
        let mut spec = ToySpec {
            n_eval: 2000,
            seed,
            ..ToySpec::default()
        };
        if !shift {
            spec.te_mean = spec.tr_mean;
            spec.te_sd = spec.tr_sd;
        }
        let data = generate_toy(&spec).unwrap();
        let cf = choose_centers(&data.test_x, 50, seed + 1).unwrap();
        let cg = choose_centers(&data.test_x, 50, seed + 2).unwrap();
        let all = data.all_inputs();
        let sf = median_heuristic_bandwidth(&all, &cf).unwrap();
        let sg = median_heuristic_bandwidth(&all, &cg).unwrap();
        (
            data,
            KernelBasis::gaussian(cf, sf).unwrap(),
            KernelBasis::gaussian(cg, sg).unwrap(),
        )
    }

    #[test]
    fn zero_loss_g_step_is_ulsif() {
        let (data, fb, gb) = toy_setup(1, true);
        let p = Prepared::new(&data, &fb, &gb).unwrap();
        let m = 2.0;
        let spec = ObjectiveSpec {
            bound_m: m,
            ..ObjectiveSpec::new(LossSpec::squared(), 1e-3, 0.05)
        };
        let step = g_step_closed_form(&p, &DVector::zeros(data.n_train()), &spec).unwrap();
        let u = ulsif_fit(&data.train_x, &data.test_x, &gb, 0.05 / (m * m)).unwrap();
        let diff = (&step.clipped - u.model.coefficients()).amax();
        assert!(diff < 1e-10, "diff {diff}");
    }

    #[test]
    fn constant_basis_constant_loss() {
        let data = Dataset::new(
            DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]),
            DVector::zeros(3),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            None,
            0,
        )
        .unwrap();
        let basis = KernelBasis::constant(1);
        let p = Prepared::new(&data, &basis, &basis).unwrap();
        let c = 0.7;
        let spec = ObjectiveSpec::new(LossSpec::squared(), 0.0, 0.0);
        let step = g_step_closed_form(&p, &DVector::from_element(3, c), &spec).unwrap();
        assert!((step.raw[0] - 1.0 / (1.0 + c * c)).abs() < 1e-14);
    }

    #[test]
    fn g_step_output_is_nonnegative_and_minimizes() {
        for s in 0..5 {
            let (data, fb, gb) = toy_setup(10 + s, true);
            let p = Prepared::new(&data, &fb, &gb).unwrap();
            let spec = ObjectiveSpec::new(LossSpec::squared(), 1e-3, 1e-3);
            let alpha = DVector::from_fn(fb.size(), |i, _| ((i * 31 % 7) as f64 - 3.0) * 0.1);
            let losses = surrogate_losses(&p, &alpha, &spec).unwrap();
            let step = g_step_closed_form(&p, &losses, &spec).unwrap();
            assert!(step.clipped.iter().all(|b| *b >= 0.0));
            let best = g_objective(&p, &losses, &step.raw, &spec);
            for k in 0..gb.size() {
                let mut e = step.raw.clone();
                e[k] += 1e-3;
                assert!(best <= g_objective(&p, &losses, &e, &spec) + 1e-12);
            }
        }
    }

    #[test]
    fn uniform_weights_reduce_to_ridge() {
        let (data, fb, gb) = toy_setup(3, true);
        let p = Prepared::new(&data, &fb, &gb).unwrap();
        let spec = ObjectiveSpec::new(LossSpec::squared(), 1e-3, 1e-3);
        let const_g = Prepared {
            g_basis: KernelBasis::constant(1),
            psi_tr: DMatrix::from_element(p.n_train(), 1, 1.0),
            psi_te: DMatrix::from_element(data.n_test(), 1, 1.0),
            ..p.clone()
        };
        let alpha = f_step(
            &const_g,
            &DVector::from_element(1, 2.5),
            &spec,
            &OneStepOptions::default(),
        )
        .unwrap();
        let ridge = erm::weighted_ridge_coefficients(
            &p.phi_tr,
            &p.y_tr,
            &DVector::from_element(p.n_train(), 2.5),
            1e-3,
        )
        .unwrap();
        assert_eq!(alpha, ridge);
        let unweighted = erm::weighted_ridge_coefficients(
            &p.phi_tr,
            &p.y_tr,
            &DVector::from_element(p.n_train(), 1.0),
            0.0,
        );
        let scaled = erm::weighted_ridge_coefficients(
            &p.phi_tr,
            &p.y_tr,
            &DVector::from_element(p.n_train(), 2.5),
            0.0,
        );
        if let (Ok(a), Ok(b)) = (unweighted, scaled) {
            assert!((a - b).amax() < 1e-6);
        }
    }

    #[test]
    fn weighted_constant_fit_hand_value() {
        let data = Dataset::new(
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            DVector::from_vec(vec![1.0, 3.0]),
            DMatrix::from_column_slice(1, 1, &[0.0]),
            None,
            0,
        )
        .unwrap();
        // g basis: raw features with β = (2, 1) gives w = (1, 3)... use indicator-like weights instead
        let p = Prepared {
            f_basis: KernelBasis::constant(1),
            g_basis: KernelBasis::raw_features(1),
            phi_tr: DMatrix::from_element(2, 1, 1.0),
            psi_tr: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 1.0]),
            psi_te: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            y_tr: data.train_y.clone(),
        };
        // β = (−2, 3): weights (3, 1)
        let spec = ObjectiveSpec::new(LossSpec::squared(), 0.0, 0.0);
        let alpha = f_step(
            &p,
            &DVector::from_vec(vec![-2.0, 3.0]),
            &spec,
            &OneStepOptions::default(),
        )
        .unwrap();
        assert!((alpha[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn tukey_f_step_delegates_to_irls() {
        let (data, fb, gb) = toy_setup(4, true);
        let p = Prepared::new(&data, &fb, &gb).unwrap();
        let spec = ObjectiveSpec::new(LossSpec::tukey(), 1e-3, 1e-3);
        let opts = OneStepOptions::default();
        let beta = g_step_closed_form(&p, &DVector::zeros(data.n_train()), &spec)
            .unwrap()
            .clipped;
        let alpha = f_step(&p, &beta, &spec, &opts).unwrap();
        let w = (&p.psi_tr * &beta).map(|v| v.max(0.0));
        let direct = erm::irls_tukey_fit(
            &data.train_x,
            &data.train_y,
            &w,
            &fb,
            1e-3,
            4.685,
            100,
            1e-8,
        )
        .unwrap();
        assert_eq!(&alpha, direct.model.coefficients());
    }

    #[test]
    fn fit_is_deterministic_and_nonnegative() {
        let (data, fb, gb) = toy_setup(5, true);
        let spec = ObjectiveSpec::new(LossSpec::squared(), 1e-3, 1e-2);
        let a = one_step_fit(&data, &fb, &gb, &spec, &OneStepOptions::default()).unwrap();
        let b = one_step_fit(&data, &fb, &gb, &spec, &OneStepOptions::default()).unwrap();
        assert_eq!(a.f_model, b.f_model);
        assert_eq!(a.g_model, b.g_model);
        assert_eq!(a.objective_trace.len(), a.round);
        assert!(a.g_model.coefficients().iter().all(|v| *v >= 0.0));
        assert!(a
            .g_model
            .predict(&data.train_x)
            .unwrap()
            .iter()
            .all(|v| *v >= 0.0));
    }

    #[test]
    fn round_is_monotone_without_clipping() {
        // small basis and λ_f = 0 so both blocks are minimized exactly
        let (data, _, _) = toy_setup(6, true);
        let cf = choose_centers(&data.test_x, 5, 1).unwrap();
        let fb = KernelBasis::gaussian(cf, 0.8).unwrap();
        let gb = KernelBasis::constant(1);
        let spec = ObjectiveSpec::new(LossSpec::squared(), 0.0, 0.0);
        let state = one_step_fit(
            &data,
            &fb,
            &gb,
            &spec,
            &OneStepOptions {
                rounds: 10,
                rel_tol: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(state.clipped.iter().all(|c| !c));
        for pair in state.regularized_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "{:?}", pair);
        }
    }

    #[test]
    fn zero_rounds_is_an_error() {
        let (data, fb, gb) = toy_setup(7, true);
        let spec = ObjectiveSpec::new(LossSpec::squared(), 1e-3, 1e-3);
        assert!(one_step_fit(
            &data,
            &fb,
            &gb,
            &spec,
            &OneStepOptions {
                rounds: 0,
                ..Default::default()
            }
        )
        .is_err());
    }
}
