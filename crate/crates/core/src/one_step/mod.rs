//! Joint fitting of a predictor `f` and a nonnegative weight model `g` by
//! minimizing an empirical upper bound of the squared test risk:
//!
//! ```text
//! Ĵ(f, g) = ( mean_tr[ ℓ(f(x), y) g(x) ] )²
//!         + m² ( mean_tr[ g(x)² ] − 2 mean_te[ g(x) ] + C )
//! ```
//!
//! [`one_step_fit`] alternates closed-form `g` updates with weighted fits of
//! `f` for linear-in-parameter models; [`grad_alt_fit`] is the minibatch
//! gradient version for a multiclass softmax classifier.

mod alternating;
pub mod bound;
mod gradient;
mod objective;

pub use alternating::{
    f_step, fit_prepared, g_objective, g_step_closed_form, objective_on, one_step_fit,
    surrogate_losses, AlternationState, GStep, OneStepOptions, Prepared,
};
pub use gradient::{
    grad_alt_fit, j_ub_gradient, normalize_batch_weights, pretrain_g_discriminator,
    train_weighted_classifier, weighted_ce_gradient, GradAltConfig, GradAltResult, Pretrained,
    SoftmaxModel,
};
pub use objective::{j_ub_empirical, j_ub_from_values, ObjectiveSpec};
