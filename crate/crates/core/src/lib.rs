//! One-step covariate shift adaptation.
//!
//! Under covariate shift the training inputs follow `p_tr(x)` while the test
//! inputs follow `p_te(x)`, with a shared conditional `p(y | x)`. This crate
//! fits a predictor `f` together with a nonnegative weight model `g` by
//! minimizing an upper bound of the test risk ([`one_step`]), and provides the
//! usual two-step baselines: least-squares density ratio fitting
//! ([`ratio`]) followed by importance-weighted ERM ([`erm`]).
//!
//! ```
//! use covashift::data::{generate_toy, ToySpec};
//! use covashift::kernel::{choose_centers, median_heuristic_bandwidth, KernelBasis};
//! use covashift::loss::LossSpec;
//! use covashift::one_step::{one_step_fit, ObjectiveSpec, OneStepOptions};
//! use covashift::stats::test_error;
//!
//! let data = generate_toy(&ToySpec { seed: 7, n_eval: 1000, ..ToySpec::default() })?;
//! let all = data.all_inputs();
//! let cf = choose_centers(&data.test_x, 50, 1)?;
//! let cg = choose_centers(&data.test_x, 50, 2)?;
//! let f_basis = KernelBasis::gaussian(cf.clone(), median_heuristic_bandwidth(&all, &cf)?)?;
//! let g_basis = KernelBasis::gaussian(cg.clone(), median_heuristic_bandwidth(&all, &cg)?)?;
//!
//! let spec = ObjectiveSpec::new(LossSpec::squared(), 1e-3, 1e-2);
//! let state = one_step_fit(&data, &f_basis, &g_basis, &spec, &OneStepOptions::default())?;
//! let mse = test_error(&state.f_model, data.eval.as_ref().unwrap(), &LossSpec::squared())?;
//! assert!(mse < 0.1);
//! # Ok::<(), covashift::Error>(())
//! ```

// Negated comparisons are how validation rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod erm;
mod error;
pub mod experiment;
pub mod kernel;
pub mod linalg;
pub mod loss;
pub mod one_step;
pub mod predictor;
pub mod ratio;
pub mod seed;
pub mod selection;
pub mod stats;

pub use error::{Error, Result};
