//! The mdbook chapters under `book/src`, included as modules so that
//! `cargo test --doc` runs every code block in them.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/density-ratio.md")]
pub mod density_ratio {}
#[doc = include_str!("../../../book/src/weighted-erm.md")]
pub mod weighted_erm {}
#[doc = include_str!("../../../book/src/one-step.md")]
pub mod one_step {}
#[doc = include_str!("../../../book/src/gradient.md")]
pub mod gradient {}
#[doc = include_str!("../../../book/src/model-selection.md")]
pub mod model_selection {}
#[doc = include_str!("../../../book/src/bound-check.md")]
pub mod bound_check {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
