//! The user guide.
//!
//! Each module below renders one chapter of the repository's `book/`
//! directory. The chapters are included verbatim, so every code sample in
//! the book compiles and runs as a doc-test of this crate — the guide cannot
//! drift from the API it describes. Read it here in rustdoc, or build the
//! book with `mdbook serve book/`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/quadratic-fit.md")]
pub mod quadratic_fit {}

#[doc = include_str!("../../../book/src/pre-learning-rate.md")]
pub mod pre_learning_rate {}

#[doc = include_str!("../../../book/src/convergence.md")]
pub mod convergence {}

#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}
