//! Learning rates from a quadratic fit of the loss along the gradient ray.
//!
//! At each iteration the loss restricted to the descent ray,
//! `g(alpha) = L(theta - alpha * grad)`, is approximated by the parabola
//! through `g(0)`, `g'(0) = -|grad|^2`, and one probe evaluation at a
//! pre-learning rate. The parabola's minimizer becomes the step size, so the
//! rate adapts every iteration for the cost of a single extra forward pass and
//! without any tuned hyperparameter. A capped doubling/halving search
//! ([`qlab::find_plr`]) picks the probe rate from an arbitrary seed.
//!
//! The crate bundles everything needed to study the scheme empirically:
//!
//! * [`oracle`] — the loss-oracle contract with exact call counting, plus
//!   quadratic reference problems with known Lipschitz constants;
//! * [`testfn`] — Booth, Himmelblau, and Eggholder with analytic gradients;
//! * [`gradcheck`] — central-difference gradient verification;
//! * [`qlab`] — the rate computation, training loop, and convergence
//!   verifiers ([`qlab::theory`]);
//! * [`schemes`] — fourteen competing update rules (SGD, decay schedules,
//!   Adagrad, RMSprop, Adadelta, hypergradient descent, loss-ratio and
//!   quadratic-probe adaptive rates, momentum variants, Adam) behind one
//!   contract;
//! * [`nn`] — a small MLP with exact backprop, IDX dataset loading, synthetic
//!   blob datasets, and a minibatch oracle adapter;
//! * [`harness`] — config-file driven experiment runner with reproducible
//!   trajectory CSVs (also available as the `qlab` binary).
//!
//! # Quick start
//!
//! ```
//! use qlabgrad::oracle::QuadraticOracle;
//! use qlabgrad::param::ParamVector;
//! use qlabgrad::qlab::{run_qlabgrad, QlabConfig, StopRule};
//!
//! // Minimize L(x) = x^2 / 2 starting from x = 1.
//! let mut oracle = QuadraticOracle::diagonal(&[1.0], ParamVector::zeros(1)).unwrap();
//! let trajectory = run_qlabgrad(
//!     &mut oracle,
//!     &ParamVector::new(vec![1.0]),
//!     &QlabConfig::full_batch(1.0),
//!     10,
//!     StopRule::default(),
//! )
//! .unwrap();
//!
//! // The quadratic fit is exact here, so one step lands on the minimum.
//! assert_eq!(trajectory.iters_to_threshold(0.0), Some(1));
//! ```

// `!(x > 0.0)` deliberately treats NaN like an out-of-range value at the
// validation boundaries.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gradcheck;
pub mod guide;
pub mod harness;
pub mod nn;
pub mod oracle;
pub mod param;
pub mod qlab;
pub mod schemes;
pub mod testfn;

pub use error::{Error, Result};
pub use oracle::{CallCounters, GradEval, LossOracle};
pub use param::ParamVector;
