//! Pre-learning-rate search.
//!
//! From a seed rate, the search first doubles the rate while the fitted
//! quadratic coefficient would be negative (so the final rate is not left
//! needlessly small), then halves it until the probe loss no longer exceeds
//! the current loss. On normal exit the returned rate satisfies
//! `g(rate) <= g(0)`.
//!
//! Both loops are capped: the growth loop provably never terminates on a
//! globally concave ray, and failing loudly beats hanging. One full
//! evaluation anchors `g(0)` and the gradient; each loop test costs one
//! loss-only evaluation.

use crate::error::{Error, PlrLoop, Result};
use crate::oracle::LossOracle;
use crate::param::ParamVector;
use crate::qlab::QlabConfig;

/// Shrink factor applied once when the halving loop exits on an exact tie
/// `g(rate) == g(0)`. On exact quadratics a tie means the rate landed exactly
/// on `2/M`, the open boundary of the convergence guarantee; nudging below it
/// restores the strict inequality.
const TIE_NUDGE: f64 = 0.99;

/// Record of one pre-learning-rate search.
#[derive(Debug, Clone)]
pub struct PlrSearch {
    /// Step index the search ran before (0 = before the first step).
    pub at_step: u64,
    /// Seed rate the search started from.
    pub alpha0: f64,
    /// Resulting pre-learning rate.
    pub pre_lr: f64,
    /// Loss at the search point.
    pub loss0: f64,
    /// Squared gradient norm at the search point.
    pub grad_sq_norm: f64,
    pub doublings: u64,
    pub halvings: u64,
    /// Whether the exact-tie nudge fired.
    pub tie_nudged: bool,
    /// Every `(rate, g(rate))` probe in evaluation order, final probe last.
    pub probes: Vec<(f64, f64)>,
    /// Always 1: the anchor evaluation of `g(0)` and the gradient.
    pub full_evals: u64,
    /// `1 + doublings + halvings`, plus 1 if the tie nudge re-probed.
    pub loss_evals: u64,
}

/// Runs the search from `theta`. Errors when a loop cap is exceeded,
/// reporting the loop and the last rate.
pub fn find_plr<O: LossOracle + ?Sized>(
    oracle: &mut O,
    theta: &ParamVector,
    alpha0: f64,
    config: &QlabConfig,
) -> Result<PlrSearch> {
    find_plr_at(oracle, theta, alpha0, config, 0)
}

pub(crate) fn find_plr_at<O: LossOracle + ?Sized>(
    oracle: &mut O,
    theta: &ParamVector,
    alpha0: f64,
    config: &QlabConfig,
    at_step: u64,
) -> Result<PlrSearch> {
    if !(alpha0 > 0.0) || !alpha0.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "search seed rate must be positive and finite, got {alpha0}"
        )));
    }

    let anchor = oracle.eval_full(theta)?;
    let loss0 = anchor.loss;
    let grad_sq = anchor.gradient.sq_norm();
    let probe = |rate: f64| theta.sub_scaled(&anchor.gradient, rate);

    let mut rate = alpha0;
    let mut probes = Vec::new();
    let mut g_bar = oracle.eval_loss(&probe(rate))?;
    probes.push((rate, g_bar));
    let mut loss_evals = 1u64;

    // Grow while the fitted quadratic coefficient would be negative.
    let mut doublings = 0u64;
    while g_bar - loss0 + rate * grad_sq < 0.0 {
        if doublings == config.max_doublings {
            return Err(Error::PlrSearchStalled {
                which: PlrLoop::Doubling,
                cap: config.max_doublings,
                last_rate: rate,
            });
        }
        rate *= 2.0;
        doublings += 1;
        g_bar = oracle.eval_loss(&probe(rate))?;
        probes.push((rate, g_bar));
        loss_evals += 1;
    }

    // Shrink until the probe no longer loses to the anchor, with a single
    // nudge should the loop exit on an exact tie.
    let mut halvings = 0u64;
    let mut tie_nudged = false;
    loop {
        while g_bar > loss0 {
            if halvings == config.max_halvings {
                return Err(Error::PlrSearchStalled {
                    which: PlrLoop::Halving,
                    cap: config.max_halvings,
                    last_rate: rate,
                });
            }
            rate *= 0.5;
            halvings += 1;
            g_bar = oracle.eval_loss(&probe(rate))?;
            probes.push((rate, g_bar));
            loss_evals += 1;
        }
        if g_bar == loss0 && grad_sq > 0.0 && !tie_nudged {
            tie_nudged = true;
            rate *= TIE_NUDGE;
            g_bar = oracle.eval_loss(&probe(rate))?;
            probes.push((rate, g_bar));
            loss_evals += 1;
            continue;
        }
        break;
    }

    Ok(PlrSearch {
        at_step,
        alpha0,
        pre_lr: rate,
        loss0,
        grad_sq_norm: grad_sq,
        doublings,
        halvings,
        tie_nudged,
        probes,
        full_evals: 1,
        loss_evals,
    })
}
