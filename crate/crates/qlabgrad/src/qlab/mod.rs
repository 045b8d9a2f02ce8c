//! The quadratic-fit learning-rate scheme.
//!
//! Along the gradient ray the loss restricted to the step size,
//! `g(alpha) = L(theta - alpha * grad)`, is fitted by the parabola
//! `g1(alpha) = a0 + a1 alpha + a2 alpha^2` using three exact pieces of
//! information that cost a single extra loss evaluation:
//!
//! * `a0 = g(0) = L(theta)`,
//! * `a1 = g'(0) = -|grad|^2`,
//! * one probe `g(pre_lr)` at the pre-learning rate, which pins down `a2`.
//!
//! The parabola's minimizer
//!
//! ```text
//! alpha* = |grad|^2 pre_lr^2 / (2 [g(pre_lr) - L(theta) + |grad|^2 pre_lr])
//! ```
//!
//! is used as the step size when positive; otherwise the step falls back to
//! the pre-learning rate itself. [`step`] performs exactly one full evaluation
//! and one loss-only evaluation.

mod plr;
mod run;
pub mod theory;

pub use plr::{find_plr, PlrSearch};
pub use run::{run_qlabgrad, RunStatus, StopReason, StopRule, Trajectory, TrajectoryRow};

use crate::error::{Error, Result};
use crate::oracle::LossOracle;
use crate::param::ParamVector;

/// Tuning knobs for the scheme. Every field has a safe default; the scheme
/// itself stays hyperparameter-free in the sense that none of these require
/// per-problem tuning.
#[derive(Debug, Clone)]
pub struct QlabConfig {
    /// Seed value handed to the pre-learning-rate search (0.1, 0.01, or the like).
    pub initial_pre_lr: f64,
    /// Re-run the pre-learning-rate search before step `t` whenever
    /// `(t - 1)` is a positive multiple of this. `None` means only the
    /// mandatory search before the first step.
    pub refresh_interval: Option<u64>,
    /// Cap on the growth loop of the search.
    pub max_doublings: u64,
    /// Cap on the shrink loop of the search.
    pub max_halvings: u64,
    /// Denominator guard scale: the fit is abandoned (fallback step) when the
    /// denominator magnitude drops below `denom_guard * max(1, |loss|)`.
    pub denom_guard: f64,
    /// Convergence floor on the squared gradient norm.
    pub grad_floor: f64,
    /// Where a refresh search evaluates: the current iterate, or a fresh
    /// random point.
    pub refresh_point: RefreshPoint,
}

/// Point at which a pre-learning-rate refresh runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RefreshPoint {
    /// Search from the optimizer's current iterate (default).
    CurrentIterate,
    /// Search from a seeded Gaussian point with the given coordinate scale.
    Resample { seed: u64, scale: f64 },
}

impl Default for QlabConfig {
    fn default() -> Self {
        QlabConfig {
            initial_pre_lr: 0.1,
            refresh_interval: None,
            max_doublings: 60,
            max_halvings: 60,
            denom_guard: 1e-12,
            grad_floor: 1e-16,
            refresh_point: RefreshPoint::CurrentIterate,
        }
    }
}

impl QlabConfig {
    /// Full-batch profile: search once before the first step, never refresh.
    pub fn full_batch(initial_pre_lr: f64) -> Self {
        QlabConfig {
            initial_pre_lr,
            ..QlabConfig::default()
        }
    }

    /// Minibatch profile: refresh the pre-learning rate every 500 steps.
    pub fn minibatch(initial_pre_lr: f64) -> Self {
        QlabConfig {
            initial_pre_lr,
            refresh_interval: Some(500),
            ..QlabConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_pre_lr > 0.0) || !self.initial_pre_lr.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "initial_pre_lr must be positive and finite, got {}",
                self.initial_pre_lr
            )));
        }
        if self.refresh_interval == Some(0) {
            return Err(Error::InvalidArgument(
                "refresh_interval must be a positive number of steps (or None)".into(),
            ));
        }
        if self.max_doublings == 0 || self.max_halvings == 0 {
            return Err(Error::InvalidArgument(
                "search loop caps must be at least 1".into(),
            ));
        }
        if !(self.denom_guard > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "denom_guard must be positive, got {}",
                self.denom_guard
            )));
        }
        if self.grad_floor < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "grad_floor must be non-negative, got {}",
                self.grad_floor
            )));
        }
        Ok(())
    }
}

/// Outcome of the closed-form rate computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaStar {
    /// The fitted minimizer. May be negative or non-finite; the caller applies
    /// the fallback rule.
    Value(f64),
    /// The denominator magnitude fell below the guard; no quotient was formed.
    DenomGuard,
}

/// Fitted optimal rate from the three-piece parabola.
///
/// `loss0 = g(0)`, `grad_sq_norm = |grad|^2`, `probe_loss = g(pre_lr)`.
/// Signals [`AlphaStar::DenomGuard`] instead of dividing when the denominator
/// magnitude is below `denom_guard * max(1, |loss0|)`.
pub fn alpha_star(
    loss0: f64,
    grad_sq_norm: f64,
    probe_loss: f64,
    pre_lr: f64,
    denom_guard: f64,
) -> Result<AlphaStar> {
    for (name, v) in [
        ("loss0", loss0),
        ("grad_sq_norm", grad_sq_norm),
        ("probe_loss", probe_loss),
        ("pre_lr", pre_lr),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("alpha_star input {name} is {v}")));
        }
    }
    if !(pre_lr > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "pre_lr must be positive, got {pre_lr}"
        )));
    }
    if grad_sq_norm < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "grad_sq_norm must be non-negative, got {grad_sq_norm}"
        )));
    }

    let numerator = grad_sq_norm * pre_lr * pre_lr;
    let denominator = 2.0 * (probe_loss - loss0 + grad_sq_norm * pre_lr);
    if denominator.abs() < denom_guard * loss0.abs().max(1.0) {
        return Ok(AlphaStar::DenomGuard);
    }
    Ok(AlphaStar::Value(numerator / denominator))
}

/// Everything observable about one step: the fit inputs, the raw fitted rate,
/// and which rule produced the rate actually used.
#[derive(Debug, Clone)]
pub struct StepReport {
    /// 1-based iteration index.
    pub step: u64,
    /// `a0`: loss at the pre-step iterate.
    pub loss_before: f64,
    /// `-a1`: squared gradient norm at the pre-step iterate.
    pub grad_sq_norm: f64,
    /// Pre-learning rate in effect for this step.
    pub pre_lr: f64,
    /// Probe loss `g(pre_lr)`.
    pub probe_loss: f64,
    /// `probe_loss - loss_before + grad_sq_norm * pre_lr`; its sign is the
    /// sign of the fitted quadratic coefficient.
    pub a2_numerator: f64,
    /// Raw fitted rate. NaN when the denominator guard fired.
    pub alpha_star_raw: f64,
    /// Whether the denominator guard fired.
    pub denom_guard_hit: bool,
    /// Rate actually applied; always positive.
    pub alpha_used: f64,
    /// True iff the fitted rate was unusable (non-positive, non-finite, or
    /// guarded) and the step used the pre-learning rate instead.
    pub fallback: bool,
    /// True iff the squared gradient norm was at or below the floor; the step
    /// was a no-op.
    pub converged: bool,
    /// Post-step loss when it is known without an extra evaluation: fallback
    /// steps land exactly on the probe point. The driver backfills other steps
    /// from the next iteration when the oracle binding is unchanged.
    pub loss_after: Option<f64>,
}

impl StepReport {
    fn placeholder(step: u64, pre_lr: f64) -> StepReport {
        StepReport {
            step,
            loss_before: f64::NAN,
            grad_sq_norm: f64::NAN,
            pre_lr,
            probe_loss: f64::NAN,
            a2_numerator: f64::NAN,
            alpha_star_raw: f64::NAN,
            denom_guard_hit: false,
            alpha_used: pre_lr,
            fallback: false,
            converged: false,
            loss_after: None,
        }
    }
}

/// One iteration: exactly one full evaluation at `theta` and one loss-only
/// evaluation at the probe point `theta - pre_lr * grad`.
///
/// Fallback rule: the fitted rate is used only when it is positive and
/// finite; otherwise the step size is the pre-learning rate. When the squared
/// gradient norm is at or below the configured floor the step is a no-op and
/// the report flags convergence (no probe evaluation is spent).
pub fn step<O: LossOracle + ?Sized>(
    oracle: &mut O,
    theta: &ParamVector,
    pre_lr: f64,
    config: &QlabConfig,
    step_index: u64,
) -> Result<(ParamVector, StepReport)> {
    if !(pre_lr > 0.0) || !pre_lr.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "pre_lr must be positive and finite, got {pre_lr}"
        )));
    }
    let mut report = StepReport::placeholder(step_index, pre_lr);

    let full = oracle.eval_full(theta).map_err(|e| Error::StepAborted {
        step: step_index,
        detail: format!("full evaluation failed: {e}"),
        partial: Box::new(report.clone()),
    })?;
    let grad_sq = full.gradient.sq_norm();
    report.loss_before = full.loss;
    report.grad_sq_norm = grad_sq;

    if grad_sq <= config.grad_floor {
        // Zero gradient: the fit would return alpha* = 0. Declare convergence
        // instead of looping; alpha_used keeps the positive pre-learning rate
        // (it multiplies a negligible gradient).
        report.probe_loss = full.loss;
        report.a2_numerator = grad_sq * pre_lr;
        report.alpha_star_raw = 0.0;
        report.alpha_used = pre_lr;
        report.fallback = true;
        report.converged = true;
        report.loss_after = Some(full.loss);
        return Ok((theta.clone(), report));
    }

    let probe_point = theta.sub_scaled(&full.gradient, pre_lr);
    let probe_loss = oracle
        .eval_loss(&probe_point)
        .map_err(|e| Error::StepAborted {
            step: step_index,
            detail: format!("probe evaluation at pre_lr {pre_lr:e} failed: {e}"),
            partial: Box::new(report.clone()),
        })?;
    report.probe_loss = probe_loss;
    report.a2_numerator = probe_loss - full.loss + grad_sq * pre_lr;

    let fitted = alpha_star(full.loss, grad_sq, probe_loss, pre_lr, config.denom_guard)?;
    let (alpha_used, fallback) = match fitted {
        AlphaStar::Value(a) if a > 0.0 && a.is_finite() => {
            report.alpha_star_raw = a;
            (a, false)
        }
        AlphaStar::Value(a) => {
            report.alpha_star_raw = a;
            (pre_lr, true)
        }
        AlphaStar::DenomGuard => {
            report.alpha_star_raw = f64::NAN;
            report.denom_guard_hit = true;
            (pre_lr, true)
        }
    };
    report.alpha_used = alpha_used;
    report.fallback = fallback;
    if fallback {
        // The fallback step lands exactly on the probe point.
        report.loss_after = Some(probe_loss);
    }

    Ok((theta.sub_scaled(&full.gradient, alpha_used), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{CallCounters, FnOracle, QuadraticOracle};
    use crate::testfn;

    #[test]
    fn alpha_star_derived_examples() {
        // 1-D quadratic L = theta^2/2 at theta = 1 with pre_lr 1: exact fit,
        // the step lands on the global minimum.
        let a = alpha_star(0.5, 1.0, 0.0, 1.0, 1e-12).unwrap();
        assert_eq!(a, AlphaStar::Value(1.0));

        // Concave fit: denominator 2(-0.5 - 1 + 1) = -1.
        let a = alpha_star(1.0, 1.0, -0.5, 1.0, 1e-12).unwrap();
        assert_eq!(a, AlphaStar::Value(-1.0));

        // Numerator 4 * 0.25 = 1, denominator 2(0.5 - 1 + 2) = 3.
        let a = alpha_star(1.0, 4.0, 0.5, 0.5, 1e-12).unwrap();
        match a {
            AlphaStar::Value(v) => assert!((v - 1.0 / 3.0).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn alpha_star_guard_and_input_validation() {
        // probe_loss - loss0 + grad_sq * pre_lr == 0 exactly.
        let a = alpha_star(1.0, 1.0, 0.0, 1.0, 1e-12).unwrap();
        assert_eq!(a, AlphaStar::DenomGuard);

        assert!(alpha_star(f64::NAN, 1.0, 0.0, 1.0, 1e-12).is_err());
        assert!(alpha_star(1.0, 1.0, 0.0, 0.0, 1e-12).is_err());
        assert!(alpha_star(1.0, -1.0, 0.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn step_exact_on_isotropic_quadratic() {
        let mut q = QuadraticOracle::diagonal(&[1.0], ParamVector::zeros(1)).unwrap();
        let theta = ParamVector::new(vec![1.0]);
        let (next, report) = step(&mut q, &theta, 1.0, &QlabConfig::default(), 1).unwrap();
        assert_eq!(next.as_slice(), &[0.0]);
        assert_eq!(report.alpha_used, 1.0);
        assert!(!report.fallback);
        assert!(!report.converged);
        assert_eq!(
            q.counters(),
            CallCounters {
                full_evals: 1,
                loss_only_evals: 1
            }
        );
    }

    #[test]
    fn step_falls_back_when_fit_is_concave() {
        // Any strictly concave loss along the ray makes the probe undershoot
        // the linear prediction: L = -theta^2/2 from theta = 1.
        let mut concave = FnOracle::new(1, |p| -0.5 * p[0] * p[0], |p| vec![-p[0]]);
        let theta = ParamVector::new(vec![1.0]);
        let (next, report) = step(&mut concave, &theta, 1.0, &QlabConfig::default(), 1).unwrap();
        assert!(report.fallback);
        assert_eq!(report.alpha_used, 1.0);
        assert!(report.alpha_star_raw < 0.0);
        // Fallback lands on the probe point, so the post-step loss is known.
        assert_eq!(report.loss_after, Some(report.probe_loss));
        assert_eq!(next.as_slice(), &[2.0]); // 1 - 1 * (-1)
    }

    #[test]
    fn step_is_noop_at_zero_gradient() {
        let (mut oracle, _) = testfn::make_named_test_function("booth").unwrap();
        let theta = ParamVector::new(vec![1.0, 3.0]);
        let (next, report) = step(&mut oracle, &theta, 0.1, &QlabConfig::default(), 1).unwrap();
        assert!(report.converged);
        assert_eq!(next.as_slice(), theta.as_slice());
        assert!(report.alpha_used > 0.0);
        // The converged short-circuit spends no probe evaluation.
        assert_eq!(oracle.counters().loss_only_evals, 0);
    }

    #[test]
    fn step_error_carries_partial_report() {
        let mut nasty = FnOracle::new(1, |p| if p[0] < 0.0 { f64::NAN } else { p[0] }, |_| {
            vec![1.0]
        });
        let theta = ParamVector::new(vec![0.5]);
        // Probe point 0.5 - 1.0 = -0.5 has NaN loss.
        let err = step(&mut nasty, &theta, 1.0, &QlabConfig::default(), 3).unwrap_err();
        match err {
            Error::StepAborted { step, partial, .. } => {
                assert_eq!(step, 3);
                assert_eq!(partial.loss_before, 0.5);
                assert_eq!(partial.grad_sq_norm, 1.0);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(QlabConfig::default().validate().is_ok());
        let c = QlabConfig {
            initial_pre_lr: 0.0,
            ..QlabConfig::default()
        };
        assert!(c.validate().is_err());
        let c = QlabConfig {
            refresh_interval: Some(0),
            ..QlabConfig::default()
        };
        assert!(c.validate().is_err());
        let c = QlabConfig {
            max_doublings: 0,
            ..QlabConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
