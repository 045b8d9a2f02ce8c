//! The full training loop: pre-learning-rate search, steps, stopping rules,
//! and the per-iteration trajectory record the verifiers and the harness
//! consume.

use crate::error::{Error, Result};
use crate::oracle::LossOracle;
use crate::param::ParamVector;
use crate::qlab::plr::{find_plr_at, PlrSearch};
use crate::qlab::{step, QlabConfig, RefreshPoint, StepReport};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Loss-based stopping rule; the gradient floor lives in [`QlabConfig`].
#[derive(Debug, Clone, Copy, Default)]
pub struct StopRule {
    /// Stop once a recorded loss falls at or below this value.
    pub loss_target: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradFloor,
    LossTarget,
}

/// Terminal state of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Converged(StopReason),
    MaxIters,
    Failed(String),
}

/// One trajectory row: the measurements behind the step taken at iteration
/// `step`, plus cumulative oracle counters after the step.
#[derive(Debug, Clone)]
pub struct TrajectoryRow {
    /// 1-based iteration index.
    pub step: u64,
    /// Loss at the iterate the step was computed from.
    pub loss: f64,
    /// Gradient norm at that iterate.
    pub grad_norm: f64,
    /// Rate actually applied.
    pub rate: f64,
    /// Raw fitted rate; NaN for rows that have no fit (guarded steps,
    /// baseline schemes).
    pub alpha_star_raw: f64,
    pub fallback: bool,
    /// Cumulative full evaluations after this step.
    pub full_evals: u64,
    /// Cumulative loss-only evaluations after this step.
    pub loss_only_evals: u64,
    /// Full step internals, present for quadratic-fit runs.
    pub detail: Option<StepReport>,
}

/// Ordered per-iteration record of a run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    pub status: RunStatus,
    /// Every pre-learning-rate search the run performed, in order.
    pub plr_searches: Vec<PlrSearch>,
    /// The final iterate (the last point before a failure, for failed runs).
    pub final_params: Option<ParamVector>,
}

impl Trajectory {
    /// Number of steps needed to first bring the recorded loss at or below
    /// `target`; `None` when the run never got there. Row `t` records the loss
    /// at the iterate reached after `t - 1` steps.
    pub fn iters_to_threshold(&self, target: f64) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.loss <= target)
            .map(|r| r.step - 1)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.loss)
    }

    pub fn final_grad_norm(&self) -> Option<f64> {
        self.rows.last().map(|r| r.grad_norm)
    }

    /// Cumulative oracle counters after the last recorded step.
    pub fn final_counters(&self) -> (u64, u64) {
        self.rows
            .last()
            .map(|r| (r.full_evals, r.loss_only_evals))
            .unwrap_or((0, 0))
    }

    /// Fallback steps, excluding the terminal zero-gradient no-op.
    pub fn fallback_count(&self) -> u64 {
        self.rows
            .iter()
            .filter(|r| {
                r.fallback
                    && !r
                        .detail
                        .as_ref()
                        .map(|d| d.converged)
                        .unwrap_or(false)
            })
            .count() as u64
    }
}

/// Runs the scheme from `theta0` for up to `max_iters` steps.
///
/// The pre-learning-rate search runs once before the first step and again
/// before step `t` whenever `t - 1` is a positive multiple of the configured
/// refresh interval, always against the oracle's current batch binding. The
/// binding advances once per iteration after the first.
///
/// Argument errors (zero `max_iters`, invalid config) are returned as `Err`;
/// evaluation failures mid-run terminate the run with a partial trajectory
/// and status [`RunStatus::Failed`].
pub fn run_qlabgrad<O: LossOracle + ?Sized>(
    oracle: &mut O,
    theta0: &ParamVector,
    config: &QlabConfig,
    max_iters: u64,
    stop: StopRule,
) -> Result<Trajectory> {
    config.validate()?;
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    theta0.validate()?;

    let mut trajectory = Trajectory {
        rows: Vec::new(),
        status: RunStatus::MaxIters,
        plr_searches: Vec::new(),
        final_params: Some(theta0.clone()),
    };

    let mut theta = theta0.clone();
    let mut pre_lr = match search(oracle, &theta, config, 0, &mut trajectory) {
        Ok(rate) => rate,
        Err(e) => {
            trajectory.status = RunStatus::Failed(e.to_string());
            return Ok(trajectory);
        }
    };
    let mut prev_binding = oracle.binding_id();

    for t in 1..=max_iters {
        if t > 1 {
            oracle.next_batch();
        }
        let refresh_due = match config.refresh_interval {
            Some(interval) => t > 1 && (t - 1) % interval == 0,
            None => false,
        };
        if refresh_due {
            match search(oracle, &theta, config, t, &mut trajectory) {
                Ok(rate) => pre_lr = rate,
                Err(e) => {
                    trajectory.status = RunStatus::Failed(e.to_string());
                    return Ok(trajectory);
                }
            }
        }

        let binding = oracle.binding_id();
        let (next, report) = match step(oracle, &theta, pre_lr, config, t) {
            Ok(pair) => pair,
            Err(e) => {
                trajectory.status = RunStatus::Failed(e.to_string());
                return Ok(trajectory);
            }
        };

        // The previous step's post-step loss is this step's pre-step loss
        // whenever both saw the same loss expression.
        if binding == prev_binding {
            if let Some(prev) = trajectory.rows.last_mut() {
                if let Some(detail) = prev.detail.as_mut() {
                    if detail.loss_after.is_none() {
                        detail.loss_after = Some(report.loss_before);
                    }
                }
            }
        }
        prev_binding = binding;

        let counters = oracle.counters();
        trajectory.rows.push(TrajectoryRow {
            step: t,
            loss: report.loss_before,
            grad_norm: report.grad_sq_norm.sqrt(),
            rate: report.alpha_used,
            alpha_star_raw: report.alpha_star_raw,
            fallback: report.fallback,
            full_evals: counters.full_evals,
            loss_only_evals: counters.loss_only_evals,
            detail: Some(report.clone()),
        });

        if report.converged {
            trajectory.status = RunStatus::Converged(StopReason::GradFloor);
            return Ok(trajectory);
        }
        if let Some(target) = stop.loss_target {
            if report.loss_before <= target {
                trajectory.final_params = Some(next);
                trajectory.status = RunStatus::Converged(StopReason::LossTarget);
                return Ok(trajectory);
            }
        }
        theta = next;
        trajectory.final_params = Some(theta.clone());
    }

    trajectory.status = RunStatus::MaxIters;
    Ok(trajectory)
}

fn search<O: LossOracle + ?Sized>(
    oracle: &mut O,
    theta: &ParamVector,
    config: &QlabConfig,
    at_step: u64,
    trajectory: &mut Trajectory,
) -> Result<f64> {
    let search_point = match config.refresh_point {
        RefreshPoint::CurrentIterate => theta.clone(),
        RefreshPoint::Resample { seed, scale } => {
            let mut rng =
                ChaCha12Rng::seed_from_u64(seed ^ (at_step.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
            let values = (0..theta.dim())
                .map(|_| scale * rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal))
                .collect();
            ParamVector::new(values)
        }
    };
    let found = find_plr_at(oracle, &search_point, config.initial_pre_lr, config, at_step)?;
    let rate = found.pre_lr;
    trajectory.plr_searches.push(found);
    Ok(rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::QuadraticOracle;
    use crate::qlab::RefreshPoint;
    use crate::testfn;

    fn isotropic_1d() -> QuadraticOracle {
        QuadraticOracle::diagonal(&[1.0], ParamVector::zeros(1)).unwrap()
    }

    #[test]
    fn exact_quadratic_converges_after_one_real_step() {
        let mut q = isotropic_1d();
        let config = QlabConfig::full_batch(1.0);
        let traj = run_qlabgrad(
            &mut q,
            &ParamVector::new(vec![1.0]),
            &config,
            10,
            StopRule::default(),
        )
        .unwrap();
        assert_eq!(traj.status, RunStatus::Converged(StopReason::GradFloor));
        // Row 1: the exact step. Row 2: the zero-gradient measurement at the minimum.
        assert_eq!(traj.rows.len(), 2);
        assert_eq!(traj.rows[0].rate, 1.0);
        assert!(!traj.rows[0].fallback);
        assert_eq!(traj.rows[1].loss, 0.0);
        assert_eq!(traj.iters_to_threshold(0.0), Some(1));
    }

    #[test]
    fn max_iters_zero_is_rejected_and_one_gives_one_row() {
        let mut q = isotropic_1d();
        let config = QlabConfig::full_batch(0.5);
        assert!(run_qlabgrad(
            &mut q,
            &ParamVector::new(vec![1.0]),
            &config,
            0,
            StopRule::default()
        )
        .is_err());

        let mut q = isotropic_1d();
        let traj = run_qlabgrad(
            &mut q,
            &ParamVector::new(vec![1.0]),
            &config,
            1,
            StopRule::default(),
        )
        .unwrap();
        assert_eq!(traj.rows.len(), 1);
        assert_eq!(traj.status, RunStatus::MaxIters);
    }

    #[test]
    fn booth_converges_well_under_budget() {
        let (mut oracle, _) = testfn::make_named_test_function("booth").unwrap();
        let config = QlabConfig::full_batch(0.1);
        let traj = run_qlabgrad(
            &mut oracle,
            &ParamVector::new(vec![-5.0, -5.0]),
            &config,
            500,
            StopRule::default(),
        )
        .unwrap();
        assert_eq!(traj.status, RunStatus::Converged(StopReason::GradFloor));
        let final_loss = traj.final_loss().unwrap();
        assert!(final_loss <= 1e-12, "final loss {final_loss}");
        assert!(traj.rows.len() <= 500);
    }

    #[test]
    fn loss_target_stop_is_recorded() {
        let (mut oracle, _) = testfn::make_named_test_function("booth").unwrap();
        let config = QlabConfig::full_batch(0.1);
        let traj = run_qlabgrad(
            &mut oracle,
            &ParamVector::new(vec![-5.0, -5.0]),
            &config,
            500,
            StopRule {
                loss_target: Some(1e-6),
            },
        )
        .unwrap();
        assert_eq!(traj.status, RunStatus::Converged(StopReason::LossTarget));
        assert!(traj.final_loss().unwrap() <= 1e-6);
        assert!(traj.iters_to_threshold(1e-6).is_some());
    }

    #[test]
    fn mandatory_search_runs_before_the_first_step() {
        let mut q = isotropic_1d();
        let config = QlabConfig::full_batch(10.0);
        let traj = run_qlabgrad(
            &mut q,
            &ParamVector::new(vec![1.0]),
            &config,
            5,
            StopRule::default(),
        )
        .unwrap();
        assert_eq!(traj.plr_searches.len(), 1);
        assert_eq!(traj.plr_searches[0].at_step, 0);
        assert_eq!(traj.plr_searches[0].pre_lr, 1.25);
        assert_eq!(traj.rows[0].detail.as_ref().unwrap().pre_lr, 1.25);
    }

    #[test]
    fn refresh_interval_schedules_searches() {
        // A 2-D quadratic that cannot converge in 25 steps of zigzag.
        let mut q = QuadraticOracle::diagonal(&[1.0, 9.0], ParamVector::zeros(2)).unwrap();
        let mut config = QlabConfig::full_batch(0.05);
        config.refresh_interval = Some(10);
        config.grad_floor = 0.0;
        let traj = run_qlabgrad(
            &mut q,
            &ParamVector::new(vec![3.0, 1.0]),
            &config,
            25,
            StopRule::default(),
        )
        .unwrap();
        // Searches at t = 0, then before steps 11 and 21.
        let steps: Vec<u64> = traj.plr_searches.iter().map(|s| s.at_step).collect();
        assert_eq!(steps, vec![0, 11, 21]);
    }

    #[test]
    fn resample_refresh_point_is_deterministic() {
        let run = |seed| {
            let mut q = QuadraticOracle::diagonal(&[1.0, 9.0], ParamVector::zeros(2)).unwrap();
            let mut config = QlabConfig::full_batch(0.05);
            config.refresh_interval = Some(10);
            config.grad_floor = 0.0;
            config.refresh_point = RefreshPoint::Resample { seed, scale: 1.0 };
            run_qlabgrad(
                &mut q,
                &ParamVector::new(vec![3.0, 1.0]),
                &config,
                25,
                StopRule::default(),
            )
            .unwrap()
        };
        let a = run(11);
        let b = run(11);
        let rates_a: Vec<f64> = a.plr_searches.iter().map(|s| s.pre_lr).collect();
        let rates_b: Vec<f64> = b.plr_searches.iter().map(|s| s.pre_lr).collect();
        assert_eq!(rates_a, rates_b);
    }

    #[test]
    fn failed_run_keeps_partial_trajectory() {
        // Concave loss: the search itself stalls at the doubling cap.
        let mut concave =
            crate::oracle::FnOracle::new(1, |p| -0.5 * p[0] * p[0], |p| vec![-p[0]]);
        let traj = run_qlabgrad(
            &mut concave,
            &ParamVector::new(vec![1.0]),
            &QlabConfig::default(),
            10,
            StopRule::default(),
        )
        .unwrap();
        assert!(matches!(traj.status, RunStatus::Failed(_)));
        assert!(traj.rows.is_empty());
    }

    #[test]
    fn loss_after_is_backfilled_for_fixed_bindings() {
        let mut q = QuadraticOracle::diagonal(&[1.0, 9.0], ParamVector::zeros(2)).unwrap();
        let mut config = QlabConfig::full_batch(0.05);
        config.grad_floor = 0.0;
        let traj = run_qlabgrad(
            &mut q,
            &ParamVector::new(vec![3.0, 1.0]),
            &config,
            10,
            StopRule::default(),
        )
        .unwrap();
        for pair in traj.rows.windows(2) {
            let d0 = pair[0].detail.as_ref().unwrap();
            let d1 = pair[1].detail.as_ref().unwrap();
            assert_eq!(d0.loss_after, Some(d1.loss_before));
        }
    }

    #[test]
    fn counters_are_cumulative_and_monotone() {
        let (mut oracle, _) = testfn::make_named_test_function("himmelblau").unwrap();
        let config = QlabConfig::full_batch(0.1);
        let traj = run_qlabgrad(
            &mut oracle,
            &ParamVector::new(vec![0.0, 0.0]),
            &config,
            50,
            StopRule::default(),
        )
        .unwrap();
        for pair in traj.rows.windows(2) {
            assert!(pair[1].full_evals >= pair[0].full_evals);
            assert!(pair[1].loss_only_evals >= pair[0].loss_only_evals);
            assert_eq!(pair[1].step, pair[0].step + 1);
        }
    }
}
