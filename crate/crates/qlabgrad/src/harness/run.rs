//! Experiment execution: identical problems across schemes, trajectory and
//! report output.

use crate::error::{Error, Result};
use crate::harness::config::{EntryKind, ExperimentConfig, InitSpec, ProblemSpec};
use crate::harness::csv::{write_report_csv, write_trajectory_csv};
use crate::nn::{load_idx, synth_dataset, Dataset, MinibatchOracle, Mlp, MlpSpec, Split};
use crate::oracle::{LossOracle, QuadraticOracle};
use crate::param::ParamVector;
use crate::qlab::{run_qlabgrad, RunStatus, StopReason, StopRule, Trajectory, TrajectoryRow};
use crate::schemes::Scheme;
use crate::testfn::function_pair;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::path::Path;

/// One line of the comparison report.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub label: String,
    /// Steps to first reach the loss target; `None` when never reached (or no
    /// target was configured).
    pub iters_to_threshold: Option<u64>,
    pub final_loss: f64,
    pub final_grad_norm: f64,
    pub full_evals: u64,
    pub loss_only_evals: u64,
    pub fallbacks: u64,
    pub failed: bool,
}

#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub label: String,
    pub trajectory: Trajectory,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub runs: Vec<SchemeRun>,
    pub report: Vec<ReportRow>,
    pub any_failed: bool,
}

/// Drives one baseline scheme with the same loop shape as the quadratic-fit
/// runner: advance the batch binding once per iteration after the first, step,
/// record, stop on the loss target or the gradient floor.
pub fn run_scheme<O: LossOracle + ?Sized>(
    oracle: &mut O,
    theta0: &ParamVector,
    scheme: &mut Scheme,
    max_iters: u64,
    stop: StopRule,
    grad_floor: f64,
) -> Result<Trajectory> {
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

    for t in 1..=max_iters {
        if t > 1 {
            oracle.next_batch();
        }
        let (next, record) = match scheme.step(oracle, &theta) {
            Ok(pair) => pair,
            Err(e) => {
                trajectory.status = RunStatus::Failed(e.to_string());
                return Ok(trajectory);
            }
        };
        let counters = oracle.counters();
        trajectory.rows.push(TrajectoryRow {
            step: t,
            loss: record.loss,
            grad_norm: record.grad_norm,
            rate: record.rate,
            alpha_star_raw: f64::NAN,
            fallback: false,
            full_evals: counters.full_evals,
            loss_only_evals: counters.loss_only_evals,
            detail: None,
        });

        if record.grad_norm * record.grad_norm <= grad_floor {
            trajectory.status = RunStatus::Converged(StopReason::GradFloor);
            return Ok(trajectory);
        }
        if let Some(target) = stop.loss_target {
            if record.loss <= target {
                trajectory.final_params = Some(next);
                trajectory.status = RunStatus::Converged(StopReason::LossTarget);
                return Ok(trajectory);
            }
        }
        theta = next;
        trajectory.final_params = Some(theta.clone());
    }
    Ok(trajectory)
}

/// A problem plus its fixed initial point, able to mint one fresh oracle per
/// scheme so every run sees bit-identical state.
struct ProblemInstance {
    theta0: ParamVector,
    dataset: Option<Dataset>,
    spec: ProblemSpec,
    seed: u64,
}

impl ProblemInstance {
    fn build(config: &ExperimentConfig) -> Result<Self> {
        let spec = config.problem.clone();
        match &spec {
            ProblemSpec::Named(which) => {
                let (_, meta) = function_pair(*which);
                let theta0 = match &config.init {
                    InitSpec::Point(p) => {
                        let v = ParamVector::new(p.clone());
                        if v.dim() != meta.dim {
                            return Err(Error::Config(format!(
                                "init has {} coordinates, problem needs {}",
                                v.dim(),
                                meta.dim
                            )));
                        }
                        v
                    }
                    InitSpec::Seed(seed) => {
                        let bounds = meta.domain_bounds.clone().unwrap();
                        let mut rng = ChaCha12Rng::seed_from_u64(*seed);
                        ParamVector::new(
                            bounds
                                .iter()
                                .map(|(lo, hi)| rng.random_range(*lo..*hi))
                                .collect(),
                        )
                    }
                    InitSpec::Default => ParamVector::new(default_start(*which)),
                };
                Ok(ProblemInstance {
                    theta0,
                    dataset: None,
                    spec,
                    seed: config.seed,
                })
            }
            ProblemSpec::Quadratic { eigenvalues, offset, .. } => {
                let dim = eigenvalues.len();
                if let Some(o) = offset {
                    if o.len() != dim {
                        return Err(Error::Config(format!(
                            "quadratic.offset has {} coordinates, eigenvalues {}",
                            o.len(),
                            dim
                        )));
                    }
                }
                let theta0 = match &config.init {
                    InitSpec::Point(p) => {
                        if p.len() != dim {
                            return Err(Error::Config(format!(
                                "init has {} coordinates, problem needs {dim}",
                                p.len()
                            )));
                        }
                        ParamVector::new(p.clone())
                    }
                    InitSpec::Seed(seed) => quadratic_start(dim, *seed),
                    InitSpec::Default => quadratic_start(dim, 0),
                };
                Ok(ProblemInstance {
                    theta0,
                    dataset: None,
                    spec,
                    seed: config.seed,
                })
            }
            ProblemSpec::SynthMlp {
                hidden,
                n,
                feature_dim,
                classes,
                spread,
                data_seed,
                holdout,
                ..
            } => {
                let full = synth_dataset(*data_seed, *n, *feature_dim, *classes, *spread)?;
                let train = if *holdout > 0 {
                    full.split_at(n - holdout)?.0
                } else {
                    full
                };
                let mlp = mlp_for(hidden, *feature_dim, *classes, config.seed)?;
                Ok(ProblemInstance {
                    theta0: mlp.flatten(),
                    dataset: Some(train),
                    spec,
                    seed: config.seed,
                })
            }
            ProblemSpec::IdxMlp {
                hidden,
                images,
                labels,
                limit,
                ..
            } => {
                let mut data = load_idx(images, labels)?;
                if let Some(limit) = limit {
                    if *limit < data.num_samples {
                        data = Dataset::new(
                            data.features[..limit * data.feature_dim].to_vec(),
                            data.labels[..*limit].to_vec(),
                            data.feature_dim,
                            data.num_classes,
                            Split::Train,
                        )?;
                    }
                }
                let mlp = mlp_for(hidden, data.feature_dim, data.num_classes, config.seed)?;
                Ok(ProblemInstance {
                    theta0: mlp.flatten(),
                    dataset: Some(data),
                    spec,
                    seed: config.seed,
                })
            }
        }
    }

    fn fresh_oracle(&self) -> Result<Box<dyn LossOracle>> {
        match &self.spec {
            ProblemSpec::Named(which) => Ok(Box::new(function_pair(*which).0)),
            ProblemSpec::Quadratic {
                eigenvalues,
                rotation_seed,
                offset,
            } => {
                let dim = eigenvalues.len();
                let offset = ParamVector::new(offset.clone().unwrap_or_else(|| vec![0.0; dim]));
                let oracle = match rotation_seed {
                    Some(seed) => QuadraticOracle::rotated(eigenvalues, *seed, offset)?,
                    None => QuadraticOracle::diagonal(eigenvalues, offset)?,
                };
                Ok(Box::new(oracle))
            }
            ProblemSpec::SynthMlp {
                hidden,
                feature_dim,
                classes,
                batch_size,
                ..
            } => {
                let data = self.dataset.clone().unwrap();
                let mlp = mlp_for(hidden, *feature_dim, *classes, self.seed)?;
                Ok(Box::new(MinibatchOracle::new(
                    mlp,
                    data,
                    *batch_size,
                    self.seed,
                )?))
            }
            ProblemSpec::IdxMlp {
                hidden, batch_size, ..
            } => {
                let data = self.dataset.clone().unwrap();
                let mlp = mlp_for(hidden, data.feature_dim, data.num_classes, self.seed)?;
                let batch = (*batch_size).min(data.num_samples);
                Ok(Box::new(MinibatchOracle::new(mlp, data, batch, self.seed)?))
            }
        }
    }
}

fn quadratic_start(dim: usize, seed: u64) -> ParamVector {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    ParamVector::new(
        (0..dim)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect(),
    )
}

/// Documented default starts for the named surfaces.
fn default_start(which: crate::testfn::NamedFunction) -> Vec<f64> {
    use crate::testfn::NamedFunction::*;
    match which {
        Booth => vec![-5.0, -5.0],
        Himmelblau => vec![0.0, 0.0],
        Eggholder => vec![0.0, 0.0],
    }
}

fn mlp_for(hidden: &[usize], feature_dim: usize, classes: usize, seed: u64) -> Result<Mlp> {
    let mut widths = vec![feature_dim];
    widths.extend_from_slice(hidden);
    widths.push(classes);
    Ok(Mlp::seeded(&MlpSpec::new(widths)?, seed))
}

/// Runs every scheme from the identical initial point, writes one trajectory
/// CSV per scheme plus the comparison report and a metadata sidecar into
/// `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let problem = ProblemInstance::build(config)?;
    let stop = StopRule {
        loss_target: config.loss_target,
    };

    let mut runs = Vec::new();
    let mut report = Vec::new();
    let mut wall_times = Vec::new();
    let mut any_failed = false;

    for entry in &config.schemes {
        let run_start = std::time::Instant::now();
        let mut oracle = problem.fresh_oracle()?;
        let trajectory = match &entry.kind {
            EntryKind::Qlabgrad {
                alpha0,
                refresh_interval,
            } => {
                let qlab_config = config.qlab_config(*alpha0, *refresh_interval);
                run_qlabgrad(
                    &mut *oracle,
                    &problem.theta0,
                    &qlab_config,
                    config.max_iters,
                    stop,
                )?
            }
            EntryKind::Baseline(spec) => {
                let mut scheme = Scheme::new(spec.clone())?;
                run_scheme(
                    &mut *oracle,
                    &problem.theta0,
                    &mut scheme,
                    config.max_iters,
                    stop,
                    config.grad_floor,
                )?
            }
        };

        let failed = matches!(trajectory.status, RunStatus::Failed(_));
        any_failed |= failed;
        let (full_evals, loss_only_evals) = trajectory.final_counters();
        report.push(ReportRow {
            label: entry.label.clone(),
            iters_to_threshold: config
                .loss_target
                .and_then(|t| trajectory.iters_to_threshold(t)),
            final_loss: trajectory.final_loss().unwrap_or(f64::NAN),
            final_grad_norm: trajectory.final_grad_norm().unwrap_or(f64::NAN),
            full_evals,
            loss_only_evals,
            fallbacks: trajectory.fallback_count(),
            failed,
        });

        write_trajectory_csv(&trajectory, &out_dir.join(trajectory_file_name(&entry.label)))?;
        wall_times.push(run_start.elapsed().as_secs_f64());
        runs.push(SchemeRun {
            label: entry.label.clone(),
            trajectory,
        });
    }

    write_report_csv(&report, &out_dir.join("report.csv"))?;
    write_metadata(config, &report, &wall_times, out_dir)?;

    Ok(ExperimentOutcome {
        runs,
        report,
        any_failed,
    })
}

pub fn trajectory_file_name(label: &str) -> String {
    let safe: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}.csv")
}

/// Hostname, wall-clock times, and versions live here, not in the CSVs, so
/// the data files stay byte-reproducible. Wall time is reported, never
/// asserted; evaluation budgets are asserted from the counters instead.
fn write_metadata(
    config: &ExperimentConfig,
    report: &[ReportRow],
    wall_times: &[f64],
    out_dir: &Path,
) -> Result<()> {
    use std::fmt::Write as _;
    let mut text = String::new();
    let unix_secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let hostname = std::env::var("HOSTNAME")
        .ok()
        .or_else(|| {
            std::fs::read_to_string("/etc/hostname")
                .ok()
                .map(|s| s.trim().to_string())
        })
        .unwrap_or_else(|| "unknown".into());
    let _ = writeln!(text, "tool = qlab {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(text, "unix_time = {unix_secs}");
    let _ = writeln!(text, "hostname = {hostname}");
    let _ = writeln!(text, "seed = {}", config.seed);
    let _ = writeln!(text, "max_iters = {}", config.max_iters);
    for (row, wall) in report.iter().zip(wall_times) {
        let _ = writeln!(
            text,
            "run = {} -> {} ({}, {:.3}s wall)",
            row.label,
            trajectory_file_name(&row.label),
            if row.failed { "failed" } else { "ok" },
            wall
        );
    }
    std::fs::write(out_dir.join("run_metadata.txt"), text)?;
    Ok(())
}
