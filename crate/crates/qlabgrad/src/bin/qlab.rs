//! Experiment runner CLI.
//!
//! Exit codes: 0 = all runs OK, 1 = any run failed, 2 = config error.

use clap::{Parser, Subcommand};
use qlabgrad::error::Error;
use qlabgrad::gradcheck::check_gradient;
use qlabgrad::harness::{
    run_experiment, run_theory_suite, ExperimentConfig, GradCheckConfig, ProblemSpec,
    TheorySuiteConfig,
};
use qlabgrad::oracle::LossOracle;
use qlabgrad::param::ParamVector;
use qlabgrad::testfn::function_pair;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "qlab",
    version,
    about = "Quadratic-fit learning rates: experiments, theory checks, gradient checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory (overrides the config's out_dir and $QLAB_OUT_DIR).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the config's run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the config's iteration budget.
    #[arg(long, global = true)]
    max_iters: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config; writes trajectory CSVs and a comparison report.
    Run { config: PathBuf },
    /// Replay the convergence theory on a grid of random quadratics.
    Theory {
        /// Suite config; built-in defaults when omitted.
        config: Option<PathBuf>,
    },
    /// Compare analytic gradients against central differences.
    Gradcheck { config: PathBuf },
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    });
}

fn read_config(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn out_dir(cli_out: &Option<PathBuf>, config_out: Option<&Path>) -> PathBuf {
    cli_out
        .clone()
        .or_else(|| config_out.map(Path::to_path_buf))
        .or_else(|| std::env::var_os("QLAB_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("qlab-out"))
}

fn dispatch(cli: Cli) -> Result<i32, Error> {
    match &cli.command {
        Command::Run { config } => {
            let mut experiment = ExperimentConfig::parse_str(&read_config(config)?)?;
            if let Some(seed) = cli.seed {
                experiment.seed = seed;
            }
            if let Some(max_iters) = cli.max_iters {
                experiment.max_iters = max_iters;
            }
            let dir = out_dir(&cli.out, experiment.out_dir.as_deref());
            let outcome = run_experiment(&experiment, &dir)?;
            for row in &outcome.report {
                let reached = row
                    .iters_to_threshold
                    .map(|v| v.to_string())
                    .unwrap_or_else(|| "-".into());
                println!(
                    "{:<24} status={:<6} iters_to_threshold={:<8} final_loss={:.6e} evals={}+{} fallbacks={}",
                    row.label,
                    if row.failed { "failed" } else { "ok" },
                    reached,
                    row.final_loss,
                    row.full_evals,
                    row.loss_only_evals,
                    row.fallbacks,
                );
            }
            println!("wrote {}", dir.display());
            Ok(if outcome.any_failed { 1 } else { 0 })
        }
        Command::Theory { config } => {
            let suite = match config {
                Some(path) => TheorySuiteConfig::parse_str(&read_config(path)?)?,
                None => TheorySuiteConfig::default(),
            };
            let report = run_theory_suite(&suite)?;
            print!("{}", report.summary());
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("theory_report.txt"), report.summary())?;
                println!("wrote {}", dir.join("theory_report.txt").display());
            }
            Ok(0)
        }
        Command::Gradcheck { config } => {
            let mut check = GradCheckConfig::parse_str(&read_config(config)?)?;
            if let Some(seed) = cli.seed {
                check.seed = seed;
            }
            gradcheck_cmd(&check)
        }
    }
}

/// Random parameter point near the seeded init. The perturbation breaks the
/// exact zeros of a fresh init (zero biases put ReLU pre-activations right on
/// the kink, where central differences are undefined).
fn jiggled(mlp: &qlabgrad::nn::Mlp, rng: &mut ChaCha12Rng) -> ParamVector {
    ParamVector::new(
        mlp.flatten()
            .iter()
            .map(|v| v + rng.random_range(-0.1..0.1))
            .collect(),
    )
}

fn gradcheck_cmd(config: &GradCheckConfig) -> Result<i32, Error> {
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut failures = 0u64;
    let mut worst = 0.0_f64;

    for point_index in 0..config.points {
        let (mut oracle, point): (Box<dyn LossOracle>, ParamVector) = match &config.problem {
            ProblemSpec::Named(which) => {
                let (oracle, meta) = function_pair(*which);
                let bounds = meta.domain_bounds.unwrap();
                let p = bounds
                    .iter()
                    .map(|(lo, hi)| rng.random_range(*lo..*hi))
                    .collect();
                (Box::new(oracle), ParamVector::new(p))
            }
            ProblemSpec::Quadratic {
                eigenvalues,
                rotation_seed,
                offset,
            } => {
                let dim = eigenvalues.len();
                let offset =
                    ParamVector::new(offset.clone().unwrap_or_else(|| vec![0.0; dim]));
                let oracle: Box<dyn LossOracle> = match rotation_seed {
                    Some(seed) => Box::new(qlabgrad::oracle::QuadraticOracle::rotated(
                        eigenvalues,
                        *seed,
                        offset,
                    )?),
                    None => Box::new(qlabgrad::oracle::QuadraticOracle::diagonal(
                        eigenvalues,
                        offset,
                    )?),
                };
                let p = (0..dim)
                    .map(|_| 2.0 * rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect();
                (oracle, ParamVector::new(p))
            }
            ProblemSpec::SynthMlp {
                hidden,
                n,
                feature_dim,
                classes,
                spread,
                data_seed,
                batch_size,
                ..
            } => {
                let data =
                    qlabgrad::nn::synth_dataset(*data_seed, *n, *feature_dim, *classes, *spread)?;
                let mut widths = vec![*feature_dim];
                widths.extend_from_slice(hidden);
                widths.push(*classes);
                let mlp = qlabgrad::nn::Mlp::seeded(
                    &qlabgrad::nn::MlpSpec::new(widths)?,
                    config.seed.wrapping_add(point_index),
                );
                let theta = jiggled(&mlp, &mut rng);
                let batch = (*batch_size).min(data.num_samples);
                let oracle =
                    qlabgrad::nn::MinibatchOracle::new(mlp, data, batch, point_index)?;
                (Box::new(oracle), theta)
            }
            ProblemSpec::IdxMlp {
                hidden,
                images,
                labels,
                batch_size,
                ..
            } => {
                let data = qlabgrad::nn::load_idx(images, labels)?;
                let mut widths = vec![data.feature_dim];
                widths.extend_from_slice(hidden);
                widths.push(data.num_classes);
                let mlp = qlabgrad::nn::Mlp::seeded(
                    &qlabgrad::nn::MlpSpec::new(widths)?,
                    config.seed.wrapping_add(point_index),
                );
                let theta = jiggled(&mlp, &mut rng);
                let batch = (*batch_size).min(data.num_samples);
                let oracle =
                    qlabgrad::nn::MinibatchOracle::new(mlp, data, batch, point_index)?;
                (Box::new(oracle), theta)
            }
        };

        let report = check_gradient(&mut *oracle, &point, config.rel_tol)?;
        worst = worst.max(report.max_rel_err);
        if !report.pass {
            failures += 1;
        }
        println!(
            "point {:>3}: {} (max rel err {:.3e} at coordinate {})",
            point_index,
            if report.pass { "pass" } else { "FAIL" },
            report.max_rel_err,
            report.worst_coord,
        );
    }

    println!(
        "gradcheck: {}/{} points passed at tol {:.1e} (worst {:.3e})",
        config.points - failures,
        config.points,
        config.rel_tol,
        worst,
    );
    Ok(if failures == 0 { 0 } else { 1 })
}
