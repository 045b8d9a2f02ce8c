//! The loss-oracle contract and the quadratic reference problem.
//!
//! A [`LossOracle`] is the single seam between optimizers and problems: it
//! evaluates the loss (and optionally its gradient) at a parameter point and
//! counts its own calls, so evaluation budgets can be asserted exactly. An
//! oracle is deterministic: identical parameters under an identical batch
//! binding produce bit-identical results.
//!
//! [`QuadraticOracle`] provides the ground-truth problem family for the
//! convergence checks: its Lipschitz smooth constant is the largest eigenvalue
//! of its matrix, known exactly at construction.

use crate::error::{Error, Result};
use crate::param::ParamVector;
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Loss and gradient at one parameter point. Both are guaranteed finite.
#[derive(Debug, Clone)]
pub struct GradEval {
    pub loss: f64,
    pub gradient: ParamVector,
}

/// Running tally of oracle evaluations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CallCounters {
    /// Loss-and-gradient evaluations (`eval_full`).
    pub full_evals: u64,
    /// Loss-only evaluations (`eval_loss`).
    pub loss_only_evals: u64,
}

/// Evaluates a loss function and its gradient at parameter points.
///
/// Implementations must be deterministic for a fixed batch binding, must
/// increment exactly one counter per evaluation, and must reject non-finite
/// inputs and outputs with an error rather than propagating them.
///
/// One oracle instance belongs to one single-threaded run; distinct instances
/// may run in parallel.
pub trait LossOracle {
    /// Parameter dimension the oracle expects.
    fn dim(&self) -> usize;

    /// Loss and gradient at `theta`. Increments `full_evals` by exactly one.
    fn eval_full(&mut self, theta: &ParamVector) -> Result<GradEval>;

    /// Loss only at `theta`. Increments `loss_only_evals` by exactly one.
    fn eval_loss(&mut self, theta: &ParamVector) -> Result<f64>;

    fn counters(&self) -> CallCounters;

    /// Lipschitz constant of the gradient, when known analytically.
    fn lipschitz_constant(&self) -> Option<f64> {
        None
    }

    /// Advance to the next minibatch binding. No-op for oracles whose loss
    /// expression is fixed (analytic functions, full-batch training).
    fn next_batch(&mut self) {}

    /// Identifier of the current loss-expression binding. Two evaluations with
    /// equal binding ids see the same function of the parameters.
    fn binding_id(&self) -> u64 {
        0
    }
}

/// Entry checks shared by oracle implementations.
pub(crate) fn check_entry(expected_dim: usize, theta: &ParamVector) -> Result<()> {
    theta.validate()?;
    if theta.dim() != expected_dim {
        return Err(Error::DimMismatch {
            expected: expected_dim,
            got: theta.dim(),
        });
    }
    Ok(())
}

pub(crate) fn check_finite_loss(loss: f64) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFinite(format!("loss evaluated to {loss}")))
    }
}

fn check_finite_grad(grad: Vec<f64>) -> Result<ParamVector> {
    for (i, v) in grad.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("gradient coordinate {i} is {v}")));
        }
    }
    Ok(ParamVector::new(grad))
}

pub type LossFn = Box<dyn Fn(&[f64]) -> f64>;
pub type GradFn = Box<dyn Fn(&[f64]) -> Vec<f64>>;

/// An oracle built from loss and gradient closures.
///
/// This is how the named benchmark functions and ad-hoc test problems are
/// wrapped behind the [`LossOracle`] contract.
pub struct FnOracle {
    dim: usize,
    loss_fn: LossFn,
    grad_fn: GradFn,
    lipschitz: Option<f64>,
    counters: CallCounters,
}

impl FnOracle {
    pub fn new<F, G>(dim: usize, loss_fn: F, grad_fn: G) -> Self
    where
        F: Fn(&[f64]) -> f64 + 'static,
        G: Fn(&[f64]) -> Vec<f64> + 'static,
    {
        FnOracle {
            dim,
            loss_fn: Box::new(loss_fn),
            grad_fn: Box::new(grad_fn),
            lipschitz: None,
            counters: CallCounters::default(),
        }
    }

    pub fn with_lipschitz(mut self, m: f64) -> Self {
        self.lipschitz = Some(m);
        self
    }
}

impl LossOracle for FnOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_full(&mut self, theta: &ParamVector) -> Result<GradEval> {
        check_entry(self.dim, theta)?;
        self.counters.full_evals += 1;
        let loss = check_finite_loss((self.loss_fn)(theta.as_slice()))?;
        let gradient = check_finite_grad((self.grad_fn)(theta.as_slice()))?;
        if gradient.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: gradient.dim(),
            });
        }
        Ok(GradEval { loss, gradient })
    }

    fn eval_loss(&mut self, theta: &ParamVector) -> Result<f64> {
        check_entry(self.dim, theta)?;
        self.counters.loss_only_evals += 1;
        check_finite_loss((self.loss_fn)(theta.as_slice()))
    }

    fn counters(&self) -> CallCounters {
        self.counters
    }

    fn lipschitz_constant(&self) -> Option<f64> {
        self.lipschitz
    }
}

/// The loss `L(theta) = 1/2 (theta - c)^T A (theta - c)` for a symmetric PSD
/// matrix `A` and offset `c`.
///
/// The gradient's Lipschitz constant is the largest eigenvalue of `A`, and the
/// known minimum sits at the offset with value zero, which makes this family
/// the reference problem for every convergence check in the crate.
pub struct QuadraticOracle {
    dim: usize,
    /// Row-major d*d symmetric PSD matrix.
    matrix: Vec<f64>,
    offset: ParamVector,
    lipschitz: f64,
    counters: CallCounters,
}

/// Tolerance for symmetry and eigenvalue-sign checks, relative to the matrix scale.
const PSD_TOL: f64 = 1e-10;

impl QuadraticOracle {
    /// Builds the oracle, rejecting non-symmetric or negative-eigenvalue input.
    pub fn new(rows: Vec<Vec<f64>>, offset: ParamVector) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(Error::InvalidMatrix("matrix is empty".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} has {} entries, expected {d}",
                    row.len()
                )));
            }
        }
        if offset.dim() != d {
            return Err(Error::DimMismatch {
                expected: d,
                got: offset.dim(),
            });
        }
        offset.validate()?;

        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        for (i, v) in flat.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidMatrix(format!(
                    "entry ({}, {}) is {v}",
                    i / d,
                    i % d
                )));
            }
        }
        let scale = flat.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..d {
            for j in (i + 1)..d {
                let a = flat[i * d + j];
                let b = flat[j * d + i];
                if (a - b).abs() > PSD_TOL * scale {
                    return Err(Error::InvalidMatrix(format!(
                        "not symmetric: entry ({i}, {j}) = {a} but ({j}, {i}) = {b}"
                    )));
                }
            }
        }

        let m = DMatrix::from_row_slice(d, d, &flat);
        let eigs = m.symmetric_eigenvalues();
        let max_eig = eigs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let min_eig = eigs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if min_eig < -PSD_TOL * scale {
            return Err(Error::InvalidMatrix(format!(
                "not positive semidefinite: smallest eigenvalue {min_eig}"
            )));
        }

        Ok(QuadraticOracle {
            dim: d,
            matrix: flat,
            offset,
            lipschitz: max_eig,
            counters: CallCounters::default(),
        })
    }

    /// Axis-aligned quadratic with the given diagonal.
    pub fn diagonal(eigenvalues: &[f64], offset: ParamVector) -> Result<Self> {
        let d = eigenvalues.len();
        let mut rows = vec![vec![0.0; d]; d];
        for (i, &e) in eigenvalues.iter().enumerate() {
            rows[i][i] = e;
        }
        QuadraticOracle::new(rows, offset)
    }

    /// Seeded random member of the family: eigenvalues spread log-uniformly
    /// over `[scale, scale * cond]` with both endpoints present (so the
    /// Lipschitz constant is exactly `scale * cond`), conjugated by a random
    /// rotation, with a standard-normal offset.
    pub fn random(dim: usize, cond: f64, scale: f64, seed: u64) -> Result<Self> {
        if dim == 0 || cond < 1.0 || scale <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "random quadratic needs dim >= 1, cond >= 1, scale > 0 (got {dim}, {cond}, {scale})"
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut eigs = vec![scale; dim];
        if dim > 1 {
            eigs[dim - 1] = scale * cond;
        }
        for e in eigs.iter_mut().take(dim.saturating_sub(1)).skip(1) {
            let u: f64 = rng.random();
            *e = scale * cond.powf(u);
        }
        let offset: Vec<f64> = (0..dim)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();

        // Random rotation from the QR factorization of a Gaussian matrix.
        let gauss = DMatrix::from_fn(dim, dim, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let q = gauss.qr().q();
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eigs));
        let a = &q * lambda * q.transpose();
        // Symmetrize away rounding in the conjugation.
        let a = (&a + a.transpose()) * 0.5;

        let rows: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| a[(i, j)]).collect())
            .collect();
        QuadraticOracle::new(rows, ParamVector::new(offset))
    }

    /// Given eigenvalues conjugated by a seeded random rotation.
    pub fn rotated(eigenvalues: &[f64], rotation_seed: u64, offset: ParamVector) -> Result<Self> {
        let dim = eigenvalues.len();
        if dim == 0 {
            return Err(Error::InvalidMatrix("eigenvalue list is empty".into()));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(rotation_seed);
        let gauss = DMatrix::from_fn(dim, dim, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let q = gauss.qr().q();
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eigenvalues.to_vec()));
        let a = &q * lambda * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let rows: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| a[(i, j)]).collect())
            .collect();
        QuadraticOracle::new(rows, offset)
    }

    /// Minimizer location and value (the offset, at loss zero).
    pub fn known_minimum(&self) -> (&ParamVector, f64) {
        (&self.offset, 0.0)
    }

    pub fn matrix_row_major(&self) -> &[f64] {
        &self.matrix
    }

    fn residual(&self, theta: &ParamVector) -> Vec<f64> {
        theta
            .iter()
            .zip(self.offset.iter())
            .map(|(t, c)| t - c)
            .collect()
    }

    fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| (0..d).map(|j| self.matrix[i * d + j] * v[j]).sum())
            .collect()
    }
}

impl LossOracle for QuadraticOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_full(&mut self, theta: &ParamVector) -> Result<GradEval> {
        check_entry(self.dim, theta)?;
        self.counters.full_evals += 1;
        let r = self.residual(theta);
        let ar = self.mat_vec(&r);
        let loss = 0.5 * r.iter().zip(&ar).map(|(a, b)| a * b).sum::<f64>();
        Ok(GradEval {
            loss: check_finite_loss(loss)?,
            gradient: check_finite_grad(ar)?,
        })
    }

    fn eval_loss(&mut self, theta: &ParamVector) -> Result<f64> {
        check_entry(self.dim, theta)?;
        self.counters.loss_only_evals += 1;
        let r = self.residual(theta);
        let ar = self.mat_vec(&r);
        check_finite_loss(0.5 * r.iter().zip(&ar).map(|(a, b)| a * b).sum::<f64>())
    }

    fn counters(&self) -> CallCounters {
        self.counters
    }

    fn lipschitz_constant(&self) -> Option<f64> {
        Some(self.lipschitz)
    }
}
