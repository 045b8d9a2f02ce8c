//! The catalog of competing update rules, one optimizer contract.
//!
//! Every scheme consumes gradients through the same [`LossOracle`] seam and
//! produces `theta_t = theta_{t-1} + delta`, so the harness can run identical
//! experiments across the whole catalog. Accumulator-based schemes come in two
//! shapes: `TableScalar` aggregates squared gradient *norms* into a single
//! scalar (the form the catalog is usually printed in), `PerCoordinate`
//! aggregates elementwise squared gradients (the form deep-learning frameworks
//! implement).

mod decay;

pub use decay::decay_factor;

use crate::error::{Error, Result};
use crate::oracle::LossOracle;
use crate::param::ParamVector;

/// Guard for accumulator divisions: denominators use `sqrt(max(acc, ACC_EPS))`
/// and ratio numerators `max(acc, ACC_EPS)`, so a zero accumulator (always the
/// case on Adadelta's first step) cannot divide by zero. `max` rather than
/// `+ epsilon` keeps healthy accumulators bit-exact.
pub const ACC_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    Sgd,
    EDecay,
    RDecay,
    SsDecay,
    CaDecay,
    Adagrad,
    Rmsprop,
    Adadelta,
    Hgd,
    L4gd,
    Lqa,
    Momentum,
    Nmomentum,
    Adam,
}

impl SchemeKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "sgd" => Ok(SchemeKind::Sgd),
            "e_decay" | "e-decay" => Ok(SchemeKind::EDecay),
            "r_decay" | "r-decay" => Ok(SchemeKind::RDecay),
            "ss_decay" | "ss-decay" => Ok(SchemeKind::SsDecay),
            "ca_decay" | "ca-decay" => Ok(SchemeKind::CaDecay),
            "adagrad" => Ok(SchemeKind::Adagrad),
            "rmsprop" => Ok(SchemeKind::Rmsprop),
            "adadelta" => Ok(SchemeKind::Adadelta),
            "hgd" => Ok(SchemeKind::Hgd),
            "l4gd" => Ok(SchemeKind::L4gd),
            "lqa" => Ok(SchemeKind::Lqa),
            "momentum" => Ok(SchemeKind::Momentum),
            "nmomentum" => Ok(SchemeKind::Nmomentum),
            "adam" => Ok(SchemeKind::Adam),
            other => Err(Error::Config(format!("unknown scheme kind `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Sgd => "sgd",
            SchemeKind::EDecay => "e_decay",
            SchemeKind::RDecay => "r_decay",
            SchemeKind::SsDecay => "ss_decay",
            SchemeKind::CaDecay => "ca_decay",
            SchemeKind::Adagrad => "adagrad",
            SchemeKind::Rmsprop => "rmsprop",
            SchemeKind::Adadelta => "adadelta",
            SchemeKind::Hgd => "hgd",
            SchemeKind::L4gd => "l4gd",
            SchemeKind::Lqa => "lqa",
            SchemeKind::Momentum => "momentum",
            SchemeKind::Nmomentum => "nmomentum",
            SchemeKind::Adam => "adam",
        }
    }
}

/// Shape of the squared-gradient accumulators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AccumulatorMode {
    /// One scalar accumulating squared gradient norms (catalog form; default).
    #[default]
    TableScalar,
    /// One accumulator per parameter, elementwise squared gradients
    /// (framework form).
    PerCoordinate,
}

/// Hyperparameters for one scheme instance.
#[derive(Debug, Clone)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    /// `T` for the step-size and cosine-annealing schedules.
    pub period: Option<u64>,
    pub accumulator_mode: AccumulatorMode,
    /// Use the additive reading of the quadratic-probe rate rule instead of
    /// the multiplicative one. The multiplicative form recovers exact line
    /// search on quadratics; the additive form does not.
    pub lqa_additive: bool,
}

impl SchemeSpec {
    fn bare(kind: SchemeKind) -> Self {
        SchemeSpec {
            kind,
            alpha: None,
            beta: None,
            gamma: None,
            period: None,
            accumulator_mode: AccumulatorMode::default(),
            lqa_additive: false,
        }
    }

    pub fn sgd(alpha: f64) -> Self {
        SchemeSpec {
            alpha: Some(alpha),
            ..SchemeSpec::bare(SchemeKind::Sgd)
        }
    }

    pub fn e_decay(alpha: f64, beta: f64) -> Self {
        SchemeSpec {
            alpha: Some(alpha),
            beta: Some(beta),
            ..SchemeSpec::bare(SchemeKind::EDecay)
        }
    }

    pub fn r_decay(alpha: f64, beta: f64) -> Self {
        SchemeSpec {
            alpha: Some(alpha),
            beta: Some(beta),
            ..SchemeSpec::bare(SchemeKind::RDecay)
        }
    }

    pub fn ss_decay(alpha: f64, period: u64) -> Self {
        SchemeSpec {
            alpha: Some(alpha),
            period: Some(period),
            ..SchemeSpec::bare(SchemeKind::SsDecay)
        }
    }

    pub fn ca_decay(alpha: f64, min_rate: f64, period: u64) -> Self {
        SchemeSpec {
            alpha: Some(alpha),
            beta: Some(min_rate),
            period: Some(period),
            ..SchemeSpec::bare(SchemeKind::CaDecay)
        }
    }

    pub fn adagrad(alpha: f64) -> Self {
        SchemeSpec {
            alpha: Some(alpha),
            ..SchemeSpec::bare(SchemeKind::Adagrad)
        }
    }

    pub fn rmsprop(alpha: f64, beta: f64) -> Self {
        SchemeSpec {
            alpha: Some(alpha),
            beta: Some(beta),
            ..SchemeSpec::bare(SchemeKind::Rmsprop)
        }
    }

    pub fn adadelta(beta: f64) -> Self {
        SchemeSpec {
            beta: Some(beta),
            ..SchemeSpec::bare(SchemeKind::Adadelta)
        }
    }

    pub fn hgd(alpha: f64, beta: f64) -> Self {
        SchemeSpec {
            alpha: Some(alpha),
            beta: Some(beta),
            ..SchemeSpec::bare(SchemeKind::Hgd)
        }
    }

    pub fn l4gd(alpha: f64, beta: f64) -> Self {
        SchemeSpec {
            alpha: Some(alpha),
            beta: Some(beta),
            ..SchemeSpec::bare(SchemeKind::L4gd)
        }
    }

    pub fn lqa(alpha: f64) -> Self {
        SchemeSpec {
            alpha: Some(alpha),
            ..SchemeSpec::bare(SchemeKind::Lqa)
        }
    }

    pub fn momentum(alpha: f64, gamma: f64) -> Self {
        SchemeSpec {
            alpha: Some(alpha),
            gamma: Some(gamma),
            ..SchemeSpec::bare(SchemeKind::Momentum)
        }
    }

    pub fn nmomentum(alpha: f64, gamma: f64) -> Self {
        SchemeSpec {
            alpha: Some(alpha),
            gamma: Some(gamma),
            ..SchemeSpec::bare(SchemeKind::Nmomentum)
        }
    }

    pub fn adam(alpha: f64, beta: f64, gamma: f64) -> Self {
        SchemeSpec {
            alpha: Some(alpha),
            beta: Some(beta),
            gamma: Some(gamma),
            ..SchemeSpec::bare(SchemeKind::Adam)
        }
    }

    pub fn with_mode(mut self, mode: AccumulatorMode) -> Self {
        self.accumulator_mode = mode;
        self
    }

    pub fn with_additive_lqa(mut self) -> Self {
        self.lqa_additive = true;
        self
    }

    fn require(&self, field: &'static str) -> Result<f64> {
        let value = match field {
            "alpha" => self.alpha,
            "beta" => self.beta,
            "gamma" => self.gamma,
            _ => None,
        };
        value.ok_or(Error::Hyperparam {
            scheme: self.kind.name(),
            field,
            reason: "is required but missing".into(),
        })
    }

    fn require_period(&self) -> Result<u64> {
        self.period.ok_or(Error::Hyperparam {
            scheme: self.kind.name(),
            field: "period",
            reason: "is required but missing".into(),
        })
    }

    fn check(&self, field: &'static str, ok: bool, reason: &str) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::Hyperparam {
                scheme: self.kind.name(),
                field,
                reason: reason.into(),
            })
        }
    }

    /// Validates presence and ranges of every hyperparameter the kind needs.
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        match self.kind {
            SchemeKind::Sgd | SchemeKind::Adagrad | SchemeKind::Lqa => {
                self.check("alpha", positive(self.require("alpha")?), "must be positive")?;
            }
            SchemeKind::EDecay | SchemeKind::RDecay => {
                self.check("alpha", positive(self.require("alpha")?), "must be positive")?;
                self.check("beta", positive(self.require("beta")?), "must be positive")?;
            }
            SchemeKind::SsDecay => {
                self.check("alpha", positive(self.require("alpha")?), "must be positive")?;
                self.check("period", self.require_period()? >= 1, "must be at least 1")?;
            }
            SchemeKind::CaDecay => {
                let alpha = self.require("alpha")?;
                let floor = self.require("beta")?;
                self.check("alpha", positive(alpha), "must be positive")?;
                self.check(
                    "beta",
                    floor > 0.0 && floor <= alpha,
                    "must be a positive floor rate no larger than alpha",
                )?;
                self.check("period", self.require_period()? >= 1, "must be at least 1")?;
            }
            SchemeKind::Rmsprop => {
                self.check("alpha", positive(self.require("alpha")?), "must be positive")?;
                let beta = self.require("beta")?;
                self.check("beta", beta > 0.0 && beta < 1.0, "must lie in (0, 1)")?;
            }
            SchemeKind::Adadelta => {
                let beta = self.require("beta")?;
                self.check("beta", beta > 0.0 && beta < 1.0, "must lie in (0, 1)")?;
            }
            SchemeKind::Hgd => {
                self.check("alpha", positive(self.require("alpha")?), "must be positive")?;
                self.check("beta", positive(self.require("beta")?), "must be positive")?;
            }
            SchemeKind::L4gd => {
                self.check("alpha", positive(self.require("alpha")?), "must be positive")?;
                let beta = self.require("beta")?;
                self.check("beta", beta > 0.0 && beta < 1.0, "must lie in (0, 1)")?;
            }
            SchemeKind::Momentum | SchemeKind::Nmomentum => {
                self.check("alpha", positive(self.require("alpha")?), "must be positive")?;
                let gamma = self.require("gamma")?;
                self.check("gamma", (0.0..1.0).contains(&gamma), "must lie in [0, 1)")?;
            }
            SchemeKind::Adam => {
                self.check("alpha", positive(self.require("alpha")?), "must be positive")?;
                let beta = self.require("beta")?;
                self.check(
                    "beta",
                    beta > 0.0 && beta < 1.0,
                    "averaging coefficient must lie in (0, 1)",
                )?;
                let gamma = self.require("gamma")?;
                self.check(
                    "gamma",
                    (0.0..1.0).contains(&gamma),
                    "averaging coefficient must lie in [0, 1)",
                )?;
            }
        }
        Ok(())
    }
}

/// Mutable per-run accumulators. Vectors are sized lazily on the first step.
#[derive(Debug, Clone, Default)]
pub struct SchemeState {
    /// Completed steps; the step about to run sees this value as its `t`.
    pub t: u64,
    /// Squared-gradient accumulator (scalar mode).
    pub acc: f64,
    /// Squared-gradient accumulator (per-coordinate mode).
    pub acc_vec: Vec<f64>,
    /// Squared-step accumulator (scalar mode).
    pub sq_step: f64,
    /// Squared-step accumulator (per-coordinate mode).
    pub sq_step_vec: Vec<f64>,
    /// Momentum direction.
    pub velocity: Vec<f64>,
    /// Gradient of the previous step.
    pub prev_grad: Option<Vec<f64>>,
    /// Update applied at the previous step.
    pub prev_delta: Vec<f64>,
    /// Running minimum of observed losses.
    pub loss_min: Option<f64>,
    /// Scalar rate carried across steps by hypergradient descent.
    pub rate_scalar: f64,
}

/// What the harness records about each baseline step.
#[derive(Debug, Clone, Copy)]
pub struct SchemeStepRecord {
    /// 1-based step index.
    pub step: u64,
    /// Loss at the evaluation point of this step (the look-ahead point for
    /// Nesterov momentum, the iterate otherwise).
    pub loss: f64,
    pub grad_norm: f64,
    /// Effective scalar rate, or the per-coordinate mean for per-coordinate
    /// accumulators. For the momentum family this is the multiplier applied
    /// to the averaged direction.
    pub rate: f64,
    /// Loss-only evaluations beyond the one full evaluation (2 for the
    /// quadratic-probe rule, 0 elsewhere).
    pub extra_loss_evals: u64,
}

/// One scheme instance: validated spec plus zero-initialized state.
#[derive(Debug, Clone)]
pub struct Scheme {
    spec: SchemeSpec,
    state: SchemeState,
}

/// Validates the spec and builds the optimizer with zeroed accumulators.
pub fn make_scheme(spec: SchemeSpec) -> Result<Scheme> {
    Scheme::new(spec)
}

impl Scheme {
    pub fn new(spec: SchemeSpec) -> Result<Self> {
        spec.validate()?;
        let mut state = SchemeState::default();
        if spec.kind == SchemeKind::Hgd {
            // The carried rate starts at the configured initial rate; the
            // first step is then plain gradient descent.
            state.rate_scalar = spec.alpha.unwrap();
        }
        Ok(Scheme { spec, state })
    }

    pub fn kind(&self) -> SchemeKind {
        self.spec.kind
    }

    pub fn spec(&self) -> &SchemeSpec {
        &self.spec
    }

    pub fn state(&self) -> &SchemeState {
        &self.state
    }

    fn ensure_dim(&mut self, dim: usize) {
        if self.state.acc_vec.is_empty() {
            self.state.acc_vec = vec![0.0; dim];
            self.state.sq_step_vec = vec![0.0; dim];
            self.state.velocity = vec![0.0; dim];
            self.state.prev_delta = vec![0.0; dim];
        }
    }

    /// Applies one update: `theta_t = theta_{t-1} + delta_t` with `delta_t`
    /// given by the scheme's rule. Returns the new iterate and the step record.
    pub fn step<O: LossOracle + ?Sized>(
        &mut self,
        oracle: &mut O,
        theta: &ParamVector,
    ) -> Result<(ParamVector, SchemeStepRecord)> {
        let dim = oracle.dim();
        self.ensure_dim(dim);
        let t = self.state.t;
        let kind = self.spec.kind;

        // Nesterov momentum evaluates at the shifted point; everyone else at
        // the iterate.
        let eval_point = if kind == SchemeKind::Nmomentum {
            let gamma = self.spec.gamma.unwrap();
            let shift = ParamVector::new(self.state.prev_delta.clone());
            theta.add_scaled(&shift, gamma)
        } else {
            theta.clone()
        };
        let full = oracle.eval_full(&eval_point)?;
        let grad = full.gradient;
        let grad_sq = grad.sq_norm();
        let mut extra_loss_evals = 0u64;

        let mode = self.spec.accumulator_mode;
        // delta is accumulated here; rate is the scalar equivalent recorded
        // for trajectory comparison.
        let (delta, rate): (Vec<f64>, f64) = match kind {
            SchemeKind::Sgd => {
                let alpha = self.spec.alpha.unwrap();
                (grad.iter().map(|g| -alpha * g).collect(), alpha)
            }
            SchemeKind::EDecay | SchemeKind::RDecay | SchemeKind::SsDecay | SchemeKind::CaDecay => {
                let alpha = self.spec.alpha.unwrap();
                let factor = decay_factor(kind, t, &self.spec)?;
                let rate = alpha * factor;
                (grad.iter().map(|g| -rate * g).collect(), rate)
            }
            SchemeKind::Adagrad => {
                let alpha = self.spec.alpha.unwrap();
                match mode {
                    AccumulatorMode::TableScalar => {
                        self.state.acc += grad_sq;
                        let rate = alpha / self.state.acc.max(ACC_EPS).sqrt();
                        (grad.iter().map(|g| -rate * g).collect(), rate)
                    }
                    AccumulatorMode::PerCoordinate => {
                        per_coordinate_sq_update(&mut self.state.acc_vec, &grad, None);
                        scaled_by_acc(alpha, &grad, &self.state.acc_vec)
                    }
                }
            }
            SchemeKind::Rmsprop => {
                let alpha = self.spec.alpha.unwrap();
                let beta = self.spec.beta.unwrap();
                match mode {
                    AccumulatorMode::TableScalar => {
                        self.state.acc = beta * self.state.acc + (1.0 - beta) * grad_sq;
                        let rate = alpha / self.state.acc.max(ACC_EPS).sqrt();
                        (grad.iter().map(|g| -rate * g).collect(), rate)
                    }
                    AccumulatorMode::PerCoordinate => {
                        per_coordinate_sq_update(&mut self.state.acc_vec, &grad, Some(beta));
                        scaled_by_acc(alpha, &grad, &self.state.acc_vec)
                    }
                }
            }
            SchemeKind::Adadelta => {
                let beta = self.spec.beta.unwrap();
                let prev_delta = std::mem::take(&mut self.state.prev_delta);
                let (delta, rate) = match mode {
                    AccumulatorMode::TableScalar => {
                        self.state.acc = beta * self.state.acc + (1.0 - beta) * grad_sq;
                        let prev_sq: f64 = prev_delta.iter().map(|d| d * d).sum();
                        self.state.sq_step = beta * self.state.sq_step + (1.0 - beta) * prev_sq;
                        let rate = (self.state.sq_step.max(ACC_EPS)
                            / self.state.acc.max(ACC_EPS))
                        .sqrt();
                        (
                            grad.iter().map(|g| -rate * g).collect::<Vec<f64>>(),
                            rate,
                        )
                    }
                    AccumulatorMode::PerCoordinate => {
                        per_coordinate_sq_update(&mut self.state.acc_vec, &grad, Some(beta));
                        for (b, d) in self.state.sq_step_vec.iter_mut().zip(&prev_delta) {
                            *b = beta * *b + (1.0 - beta) * d * d;
                        }
                        let mut delta = Vec::with_capacity(dim);
                        let mut rate_sum = 0.0;
                        for i in 0..dim {
                            let rate_i = (self.state.sq_step_vec[i].max(ACC_EPS)
                                / self.state.acc_vec[i].max(ACC_EPS))
                            .sqrt();
                            rate_sum += rate_i;
                            delta.push(-rate_i * grad[i]);
                        }
                        (delta, rate_sum / dim as f64)
                    }
                };
                (delta, rate)
            }
            SchemeKind::Hgd => {
                let beta = self.spec.beta.unwrap();
                if let Some(prev) = &self.state.prev_grad {
                    let inner: f64 = prev.iter().zip(grad.iter()).map(|(a, b)| a * b).sum();
                    self.state.rate_scalar += beta * inner;
                }
                let rate = self.state.rate_scalar;
                (grad.iter().map(|g| -rate * g).collect(), rate)
            }
            SchemeKind::L4gd => {
                let alpha = self.spec.alpha.unwrap();
                let beta = self.spec.beta.unwrap();
                let loss_min = match self.state.loss_min {
                    Some(m) => m.min(full.loss),
                    None => full.loss,
                };
                self.state.loss_min = Some(loss_min);
                let adaptive = (full.loss - beta * loss_min) / grad_sq.max(ACC_EPS);
                let rate = alpha * adaptive;
                (grad.iter().map(|g| -rate * g).collect(), rate)
            }
            SchemeKind::Lqa => {
                let alpha = self.spec.alpha.unwrap();
                let up = theta.add_scaled(&grad, alpha);
                let down = theta.sub_scaled(&grad, alpha);
                let loss_up = oracle.eval_loss(&up)?;
                let loss_down = oracle.eval_loss(&down)?;
                extra_loss_evals = 2;
                let curvature = loss_up + loss_down - 2.0 * full.loss;
                let ratio = (loss_up - loss_down) / curvature;
                let rate = if self.spec.lqa_additive {
                    0.5 * alpha + ratio
                } else {
                    0.5 * alpha * ratio
                };
                (grad.iter().map(|g| -rate * g).collect(), rate)
            }
            SchemeKind::Momentum => {
                let alpha = self.spec.alpha.unwrap();
                let gamma = self.spec.gamma.unwrap();
                for (f, g) in self.state.velocity.iter_mut().zip(grad.iter()) {
                    *f = gamma * *f + (1.0 - gamma) * g;
                }
                (
                    self.state.velocity.iter().map(|f| -alpha * f).collect(),
                    alpha,
                )
            }
            SchemeKind::Nmomentum => {
                let alpha = self.spec.alpha.unwrap();
                let gamma = self.spec.gamma.unwrap();
                for (f, g) in self.state.velocity.iter_mut().zip(grad.iter()) {
                    *f = gamma * *f + (1.0 - gamma) * g;
                }
                (
                    self.state.velocity.iter().map(|f| -alpha * f).collect(),
                    alpha,
                )
            }
            SchemeKind::Adam => {
                let alpha = self.spec.alpha.unwrap();
                let beta = self.spec.beta.unwrap();
                let gamma = self.spec.gamma.unwrap();
                for (f, g) in self.state.velocity.iter_mut().zip(grad.iter()) {
                    *f = gamma * *f + (1.0 - gamma) * g;
                }
                let steps = (t + 1) as i32;
                let bias = (1.0 - beta.powi(steps)).sqrt() / (1.0 - gamma.powi(steps));
                match mode {
                    AccumulatorMode::TableScalar => {
                        self.state.acc = beta * self.state.acc + (1.0 - beta) * grad_sq;
                        let rate = alpha * bias / self.state.acc.max(ACC_EPS).sqrt();
                        (
                            self.state.velocity.iter().map(|f| -rate * f).collect(),
                            rate,
                        )
                    }
                    AccumulatorMode::PerCoordinate => {
                        per_coordinate_sq_update(&mut self.state.acc_vec, &grad, Some(beta));
                        let mut delta = Vec::with_capacity(dim);
                        let mut rate_sum = 0.0;
                        for i in 0..dim {
                            let rate_i =
                                alpha * bias / self.state.acc_vec[i].max(ACC_EPS).sqrt();
                            rate_sum += rate_i;
                            delta.push(-rate_i * self.state.velocity[i]);
                        }
                        (delta, rate_sum / dim as f64)
                    }
                }
            }
        };

        for (i, d) in delta.iter().enumerate() {
            if !d.is_finite() {
                return Err(Error::NonFinite(format!(
                    "{} update coordinate {i} is {d} at step {}",
                    kind.name(),
                    t + 1
                )));
            }
        }

        let next: Vec<f64> = theta.iter().zip(&delta).map(|(a, b)| a + b).collect();
        self.state.prev_delta = delta;
        if kind == SchemeKind::Hgd {
            self.state.prev_grad = Some(grad.to_vec());
        }
        self.state.t += 1;

        Ok((
            ParamVector::new(next),
            SchemeStepRecord {
                step: self.state.t,
                loss: full.loss,
                grad_norm: grad_sq.sqrt(),
                rate,
                extra_loss_evals,
            },
        ))
    }
}

fn per_coordinate_sq_update(acc: &mut [f64], grad: &ParamVector, beta: Option<f64>) {
    match beta {
        Some(b) => {
            for (a, g) in acc.iter_mut().zip(grad.iter()) {
                *a = b * *a + (1.0 - b) * g * g;
            }
        }
        None => {
            for (a, g) in acc.iter_mut().zip(grad.iter()) {
                *a += g * g;
            }
        }
    }
}

fn scaled_by_acc(alpha: f64, grad: &ParamVector, acc: &[f64]) -> (Vec<f64>, f64) {
    let mut delta = Vec::with_capacity(acc.len());
    let mut rate_sum = 0.0;
    for (a, g) in acc.iter().zip(grad.iter()) {
        let rate_i = alpha / a.max(ACC_EPS).sqrt();
        rate_sum += rate_i;
        delta.push(-rate_i * g);
    }
    (delta, rate_sum / acc.len() as f64)
}
