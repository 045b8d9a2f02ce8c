//! Closed-form decay schedules for the rate-decay schemes.

use crate::error::{Error, Result};
use crate::schemes::{SchemeKind, SchemeSpec};

/// Multiplier applied to the base rate at iteration `t` (starting from 0).
///
/// * exponential: `exp(-beta t)`
/// * reciprocal: `1 / (1 + beta t)`
/// * step-size: `2^(-floor(t / T))`
/// * cosine annealing: `(beta + (alpha - beta) (1 + cos(t pi / T)) / 2) / alpha`,
///   i.e. the standard anneal from `alpha` down to the floor rate `beta`,
///   normalized so the caller multiplies by `alpha` exactly once.
///
/// Always in `(0, 1]` for valid parameters.
pub fn decay_factor(kind: SchemeKind, t: u64, spec: &SchemeSpec) -> Result<f64> {
    let tf = t as f64;
    match kind {
        SchemeKind::EDecay => {
            let beta = spec.require("beta")?;
            Ok((-beta * tf).exp())
        }
        SchemeKind::RDecay => {
            let beta = spec.require("beta")?;
            Ok(1.0 / (1.0 + beta * tf))
        }
        SchemeKind::SsDecay => {
            let period = spec.require_period()?;
            Ok(2.0_f64.powi(-((t / period) as i32)))
        }
        SchemeKind::CaDecay => {
            let alpha = spec.require("alpha")?;
            let beta = spec.require("beta")?;
            let period = spec.require_period()?;
            let rate = beta
                + 0.5 * (alpha - beta) * (1.0 + (tf * std::f64::consts::PI / period as f64).cos());
            Ok(rate / alpha)
        }
        other => Err(Error::InvalidArgument(format!(
            "{} is not a decay scheme",
            other.name()
        ))),
    }
}
