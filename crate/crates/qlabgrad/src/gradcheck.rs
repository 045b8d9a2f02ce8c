//! Finite-difference gradient verification.
//!
//! The independent oracle used throughout the repo to validate analytic
//! gradients: central differences never share code with any backward pass or
//! hand-derived gradient they check.

use crate::error::{Error, Result};
use crate::oracle::LossOracle;
use crate::param::ParamVector;

/// Step size used by [`check_gradient`]. Balances truncation against rounding
/// for double precision at the function scales used here.
pub const CHECK_STEP: f64 = 1e-5;

/// Absolute floor in the relative-error denominator, so near-zero gradients
/// compare absolutely instead of amplifying rounding noise.
pub const REL_ERR_FLOOR: f64 = 1e-8;

/// Central-difference gradient: `(L(theta + h e_i) - L(theta - h e_i)) / (2h)`
/// per coordinate, through the oracle's loss-only entry point.
pub fn fd_gradient(
    oracle: &mut dyn LossOracle,
    point: &ParamVector,
    step: f64,
) -> Result<ParamVector> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive and finite, got {step}"
        )));
    }
    point.validate()?;

    let mut probe = point.to_vec();
    let mut grad = Vec::with_capacity(point.dim());
    for i in 0..point.dim() {
        let orig = probe[i];
        probe[i] = orig + step;
        let plus = oracle
            .eval_loss(&ParamVector::new(probe.clone()))
            .map_err(|e| wrap_probe_err(e, i))?;
        probe[i] = orig - step;
        let minus = oracle
            .eval_loss(&ParamVector::new(probe.clone()))
            .map_err(|e| wrap_probe_err(e, i))?;
        probe[i] = orig;
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(ParamVector::new(grad))
}

fn wrap_probe_err(e: Error, coord: usize) -> Error {
    match e {
        Error::NonFinite(detail) => Error::NonFinite(format!(
            "finite-difference probe for coordinate {coord}: {detail}"
        )),
        other => other,
    }
}

/// Outcome of comparing an oracle's analytic gradient against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub rel_tol: f64,
    /// Largest per-coordinate relative error, with denominator
    /// `max(|analytic|, |numeric|, REL_ERR_FLOOR)`.
    pub max_rel_err: f64,
    /// Coordinate attaining `max_rel_err`.
    pub worst_coord: usize,
    pub per_coord_rel_err: Vec<f64>,
    pub pass: bool,
}

/// Compares `eval_full`'s gradient with [`fd_gradient`] at `CHECK_STEP`.
/// Failures are reported, not thrown.
pub fn check_gradient(
    oracle: &mut dyn LossOracle,
    point: &ParamVector,
    rel_tol: f64,
) -> Result<GradCheckReport> {
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rel_tol must be positive, got {rel_tol}"
        )));
    }
    let analytic = oracle.eval_full(point)?.gradient;
    let numeric = fd_gradient(oracle, point, CHECK_STEP)?;

    let mut per_coord = Vec::with_capacity(point.dim());
    let mut max_rel_err = 0.0_f64;
    let mut worst_coord = 0;
    for i in 0..point.dim() {
        let a = analytic[i];
        let n = numeric[i];
        let denom = a.abs().max(n.abs()).max(REL_ERR_FLOOR);
        let err = (a - n).abs() / denom;
        if err > max_rel_err {
            max_rel_err = err;
            worst_coord = i;
        }
        per_coord.push(err);
    }
    Ok(GradCheckReport {
        rel_tol,
        max_rel_err,
        worst_coord,
        per_coord_rel_err: per_coord,
        pass: max_rel_err <= rel_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{FnOracle, QuadraticOracle};
    use crate::testfn;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn linear_gradient_is_exact_up_to_rounding() {
        let mut q = QuadraticOracle::diagonal(&[1.0], ParamVector::zeros(1)).unwrap();
        let g = fd_gradient(&mut q, &ParamVector::new(vec![1.0]), 1e-6).unwrap();
        assert!((g[0] - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn booth_fd_matches_analytic_at_origin() {
        let (mut oracle, _) = testfn::make_named_test_function("booth").unwrap();
        let g = fd_gradient(&mut oracle, &ParamVector::new(vec![0.0, 0.0]), 1e-5).unwrap();
        // Central differences are exact for quadratics up to rounding.
        assert!((g[0] - -34.0).abs() <= 1e-5);
        assert!((g[1] - -38.0).abs() <= 1e-5);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut flat = FnOracle::new(3, |_| 4.25, |p| vec![0.0; p.len()]);
        let g = fd_gradient(&mut flat, &ParamVector::new(vec![1.0, -2.0, 0.5]), 1e-5).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn fd_rejects_nonpositive_step() {
        let mut q = QuadraticOracle::diagonal(&[1.0], ParamVector::zeros(1)).unwrap();
        assert!(fd_gradient(&mut q, &ParamVector::new(vec![1.0]), 0.0).is_err());
        assert!(fd_gradient(&mut q, &ParamVector::new(vec![1.0]), -1e-5).is_err());
    }

    #[test]
    fn fd_error_names_the_coordinate() {
        // Loss turns infinite as soon as coordinate 1 moves off zero.
        let mut nasty = FnOracle::new(
            2,
            |p| if p[1] != 0.0 { f64::INFINITY } else { p[0] },
            |_| vec![1.0, 0.0],
        );
        let err = fd_gradient(&mut nasty, &ParamVector::new(vec![0.3, 0.0]), 1e-3).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("coordinate 1"), "message was: {msg}");
    }

    #[test]
    fn check_gradient_passes_on_booth() {
        let (mut oracle, _) = testfn::make_named_test_function("booth").unwrap();
        let report = check_gradient(&mut oracle, &ParamVector::new(vec![2.0, 1.0]), 1e-5).unwrap();
        assert!(report.pass, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn corrupted_gradient_is_caught_and_located() {
        // Booth with the y-gradient doubled.
        let mut corrupted = FnOracle::new(2, testfn::booth, |p| {
            let mut g = testfn::booth_grad(p);
            g[1] *= 2.0;
            g
        });
        let report =
            check_gradient(&mut corrupted, &ParamVector::new(vec![2.0, 1.0]), 1e-5).unwrap();
        assert!(!report.pass);
        assert_eq!(report.worst_coord, 1);
    }

    #[test]
    fn zero_gradient_point_passes_via_absolute_floor() {
        let (mut oracle, _) = testfn::make_named_test_function("booth").unwrap();
        let report = check_gradient(&mut oracle, &ParamVector::new(vec![1.0, 3.0]), 1e-5).unwrap();
        assert!(report.pass, "max rel err {}", report.max_rel_err);
    }

    /// Every analytic test function passes the gradient check at 100
    /// pseudo-random points inside its domain box.
    #[test]
    fn named_functions_pass_at_100_random_points() {
        for name in ["booth", "himmelblau", "eggholder"] {
            let (mut oracle, meta) = testfn::make_named_test_function(name).unwrap();
            let bounds = meta.domain_bounds.clone().unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(0x9d0c_55f1);
            for trial in 0..100 {
                let p: Vec<f64> = bounds
                    .iter()
                    .map(|(lo, hi)| rng.random_range(*lo..*hi))
                    .collect();
                let point = ParamVector::new(p);
                let report = check_gradient(&mut oracle, &point, 1e-5).unwrap();
                assert!(
                    report.pass,
                    "{name} trial {trial} at {:?}: rel err {} at coord {}",
                    point.as_slice(),
                    report.max_rel_err,
                    report.worst_coord
                );
            }
        }
    }

    /// Direct check of the Lipschitz-smooth-gradient definition on quadratics.
    #[test]
    fn quadratic_gradients_are_lipschitz_with_known_constant() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for seed in 0..20 {
            let mut q = QuadraticOracle::random(4, 25.0, 1.3, seed).unwrap();
            let m = q.lipschitz_constant().unwrap();
            for _ in 0..25 {
                let a: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
                let b: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
                let (a, b) = (ParamVector::new(a), ParamVector::new(b));
                let ga = q.eval_full(&a).unwrap().gradient;
                let gb = q.eval_full(&b).unwrap().gradient;
                let grad_dist = ga.sub_scaled(&gb, 1.0).l2_norm();
                let point_dist = a.sub_scaled(&b, 1.0).l2_norm();
                assert!(
                    grad_dist <= m * point_dist * (1.0 + 1e-12),
                    "|grad diff| {grad_dist} > M |x diff| {}",
                    m * point_dist
                );
            }
        }
    }
}
