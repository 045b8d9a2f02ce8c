//! Shared test oracles.
//!
//! The golden-section minimizer lives here, in test code only: it validates
//! the fitted step sizes without ever touching the closed-form rate it
//! checks.

#![allow(dead_code)]

use qlabgrad::oracle::{LossOracle, QuadraticOracle};
use qlabgrad::param::ParamVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the minimizer of a unimodal `g` on `[lo, hi]`,
/// shrinking the bracket to `rel_width * (hi - lo)`, then one parabolic
/// refinement through the bracket midpoint. For an exactly quadratic `g` the
/// refinement lands on the vertex to near machine precision, far beyond what
/// value comparisons alone can resolve near the flat bottom.
pub fn golden_section_min<F: FnMut(f64) -> f64>(
    mut g: F,
    lo: f64,
    hi: f64,
    rel_width: f64,
) -> f64 {
    assert!(hi > lo);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut gc = g(c);
    let mut gd = g(d);
    while (b - a) > rel_width * (hi - lo) {
        if gc < gd {
            b = d;
            d = c;
            gd = gc;
            c = b - INV_PHI * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + INV_PHI * (b - a);
            gd = g(d);
        }
    }

    let m = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let (ga, gm, gb) = (g(a), g(m), g(b));
    let denom = ga - 2.0 * gm + gb;
    if denom <= 0.0 || h == 0.0 {
        return m;
    }
    let vertex = m + 0.5 * h * (ga - gb) / denom;
    vertex.clamp(lo, hi)
}

/// One instance of the random reference family: dimension up to 10, condition
/// number up to 100, random rotation, scale, offset, and start point. The
/// oracle is rebuilt from the stored seed whenever a run needs fresh counters.
pub struct SuiteCase {
    pub dim: usize,
    pub cond: f64,
    pub scale: f64,
    pub oracle_seed: u64,
    pub theta0: ParamVector,
}

impl SuiteCase {
    pub fn oracle(&self) -> QuadraticOracle {
        QuadraticOracle::random(self.dim, self.cond, self.scale, self.oracle_seed).unwrap()
    }

    pub fn lipschitz(&self) -> f64 {
        self.oracle().lipschitz_constant().unwrap()
    }
}

/// The seeded case list shared by the line-search, bracket, and bound criteria.
pub fn quadratic_suite(count: u64, master_seed: u64) -> Vec<SuiteCase> {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    (0..count)
        .map(|_| {
            let dim = rng.random_range(1..=10usize);
            let cond: f64 = 10f64.powf(rng.random_range(0.0..2.0));
            let scale: f64 = rng.random_range(0.5..2.0);
            let oracle_seed: u64 = rng.random();
            let theta0 = ParamVector::new(
                (0..dim)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect(),
            );
            SuiteCase {
                dim,
                cond,
                scale,
                oracle_seed,
                theta0,
            }
        })
        .collect()
}

/// Restriction of a loss to the descent ray from `theta` along `-grad`.
pub fn ray_loss<'a, O: LossOracle>(
    oracle: &'a mut O,
    theta: &'a ParamVector,
    grad: &'a ParamVector,
) -> impl FnMut(f64) -> f64 + 'a {
    move |alpha: f64| {
        oracle
            .eval_loss(&theta.sub_scaled(grad, alpha))
            .expect("ray evaluation")
    }
}
