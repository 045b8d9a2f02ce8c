//! Named benchmark functions with analytic gradients and literature minima.
//!
//! Exactly the three surfaces used by the trajectory study: Booth (a
//! positive-definite quadratic, so its Lipschitz constant is known exactly),
//! Himmelblau (quartic, four global minima), and Eggholder (highly multimodal).

use crate::error::{Error, Result};
use crate::oracle::FnOracle;
use crate::param::ParamVector;

/// Metadata for a named benchmark function.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub name: String,
    pub dim: usize,
    /// A global minimizer and its value, when the literature pins one down.
    pub known_minimum: Option<(ParamVector, f64)>,
    /// Lipschitz constant of the gradient, when finite over the whole plane.
    pub lipschitz_constant: Option<f64>,
    /// Conventional evaluation box, used by the harness to clamp initial
    /// points. Evaluation outside the box is permitted; the formulas extend.
    pub domain_bounds: Option<Vec<(f64, f64)>>,
}

/// The three named surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamedFunction {
    Booth,
    Himmelblau,
    Eggholder,
}

impl NamedFunction {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "booth" => Ok(NamedFunction::Booth),
            "himmelblau" => Ok(NamedFunction::Himmelblau),
            "eggholder" => Ok(NamedFunction::Eggholder),
            other => Err(Error::UnknownFunction(other.into())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NamedFunction::Booth => "booth",
            NamedFunction::Himmelblau => "himmelblau",
            NamedFunction::Eggholder => "eggholder",
        }
    }
}

pub fn booth(p: &[f64]) -> f64 {
    let (x, y) = (p[0], p[1]);
    let u = x + 2.0 * y - 7.0;
    let v = 2.0 * x + y - 5.0;
    u * u + v * v
}

pub fn booth_grad(p: &[f64]) -> Vec<f64> {
    let (x, y) = (p[0], p[1]);
    let u = x + 2.0 * y - 7.0;
    let v = 2.0 * x + y - 5.0;
    vec![2.0 * u + 4.0 * v, 4.0 * u + 2.0 * v]
}

pub fn himmelblau(p: &[f64]) -> f64 {
    let (x, y) = (p[0], p[1]);
    let u = x * x + y - 11.0;
    let v = x + y * y - 7.0;
    u * u + v * v
}

pub fn himmelblau_grad(p: &[f64]) -> Vec<f64> {
    let (x, y) = (p[0], p[1]);
    let u = x * x + y - 11.0;
    let v = x + y * y - 7.0;
    vec![4.0 * x * u + 2.0 * v, 2.0 * u + 4.0 * y * v]
}

pub fn eggholder(p: &[f64]) -> f64 {
    let (x, y) = (p[0], p[1]);
    let s1 = 0.5 * x + y + 47.0;
    let s2 = x - y - 47.0;
    -(y + 47.0) * s1.abs().sqrt().sin() - x * s2.abs().sqrt().sin()
}

/// Analytic Eggholder gradient. The surface has measure-zero kinks where an
/// absolute-value argument crosses zero; there the one-sided derivative with
/// the kink term dropped is returned.
pub fn eggholder_grad(p: &[f64]) -> Vec<f64> {
    let (x, y) = (p[0], p[1]);
    let s1 = 0.5 * x + y + 47.0;
    let s2 = x - y - 47.0;
    let u1 = s1.abs().sqrt();
    let u2 = s2.abs().sqrt();

    // d/ds sqrt(|s|) = sign(s) / (2 sqrt(|s|)); zero at the kink.
    let du1_ds = if u1 > 0.0 { s1.signum() / (2.0 * u1) } else { 0.0 };
    let du2_ds = if u2 > 0.0 { s2.signum() / (2.0 * u2) } else { 0.0 };

    let a = -(y + 47.0) * u1.cos() * du1_ds;
    let b = -x * u2.cos() * du2_ds;
    vec![
        0.5 * a - u2.sin() + b,
        -u1.sin() + a - b,
    ]
}

/// Builds the oracle plus metadata for a named function.
pub fn make_named_test_function(name: &str) -> Result<(FnOracle, TestFunction)> {
    let which = NamedFunction::parse(name)?;
    Ok(function_pair(which))
}

pub fn function_pair(which: NamedFunction) -> (FnOracle, TestFunction) {
    match which {
        NamedFunction::Booth => {
            // Hessian [[10, 8], [8, 10]], eigenvalues {2, 18}.
            let oracle = FnOracle::new(2, booth, booth_grad).with_lipschitz(18.0);
            let meta = TestFunction {
                name: "booth".into(),
                dim: 2,
                known_minimum: Some((ParamVector::new(vec![1.0, 3.0]), 0.0)),
                lipschitz_constant: Some(18.0),
                domain_bounds: Some(vec![(-10.0, 10.0), (-10.0, 10.0)]),
            };
            (oracle, meta)
        }
        NamedFunction::Himmelblau => {
            let oracle = FnOracle::new(2, himmelblau, himmelblau_grad);
            let meta = TestFunction {
                name: "himmelblau".into(),
                dim: 2,
                known_minimum: Some((ParamVector::new(vec![3.0, 2.0]), 0.0)),
                lipschitz_constant: None,
                domain_bounds: Some(vec![(-5.0, 5.0), (-5.0, 5.0)]),
            };
            (oracle, meta)
        }
        NamedFunction::Eggholder => {
            let oracle = FnOracle::new(2, eggholder, eggholder_grad);
            let meta = TestFunction {
                name: "eggholder".into(),
                dim: 2,
                known_minimum: Some((
                    ParamVector::new(vec![512.0, 404.2318050697998]),
                    -959.6406627208507,
                )),
                lipschitz_constant: None,
                domain_bounds: Some(vec![(-512.0, 512.0), (-512.0, 512.0)]),
            };
            (oracle, meta)
        }
    }
}
