//! Closed-form proximal operators for the supported regularizers, plus the
//! subgradient each prox step implies.
//!
//! The scaling convention: prox(r, eta, y) = argmin_x { 1/2 ||x - y||^2 + eta r(x) },
//! so the step size multiplies r and the quadratic is unweighted. The
//! optimality condition of that argmin gives point + eta*h = y for some
//! h in the subdifferential of r at the point, i.e. h = (y - point)/eta —
//! the unique subgradient the iteration's direction identity needs.

use crate::error::Error;
use crate::problems::Regularizer;
use crate::vecmath::all_finite;
use crate::Result;

/// Output of a proximal step: the minimizer and the subgradient of r at it
/// implied by the optimality condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult {
    pub point: Vec<f64>,
    pub subgradient: Vec<f64>,
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// prox(r, eta, y) = argmin_x { 1/2 ||x - y||^2 + eta r(x) }.
pub fn prox(reg: &Regularizer, eta: f64, y: &[f64]) -> Result<ProxResult> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!(
            "prox step size must be positive and finite, got {eta}"
        )));
    }
    if !all_finite(y) {
        return Err(Error::invalid("prox input contains non-finite values"));
    }
    reg.validate()?;
    let point: Vec<f64> = match reg {
        Regularizer::Zero => y.to_vec(),
        Regularizer::L1 { lambda } => y.iter().map(|&v| soft_threshold(v, eta * lambda)).collect(),
        Regularizer::SquaredL2 { lambda } => y.iter().map(|&v| v / (1.0 + eta * lambda)).collect(),
        Regularizer::BoxIndicator { lower, upper } => {
            y.iter().map(|&v| v.clamp(*lower, *upper)).collect()
        }
        Regularizer::ElasticNet { lambda1, lambda2 } => y
            .iter()
            .map(|&v| soft_threshold(v, eta * lambda1) / (1.0 + eta * lambda2))
            .collect(),
    };
    let subgradient: Vec<f64> = point.iter().zip(y).map(|(&p, &v)| (v - p) / eta).collect();
    Ok(ProxResult { point, subgradient })
}

/// r(x); +inf outside a box indicator's box.
pub fn eval_reg(reg: &Regularizer, x: &[f64]) -> f64 {
    match reg {
        Regularizer::Zero => 0.0,
        Regularizer::L1 { lambda } => lambda * x.iter().map(|v| v.abs()).sum::<f64>(),
        Regularizer::SquaredL2 { lambda } => 0.5 * lambda * x.iter().map(|v| v * v).sum::<f64>(),
        Regularizer::BoxIndicator { lower, upper } => {
            if x.iter().all(|&v| v >= *lower && v <= *upper) {
                0.0
            } else {
                f64::INFINITY
            }
        }
        Regularizer::ElasticNet { lambda1, lambda2 } => {
            lambda1 * x.iter().map(|v| v.abs()).sum::<f64>()
                + 0.5 * lambda2 * x.iter().map(|v| v * v).sum::<f64>()
        }
    }
}
